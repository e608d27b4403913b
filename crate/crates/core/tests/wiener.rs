use bismut_core::flow::{simulate_increments, Needs, NoiseDriver, TransportStack};
use bismut_core::linalg::{Vec3, Vec4, Vec6};
use bismut_core::manifold::{Manifold, ManifoldKind, Point};
use bismut_core::schedule::ScalarSchedule;
use bismut_core::wiener::{
    bracket_fd_oracle, bracket_formula, bracket_torsion_form, constant_sampler, ibp_check, make_h, manifold_sampler,
    path_values, random_direction, shigekawa_div, sine_sampler, t_ito, t_ito_bracket, CylindricalWienerForm, HVector,
    Kernel, SineField,
};

type M = Manifold<f64>;

struct Setup {
    m: M,
    x0: Point<f64>,
    path: bismut_core::flow::PathSample<f64>,
    stack: TransportStack<f64>,
    b: [Vec4<f64>; 2],
}

fn setup(kind: ManifoldKind, steps: usize, seed: u64) -> Setup {
    let m = M::new(kind);
    let x0 = m.origin();
    let h = 1e-3;
    let incs = NoiseDriver::new(seed, 0, m.noise_dim(), h).increments(steps);
    let path = simulate_increments(&m, &x0, h, incs).unwrap();
    let stack = TransportStack::build(&m, &path, Needs::txi()).unwrap();
    let f = m.tangent_frame(&x0);
    let b = [f[0] * 0.8 + f[1] * 0.6, f[1] * 0.8 - f[0] * 0.6];
    Setup { m, x0, path, stack, b }
}

#[test]
fn h_vector_norms() {
    let v = Vec6::new(1.0, 2.0, 2.0, 0.0, 0.0, 0.0);
    let hv = HVector::constant(500, 1e-3, v);
    assert!((hv.norm() - (0.5f64 * 9.0).sqrt()).abs() < 1e-12);
    assert!((hv.value(500) - v * 0.5).norm() < 1e-12);
    assert!(hv.sub(&HVector::constant(400, 1e-3, v)).is_err());
}

#[test]
fn ito_map_of_an_adapted_field_is_transported_time() {
    for kind in [ManifoldKind::S2, ManifoldKind::So3Left, ManifoldKind::So3BiInvariant] {
        let s = setup(kind, 300, 1);
        let hv = make_h(&s.m, &s.path, &s.stack, &ScalarSchedule::constant(1.0), &s.b[0]).unwrap();
        let ti = t_ito(&s.m, &s.path, &s.stack, &hv).unwrap();
        for (k, v) in ti.iter().enumerate() {
            let want = s.stack.txi[k] * s.b[0] * (k as f64 * 1e-3);
            assert!((v - want).norm() < 1e-10, "{kind:?} step {k}");
        }
    }
}

#[test]
fn brackets_vanish_on_gradient_systems() {
    for kind in [ManifoldKind::S2, ManifoldKind::S3, ManifoldKind::Torus] {
        let s = setup(kind, 200, 2);
        let rho = ScalarSchedule::linear();
        let br = bracket_formula(&s.m, &s.path, &s.stack, &rho, &s.b[0], &s.b[1]).unwrap();
        assert_eq!(br.norm(), 0.0);
        let fd = bracket_fd_oracle(&s.m, &s.x0, 1e-3, &s.path.increments, &rho, &s.b[0], &s.b[1], 1e-4).unwrap();
        assert!(fd.value.norm() < 1e-2, "{kind:?}: {}", fd.value.norm());
    }
}

/// `ḣ_k = −2 ρ_k (∫_0^{t_k} ρ) R_k^T (b1 × b2)` on the left-invariant system.
fn left_closed_form(s: &Setup, rho: &ScalarSchedule) -> HVector<f64> {
    let c: Vec3<f64> = s.b[0].xyz().cross(&s.b[1].xyz());
    let mut cum = 0.0;
    let mut out = HVector::zeros(s.path.len(), 1e-3);
    for k in 0..s.path.len() {
        let r = rho.value(k as f64 * 1e-3);
        let v = s.m.rotation(&s.path.points[k]).transpose() * c * (-2.0 * r * cum);
        out.hdot[k] = Vec6::new(v[0], v[1], v[2], 0.0, 0.0, 0.0);
        cum += r * 1e-3;
    }
    out
}

#[test]
fn left_invariant_bracket_matches_closed_form_and_finite_differences() {
    let s = setup(ManifoldKind::So3Left, 500, 3);
    for rho in [ScalarSchedule::constant(1.0), ScalarSchedule::linear()] {
        let br = bracket_formula(&s.m, &s.path, &s.stack, &rho, &s.b[0], &s.b[1]).unwrap();
        let closed = left_closed_form(&s, &rho);
        assert!(br.sub(&closed).unwrap().norm() < 0.01 * closed.norm());
        let fd = bracket_fd_oracle(&s.m, &s.x0, 1e-3, &s.path.increments, &rho, &s.b[0], &s.b[1], 1e-4).unwrap();
        assert!(br.sub(&fd.value).unwrap().norm() < 0.05 * fd.value.norm());
        let ratio = fd.ratio.unwrap();
        assert!((1.5..=2.7).contains(&ratio));
    }
}

#[test]
fn biinvariant_bracket_follows_finite_differences_not_torsion() {
    let s = setup(ManifoldKind::So3BiInvariant, 400, 4);
    let rho = ScalarSchedule::constant(1.0);
    let br = bracket_formula(&s.m, &s.path, &s.stack, &rho, &s.b[0], &s.b[1]).unwrap();
    let tf = bracket_torsion_form(&s.m, &s.path, &s.stack, &rho, &s.b[0], &s.b[1]).unwrap();
    let fd = bracket_fd_oracle(&s.m, &s.x0, 1e-3, &s.path.increments, &rho, &s.b[0], &s.b[1], 1e-4).unwrap();
    assert!(fd.value.norm() > 0.05);
    assert!(tf.norm() < 1e-12);
    assert!(br.sub(&fd.value).unwrap().norm() < 0.05 * fd.value.norm());
}

#[test]
fn bracket_is_antisymmetric_and_consistent_with_the_ito_map() {
    for kind in [ManifoldKind::So3Left, ManifoldKind::So3Right] {
        let s = setup(kind, 300, 5);
        let rho = ScalarSchedule::Sine { horizon: 0.3 };
        let ab = bracket_formula(&s.m, &s.path, &s.stack, &rho, &s.b[0], &s.b[1]).unwrap();
        let ba = bracket_formula(&s.m, &s.path, &s.stack, &rho, &s.b[1], &s.b[0]).unwrap();
        assert!(ab.add(&ba).unwrap().norm() < 1e-14);
        let via_ito = t_ito(&s.m, &s.path, &s.stack, &ab).unwrap();
        let direct = t_ito_bracket(&s.m, &s.path, &s.stack, &rho, &s.b[0], &s.b[1]).unwrap();
        for (a, b) in via_ito.iter().zip(&direct) {
            assert!((a - b).norm() < 1e-12 * (1.0 + b.norm()), "{kind:?}");
        }
        let tf = bracket_torsion_form(&s.m, &s.path, &s.stack, &rho, &s.b[0], &s.b[1]).unwrap();
        assert!(ab.sub(&tf).unwrap().norm() < 1e-10 * (1.0 + ab.norm()));
    }
}

#[test]
fn divergence_of_one_field_is_its_ito_integral() {
    let incs: Vec<Vec6<f64>> = NoiseDriver::new(1, 0, 2, 1e-2).increments(50);
    let f = SineField { base: Vec6::new(1.0, 0.5, 0.0, 0.0, 0.0, 0.0), amp: Vec6::new(0.3, -0.2, 0.0, 0.0, 0.0, 0.0), freq: Vec6::new(1.0, 2.0, 0.0, 0.0, 0.0, 0.0) };
    let omega = path_values(&incs);
    let hv = f.field(&omega, 1e-2);
    let div = shigekawa_div(&[hv.clone()], &[], &incs).unwrap();
    assert_eq!(div.len(), 1);
    assert!(div[0].factors.is_empty());
    let want = -(0..50).map(|k| hv.hdot[k].dot(&incs[k])).sum::<f64>();
    assert!((div[0].coeff - want).abs() < 1e-12, "{} vs {want}", div[0].coeff);
}

#[test]
fn exterior_derivative_of_cylindrical_forms_matches_finite_differences() {
    let steps = 40;
    let h = 0.025;
    let incs: Vec<Vec6<f64>> = NoiseDriver::new(2, 0, 3, h).increments(steps);
    let omega = path_values(&incs);
    let k0 = SineField { base: random_direction(1, 3), amp: random_direction(2, 3), freq: random_direction(3, 3) }.field(&omega, h);
    let k1 = HVector::constant(steps, h, random_direction(4, 3));
    let shift = |k: &HVector<f64>, eps: f64| -> Vec<Vec6<f64>> {
        omega.iter().zip(k.values()).map(|(w, v)| w + v * eps).collect()
    };
    let eps = 1e-6;
    let f0 = CylindricalWienerForm::new(Kernel::Sin, random_direction(5, 3), steps, vec![]).unwrap();
    let fd = (f0.eval(&shift(&k0, eps), &[]).unwrap() - f0.eval(&shift(&k0, -eps), &[]).unwrap()) / (2.0 * eps);
    assert!((f0.d_eval(&omega, &[k0.clone()]).unwrap() - fd).abs() < 1e-7);

    let f1 = CylindricalWienerForm::new(Kernel::Quadratic, random_direction(6, 3), 30, vec![(random_direction(7, 3), 20)]).unwrap();
    let dir = |a: &HVector<f64>, b: &HVector<f64>| {
        (f1.eval(&shift(a, eps), &[b.clone()]).unwrap() - f1.eval(&shift(a, -eps), &[b.clone()]).unwrap()) / (2.0 * eps)
    };
    let fd = dir(&k0, &k1) - dir(&k1, &k0);
    let got = f1.d_eval(&omega, &[k0.clone(), k1.clone()]).unwrap();
    assert!((got - fd).abs() < 1e-6 * (1.0 + fd.abs()), "{got} vs {fd}");
    assert!(CylindricalWienerForm::<f64>::new(Kernel::Sin, Vec6::zeros(), 0, vec![(Vec6::zeros(), 0); 3]).is_err());
}

#[test]
fn integration_by_parts_on_wiener_space() {
    let (steps, h, n) = (100, 5e-3, 20_000);
    let w = Vec6::new(0.9, -0.6, 0.0, 0.0, 0.0, 0.0);
    let phi0 = CylindricalWienerForm::<f64>::new(Kernel::Sin, w, steps, vec![]).unwrap();
    let b = Vec6::new(0.7, 0.4, 0.0, 0.0, 0.0, 0.0);
    let rep = ibp_check(&phi0, n, constant_sampler(1, 2, h, steps, vec![b])).unwrap();
    assert!(rep.within(4.0), "{rep:?}");
    assert!(rep.d_phi.abs() > 5.0 * rep.stderr, "{rep:?}");

    let field = |s: u64| SineField { base: random_direction(s, 2), amp: random_direction(s + 1, 2) * 0.5, freq: random_direction(s + 2, 2) };
    let phi1 = CylindricalWienerForm::new(Kernel::Sin, random_direction(13, 2), steps, vec![(random_direction(14, 2), 50)]).unwrap();
    let rep = ibp_check(&phi1, n, sine_sampler(2, 2, h, steps, vec![field(20), field(30)])).unwrap();
    assert!(rep.within(4.0), "{rep:?}");
}

#[test]
fn dropping_the_bracket_terms_breaks_integration_by_parts() {
    let (steps, h, n) = (100, 5e-3, 20_000);
    let field = |s: u64| SineField { base: random_direction(s, 2), amp: random_direction(s + 1, 2) * 2.0, freq: random_direction(s + 2, 2) * 3.0 };
    let phi1 = CylindricalWienerForm::new(Kernel::Constant, random_direction(13, 2), steps, vec![(random_direction(14, 2), steps)]).unwrap();
    let sampler = sine_sampler(3, 2, h, steps, vec![field(40), field(50)]);
    let full = ibp_check(&phi1, n, &sampler).unwrap();
    let stripped = ibp_check(&phi1, n, |p| {
        let mut s = sampler(p)?;
        s.brackets.clear();
        Ok(s)
    })
    .unwrap();
    assert!(full.within(4.0), "{full:?}");
    assert!(!stripped.within(4.0), "{stripped:?}");
}

#[test]
fn integration_by_parts_with_fields_from_a_flow() {
    let m = M::new(ManifoldKind::So3Left);
    let x0 = m.origin();
    let f = m.tangent_frame(&x0);
    let steps = 200;
    let phi = CylindricalWienerForm::new(Kernel::Sin, random_direction(15, 3), steps, vec![(random_direction(16, 3), 100)]).unwrap();
    let sampler = manifold_sampler(&m, x0, 4, 2.5e-3, steps, ScalarSchedule::constant(1.0), vec![f[0], f[1]]);
    let rep = ibp_check(&phi, 20_000, sampler).unwrap();
    assert!(rep.within(4.0), "{rep:?}");
}
