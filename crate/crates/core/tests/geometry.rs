use bismut_core::flow::{derivative_flow, simulate, simulate_increments, Grid, NoiseDriver};
use bismut_core::forms::{form_catalog, FormId};
use bismut_core::linalg::{hat, Vec4, Vec6};
use bismut_core::manifold::{Connection, Manifold, ManifoldKind, Point};
use bismut_core::multilinear::{pair, MultiVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

type M = Manifold<f64>;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn noise(m: &M, r: &mut ChaCha8Rng) -> Vec6<f64> {
    use rand::Rng;
    let mut e = Vec6::zeros();
    for i in 0..m.noise_dim() {
        e[i] = r.sample(rand_distr::StandardNormal);
    }
    e
}

#[test]
fn x_and_y_are_mutually_inverse_on_tangent_spaces() {
    let mut r = rng(1);
    for kind in ManifoldKind::ALL {
        let m = M::new(kind);
        for _ in 0..20 {
            let x = m.random_point(&mut r);
            let v = m.random_tangent(&x, &mut r);
            let back = m.x_map(&x, &m.y_map(&x, &v).unwrap());
            assert!((back - v).norm() < 1e-12, "{kind:?}");
            let e = noise(&m, &mut r);
            let proj = m.y_map_unchecked(&x, &m.x_map(&x, &e));
            let twice = m.y_map_unchecked(&x, &m.x_map(&x, &proj));
            assert!((twice - proj).norm() < 1e-12);
            assert!(m.check_tangent(&x, &m.x_map(&x, &e)).is_ok());
        }
    }
}

#[test]
fn torsion_is_x_applied_to_dy() {
    let mut r = rng(2);
    for kind in ManifoldKind::ALL {
        let m = M::new(kind);
        for _ in 0..10 {
            let x = m.random_point(&mut r);
            let u = m.random_tangent(&x, &mut r);
            let v = m.random_tangent(&x, &mut r);
            let xdy = m.x_matrix(&x) * m.dy(&x, &u, &v);
            assert!((xdy - m.torsion(&x, &u, &v)).norm() < 1e-12, "{kind:?}");
        }
    }
}

fn dy_fd(m: &M, x: &Point<f64>, u: &Vec4<f64>, v: &Vec4<f64>) -> Vec6<f64> {
    // dY(U, V) = U(Y V) - V(Y U) - Y[U, V] with left-invariant extensions.
    let eps = 1e-5;
    let dir = |w: &Vec4<f64>, z: &Vec4<f64>| {
        let p = m.exp_map(x, &(w * eps));
        let n = m.exp_map(x, &(w * -eps));
        (m.y_map_unchecked(&p, z) - m.y_map_unchecked(&n, z)) / (2.0 * eps)
    };
    let br = Vec4::new(0.0, 0.0, 0.0, 0.0) + {
        let c = u.xyz().cross(&v.xyz());
        Vec4::new(c[0], c[1], c[2], 0.0)
    };
    dir(u, v) - dir(v, u) - m.y_map_unchecked(x, &br)
}

#[test]
fn dy_matches_finite_differences_on_so3() {
    let mut r = rng(3);
    for kind in [ManifoldKind::So3Left, ManifoldKind::So3Right, ManifoldKind::So3BiInvariant] {
        let m = M::new(kind);
        for _ in 0..5 {
            let x = m.random_point(&mut r);
            let u = m.random_tangent(&x, &mut r);
            let v = m.random_tangent(&x, &mut r);
            let err = (dy_fd(&m, &x, &u, &v) - m.dy(&x, &u, &v)).norm();
            assert!(err < 1e-7, "{kind:?} {err}");
        }
    }
}

/// Transports a frame around a small geodesic parallelogram spanned by
/// `u` then `v` and returns `(I - holonomy) / δ²`.
fn holonomy(m: &M, x: &Point<f64>, u: &Vec4<f64>, v: &Vec4<f64>, delta: f64) -> bismut_core::linalg::Mat4<f64> {
    let pieces = 40;
    let mut pos = *x;
    let mut acc = m.tangent_projector(x);
    let mut dirs = [*u, *v, -*u, -*v];
    for side in 0..4 {
        let d = dirs[side];
        for _ in 0..pieces {
            let next = m.exp_map(&pos, &(d * (delta / pieces as f64)));
            let t = m.transport_between(Connection::LeviCivita, &pos, &next);
            acc = t * acc;
            for dd in dirs.iter_mut() {
                *dd = t * *dd;
            }
            pos = next;
        }
    }
    let t = m.transport_between(Connection::LeviCivita, &pos, x);
    acc = t * acc;
    (m.tangent_projector(x) - acc) / (delta * delta)
}

#[test]
fn curvature_operator_matches_holonomy() {
    let mut r = rng(4);
    for kind in [ManifoldKind::S2, ManifoldKind::S3, ManifoldKind::Torus, ManifoldKind::So3BiInvariant] {
        let m = M::new(kind);
        let x = m.random_point(&mut r);
        let frame = m.tangent_frame(&x);
        let (u, v) = (frame[0], frame[1]);
        let h = holonomy(&m, &x, &u, &v, 0.02);
        let bivec = MultiVector::primitive(&[u, v]).unwrap();
        let rm = m.curvature_apply(&x, &bivec).unwrap().to_mat();
        let err = (h - rm).norm();
        assert!(err < 0.05, "{kind:?}: holonomy {h} vs {rm}");
        let sec = MultiVector::from_mat(&rm).dot(&bivec);
        assert!((sec - m.sectional_curvature()).abs() < 1e-12);
    }
}

#[test]
fn ricci_and_weitzenbock_are_constant_multiples_on_catalog() {
    let mut r = rng(5);
    for kind in ManifoldKind::ALL {
        let m = M::new(kind);
        let x = m.random_point(&mut r);
        let n = m.dim() as f64;
        let k = m.sectional_curvature();
        let p = m.tangent_projector(&x);
        assert!((m.ricci(&x) - p * ((n - 1.0) * k)).norm() < 1e-12, "{kind:?}");
        for q in 0..=3usize {
            let vs: Vec<Vec4<f64>> = (0..q).map(|_| m.random_tangent(&x, &mut r)).collect();
            let t = MultiVector::primitive(&vs).unwrap();
            let c = m.weitzenbock_scalar(q).unwrap();
            let w = m.weitzenbock_apply(&x, &t);
            assert!((w - t * c).max_abs() < 1e-10, "{kind:?} q={q}");
        }
    }
}

#[test]
fn steps_stay_on_the_manifold_and_transport_is_isometric() {
    let mut r = rng(6);
    for kind in ManifoldKind::ALL {
        let m = M::new(kind);
        let x0 = m.random_point(&mut r);
        let grid = Grid::new(1.0, 0.01).unwrap();
        let path = simulate(&m, &x0, &grid, &mut NoiseDriver::new(9, 0, m.noise_dim(), 0.01)).unwrap();
        for p in &path.points {
            m.check_point(p).unwrap();
        }
        let u = m.random_tangent(&x0, &mut r);
        let v = m.random_tangent(&x0, &mut r);
        for conn in [Connection::LeviCivita, Connection::Breve, Connection::Hat] {
            let par = bismut_core::flow::parallel_transport(&m, &path, conn).unwrap();
            let last = par.last().unwrap();
            let (a, b) = (last * u, last * v);
            m.check_tangent(path.last(), &a).unwrap();
            assert!((a.dot(&b) - u.dot(&v)).abs() < 1e-10, "{kind:?} {conn:?}");
        }
    }
}

#[test]
fn derivative_flow_matches_resimulation() {
    let mut r = rng(7);
    for kind in ManifoldKind::ALL {
        let m = M::new(kind);
        let x0 = m.random_point(&mut r);
        let v = m.random_tangent(&x0, &mut r);
        let incs = NoiseDriver::new(3, 1, m.noise_dim(), 0.005).increments::<f64>(200);
        let base = simulate_increments(&m, &x0, 0.005, incs.clone()).unwrap();
        let txi = derivative_flow(&m, &base).unwrap();
        let mut errs = Vec::new();
        for eps in [1e-4, 5e-5] {
            let xe = m.exp_map(&x0, &(v * eps));
            let pert = simulate_increments(&m, &xe, 0.005, incs.clone()).unwrap();
            let fd = m.log_map(base.last(), pert.last()) / eps;
            errs.push((fd - txi.last().unwrap() * v).norm());
        }
        assert!(errs[0] < 1e-3 * (1.0 + v.norm()), "{kind:?} {errs:?}");
        assert!(errs[1] < errs[0] * 0.75 || errs[0] < 1e-8, "{kind:?} {errs:?}");
    }
}

#[test]
fn breve_and_hat_transport_on_the_left_system() {
    let m = M::new(ManifoldKind::So3Left);
    let x0 = m.origin();
    let grid = Grid::new(0.5, 0.01).unwrap();
    let path = simulate(&m, &x0, &grid, &mut NoiseDriver::new(1, 2, 3, 0.01)).unwrap();
    let breve = bismut_core::flow::parallel_transport(&m, &path, Connection::Breve).unwrap();
    let hatp = bismut_core::flow::parallel_transport(&m, &path, Connection::Hat).unwrap();
    let txi = derivative_flow(&m, &path).unwrap();
    let k = path.len();
    assert!((breve[k] - m.tangent_projector(&x0)).norm() < 1e-12);
    assert!((hatp[k] - txi[k]).norm() < 1e-10);
    let r = m.rotation(path.last());
    assert!((txi[k].fixed_view::<3, 3>(0, 0) - r.transpose()).norm() < 1e-10);
}

fn fd_exterior_embedded(m: &M, f: FormId, x: &Point<f64>, vs: &[Vec4<f64>]) -> f64 {
    let eps = 1e-6;
    let mut total = 0.0;
    for i in 0..vs.len() {
        let rest: Vec<Vec4<f64>> = vs.iter().enumerate().filter(|(j, _)| *j != i).map(|(_, v)| *v).collect();
        let r = MultiVector::primitive(&rest).unwrap();
        let p = Point::new(x.coords + vs[i] * eps);
        let n = Point::new(x.coords - vs[i] * eps);
        let d = (pair(&f.coeffs(m, &p), &r).unwrap() - pair(&f.coeffs(m, &n), &r).unwrap()) / (2.0 * eps);
        total += if i % 2 == 0 { d } else { -d };
    }
    total
}

fn fd_exterior_so3(m: &M, f: FormId, x: &Point<f64>, vs: &[Vec4<f64>]) -> f64 {
    let eps = 1e-6;
    let q1 = vs.len();
    let mut total = 0.0;
    for i in 0..q1 {
        let rest: Vec<Vec4<f64>> = vs.iter().enumerate().filter(|(j, _)| *j != i).map(|(_, v)| *v).collect();
        let r = MultiVector::primitive(&rest).unwrap();
        let p = m.exp_map(x, &(vs[i] * eps));
        let n = m.exp_map(x, &(vs[i] * -eps));
        let d = (f.eval(m, &p, &r).unwrap() - f.eval(m, &n, &r).unwrap()) / (2.0 * eps);
        total += if i % 2 == 0 { d } else { -d };
    }
    for i in 0..q1 {
        for j in (i + 1)..q1 {
            let c = vs[i].xyz().cross(&vs[j].xyz());
            let mut rest = vec![Vec4::new(c[0], c[1], c[2], 0.0)];
            rest.extend(vs.iter().enumerate().filter(|(k, _)| *k != i && *k != j).map(|(_, v)| *v));
            let val = f.eval(m, x, &MultiVector::primitive(&rest).unwrap()).unwrap();
            total += if (i + j) % 2 == 0 { val } else { -val };
        }
    }
    total
}

#[test]
fn catalog_exterior_derivatives_match_finite_differences() {
    let mut r = rng(8);
    for kind in [ManifoldKind::S1, ManifoldKind::S2, ManifoldKind::S3, ManifoldKind::Torus, ManifoldKind::So3Left] {
        let m = M::new(kind);
        for f in form_catalog(kind) {
            for _ in 0..3 {
                let x = m.random_point(&mut r);
                let q1 = f.degree() + 1;
                let vs: Vec<Vec4<f64>> = (0..q1).map(|_| m.random_tangent(&x, &mut r)).collect();
                let exact = f.d_eval(&m, &x, &MultiVector::primitive(&vs).unwrap()).unwrap();
                let fd = if kind.is_so3() {
                    fd_exterior_so3(&m, f, &x, &vs)
                } else {
                    fd_exterior_embedded(&m, f, &x, &vs)
                };
                assert!((exact - fd).abs() < 1e-6, "{kind:?} {f:?}: {exact} vs {fd}");
            }
        }
    }
}

/// `Δf(x) = Σ_i d²/ds² f(exp_x(s e_i))` over an orthonormal frame.
fn fd_laplacian(m: &M, f: FormId, x: &Point<f64>) -> f64 {
    let eps = 1e-4;
    let one = MultiVector::scalar(1.0);
    let val = |p: &Point<f64>| f.eval(m, p, &one).unwrap();
    m.tangent_frame(x)
        .iter()
        .map(|e| {
            (val(&m.exp_map(x, &(e * eps))) - 2.0 * val(x) + val(&m.exp_map(x, &(e * -eps)))) / (eps * eps)
        })
        .sum()
}

#[test]
fn catalog_functions_are_laplace_eigenfunctions_with_recorded_rates() {
    let mut r = rng(10);
    for (kind, f) in [
        (ManifoldKind::S1, FormId::CircleCos),
        (ManifoldKind::S2, FormId::SphereZ),
        (ManifoldKind::S3, FormId::S3X4),
        (ManifoldKind::Torus, FormId::TorusCosCos),
        (ManifoldKind::So3Left, FormId::So3R12),
    ] {
        let m = M::new(kind);
        let (mut num, mut den) = (0.0, 0.0);
        for _ in 0..200 {
            let x = m.random_point(&mut r);
            let fx = f.eval(&m, &x, &MultiVector::scalar(1.0)).unwrap();
            num += fx * fd_laplacian(&m, f, &x);
            den += fx * fx;
        }
        let lambda = num / den;
        assert!((lambda + 2.0 * f.heat_rate().unwrap()).abs() < 1e-4, "{kind:?}: {lambda}");
    }
}

#[test]
fn so3_rotation_derivative_uses_hat_convention() {
    let m = M::new(ManifoldKind::So3Left);
    let mut r = rng(11);
    let x = m.random_point(&mut r);
    let v = m.random_tangent(&x, &mut r);
    let eps = 1e-6;
    let d = (m.rotation(&m.exp_map(&x, &(v * eps))) - m.rotation(&m.exp_map(&x, &(v * -eps)))) / (2.0 * eps);
    assert!((d - m.rotation(&x) * hat(&v.xyz())).norm() < 1e-8);
}
