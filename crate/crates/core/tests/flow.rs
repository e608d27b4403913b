use bismut_core::estimators::{heat_value, mean_stderr};
use bismut_core::flow::{
    anti_development, damped_transport, ito_integral, parallel_transport, simulate, simulate_increments,
    write_path_csv, Damping, DampingMode, Grid, Needs, NoiseDriver, TransportStack,
};
use bismut_core::forms::FormId;
use bismut_core::linalg::{Vec4, Vec6};
use bismut_core::manifold::{Connection, Manifold, ManifoldKind};
use bismut_core::multilinear::MultiVector;

type M = Manifold<f64>;

fn sphere_point(m: &M) -> bismut_core::manifold::Point<f64> {
    m.point(Vec4::new(0.48, 0.6, 0.64, 0.0)).unwrap()
}

#[test]
fn noise_is_a_function_of_seed_and_path_index() {
    let a: Vec<Vec6<f64>> = NoiseDriver::new(7, 3, 3, 1e-3).increments(50);
    let b: Vec<Vec6<f64>> = NoiseDriver::new(7, 3, 3, 1e-3).increments(50);
    let c: Vec<Vec6<f64>> = NoiseDriver::new(7, 4, 3, 1e-3).increments(50);
    assert_eq!(a, b);
    assert_ne!(a, c);
    assert!(a.iter().all(|d| d[3] == 0.0 && d[4] == 0.0 && d[5] == 0.0));
}

#[test]
fn increment_variance_matches_the_step() {
    let h = 1e-3;
    let mut sum = 0.0;
    let mut count = 0usize;
    for p in 0..400u64 {
        for d in NoiseDriver::new(11, p, 3, h).increments::<f64>(100) {
            for i in 0..3 {
                sum += d[i] * d[i];
                count += 1;
            }
        }
    }
    assert!(count >= 100_000);
    let var = sum / count as f64;
    assert!((var / h - 1.0).abs() < 0.05, "variance {var}");
}

#[test]
fn refined_noise_sums_fine_increments() {
    let coarse: Vec<Vec6<f64>> = NoiseDriver::refined(5, 2, 3, 2e-3, 2).increments(20);
    let fine: Vec<Vec6<f64>> = NoiseDriver::new(5, 2, 3, 1e-3).increments(40);
    for (k, c) in coarse.iter().enumerate() {
        assert!((c - (fine[2 * k] + fine[2 * k + 1])).norm() < 1e-15);
    }
}

#[test]
fn grid_rejects_fractional_horizons() {
    assert!(Grid::new(0.5, 1e-3).is_ok());
    assert_eq!(Grid::new(0.5, 1e-3).unwrap().steps, 500);
    assert!(Grid::new(0.5, 0.3).is_err());
    assert!(Grid::new(-1.0, 0.1).is_err());
}

#[test]
fn heat_semigroup_on_a_spherical_harmonic() {
    let m = M::new(ManifoldKind::S2);
    let x0 = sphere_point(&m);
    let grid = Grid::new(0.5, 1e-3).unwrap();
    let one = MultiVector::scalar(1.0);
    let vals: Vec<f64> = (0..4000u64)
        .map(|p| {
            let path = simulate(&m, &x0, &grid, &mut NoiseDriver::new(3, p, m.noise_dim(), grid.h)).unwrap();
            FormId::SphereZ.eval(&m, path.last(), &one).unwrap()
        })
        .collect();
    let (mean, se) = mean_stderr(&vals);
    let exact = heat_value(&m, &x0, FormId::SphereZ, &one, 0.5).unwrap();
    assert!((mean - exact).abs() < 4.0 * se, "{mean} vs {exact} ± {se}");
}

#[test]
fn damped_transport_decays_at_the_ricci_rate() {
    let m = M::new(ManifoldKind::S2);
    let x0 = sphere_point(&m);
    let grid = Grid::new(0.4, 1e-3).unwrap();
    let path = simulate(&m, &x0, &grid, &mut NoiseDriver::new(1, 0, 3, grid.h)).unwrap();
    let w = damped_transport(&m, &path, 1, Damping::LeviCivita).unwrap();
    let v = m.tangent_frame(&x0)[0];
    for (k, op) in w.iter().enumerate() {
        let len = op.apply(&MultiVector::vector(&v)).unwrap().norm();
        let want = (-0.5 * k as f64 * grid.h).exp();
        assert!((len - want).abs() < 1e-9, "step {k}: {len} vs {want}");
    }
    let w2 = damped_transport(&m, &path, 2, Damping::LeviCivita).unwrap();
    let frame = m.tangent_frame(&x0);
    let area = MultiVector::primitive(&[frame[0], frame[1]]).unwrap();
    let len = w2.last().unwrap().apply(&area).unwrap().norm();
    assert!((len - 1.0).abs() < 1e-9, "{len}");
}

#[test]
fn matrix_damping_agrees_with_scalar_damping() {
    for kind in [ManifoldKind::S2, ManifoldKind::S3, ManifoldKind::Torus] {
        let m = M::new(kind);
        let x0 = m.origin();
        let grid = Grid::new(0.2, 1e-3).unwrap();
        let path = simulate(&m, &x0, &grid, &mut NoiseDriver::new(2, 0, m.noise_dim(), grid.h)).unwrap();
        let needs = Needs::damped(&[1, 2]);
        let a = TransportStack::build_with(&m, &path, needs, DampingMode::Scalar).unwrap();
        let b = TransportStack::build_with(&m, &path, needs, DampingMode::Matrix).unwrap();
        for q in [1, 2] {
            for (x, y) in a.damped[q].last().unwrap().images().iter().zip(b.damped[q].last().unwrap().images()) {
                assert!((*x - *y).max_abs() < 1e-10, "{kind:?} q={q}");
            }
        }
    }
}

#[test]
fn parallel_transport_is_isometric_and_lands_in_tangent_spaces() {
    let m = M::new(ManifoldKind::S3);
    let x0 = m.origin();
    let grid = Grid::new(0.3, 1e-3).unwrap();
    let path = simulate(&m, &x0, &grid, &mut NoiseDriver::new(4, 0, m.noise_dim(), grid.h)).unwrap();
    let par = parallel_transport(&m, &path, Connection::LeviCivita).unwrap();
    let frame = m.tangent_frame(&x0);
    for (k, p) in par.iter().enumerate() {
        for i in 0..3 {
            for j in 0..3 {
                let g = (p * frame[i]).dot(&(p * frame[j]));
                assert!((g - if i == j { 1.0 } else { 0.0 }).abs() < 1e-9);
            }
            assert!(m.check_tangent(&path.points[k], &(p * frame[i])).is_ok());
        }
    }
}

#[test]
fn anti_development_is_a_brownian_motion_in_the_initial_tangent_space() {
    let m = M::new(ManifoldKind::S2);
    let x0 = sphere_point(&m);
    let grid = Grid::new(0.25, 1e-3).unwrap();
    let frame = m.tangent_frame(&x0);
    let mut qv = [[0.0; 2]; 2];
    let n = 400;
    for p in 0..n {
        let path = simulate(&m, &x0, &grid, &mut NoiseDriver::new(9, p, 3, grid.h)).unwrap();
        let inc = anti_development(&m, &path).unwrap();
        for d in &inc {
            assert!(m.check_tangent(&x0, d).is_ok());
            for i in 0..2 {
                for j in 0..2 {
                    qv[i][j] += frame[i].dot(d) * frame[j].dot(d);
                }
            }
        }
    }
    for i in 0..2 {
        for j in 0..2 {
            let got = qv[i][j] / (n as f64 * 0.25);
            let want = if i == j { 1.0 } else { 0.0 };
            assert!((got - want).abs() < 0.02, "[{i},{j}] {got}");
        }
    }
}

#[test]
fn ito_integral_has_mean_zero_and_isometry() {
    let m = M::new(ManifoldKind::S2);
    let x0 = sphere_point(&m);
    let grid = Grid::new(0.5, 1e-3).unwrap();
    let e3 = Vec4::new(0.0, 0.0, 1.0, 0.0);
    let mut first = Vec::new();
    let mut second = Vec::new();
    for p in 0..3000 {
        let path = simulate(&m, &x0, &grid, &mut NoiseDriver::new(21, p, 3, grid.h)).unwrap();
        let proj: Vec<Vec4<f64>> = path.points.iter().map(|x| m.tangent_projector(x) * e3).collect();
        let i = ito_integral(&m, &path, |k| proj[k]);
        let energy: f64 = proj[..path.len()].iter().map(|v| v.norm_squared() * grid.h).sum();
        first.push(i);
        second.push(i * i - energy);
    }
    let (m1, s1) = mean_stderr(&first);
    let (m2, s2) = mean_stderr(&second);
    assert!(m1.abs() < 4.0 * s1, "{m1} ± {s1}");
    assert!(m2.abs() < 4.0 * s2, "{m2} ± {s2}");
}

#[test]
fn simulate_increments_replays_a_path() {
    let m = M::new(ManifoldKind::So3Right);
    let x0 = m.origin();
    let grid = Grid::new(0.1, 1e-3).unwrap();
    let a = simulate(&m, &x0, &grid, &mut NoiseDriver::new(8, 1, 3, grid.h)).unwrap();
    let b = simulate_increments(&m, &x0, grid.h, a.increments.clone()).unwrap();
    assert_eq!(a.points, b.points);
}

#[test]
fn path_dump_has_one_row_per_grid_point() {
    let m = M::new(ManifoldKind::S1);
    let grid = Grid::new(0.01, 1e-3).unwrap();
    let path = simulate(&m, &m.origin(), &grid, &mut NoiseDriver::new(1, 0, 1, grid.h)).unwrap();
    let mut buf = Vec::new();
    write_path_csv(&path, &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "k,t,c0,c1,c2,c3");
    assert_eq!(lines.len(), path.points.len() + 1);
    assert!(lines[1].starts_with("0,0,1,0,"));
}
