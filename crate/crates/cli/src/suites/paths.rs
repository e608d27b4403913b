use bismut_core::flow::{simulate_increments, Needs, NoiseDriver};
use bismut_core::hspaces::{identity_check, stack_needs};
use bismut_core::linalg::Vec3;
use bismut_core::manifold::ManifoldKind;
use bismut_core::wiener::{
    bracket_fd_oracle, bracket_formula, constant_sampler, ibp_check, manifold_sampler, random_direction,
    sine_sampler, CylindricalWienerForm, IbpReport, Kernel, SineField,
};
use bismut_core::{HVector, Manifold, PathSample, Point, TransportStack, Vec4, Vec6};
use rayon::prelude::*;

use super::{base_point, bounded, directions, row, wedge_of};
use crate::config::Resolved;
use crate::error::CliError;
use crate::report::Check;

fn sample_path(m: &Manifold, x0: &Point, cfg: &Resolved, p: usize, refine: usize, h: f64, steps: usize) -> Result<PathSample, CliError> {
    let incs = NoiseDriver::refined(cfg.seed, p as u64, m.noise_dim(), h, refine).increments(steps);
    Ok(simulate_increments(m, x0, h, incs)?)
}

/// `ḣ_k = −2 ρ_k (∫_0^{t_k} ρ) Ad(x_k^{-1}) [b1, b2]` for the left-invariant system.
fn closed_form_bracket(m: &Manifold, path: &PathSample, cfg: &Resolved, b1: &Vec4, b2: &Vec4) -> HVector {
    let c: Vec3<f64> = b1.xyz().cross(&b2.xyz());
    let mut cum = 0.0;
    let mut out = HVector::zeros(path.len(), path.h);
    for k in 0..path.len() {
        let r = cfg.rho.value(k as f64 * cfg.h);
        let v = m.rotation(&path.points[k]).transpose() * c * (-2.0 * r * cum);
        out.hdot[k] = Vec6::new(v[0], v[1], v[2], 0.0, 0.0, 0.0);
        cum += r * cfg.h;
    }
    out
}

struct BracketPath {
    formula: f64,
    fd: f64,
    fd_rel: f64,
    closed_rel: Option<f64>,
}

pub fn bracket(cfg: &Resolved) -> Result<Vec<Check>, CliError> {
    let mut out = Vec::new();
    let steps = cfg.steps();
    let eps = cfg.tolerances.fd_eps;
    for kind in cfg.manifolds() {
        let m = Manifold::new(kind);
        let x0 = base_point(&m)?;
        let b = directions(&m, &x0, 2);
        let per_path: Vec<BracketPath> = (0..cfg.n_paths)
            .into_par_iter()
            .map(|p| {
                let path = sample_path(&m, &x0, cfg, p, 1, cfg.h, steps)?;
                let stack = TransportStack::build(&m, &path, Needs::txi())?;
                let formula = bracket_formula(&m, &path, &stack, &cfg.rho, &b[0], &b[1])?;
                let fd = bracket_fd_oracle(&m, &x0, cfg.h, &path.increments, &cfg.rho, &b[0], &b[1], eps)?;
                let fd_norm = fd.value.norm();
                let closed_rel = if kind == ManifoldKind::So3Left {
                    let closed = closed_form_bracket(&m, &path, cfg, &b[0], &b[1]);
                    Some(formula.sub(&closed)?.norm() / closed.norm())
                } else {
                    None
                };
                Ok(BracketPath {
                    formula: formula.norm(),
                    fd: fd_norm,
                    fd_rel: formula.sub(&fd.value)?.norm() / fd_norm,
                    closed_rel,
                })
            })
            .collect::<Result<Vec<_>, CliError>>()?;
        let max = |f: &dyn Fn(&BracketPath) -> f64| per_path.iter().map(f).fold(0.0f64, f64::max);
        let tol = &cfg.tolerances;
        if kind.is_gradient() {
            out.push(bounded(cfg, "bracket_formula".into(), m.name(), 2, max(&|p| p.formula), 0.0, "gradient_system"));
            out.push(bounded(cfg, "bracket_fd_oracle".into(), m.name(), 2, max(&|p| p.fd), tol.bracket_zero, "gradient_system"));
        } else {
            out.push(bounded(cfg, "bracket_formula-fd_oracle".into(), m.name(), 2, max(&|p| p.fd_rel), tol.bracket_fd_rel, "finite_difference"));
            if kind == ManifoldKind::So3Left {
                let worst = max(&|p| p.closed_rel.unwrap_or(f64::INFINITY));
                out.push(bounded(cfg, "bracket_formula-closed_form".into(), m.name(), 2, worst, tol.bracket_closed_rel, "left_invariant_closed_form"));
            }
        }
    }
    Ok(out)
}

fn ibp_row(cfg: &Resolved, id: &str, manifold: &str, p: usize, rep: &IbpReport) -> Check {
    let n_se = cfg.tolerances.n_se;
    let mut r = row(cfg, id.to_string(), manifold, p);
    r.value = rep.residual;
    r.stderr = rep.stderr;
    r.target_provenance = "integration_by_parts".into();
    r.pass = rep.within(n_se);
    Check { row: r, criterion: format!("|E[dφ(h)] + E[φ(div h)]| <= {n_se} stderr") }
}

fn sine_field(seed: u64, dim: usize) -> SineField<f64> {
    SineField {
        base: random_direction(seed, dim),
        amp: random_direction(seed + 1, dim) * 0.5,
        freq: random_direction(seed + 2, dim),
    }
}

/// Integration by parts on Wiener space for p = 1, 2 adapted fields; the
/// `q` column holds p.
pub fn ibp(cfg: &Resolved) -> Result<Vec<Check>, CliError> {
    const DIM: usize = 3;
    let steps = cfg.steps();
    let (n, seed, h) = (cfg.n_paths, cfg.seed, cfg.h);
    let mid = steps / 2;
    let phi0 = CylindricalWienerForm::new(Kernel::Sin, random_direction(101, DIM), steps, vec![])?;
    let phi1 = CylindricalWienerForm::new(Kernel::Sin, random_direction(102, DIM), steps, vec![(random_direction(103, DIM), mid)])?;
    let mut out = Vec::new();

    let c = random_direction(104, DIM);
    let rep = ibp_check(&phi0, n, constant_sampler(seed, DIM, h, steps, vec![c]))?;
    out.push(ibp_row(cfg, "ibp_p1_constant", "flat_wiener", 1, &rep));

    let rep = ibp_check(&phi0, n, sine_sampler(seed, DIM, h, steps, vec![sine_field(110, DIM)]))?;
    out.push(ibp_row(cfg, "ibp_p1_sine", "flat_wiener", 1, &rep));

    let fields = vec![sine_field(120, DIM), sine_field(130, DIM)];
    let rep = ibp_check(&phi1, n, sine_sampler(seed, DIM, h, steps, fields))?;
    out.push(ibp_row(cfg, "ibp_p2_sine", "flat_wiener", 2, &rep));

    for kind in cfg.manifolds() {
        let m = Manifold::new(kind);
        let x0 = base_point(&m)?;
        let d = m.noise_dim();
        let phi = CylindricalWienerForm::new(Kernel::Sin, random_direction(140, d), steps, vec![(random_direction(141, d), mid)])?;
        let sampler = manifold_sampler(&m, x0, seed, h, steps, cfg.rho.clone(), directions(&m, &x0, 2));
        let rep = ibp_check(&phi, n, sampler)?;
        out.push(ibp_row(cfg, "ibp_p2_manifold_fields", m.name(), 2, &rep));
    }
    Ok(out)
}

pub fn h2identity(cfg: &Resolved) -> Result<Vec<Check>, CliError> {
    let mut out = Vec::new();
    let steps = cfg.steps();
    for kind in cfg.manifolds() {
        let m = Manifold::new(kind);
        let x0 = base_point(&m)?;
        let v = wedge_of(&directions(&m, &x0, 2))?;
        let flat = m.sectional_curvature() == 0.0;
        let residual = |refine: usize, h: f64, steps: usize| -> Result<Vec<f64>, CliError> {
            (0..cfg.n_paths)
                .into_par_iter()
                .map(|p| {
                    let path = sample_path(&m, &x0, cfg, p, refine, h, steps)?;
                    let stack = TransportStack::build(&m, &path, stack_needs())?;
                    Ok(identity_check(&m, &path, &stack, &cfg.lambda, &v)?)
                })
                .collect()
        };
        let coarse = residual(2, cfg.h, steps)?;
        let worst = coarse.iter().copied().fold(0.0f64, f64::max);
        let tol = &cfg.tolerances;
        let bound = if flat { tol.identity_flat } else { tol.identity_curved };
        out.push(bounded(cfg, "h2identity_residual".into(), m.name(), 2, worst, bound, "pathwise_identity"));
        if !flat {
            let fine = residual(1, cfg.h / 2.0, 2 * steps)?;
            let ratio = coarse.iter().sum::<f64>() / fine.iter().sum::<f64>();
            let mut r = row(cfg, "h2identity_ratio".into(), m.name(), 2);
            r.value = ratio;
            r.target = 2.0;
            r.target_provenance = "first_order_scheme".into();
            r.pass = (tol.ratio_min..=tol.ratio_max).contains(&ratio);
            out.push(Check { row: r, criterion: format!("residual(h) / residual(h/2) in [{}, {}]", tol.ratio_min, tol.ratio_max) });
        }
    }
    Ok(out)
}
