use bismut_core::estimators::{
    haar_casimir_eigenvalue, haar_spectral_target, run_functionals, run_one, spectral_target, BismutFlow,
    BismutFlowTorsion, BismutIntrinsic, BismutLieGroup, BismutQ0, DirectDamped, DirectPullback, Functional,
    McConfig,
};
use bismut_core::forms::{FormId, FormRef};
use bismut_core::hspaces::ZDivergenceIbp;
use bismut_core::manifold::ManifoldKind;
use bismut_core::schedule::ScalarSchedule;
use bismut_core::{Manifold, MultiVector};

use super::{
    against_target, base_point, bounded, default_function, default_one_form, default_two_form, directions, mc,
    paired, row, wedge_of,
};
use crate::config::Resolved;
use crate::error::CliError;
use crate::report::Check;

const HAAR_SAMPLES: usize = 20_000;

pub fn bismut_q0(cfg: &Resolved) -> Result<Vec<Check>, CliError> {
    let mut out = Vec::new();
    for kind in cfg.manifolds() {
        let m = Manifold::new(kind);
        let x0 = base_point(&m)?;
        let f = cfg.form_on(kind).unwrap_or(default_function(kind));
        let v0 = directions(&m, &x0, 1)[0];
        let est = BismutQ0 { form: FormRef::form(f), v0, rho: cfg.rho.clone() };
        let rep = run_one(&m, &x0, &est, &mc(cfg))?;
        let target = spectral_target(&m, &x0, f, &MultiVector::vector(&v0), cfg.t)?;
        let id = format!("bismut_q0[{}]", f.name());
        out.push(against_target(cfg, id, &rep, target, "spectral", Some(cfg.tolerances.q0_rel)));
    }
    Ok(out)
}

pub fn bismut_q1(cfg: &Resolved) -> Result<Vec<Check>, CliError> {
    let mut out = Vec::new();
    for kind in cfg.manifolds() {
        let m = Manifold::new(kind);
        let x0 = base_point(&m)?;
        let phi = cfg.form_on(kind).unwrap_or(default_one_form(kind));
        let f = default_function(kind);
        let v0 = wedge_of(&directions(&m, &x0, 2))?;
        let intrinsic = BismutIntrinsic { form: FormRef::form(phi), v0, rho: cfg.rho.clone() };
        let direct = DirectPullback { form: FormRef::exterior(phi), v0 };
        let exact = BismutIntrinsic { form: FormRef::exterior(f), v0, rho: cfg.rho.clone() };
        let fs: [&dyn Functional<f64>; 3] = [&intrinsic, &direct, &exact];
        let reps = run_functionals(&m, &x0, &fs, &mc(cfg))?;
        out.push(paired(cfg, format!("bismut_intrinsic[{}]-direct_pullback", phi.name()), &reps[0], &reps[1])?);
        let id = format!("bismut_intrinsic[d{}]", f.name());
        out.push(against_target(cfg, id, &reps[2], 0.0, "exact_form", None));
    }
    Ok(out)
}

pub fn bismut_flow(cfg: &Resolved) -> Result<Vec<Check>, CliError> {
    let mut out = Vec::new();
    for kind in cfg.manifolds() {
        let m = Manifold::new(kind);
        let x0 = base_point(&m)?;
        let phi = cfg.form_on(kind).unwrap_or(default_one_form(kind));
        let factors = directions(&m, &x0, 2);
        let other = if cfg.rho == ScalarSchedule::linear() { ScalarSchedule::constant(1.0) } else { ScalarSchedule::linear() };
        let flow = BismutFlow { form: FormRef::form(phi), factors: factors.clone(), rho: cfg.rho.clone() };
        let flow_other = BismutFlow { form: FormRef::form(phi), factors: factors.clone(), rho: other };
        let direct = DirectPullback { form: FormRef::exterior(phi), v0: wedge_of(&factors)? };
        let torsion = BismutFlowTorsion(flow.clone());
        let fs: [&dyn Functional<f64>; 4] = [&flow, &flow_other, &direct, &torsion];
        let reps = run_functionals(&m, &x0, &fs, &mc(cfg))?;
        let sup = reps[3].samples.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        out.push(bounded(cfg, format!("bismut_flow_torsion[{}]", phi.name()), m.name(), 1, sup, 0.0, "gradient_system"));
        out.push(paired(cfg, format!("bismut_flow[{}]-direct_pullback", phi.name()), &reps[0], &reps[2])?);
        out.push(paired(cfg, format!("bismut_flow[{}]-rho_swap", phi.name()), &reps[0], &reps[1])?);
    }
    Ok(out)
}

fn forms_by_degree(kind: ManifoldKind) -> Vec<FormId> {
    vec![default_function(kind), default_one_form(kind), default_two_form(kind)]
}

pub fn filtering(cfg: &Resolved) -> Result<Vec<Check>, CliError> {
    let mut out = Vec::new();
    for kind in cfg.manifolds() {
        let m = Manifold::new(kind);
        let x0 = base_point(&m)?;
        let dirs = directions(&m, &x0, 2);
        let mut direct = Vec::new();
        let mut damped = Vec::new();
        for (q, f) in forms_by_degree(kind).into_iter().enumerate() {
            let v0 = wedge_of(&dirs[..q])?;
            direct.push(DirectPullback { form: FormRef::form(f), v0 });
            damped.push(DirectDamped { form: FormRef::form(f), v0 });
        }
        let mut fs: Vec<&dyn Functional<f64>> = Vec::new();
        for (a, b) in direct.iter().zip(&damped) {
            fs.push(a);
            fs.push(b);
        }
        let reps = run_functionals(&m, &x0, &fs, &mc(cfg))?;
        for (pair, f) in reps.chunks(2).zip(forms_by_degree(kind)) {
            out.push(paired(cfg, format!("direct_pullback[{}]-direct_damped", f.name()), &pair[0], &pair[1])?);
        }
    }
    Ok(out)
}

pub fn liegroup(cfg: &Resolved) -> Result<Vec<Check>, CliError> {
    let m = Manifold::new(ManifoldKind::So3Left);
    let x0 = m.origin();
    let dirs = directions(&m, &x0, 3);
    let f = FormId::So3R12;
    let theta = FormId::So3ThetaL1;
    let lie0 = BismutLieGroup { form: FormRef::form(f), factors: vec![dirs[2]], rho: cfg.rho.clone() };
    let lie1 = BismutLieGroup { form: FormRef::form(theta), factors: dirs[..2].to_vec(), rho: cfg.rho.clone() };
    let direct = DirectPullback { form: FormRef::exterior(theta), v0: wedge_of(&dirs[..2])? };
    let fs: [&dyn Functional<f64>; 3] = [&lie0, &lie1, &direct];
    let reps = run_functionals(&m, &x0, &fs, &mc(cfg))?;
    let eig = haar_casimir_eigenvalue(f, HAAR_SAMPLES, cfg.seed)?;
    let target = haar_spectral_target(&m, f, &MultiVector::vector(&dirs[2]), cfg.t, &eig)?;
    Ok(vec![
        against_target(cfg, format!("bismut_lie_group[{}]", f.name()), &reps[0], target, "haar_quadrature", Some(cfg.tolerances.lie_rel)),
        paired(cfg, format!("bismut_lie_group[{}]-direct_pullback", theta.name()), &reps[1], &reps[2])?,
    ])
}

/// Paths run to `2t`; the divergence is read at `t`.
pub fn h2divergence(cfg: &Resolved) -> Result<Vec<Check>, CliError> {
    let mut out = Vec::new();
    for kind in cfg.manifolds() {
        let m = Manifold::new(kind);
        let x0 = base_point(&m)?;
        let forms = match cfg.form_on(kind) {
            Some(f) => vec![f],
            None => match kind {
                ManifoldKind::S2 => vec![FormId::SphereRotZ, FormId::SphereDz],
                ManifoldKind::Torus => vec![FormId::TorusCospsiDtheta, FormId::TorusDtheta],
                _ => vec![default_one_form(kind)],
            },
        };
        let v = wedge_of(&directions(&m, &x0, 2))?;
        let ests: Vec<ZDivergenceIbp<f64>> = forms
            .iter()
            .map(|&form| ZDivergenceIbp { form, lambda: cfg.lambda.clone(), v, at: cfg.t })
            .collect();
        let fs: Vec<&dyn Functional<f64>> = ests.iter().map(|e| e as &dyn Functional<f64>).collect();
        let run = McConfig::new(cfg.n_paths, cfg.seed, 2.0 * cfg.t, cfg.h);
        let reps = run_functionals(&m, &x0, &fs, &run)?;
        for (rep, f) in reps.iter().zip(&forms) {
            let n_se = cfg.tolerances.n_se;
            let mut r = row(cfg, format!("z_divergence_ibp[{}]", f.name()), m.name(), 1);
            r.value = rep.value;
            r.stderr = rep.stderr;
            r.target_provenance = "integration_by_parts".into();
            r.pass = rep.value.abs() <= n_se * rep.stderr;
            out.push(Check { row: r, criterion: format!("|value| <= {n_se} stderr (paths of horizon 2t)") });
        }
    }
    Ok(out)
}
