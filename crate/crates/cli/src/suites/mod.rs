//! Verification suites. Each returns one [`Check`] per tested statement.

mod estimators;
mod paths;

use bismut_core::estimators::{paired_compare, EstimatorReport, McConfig};
use bismut_core::forms::FormId;
use bismut_core::manifold::ManifoldKind;
use bismut_core::{Manifold, MultiVector, Point, Vec4};

use crate::config::{digest, ExperimentConfig, Resolved, SuiteName};
use crate::error::CliError;
use crate::report::{Check, CheckRow, RunOutput, SuiteOutput};

use ManifoldKind::*;

pub fn supported_manifolds(suite: SuiteName) -> Vec<ManifoldKind> {
    match suite {
        SuiteName::BismutQ0 => ManifoldKind::ALL.to_vec(),
        SuiteName::BismutQ1 | SuiteName::Bracket | SuiteName::Filtering => {
            vec![S2, S3, Torus, So3Left, So3Right, So3BiInvariant]
        }
        SuiteName::BismutFlow | SuiteName::H2identity | SuiteName::H2divergence => vec![S2, S3, Torus],
        SuiteName::Ibp => ManifoldKind::ALL.to_vec(),
        SuiteName::Liegroup => vec![So3Left],
        SuiteName::All => Vec::new(),
    }
}

pub fn default_manifolds(suite: SuiteName) -> Vec<ManifoldKind> {
    match suite {
        SuiteName::BismutQ0 => vec![S2, S1],
        SuiteName::Bracket => vec![S2, So3Left],
        SuiteName::Ibp | SuiteName::Liegroup => vec![So3Left],
        SuiteName::H2identity => vec![Torus, S2],
        SuiteName::All => Vec::new(),
        _ => vec![S2],
    }
}

/// Rejects a user-selected form the suite cannot use.
pub fn check_form(suite: SuiteName, kind: ManifoldKind, f: FormId) -> Result<(), CliError> {
    let need = |q: usize| -> Result<(), CliError> {
        if f.degree() != q {
            return Err(CliError::Config(format!(
                "suite '{suite}' needs a {q}-form, but {} on {} has degree {}",
                f.name(),
                kind.name(),
                f.degree()
            )));
        }
        Ok(())
    };
    match suite {
        SuiteName::BismutQ0 => {
            need(0)?;
            if f.heat_rate().is_none() {
                return Err(CliError::Config(format!("{} has no closed-form spectral target", f.name())));
            }
            Ok(())
        }
        SuiteName::BismutQ1 | SuiteName::BismutFlow | SuiteName::H2divergence => need(1),
        _ => Err(CliError::Config(format!("suite '{suite}' uses fixed forms and takes no 'form'"))),
    }
}

pub(crate) fn default_function(kind: ManifoldKind) -> FormId {
    match kind {
        S1 => FormId::CircleCos,
        S2 => FormId::SphereZ,
        S3 => FormId::S3X4,
        Torus => FormId::TorusCosCos,
        _ => FormId::So3R12,
    }
}

pub(crate) fn default_one_form(kind: ManifoldKind) -> FormId {
    match kind {
        S1 => FormId::CircleDtheta,
        S2 => FormId::SphereRotZ,
        S3 => FormId::S3Rot12,
        Torus => FormId::TorusCospsiDtheta,
        _ => FormId::So3ThetaL1,
    }
}

pub(crate) fn default_two_form(kind: ManifoldKind) -> FormId {
    match kind {
        S2 => FormId::SphereZArea,
        S3 => FormId::S3Dx12,
        Torus => FormId::TorusDthetaDpsi,
        _ => FormId::So3ThetaL12,
    }
}

/// Generic start point of each manifold; the identity on SO(3).
pub(crate) fn base_point(m: &Manifold) -> Result<Point, CliError> {
    let (a, b) = (0.7f64, 1.3f64);
    let c = match m.kind() {
        S1 => Vec4::new(1f64.cos(), 1f64.sin(), 0.0, 0.0),
        S2 => Vec4::new(0.48, 0.6, 0.64, 0.0),
        S3 => Vec4::new(0.5, 0.5, 0.5, 0.5),
        Torus => Vec4::new(a.cos(), a.sin(), b.cos(), b.sin()),
        _ => return Ok(m.origin()),
    };
    Ok(m.point(c)?)
}

const MIX: [[f64; 3]; 3] = [[0.8, 0.6, 0.0], [-0.36, 0.48, 0.8], [0.48, -0.64, 0.6]];

/// `k` orthonormal mixtures of the tangent frame at `x0` (up to the dimension).
pub(crate) fn directions(m: &Manifold, x0: &Point, k: usize) -> Vec<Vec4> {
    let frame = m.tangent_frame(x0);
    (0..k)
        .map(|i| frame.iter().take(3).enumerate().fold(Vec4::zeros(), |acc, (j, f)| acc + f * MIX[i][j]))
        .collect()
}

pub(crate) fn wedge_of(vs: &[Vec4]) -> Result<MultiVector, CliError> {
    if vs.is_empty() {
        return Ok(MultiVector::scalar(1.0));
    }
    Ok(MultiVector::primitive(vs)?)
}

pub(crate) fn mc(cfg: &Resolved) -> McConfig {
    McConfig::new(cfg.n_paths, cfg.seed, cfg.t, cfg.h)
}

pub(crate) fn row(cfg: &Resolved, formula_id: String, manifold: &str, q: usize) -> CheckRow {
    CheckRow {
        formula_id,
        manifold: manifold.to_string(),
        q,
        t: cfg.t,
        h: cfg.h,
        n: cfg.n_paths,
        seed: cfg.seed,
        value: 0.0,
        stderr: 0.0,
        target: 0.0,
        target_provenance: String::new(),
        pass: false,
    }
}

/// Estimate against a known target: within `n_se` standard errors and,
/// when `rel` is given, within that fraction of the target.
pub(crate) fn against_target(
    cfg: &Resolved,
    id: String,
    rep: &EstimatorReport,
    target: f64,
    provenance: &str,
    rel: Option<f64>,
) -> Check {
    let n_se = cfg.tolerances.n_se;
    let err = (rep.value - target).abs();
    let mut pass = err <= n_se * rep.stderr;
    let mut criterion = format!("|value - target| <= {n_se} stderr");
    if let Some(r) = rel {
        pass &= err <= r * target.abs();
        criterion.push_str(&format!(" and <= {r} |target|"));
    }
    let mut r = row(cfg, id, &rep.manifold, rep.q);
    r.value = rep.value;
    r.stderr = rep.stderr;
    r.target = target;
    r.target_provenance = provenance.to_string();
    r.pass = pass;
    Check { row: r, criterion }
}

/// Paired difference of two estimators run on common paths, against zero.
pub(crate) fn paired(cfg: &Resolved, id: String, a: &EstimatorReport, b: &EstimatorReport) -> Result<Check, CliError> {
    let p = paired_compare(a, b)?;
    let n_se = cfg.tolerances.n_se;
    let mut r = row(cfg, id, &a.manifold, a.q);
    r.value = p.diff;
    r.stderr = p.stderr;
    r.target_provenance = format!("paired:{}", b.formula_id);
    r.pass = p.within(n_se);
    Ok(Check { row: r, criterion: format!("|mean paired difference| <= {n_se} stderr") })
}

/// A deterministic quantity against an upper bound (or exact zero when `bound` is 0).
pub(crate) fn bounded(cfg: &Resolved, id: String, manifold: &str, q: usize, value: f64, bound: f64, provenance: &str) -> Check {
    let mut r = row(cfg, id, manifold, q);
    r.value = value;
    r.target_provenance = provenance.to_string();
    let criterion = if bound == 0.0 {
        r.pass = value == 0.0;
        "value == 0 exactly".to_string()
    } else {
        r.pass = value.is_finite() && value < bound;
        format!("value < {bound}")
    };
    Check { row: r, criterion }
}

pub fn run_suite(cfg: &Resolved) -> Result<Vec<Check>, CliError> {
    match cfg.suite {
        SuiteName::BismutQ0 => estimators::bismut_q0(cfg),
        SuiteName::BismutQ1 => estimators::bismut_q1(cfg),
        SuiteName::BismutFlow => estimators::bismut_flow(cfg),
        SuiteName::Filtering => estimators::filtering(cfg),
        SuiteName::Liegroup => estimators::liegroup(cfg),
        SuiteName::H2divergence => estimators::h2divergence(cfg),
        SuiteName::Bracket => paths::bracket(cfg),
        SuiteName::Ibp => paths::ibp(cfg),
        SuiteName::H2identity => paths::h2identity(cfg),
        SuiteName::All => Err(CliError::Config("'all' is expanded before running".into())),
    }
}

/// Resolves and runs an experiment.
pub fn run(config: &ExperimentConfig) -> Result<RunOutput, CliError> {
    let runs = config.resolve()?;
    let digest = digest(&runs);
    let mut suites = Vec::with_capacity(runs.len());
    for cfg in runs {
        let checks = run_suite(&cfg)?;
        suites.push(SuiteOutput { config: cfg, checks });
    }
    Ok(RunOutput { digest, suites })
}
