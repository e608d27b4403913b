use std::fmt;
use std::path::Path;

use bismut_core::forms::FormId;
use bismut_core::manifold::ManifoldKind;
use bismut_core::schedule::ScalarSchedule;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SuiteName {
    BismutQ0,
    BismutQ1,
    BismutFlow,
    Bracket,
    Ibp,
    H2identity,
    H2divergence,
    Liegroup,
    Filtering,
    All,
}

impl SuiteName {
    /// Every concrete suite, in the order `all` runs them.
    pub const CONCRETE: [SuiteName; 9] = [
        SuiteName::BismutQ0,
        SuiteName::BismutQ1,
        SuiteName::BismutFlow,
        SuiteName::Bracket,
        SuiteName::Ibp,
        SuiteName::H2identity,
        SuiteName::H2divergence,
        SuiteName::Liegroup,
        SuiteName::Filtering,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SuiteName::BismutQ0 => "bismut_q0",
            SuiteName::BismutQ1 => "bismut_q1",
            SuiteName::BismutFlow => "bismut_flow",
            SuiteName::Bracket => "bracket",
            SuiteName::Ibp => "ibp",
            SuiteName::H2identity => "h2identity",
            SuiteName::H2divergence => "h2divergence",
            SuiteName::Liegroup => "liegroup",
            SuiteName::Filtering => "filtering",
            SuiteName::All => "all",
        }
    }

    pub fn description(self) -> &'static str {
        match self {
            SuiteName::BismutQ0 => "derivative formula for the heat semigroup on functions, against spectral targets",
            SuiteName::BismutQ1 => {
                "exterior derivative of the heat semigroup on 1-forms through damped transport (intrinsic formula)"
            }
            SuiteName::BismutFlow => "Bismut formula through the derivative flow, with its torsion double sum",
            SuiteName::Bracket => "bracket of H-vector fields generated by the flow, against finite differences",
            SuiteName::Ibp => "Shigekawa theorem: integration by parts for adapted H-vector fields on Wiener space",
            SuiteName::H2identity => "the identity U + Q(U) = Z for two-vector fields built from damped transport",
            SuiteName::H2divergence => "divergence of the two-vector field Z, as an integration by parts on path space",
            SuiteName::Liegroup => "Lie-group formula on SO(3), against a Haar-quadrature spectral target",
            SuiteName::Filtering => "pulled-back forms filtered onto the path: direct pull-back against damped transport",
            SuiteName::All => "every suite above, in this order",
        }
    }

    pub fn parse(name: &str) -> Result<Self, CliError> {
        Self::CONCRETE
            .into_iter()
            .chain([SuiteName::All])
            .find(|s| s.name() == name)
            .ok_or_else(|| CliError::Config(format!("unknown suite '{name}' (valid: {})", suite_names())))
    }
}

impl fmt::Display for SuiteName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

fn suite_names() -> String {
    SuiteName::CONCRETE
        .iter()
        .chain([&SuiteName::All])
        .map(|s| s.name())
        .collect::<Vec<_>>()
        .join(", ")
}

/// Text printed by `list-suites`.
pub fn list_suites() -> String {
    let mut out = String::new();
    for s in SuiteName::CONCRETE.iter().chain([&SuiteName::All]) {
        out.push_str(&format!("{} → {}\n", s.name(), s.description()));
    }
    out
}

/// Pass thresholds; every field defaults to the acceptance value.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Tolerances {
    /// Statistical checks pass within this many standard errors.
    pub n_se: f64,
    pub q0_rel: f64,
    pub lie_rel: f64,
    /// Bound on the finite-difference bracket norm on gradient systems.
    pub bracket_zero: f64,
    pub bracket_fd_rel: f64,
    pub bracket_closed_rel: f64,
    pub fd_eps: f64,
    pub identity_flat: f64,
    pub identity_curved: f64,
    pub ratio_min: f64,
    pub ratio_max: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            n_se: 3.0,
            q0_rel: 0.02,
            lie_rel: 0.03,
            bracket_zero: 1e-2,
            bracket_fd_rel: 0.05,
            bracket_closed_rel: 0.01,
            fd_eps: 1e-4,
            identity_flat: 1e-10,
            identity_curved: 5e-3,
            ratio_min: 1.6,
            ratio_max: 2.6,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToleranceOverrides {
    pub n_se: Option<f64>,
    pub q0_rel: Option<f64>,
    pub lie_rel: Option<f64>,
    pub bracket_zero: Option<f64>,
    pub bracket_fd_rel: Option<f64>,
    pub bracket_closed_rel: Option<f64>,
    pub fd_eps: Option<f64>,
    pub identity_flat: Option<f64>,
    pub identity_curved: Option<f64>,
    pub ratio_min: Option<f64>,
    pub ratio_max: Option<f64>,
}

impl ToleranceOverrides {
    /// Applies the overrides, returning the names of the fields that changed.
    pub fn apply(&self, tol: &mut Tolerances) -> Result<Vec<String>, CliError> {
        let mut names = Vec::new();
        let fields: [(&str, Option<f64>, &mut f64); 11] = [
            ("n_se", self.n_se, &mut tol.n_se),
            ("q0_rel", self.q0_rel, &mut tol.q0_rel),
            ("lie_rel", self.lie_rel, &mut tol.lie_rel),
            ("bracket_zero", self.bracket_zero, &mut tol.bracket_zero),
            ("bracket_fd_rel", self.bracket_fd_rel, &mut tol.bracket_fd_rel),
            ("bracket_closed_rel", self.bracket_closed_rel, &mut tol.bracket_closed_rel),
            ("fd_eps", self.fd_eps, &mut tol.fd_eps),
            ("identity_flat", self.identity_flat, &mut tol.identity_flat),
            ("identity_curved", self.identity_curved, &mut tol.identity_curved),
            ("ratio_min", self.ratio_min, &mut tol.ratio_min),
            ("ratio_max", self.ratio_max, &mut tol.ratio_max),
        ];
        for (name, value, slot) in fields {
            if let Some(v) = value {
                if !(v.is_finite() && v > 0.0) {
                    return Err(CliError::Config(format!("tolerance '{name}' must be positive and finite, got {v}")));
                }
                *slot = v;
                names.push(name.to_string());
            }
        }
        if tol.ratio_min >= tol.ratio_max {
            return Err(CliError::Config("ratio_min must be below ratio_max".into()));
        }
        Ok(names)
    }
}

/// An experiment as read from a JSON file; omitted fields take the suite
/// defaults.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub suite: SuiteName,
    #[serde(default)]
    pub manifold: Option<String>,
    #[serde(default)]
    pub t: Option<f64>,
    #[serde(default)]
    pub h: Option<f64>,
    #[serde(default, rename = "N")]
    pub n_paths: Option<usize>,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub rho: Option<ScalarSchedule>,
    #[serde(default)]
    pub lambda: Option<ScalarSchedule>,
    #[serde(default)]
    pub form: Option<String>,
    #[serde(default)]
    pub tolerances: ToleranceOverrides,
}

pub const DEFAULT_SEED: u64 = 20_240_601;
pub const DEFAULT_H: f64 = 1e-3;

impl ExperimentConfig {
    pub fn new(suite: SuiteName) -> Self {
        Self {
            suite,
            manifold: None,
            t: None,
            h: None,
            n_paths: None,
            seed: None,
            rho: None,
            lambda: None,
            form: None,
            tolerances: ToleranceOverrides::default(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| CliError::Config(format!("invalid config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// Fills in suite defaults and validates every name and number.
    pub fn resolve(&self) -> Result<Vec<Resolved>, CliError> {
        let suites: Vec<SuiteName> = if self.suite == SuiteName::All {
            if self.manifold.is_some() || self.form.is_some() {
                return Err(CliError::Config("suite 'all' runs fixed manifolds and forms; drop 'manifold' and 'form'".into()));
            }
            SuiteName::CONCRETE.to_vec()
        } else {
            vec![self.suite]
        };
        let mut tol = Tolerances::default();
        let overrides = self.tolerances.apply(&mut tol)?;
        let manifold = self
            .manifold
            .as_deref()
            .map(ManifoldKind::parse)
            .transpose()
            .map_err(|e| CliError::Config(e.to_string()))?;
        suites
            .into_iter()
            .map(|suite| {
                let d = defaults(suite);
                let r = Resolved {
                    suite,
                    manifold,
                    t: self.t.unwrap_or(d.t),
                    h: self.h.unwrap_or(DEFAULT_H),
                    n_paths: self.n_paths.unwrap_or(d.n_paths),
                    seed: self.seed.unwrap_or(DEFAULT_SEED),
                    rho: self.rho.clone().unwrap_or_default(),
                    lambda: self.lambda.clone().unwrap_or_else(ScalarSchedule::linear),
                    form: self.form.clone(),
                    tolerances: tol,
                    overrides: overrides.clone(),
                };
                r.validate()?;
                Ok(r)
            })
            .collect()
    }
}

struct SuiteDefaults {
    t: f64,
    n_paths: usize,
}

fn defaults(suite: SuiteName) -> SuiteDefaults {
    let (t, n_paths) = match suite {
        SuiteName::Bracket => (0.5, 8),
        SuiteName::Ibp => (0.5, 100_000),
        SuiteName::H2identity => (0.5, 4),
        _ => (0.5, 200_000),
    };
    SuiteDefaults { t, n_paths }
}

/// A fully specified run of one concrete suite.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Resolved {
    pub suite: SuiteName,
    pub manifold: Option<ManifoldKind>,
    pub t: f64,
    pub h: f64,
    #[serde(rename = "N")]
    pub n_paths: usize,
    pub seed: u64,
    pub rho: ScalarSchedule,
    pub lambda: ScalarSchedule,
    pub form: Option<String>,
    pub tolerances: Tolerances,
    pub overrides: Vec<String>,
}

impl Resolved {
    fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Config(m));
        if !(self.t.is_finite() && self.t > 0.0) {
            return bad(format!("t must be positive, got {}", self.t));
        }
        if !(self.h.is_finite() && self.h > 0.0 && self.h <= self.t) {
            return bad(format!("h must lie in (0, t], got {}", self.h));
        }
        let steps = self.t / self.h;
        if (steps - steps.round()).abs() > 1e-9 * steps.max(1.0) {
            return bad(format!("t = {} is not a whole number of steps h = {}", self.t, self.h));
        }
        if self.n_paths < 2 {
            return bad(format!("N must be at least 2, got {}", self.n_paths));
        }
        self.rho.validate().map_err(|e| CliError::Config(format!("rho: {e}")))?;
        self.lambda.validate().map_err(|e| CliError::Config(format!("lambda: {e}")))?;
        if self.lambda.value(0.0).abs() > 1e-12 {
            return bad("lambda must vanish at time zero".into());
        }
        if let Some(kind) = self.manifold {
            let allowed = crate::suites::supported_manifolds(self.suite);
            if !allowed.contains(&kind) {
                let names: Vec<_> = allowed.iter().map(|k| k.name()).collect();
                return bad(format!(
                    "suite '{}' does not run on {} (valid: {})",
                    self.suite,
                    kind.name(),
                    names.join(", ")
                ));
            }
        }
        if let Some(name) = &self.form {
            let kinds = self.manifolds();
            for kind in kinds {
                let f = FormId::parse(kind, name).map_err(|e| CliError::Config(e.to_string()))?;
                crate::suites::check_form(self.suite, kind, f)?;
            }
        }
        Ok(())
    }

    /// Manifolds this run visits.
    pub fn manifolds(&self) -> Vec<ManifoldKind> {
        match self.manifold {
            Some(k) => vec![k],
            None => crate::suites::default_manifolds(self.suite),
        }
    }

    pub fn steps(&self) -> usize {
        (self.t / self.h).round() as usize
    }

    /// The user-selected form on `kind`, if any.
    pub fn form_on(&self, kind: ManifoldKind) -> Option<FormId> {
        self.form.as_deref().and_then(|n| FormId::parse(kind, n).ok())
    }
}

/// First 64 bits of the SHA-256 of the canonical JSON of the resolved runs.
pub fn digest(runs: &[Resolved]) -> String {
    let text = serde_json::to_string(runs).expect("resolved configs serialise");
    let hash = Sha256::digest(text.as_bytes());
    let mut word = [0u8; 8];
    word.copy_from_slice(&hash[..8]);
    format!("{:016x}", u64::from_be_bytes(word))
}
