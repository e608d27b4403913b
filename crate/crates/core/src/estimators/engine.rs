use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::flow::{FlowState, Grid, Needs, NoiseDriver, StepCtx};
use crate::manifold::{Manifold, Point};
use crate::scalar::Real;

pub const CHUNK: usize = 1024;

/// Monte Carlo run parameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct McConfig {
    pub n_paths: usize,
    pub seed: u64,
    pub t: f64,
    pub h: f64,
}

impl McConfig {
    pub fn new(n_paths: usize, seed: u64, t: f64, h: f64) -> Self {
        Self { n_paths, seed, t, h }
    }

    pub fn grid(&self) -> Result<Grid> {
        if self.n_paths < 2 {
            return Err(Error::InvalidParameter("need at least two paths".into()));
        }
        Grid::new(self.t, self.h)
    }
}

/// A per-path quantity computed in one forward sweep along the flow.
pub trait Functional<S: Real>: Sync {
    fn formula_id(&self) -> &'static str;
    /// Degree of the form whose derivative is being estimated.
    fn degree(&self) -> usize;
    fn needs(&self, m: &Manifold<S>) -> Needs;
    fn start<'a>(&'a self, m: &Manifold<S>, st: &FlowState<S>) -> Result<Box<dyn Tracker<S> + 'a>>;
}

pub trait Tracker<S: Real> {
    /// Called at `x_k` with the increment `ΔB_k`, before the state advances.
    fn step(&mut self, m: &Manifold<S>, st: &FlowState<S>, ctx: &StepCtx<S>) -> Result<()>;
    fn finish(&mut self, m: &Manifold<S>, st: &FlowState<S>) -> Result<f64>;
}

#[derive(Clone, Debug, Serialize)]
pub struct EstimatorReport {
    pub formula_id: String,
    pub manifold: String,
    pub q: usize,
    pub t: f64,
    pub h: f64,
    pub n_paths: usize,
    pub seed: u64,
    pub value: f64,
    pub stderr: f64,
    #[serde(skip)]
    pub samples: Vec<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct PairedReport {
    pub first: String,
    pub second: String,
    pub first_value: f64,
    pub second_value: f64,
    /// Mean of per-path differences `first - second`.
    pub diff: f64,
    pub stderr: f64,
}

impl PairedReport {
    pub fn within(&self, n_se: f64) -> bool {
        self.diff.abs() <= n_se * self.stderr
    }
}

/// Mean and standard error, reduced sequentially in path-index order.
pub fn mean_stderr(samples: &[f64]) -> (f64, f64) {
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let var = samples.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Runs all functionals on the same paths; path `i` always uses noise
/// stream `i`, so results do not depend on the thread count.
pub fn run_functionals<S: Real>(
    m: &Manifold<S>,
    x0: &Point<S>,
    fs: &[&dyn Functional<S>],
    cfg: &McConfig,
) -> Result<Vec<EstimatorReport>> {
    let grid = cfg.grid()?;
    m.check_point(x0)?;
    let needs = fs.iter().fold(Needs::default(), |acc, f| acc.union(f.needs(m)));
    let h = S::lit(cfg.h);
    let nf = fs.len();
    let run_path = |p: usize| -> Result<Vec<f64>> {
        let mut driver = NoiseDriver::new(cfg.seed, p as u64, m.noise_dim(), cfg.h);
        let mut st = FlowState::new(m, x0, needs)?;
        let mut trackers = fs.iter().map(|f| f.start(m, &st)).collect::<Result<Vec<_>>>()?;
        for _ in 0..grid.steps {
            let db = driver.next_increment::<S>();
            let ctx = st.ctx(m, &db, h);
            for tr in trackers.iter_mut() {
                tr.step(m, &st, &ctx)?;
            }
            st.advance(m, &db, h)?;
        }
        trackers.iter_mut().map(|tr| tr.finish(m, &st)).collect()
    };
    let n_chunks = cfg.n_paths.div_ceil(CHUNK);
    let chunks: Vec<Vec<f64>> = (0..n_chunks)
        .into_par_iter()
        .map(|c| {
            let lo = c * CHUNK;
            let hi = (lo + CHUNK).min(cfg.n_paths);
            let mut out = Vec::with_capacity((hi - lo) * nf);
            for p in lo..hi {
                out.extend(run_path(p)?);
            }
            Ok(out)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut samples = vec![Vec::with_capacity(cfg.n_paths); nf];
    for chunk in &chunks {
        for row in chunk.chunks(nf) {
            for (i, v) in row.iter().enumerate() {
                samples[i].push(*v);
            }
        }
    }
    Ok(fs
        .iter()
        .zip(samples)
        .map(|(f, s)| {
            let (value, stderr) = mean_stderr(&s);
            EstimatorReport {
                formula_id: f.formula_id().to_string(),
                manifold: m.name().to_string(),
                q: f.degree(),
                t: cfg.t,
                h: cfg.h,
                n_paths: cfg.n_paths,
                seed: cfg.seed,
                value,
                stderr,
                samples: s,
            }
        })
        .collect())
}

pub fn run_one<S: Real>(
    m: &Manifold<S>,
    x0: &Point<S>,
    f: &dyn Functional<S>,
    cfg: &McConfig,
) -> Result<EstimatorReport> {
    Ok(run_functionals(m, x0, &[f], cfg)?.remove(0))
}

/// Compares two estimators run on common paths through their per-path differences.
pub fn paired_compare(a: &EstimatorReport, b: &EstimatorReport) -> Result<PairedReport> {
    let same = a.manifold == b.manifold
        && a.t == b.t
        && a.h == b.h
        && a.n_paths == b.n_paths
        && a.seed == b.seed
        && a.samples.len() == b.samples.len()
        && !a.samples.is_empty();
    if !same {
        return Err(Error::ConfigMismatch(format!(
            "{} and {} were not run on the same paths",
            a.formula_id, b.formula_id
        )));
    }
    let d: Vec<f64> = a.samples.iter().zip(&b.samples).map(|(x, y)| x - y).collect();
    let (diff, stderr) = mean_stderr(&d);
    Ok(PairedReport {
        first: a.formula_id.clone(),
        second: b.formula_id.clone(),
        first_value: a.value,
        second_value: b.value,
        diff,
        stderr,
    })
}
