//! Discretised flows, derivative flows and the transported linear maps
//! along a sample path.

mod noise;
mod state;

use std::io::Write;

pub use noise::{Grid, NoiseDriver};
pub use state::{DampingMode, FlowState, Needs, StepCtx, WedgeOp};

use crate::error::{Error, Result};
use crate::linalg::{inverse_apply, Mat4, Vec4, Vec6};
use crate::manifold::{Connection, Manifold, Point, StepOutcome};
use crate::scalar::Real;

/// A discretised path of the flow started at `points[0]`.
#[derive(Clone, Debug)]
pub struct PathSample<S> {
    pub h: S,
    pub points: Vec<Point<S>>,
    pub increments: Vec<Vec6<S>>,
    pub steps: Vec<StepOutcome<S>>,
}

impl<S: Real> PathSample<S> {
    pub fn len(&self) -> usize {
        self.increments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.increments.is_empty()
    }

    pub fn x0(&self) -> &Point<S> {
        &self.points[0]
    }

    pub fn last(&self) -> &Point<S> {
        self.points.last().expect("paths hold at least the start point")
    }

    /// `X(x_k) ΔB_k`.
    pub fn dx(&self, m: &Manifold<S>, k: usize) -> Vec4<S> {
        m.x_map(&self.points[k], &self.increments[k])
    }
}

pub fn simulate<S: Real>(
    m: &Manifold<S>,
    x0: &Point<S>,
    grid: &Grid,
    driver: &mut NoiseDriver,
) -> Result<PathSample<S>> {
    let incs = driver.increments(grid.steps);
    simulate_increments(m, x0, S::lit(grid.h), incs)
}

pub fn simulate_increments<S: Real>(
    m: &Manifold<S>,
    x0: &Point<S>,
    h: S,
    increments: Vec<Vec6<S>>,
) -> Result<PathSample<S>> {
    m.check_point(x0)?;
    let mut points = Vec::with_capacity(increments.len() + 1);
    let mut steps = Vec::with_capacity(increments.len());
    points.push(*x0);
    let mut x = *x0;
    for (k, db) in increments.iter().enumerate() {
        let out = m.step(&x, db, h, k)?;
        x = out.next;
        points.push(x);
        steps.push(out);
    }
    Ok(PathSample { h, points, increments, steps })
}

/// Transported maps stored at every grid point of a path.
#[derive(Clone, Debug)]
pub struct TransportStack<S> {
    pub needs: Needs,
    pub normal0: Mat4<S>,
    pub txi: Vec<Mat4<S>>,
    pub par: Vec<Mat4<S>>,
    pub breve_par: Vec<Mat4<S>>,
    pub damped: [Vec<WedgeOp<S>>; 4],
    pub breve_damped: [Vec<WedgeOp<S>>; 4],
}

impl<S: Real> TransportStack<S> {
    pub fn build(m: &Manifold<S>, path: &PathSample<S>, needs: Needs) -> Result<Self> {
        Self::build_with(m, path, needs, DampingMode::Scalar)
    }

    pub fn build_with(
        m: &Manifold<S>,
        path: &PathSample<S>,
        needs: Needs,
        mode: DampingMode,
    ) -> Result<Self> {
        let mut st = FlowState::new(m, path.x0(), needs)?.with_mode(mode);
        let mut stack = TransportStack {
            needs,
            normal0: st.normal0,
            txi: Vec::new(),
            par: Vec::new(),
            breve_par: Vec::new(),
            damped: Default::default(),
            breve_damped: Default::default(),
        };
        stack.record(&st);
        for out in &path.steps {
            st.apply_step(m, out, path.h)?;
            stack.record(&st);
        }
        Ok(stack)
    }

    fn record(&mut self, st: &FlowState<S>) {
        if self.needs.txi {
            self.txi.push(st.txi);
        }
        if self.needs.par {
            self.par.push(st.par);
        }
        if self.needs.breve_par {
            self.breve_par.push(st.breve_par);
        }
        for q in 0..4 {
            if let Some(op) = &st.damped[q] {
                self.damped[q].push(op.clone());
            }
            if let Some(op) = &st.breve_damped[q] {
                self.breve_damped[q].push(op.clone());
            }
        }
    }

    /// Inverse of a stored map `T_{x0} -> T_{x_k}` applied to `v ∈ T_{x_k}`.
    pub fn invert(&self, map: &Mat4<S>, v: &Vec4<S>) -> Result<Vec4<S>> {
        inverse_apply(map, &self.normal0, v)
    }

    /// `W_k` (Levi-Civita damped transport on vectors) in matrix form.
    pub fn w_matrix(&self, k: usize) -> Result<Mat4<S>> {
        self.damped[1]
            .get(k)
            .ok_or_else(|| Error::InvalidParameter("damped degree 1 not stored".into()))?
            .as_matrix()
    }
}

/// `Tξ_k : T_{x0} -> T_{x_k}` along the path.
pub fn derivative_flow<S: Real>(m: &Manifold<S>, path: &PathSample<S>) -> Result<Vec<Mat4<S>>> {
    Ok(TransportStack::build(m, path, Needs::txi())?.txi)
}

/// Cumulative parallel transport `T_{x0} -> T_{x_k}` for the given connection.
pub fn parallel_transport<S: Real>(
    m: &Manifold<S>,
    path: &PathSample<S>,
    conn: Connection,
) -> Result<Vec<Mat4<S>>> {
    let p0 = m.tangent_projector(path.x0());
    let mut out = Vec::with_capacity(path.len() + 1);
    let mut acc = p0;
    out.push(acc);
    for (k, step) in path.steps.iter().enumerate() {
        acc = m.transport_step(conn, &path.points[k], step) * acc;
        out.push(acc);
    }
    Ok(out)
}

/// Which damped transport to form.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Damping {
    /// `W^{(q)}`: Levi-Civita transport damped by the Weitzenböck curvature.
    LeviCivita,
    /// `W̆^{(q)}`: hat-connection transport damped by the flow's own
    /// zero-order term; equals the conditional expectation of `∧^q Tξ_t`.
    Breve,
}

pub fn damped_transport<S: Real>(
    m: &Manifold<S>,
    path: &PathSample<S>,
    q: usize,
    kind: Damping,
) -> Result<Vec<WedgeOp<S>>> {
    if q > 3 {
        return Err(Error::DegreeOverflow { degree: q, max: 3 });
    }
    let mut needs = Needs::default();
    match kind {
        Damping::LeviCivita => needs.damped[q] = true,
        Damping::Breve => needs.breve_damped[q] = true,
    }
    let mut stack = TransportStack::build(m, path, needs)?;
    Ok(match kind {
        Damping::LeviCivita => std::mem::take(&mut stack.damped[q]),
        Damping::Breve => std::mem::take(&mut stack.breve_damped[q]),
    })
}

/// Increments `ΔB̆_k = (//̆_k)^{-1} X(x_k) ΔB_k` of the anti-development, in `T_{x0}`.
pub fn anti_development<S: Real>(m: &Manifold<S>, path: &PathSample<S>) -> Result<Vec<Vec4<S>>> {
    let par = parallel_transport(m, path, Connection::Breve)?;
    let normal0 = m.normal_projector(path.x0());
    (0..path.len())
        .map(|k| inverse_apply(&par[k], &normal0, &path.dx(m, k)))
        .collect()
}

/// Left-point Itô sum `Σ_k ⟨integrand_k, X(x_k) ΔB_k⟩`.
pub fn ito_integral<S: Real, F>(m: &Manifold<S>, path: &PathSample<S>, integrand: F) -> S
where
    F: Fn(usize) -> Vec4<S>,
{
    (0..path.len()).fold(S::zero(), |acc, k| acc + integrand(k).dot(&path.dx(m, k)))
}

/// Writes `k,t,c0,c1,c2,c3` rows, one per grid point.
pub fn write_path_csv<S: Real, W: Write>(path: &PathSample<S>, mut out: W) -> std::io::Result<()> {
    writeln!(out, "k,t,c0,c1,c2,c3")?;
    let h = path.h.as_f64();
    for (k, p) in path.points.iter().enumerate() {
        let c = p.coords;
        writeln!(
            out,
            "{k},{},{},{},{},{}",
            k as f64 * h,
            c[0].as_f64(),
            c[1].as_f64(),
            c[2].as_f64(),
            c[3].as_f64()
        )?;
    }
    Ok(())
}
