use crate::error::{Error, Result};
use crate::flow::{FlowState, Needs, StepCtx};
use crate::forms::FormRef;
use crate::linalg::{inverse_apply, pad3, Vec3, Vec4};
use crate::manifold::{Manifold, ManifoldKind, Point};
use crate::multilinear::{interior_linear, interior_torsion, omit, push_all, MultiVector};
use crate::scalar::Real;
use crate::schedule::ScalarSchedule;

use super::engine::{Functional, Tracker};

fn check_degree(expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::DegreeMismatch { expected, got });
    }
    Ok(())
}

fn check_factors<S: Real>(m: &Manifold<S>, x0: &Point<S>, b: &[Vec4<S>]) -> Result<()> {
    for v in b {
        m.check_tangent(x0, v)?;
    }
    Ok(())
}

fn rho_at<S: Real>(rho: &ScalarSchedule, ctx: &StepCtx<S>) -> S {
    S::lit(rho.value(ctx.t.as_f64()))
}

fn normalise<S: Real>(cum: S) -> Result<S> {
    if cum == S::zero() || !cum.is_finite() {
        return Err(Error::InvalidParameter("the weight ρ integrates to zero on [0, t]".into()));
    }
    Ok(S::one() / cum)
}

fn sign<S: Real>(odd: bool) -> S {
    if odd {
        -S::one()
    } else {
        S::one()
    }
}

/// `φ(x_t)(∧^q Tξ_t V0)`.
#[derive(Clone, Debug)]
pub struct DirectPullback<S> {
    pub form: FormRef,
    pub v0: MultiVector<S>,
}

struct PullbackTracker<'a, S> {
    f: &'a DirectPullback<S>,
}

impl<S: Real> Functional<S> for DirectPullback<S> {
    fn formula_id(&self) -> &'static str {
        "direct_pullback"
    }

    fn degree(&self) -> usize {
        self.form.degree()
    }

    fn needs(&self, _m: &Manifold<S>) -> Needs {
        Needs::txi()
    }

    fn start<'a>(&'a self, _m: &Manifold<S>, _st: &FlowState<S>) -> Result<Box<dyn Tracker<S> + 'a>> {
        check_degree(self.form.degree(), self.v0.degree())?;
        Ok(Box::new(PullbackTracker { f: self }))
    }
}

impl<S: Real> Tracker<S> for PullbackTracker<'_, S> {
    fn step(&mut self, _m: &Manifold<S>, _st: &FlowState<S>, _ctx: &StepCtx<S>) -> Result<()> {
        Ok(())
    }

    fn finish(&mut self, m: &Manifold<S>, st: &FlowState<S>) -> Result<f64> {
        let v = push_all(&st.txi, &self.f.v0);
        Ok(self.f.form.eval(m, &st.x, &v)?.as_f64())
    }
}

/// `φ(x_t)(W̆_t V0)`: the flow derivative replaced by damped transport.
#[derive(Clone, Debug)]
pub struct DirectDamped<S> {
    pub form: FormRef,
    pub v0: MultiVector<S>,
}

struct DampedTracker<'a, S> {
    f: &'a DirectDamped<S>,
}

impl<S: Real> Functional<S> for DirectDamped<S> {
    fn formula_id(&self) -> &'static str {
        "direct_damped"
    }

    fn degree(&self) -> usize {
        self.form.degree()
    }

    fn needs(&self, _m: &Manifold<S>) -> Needs {
        Needs::breve_damped(&[self.form.degree()])
    }

    fn start<'a>(&'a self, _m: &Manifold<S>, _st: &FlowState<S>) -> Result<Box<dyn Tracker<S> + 'a>> {
        check_degree(self.form.degree(), self.v0.degree())?;
        Ok(Box::new(DampedTracker { f: self }))
    }
}

impl<S: Real> Tracker<S> for DampedTracker<'_, S> {
    fn step(&mut self, _m: &Manifold<S>, _st: &FlowState<S>, _ctx: &StepCtx<S>) -> Result<()> {
        Ok(())
    }

    fn finish(&mut self, m: &Manifold<S>, st: &FlowState<S>) -> Result<f64> {
        let v = st.breve_damped(self.f.form.degree())?.apply(&self.f.v0)?;
        Ok(self.f.form.eval(m, &st.x, &v)?.as_f64())
    }
}

/// Derivative of `P_t f` in direction `v0`:
/// `f(x_t) ∫ρ⟨W̆_s v0, dx_s⟩ / ∫ρ`.
#[derive(Clone, Debug)]
pub struct BismutQ0<S> {
    pub form: FormRef,
    pub v0: Vec4<S>,
    pub rho: ScalarSchedule,
}

struct Q0Tracker<'a, S> {
    f: &'a BismutQ0<S>,
    v0: MultiVector<S>,
    acc: S,
    cum: S,
}

impl<S: Real> Functional<S> for BismutQ0<S> {
    fn formula_id(&self) -> &'static str {
        "bismut_q0"
    }

    fn degree(&self) -> usize {
        0
    }

    fn needs(&self, _m: &Manifold<S>) -> Needs {
        Needs::breve_damped(&[1])
    }

    fn start<'a>(&'a self, m: &Manifold<S>, st: &FlowState<S>) -> Result<Box<dyn Tracker<S> + 'a>> {
        check_degree(0, self.form.degree())?;
        self.rho.validate()?;
        m.check_tangent(&st.x0, &self.v0)?;
        Ok(Box::new(Q0Tracker { f: self, v0: MultiVector::vector(&self.v0), acc: S::zero(), cum: S::zero() }))
    }
}

impl<S: Real> Tracker<S> for Q0Tracker<'_, S> {
    fn step(&mut self, _m: &Manifold<S>, st: &FlowState<S>, ctx: &StepCtx<S>) -> Result<()> {
        let rho = rho_at(&self.f.rho, ctx);
        if rho != S::zero() {
            let w = st.breve_damped(1)?.apply(&self.v0)?.to_vec4();
            self.acc += rho * w.dot(&ctx.dx);
        }
        self.cum += rho * ctx.h;
        Ok(())
    }

    fn finish(&mut self, m: &Manifold<S>, st: &FlowState<S>) -> Result<f64> {
        let inv = normalise(self.cum)?;
        let f = self.f.form.eval(m, &st.x, &MultiVector::scalar(S::one()))?;
        Ok((f * self.acc * inv).as_f64())
    }
}

/// Exterior derivative of `P_t φ` on a (q+1)-vector through damped transport:
/// `φ(W̆_t ∫ρ W̆_s^{-1} ι_{dx_s} W̆_s V0) / ∫ρ − φ(W̆_t ι_T V0)`.
#[derive(Clone, Debug)]
pub struct BismutIntrinsic<S> {
    pub form: FormRef,
    pub v0: MultiVector<S>,
    pub rho: ScalarSchedule,
}

struct IntrinsicTracker<'a, S> {
    f: &'a BismutIntrinsic<S>,
    q: usize,
    torsion0: MultiVector<S>,
    acc: MultiVector<S>,
    cum: S,
}

impl<S: Real> Functional<S> for BismutIntrinsic<S> {
    fn formula_id(&self) -> &'static str {
        "bismut_intrinsic"
    }

    fn degree(&self) -> usize {
        self.form.degree()
    }

    fn needs(&self, _m: &Manifold<S>) -> Needs {
        let q = self.form.degree();
        Needs::breve_damped(&[q, q + 1])
    }

    fn start<'a>(&'a self, m: &Manifold<S>, st: &FlowState<S>) -> Result<Box<dyn Tracker<S> + 'a>> {
        let q = self.form.degree();
        check_degree(q + 1, self.v0.degree())?;
        self.rho.validate()?;
        let torsion0 = if m.has_torsion() && q >= 1 {
            interior_torsion(m, &st.x0, &self.v0)?
        } else {
            MultiVector::zero(q)
        };
        Ok(Box::new(IntrinsicTracker { f: self, q, torsion0, acc: MultiVector::zero(q), cum: S::zero() }))
    }
}

impl<S: Real> Tracker<S> for IntrinsicTracker<'_, S> {
    fn step(&mut self, _m: &Manifold<S>, st: &FlowState<S>, ctx: &StepCtx<S>) -> Result<()> {
        let rho = rho_at(&self.f.rho, ctx);
        if rho != S::zero() {
            let y = st.breve_damped(self.q + 1)?.apply(&self.f.v0)?;
            let z = interior_linear(&ctx.dx, &y)?;
            self.acc += st.breve_damped(self.q)?.solve(&z)? * rho;
        }
        self.cum += rho * ctx.h;
        Ok(())
    }

    fn finish(&mut self, m: &Manifold<S>, st: &FlowState<S>) -> Result<f64> {
        let inv = normalise(self.cum)?;
        let v = self.acc * inv - self.torsion0;
        let w = st.breve_damped(self.q)?.apply(&v)?;
        Ok(self.f.form.eval(m, &st.x, &w)?.as_f64())
    }
}

/// Variant driven by the stochastic anti-development, with the torsion
/// contraction integrated along the path:
/// `φ(W̆_t ∫ρ W̆_s^{-1}(ι_{//dB̆_s} − ι_T ds) W̆_s V0) / ∫ρ`.
#[derive(Clone, Debug)]
pub struct BismutGeneral<S> {
    pub form: FormRef,
    pub v0: MultiVector<S>,
    pub rho: ScalarSchedule,
}

struct GeneralTracker<'a, S> {
    f: &'a BismutGeneral<S>,
    q: usize,
    acc: MultiVector<S>,
    cum: S,
}

impl<S: Real> Functional<S> for BismutGeneral<S> {
    fn formula_id(&self) -> &'static str {
        "bismut_general_intrinsic"
    }

    fn degree(&self) -> usize {
        self.form.degree()
    }

    fn needs(&self, _m: &Manifold<S>) -> Needs {
        let q = self.form.degree();
        let mut n = Needs::breve_damped(&[q, q + 1]);
        n.breve_par = true;
        n
    }

    fn start<'a>(&'a self, _m: &Manifold<S>, _st: &FlowState<S>) -> Result<Box<dyn Tracker<S> + 'a>> {
        let q = self.form.degree();
        check_degree(q + 1, self.v0.degree())?;
        self.rho.validate()?;
        Ok(Box::new(GeneralTracker { f: self, q, acc: MultiVector::zero(q), cum: S::zero() }))
    }
}

impl<S: Real> Tracker<S> for GeneralTracker<'_, S> {
    fn step(&mut self, m: &Manifold<S>, st: &FlowState<S>, ctx: &StepCtx<S>) -> Result<()> {
        let rho = rho_at(&self.f.rho, ctx);
        if rho != S::zero() {
            let y = st.breve_damped(self.q + 1)?.apply(&self.f.v0)?;
            let db_breve = inverse_apply(&st.breve_par, &st.normal0, &ctx.dx)?;
            let ell = st.breve_par * db_breve;
            let mut z = interior_linear(&ell, &y)? * rho;
            if m.has_torsion() && self.q >= 1 {
                z -= interior_torsion(m, &st.x, &y)? * (rho * ctx.h);
            }
            self.acc += st.breve_damped(self.q)?.solve(&z)?;
        }
        self.cum += rho * ctx.h;
        Ok(())
    }

    fn finish(&mut self, m: &Manifold<S>, st: &FlowState<S>) -> Result<f64> {
        let inv = normalise(self.cum)?;
        let w = st.breve_damped(self.q)?.apply(&(self.acc * inv))?;
        Ok(self.f.form.eval(m, &st.x, &w)?.as_f64())
    }
}

/// Flow-derivative formula on a primitive (q+1)-vector `b_1 ∧ ... ∧ b_{q+1}`:
/// stochastic integrals `∫ρ⟨Tξ_s b_j, X dB_s⟩` plus the torsion double sum.
#[derive(Clone, Debug)]
pub struct BismutFlow<S> {
    pub form: FormRef,
    pub factors: Vec<Vec4<S>>,
    pub rho: ScalarSchedule,
}

struct FlowTracker<'a, S> {
    f: &'a BismutFlow<S>,
    ints: Vec<S>,
    pairs: Vec<(usize, usize, Vec4<S>)>,
    cum: S,
    torsion_only: bool,
}

impl<S: Real> BismutFlow<S> {
    /// Value of the torsion double sum alone, for a finished path.
    fn torsion_sum(&self, m: &Manifold<S>, st: &FlowState<S>, pairs: &[(usize, usize, Vec4<S>)], inv: S) -> Result<S> {
        let mut total = S::zero();
        for (a, b, c) in pairs {
            let mut fs = vec![st.txi * *c * inv];
            fs.extend(omit(&self.factors, &[*a, *b]).iter().map(|v| st.txi * v));
            let val = self.form.eval(m, &st.x, &MultiVector::primitive(&fs)?)?;
            total -= sign::<S>((a + b + 1) % 2 == 1) * val;
        }
        Ok(total)
    }
}

impl<S: Real> Functional<S> for BismutFlow<S> {
    fn formula_id(&self) -> &'static str {
        "bismut_flow"
    }

    fn degree(&self) -> usize {
        self.form.degree()
    }

    fn needs(&self, _m: &Manifold<S>) -> Needs {
        Needs::txi()
    }

    fn start<'a>(&'a self, m: &Manifold<S>, st: &FlowState<S>) -> Result<Box<dyn Tracker<S> + 'a>> {
        self.tracker(m, st, m.has_torsion(), false)
    }
}

impl<S: Real> BismutFlow<S> {
    fn tracker<'a>(
        &'a self,
        m: &Manifold<S>,
        st: &FlowState<S>,
        with_pairs: bool,
        torsion_only: bool,
    ) -> Result<Box<dyn Tracker<S> + 'a>> {
        check_degree(self.form.degree() + 1, self.factors.len())?;
        check_factors(m, &st.x0, &self.factors)?;
        self.rho.validate()?;
        let n = self.factors.len();
        let mut pairs = Vec::new();
        if with_pairs {
            for a in 0..n {
                for b in a + 1..n {
                    pairs.push((a, b, Vec4::zeros()));
                }
            }
        }
        Ok(Box::new(FlowTracker { f: self, ints: vec![S::zero(); n], pairs, cum: S::zero(), torsion_only }))
    }
}

/// The torsion double sum of [`BismutFlow`] alone, accumulated on every
/// manifold (it vanishes identically on gradient systems).
#[derive(Clone, Debug)]
pub struct BismutFlowTorsion<S>(pub BismutFlow<S>);

impl<S: Real> Functional<S> for BismutFlowTorsion<S> {
    fn formula_id(&self) -> &'static str {
        "bismut_flow_torsion"
    }

    fn degree(&self) -> usize {
        self.0.form.degree()
    }

    fn needs(&self, _m: &Manifold<S>) -> Needs {
        Needs::txi()
    }

    fn start<'a>(&'a self, m: &Manifold<S>, st: &FlowState<S>) -> Result<Box<dyn Tracker<S> + 'a>> {
        self.0.tracker(m, st, true, true)
    }
}

impl<S: Real> Tracker<S> for FlowTracker<'_, S> {
    fn step(&mut self, m: &Manifold<S>, st: &FlowState<S>, ctx: &StepCtx<S>) -> Result<()> {
        let rho = rho_at(&self.f.rho, ctx);
        if rho != S::zero() {
            for (acc, b) in self.ints.iter_mut().zip(&self.f.factors) {
                *acc += rho * (st.txi * b).dot(&ctx.dx);
            }
            for (a, b, c) in self.pairs.iter_mut() {
                let u = st.txi * self.f.factors[*a];
                let v = st.txi * self.f.factors[*b];
                *c += st.txi_inverse(&m.torsion(&st.x, &u, &v))? * (rho * ctx.h);
            }
        }
        self.cum += rho * ctx.h;
        Ok(())
    }

    fn finish(&mut self, m: &Manifold<S>, st: &FlowState<S>) -> Result<f64> {
        let inv = normalise(self.cum)?;
        let f = self.f;
        if self.torsion_only {
            return Ok(f.torsion_sum(m, st, &self.pairs, inv)?.as_f64());
        }
        let mut total = S::zero();
        for (j, int) in self.ints.iter().enumerate() {
            let fs: Vec<Vec4<S>> = omit(&f.factors, &[j]).iter().map(|v| st.txi * v).collect();
            let v = if fs.is_empty() { MultiVector::scalar(S::one()) } else { MultiVector::primitive(&fs)? };
            total += sign::<S>(j % 2 == 1) * *int * inv * f.form.eval(m, &st.x, &v)?;
        }
        total += f.torsion_sum(m, st, &self.pairs, inv)?;
        Ok(total.as_f64())
    }
}

/// Left-invariant flow on SO(3) from the identity: stochastic integral
/// `∫ρ Ad(x_s) dB_s` and bracket sum, pulled back by right translation.
#[derive(Clone, Debug)]
pub struct BismutLieGroup<S> {
    pub form: FormRef,
    pub factors: Vec<Vec4<S>>,
    pub rho: ScalarSchedule,
}

struct LieTracker<'a, S> {
    f: &'a BismutLieGroup<S>,
    ell: Vec3<S>,
    cum: S,
}

impl<S: Real> Functional<S> for BismutLieGroup<S> {
    fn formula_id(&self) -> &'static str {
        "bismut_lie_group"
    }

    fn degree(&self) -> usize {
        self.form.degree()
    }

    fn needs(&self, _m: &Manifold<S>) -> Needs {
        Needs::default()
    }

    fn start<'a>(&'a self, m: &Manifold<S>, st: &FlowState<S>) -> Result<Box<dyn Tracker<S> + 'a>> {
        if m.kind() != ManifoldKind::So3Left || m.has_drift() {
            return Err(Error::Unsupported {
                operation: "Lie group formula (needs the driftless left-invariant flow)",
                manifold: m.name().to_string(),
            });
        }
        if m.distance(&st.x0, &m.origin()) > S::lit(1e-6) {
            return Err(Error::InvalidParameter("the Lie group formula starts at the identity".into()));
        }
        check_degree(self.form.degree() + 1, self.factors.len())?;
        check_factors(m, &st.x0, &self.factors)?;
        self.rho.validate()?;
        Ok(Box::new(LieTracker { f: self, ell: Vec3::zeros(), cum: S::zero() }))
    }
}

impl<S: Real> Tracker<S> for LieTracker<'_, S> {
    fn step(&mut self, m: &Manifold<S>, st: &FlowState<S>, ctx: &StepCtx<S>) -> Result<()> {
        let rho = rho_at(&self.f.rho, ctx);
        if rho != S::zero() {
            let db = Vec3::new(ctx.db[0], ctx.db[1], ctx.db[2]);
            self.ell += m.rotation(&st.x) * db * rho;
        }
        self.cum += rho * ctx.h;
        Ok(())
    }

    fn finish(&mut self, m: &Manifold<S>, st: &FlowState<S>) -> Result<f64> {
        let inv = normalise(self.cum)?;
        let f = self.f;
        let right = pad3(&m.rotation(&st.x).transpose());
        let eval = |fs: Vec<Vec4<S>>| -> Result<S> {
            let pushed: Vec<Vec4<S>> = fs.iter().map(|v| right * v).collect();
            let v = if pushed.is_empty() { MultiVector::scalar(S::one()) } else { MultiVector::primitive(&pushed)? };
            f.form.eval(m, &st.x, &v)
        };
        let ell = crate::linalg::ext3(&self.ell);
        let mut total = S::zero();
        for (j, b) in f.factors.iter().enumerate() {
            total += sign::<S>(j % 2 == 1) * ell.dot(b) * inv * eval(omit(&f.factors, &[j]))?;
        }
        let n = f.factors.len();
        for a in 0..n {
            for b in a + 1..n {
                let br = crate::linalg::top3(&f.factors[a]).cross(&crate::linalg::top3(&f.factors[b]));
                let mut fs = vec![crate::linalg::ext3(&br)];
                fs.extend(omit(&f.factors, &[a, b]));
                total -= sign::<S>((a + b) % 2 == 1) * eval(fs)?;
            }
        }
        Ok(total.as_f64())
    }
}
