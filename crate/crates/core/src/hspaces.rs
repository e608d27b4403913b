//! Two-vector fields over path space built from damped transport: the
//! k-process, the fields `U`, `Q(U)` and `Z`, and the divergence of `Z`.

use crate::error::{Error, Result};
use crate::estimators::{Functional, Tracker};
use crate::flow::{FlowState, Needs, PathSample, StepCtx, TransportStack};
use crate::forms::FormId;
use crate::linalg::{inverse_map, Mat4, Vec4};
use crate::manifold::{Connection, Manifold};
use crate::multilinear::{push_all, MultiVector};
use crate::scalar::Real;
use crate::schedule::ScalarSchedule;

fn gradient_only<S: Real>(m: &Manifold<S>) -> Result<()> {
    if !m.kind().is_gradient() {
        return Err(Error::Unsupported {
            operation: "two-vector fields from Levi-Civita damped transport",
            manifold: m.name().to_string(),
        });
    }
    Ok(())
}

/// `λ(t_k)` and the forward differences `λ̇_k = (λ_{k+1} − λ_k) / h`.
pub fn lambda_grid<S: Real>(lambda: &ScalarSchedule, h: f64, steps: usize) -> Result<(Vec<S>, Vec<S>)> {
    lambda.validate()?;
    if lambda.value(0.0).abs() > 1e-12 {
        return Err(Error::InvalidParameter("λ must vanish at time zero".into()));
    }
    let l = lambda.on_grid(h, steps);
    let dot = l.windows(2).map(|w| S::lit((w[1] - w[0]) / h)).collect();
    Ok((l.into_iter().map(S::lit).collect(), dot))
}

/// Per-point data shared by all fields on one path.
struct Frames<S> {
    w: Vec<Mat4<S>>,
    winv: Vec<Mat4<S>>,
    w2v: Vec<MultiVector<S>>,
}

fn frames<S: Real>(path: &PathSample<S>, stack: &TransportStack<S>, v: &MultiVector<S>) -> Result<Frames<S>> {
    if v.degree() != 2 {
        return Err(Error::DegreeMismatch { expected: 2, got: v.degree() });
    }
    if stack.damped[1].len() != path.len() + 1 || stack.damped[2].len() != path.len() + 1 {
        return Err(Error::InvalidParameter("transport stack must carry damped transport in degrees 1 and 2".into()));
    }
    let mut w = Vec::with_capacity(path.len() + 1);
    let mut winv = Vec::with_capacity(path.len() + 1);
    let mut w2v = Vec::with_capacity(path.len() + 1);
    for k in 0..=path.len() {
        let wk = stack.w_matrix(k)?;
        winv.push(inverse_map(&wk, &stack.normal0)?);
        w.push(wk);
        w2v.push(stack.damped[2][k].apply(v)?);
    }
    Ok(Frames { w, winv, w2v })
}

/// Needs of every stack-based routine in this module.
pub fn stack_needs() -> Needs {
    let mut n = Needs::damped(&[1, 2]);
    n.par = true;
    n
}

/// `𝔻v_k = (//_{k,k+1}^{-1} v_{k+1} − v_k) / h + ½ Ric(v_k)`.
pub fn damped_derivative<S: Real>(m: &Manifold<S>, path: &PathSample<S>, v: &[Vec4<S>]) -> Result<Vec<Vec4<S>>> {
    gradient_only(m)?;
    if v.len() != path.len() + 1 {
        return Err(Error::LengthMismatch { expected: path.len() + 1, got: v.len() });
    }
    let half = S::lit(0.5);
    (0..path.len())
        .map(|k| {
            let x = &path.points[k];
            let back = m.transport_between(Connection::LeviCivita, &path.points[k + 1], x) * v[k + 1];
            Ok((back - v[k]) / path.h + m.ricci(x) * v[k] * half)
        })
        .collect()
}

/// `k(r) = ∧²(W_r^{-1}) W_r^{(2)} V`.
pub fn k_process<S: Real>(
    m: &Manifold<S>,
    path: &PathSample<S>,
    stack: &TransportStack<S>,
    v: &MultiVector<S>,
) -> Result<Vec<MultiVector<S>>> {
    gradient_only(m)?;
    let f = frames(path, stack, v)?;
    Ok((0..=path.len()).map(|k| push_all(&f.winv[k], &f.w2v[k])).collect())
}

/// `k'(r) = ∧²(W_r^{-1}) ℛ(W_r^{(2)} V)`.
pub fn k_derivative<S: Real>(
    m: &Manifold<S>,
    path: &PathSample<S>,
    stack: &TransportStack<S>,
    v: &MultiVector<S>,
) -> Result<Vec<MultiVector<S>>> {
    gradient_only(m)?;
    let f = frames(path, stack, v)?;
    (0..=path.len())
        .map(|k| Ok(push_all(&f.winv[k], &m.curvature_apply(&path.points[k], &f.w2v[k])?)))
        .collect()
}

/// A field over pairs of grid times, stored in the factored form
/// `F_{s,t} = (α_t P_s + R_s) (W_s^{-1})^T W_t^T` for `s ≤ t`
/// (an element of `T_{x_s} ⊗ T_{x_t}`), extended by `F_{t,s} = −F_{s,t}^T`.
#[derive(Clone, Debug)]
pub struct TwoVectorField<S> {
    pub alpha: Vec<S>,
    pub p: Vec<Mat4<S>>,
    pub r: Vec<Mat4<S>>,
    w: Vec<Mat4<S>>,
    winv: Vec<Mat4<S>>,
}

impl<S: Real> TwoVectorField<S> {
    fn from_parts(f: &Frames<S>, alpha: Vec<S>, p: Vec<Mat4<S>>, r: Vec<Mat4<S>>) -> Self {
        Self { alpha, p, r, w: f.w.clone(), winv: f.winv.clone() }
    }

    pub fn len(&self) -> usize {
        self.alpha.len()
    }

    pub fn is_empty(&self) -> bool {
        self.alpha.is_empty()
    }

    pub fn get(&self, s: usize, t: usize) -> Mat4<S> {
        if s > t {
            return -self.get(t, s).transpose();
        }
        (self.p[s] * self.alpha[t] + self.r[s]) * self.winv[s].transpose() * self.w[t].transpose()
    }

    /// `(W_s^{-1} ⊗ W_t^{-1}) F_{s,t}` in `T_{x0} ⊗ T_{x0}`.
    pub fn tilde(&self, s: usize, t: usize) -> Mat4<S> {
        if s > t {
            return -self.tilde(t, s).transpose();
        }
        self.winv[s] * self.get(s, t) * self.winv[t].transpose()
    }

    pub fn diagonal(&self, s: usize) -> MultiVector<S> {
        MultiVector::from_mat(&self.get(s, s))
    }

    fn combine(&self, o: &Self, c: S) -> Result<Self> {
        if self.len() != o.len() {
            return Err(Error::LengthMismatch { expected: self.len(), got: o.len() });
        }
        let n = self.len();
        let mut p = Vec::with_capacity(n);
        let mut r = Vec::with_capacity(n);
        for s in 0..n {
            p.push(self.p[s]);
            r.push(self.r[s] + o.r[s] * c);
        }
        let same_alpha = self.alpha.iter().zip(&o.alpha).all(|(a, b)| a == b);
        let self_p_zero = self.p.iter().all(|m| m.iter().all(|x| *x == S::zero()));
        let o_p_zero = o.p.iter().all(|m| m.iter().all(|x| *x == S::zero()));
        let (alpha, p) = if o_p_zero {
            (self.alpha.clone(), p)
        } else if self_p_zero {
            (o.alpha.clone(), o.p.iter().map(|m| m * c).collect())
        } else if same_alpha {
            (self.alpha.clone(), self.p.iter().zip(&o.p).map(|(a, b)| a + b * c).collect())
        } else {
            return Err(Error::InvalidParameter("fields with different time profiles cannot be combined".into()));
        };
        Ok(Self { alpha, p, r, w: self.w.clone(), winv: self.winv.clone() })
    }

    pub fn add(&self, o: &Self) -> Result<Self> {
        self.combine(o, S::one())
    }

    pub fn sub(&self, o: &Self) -> Result<Self> {
        self.combine(o, -S::one())
    }

    /// `sup_{s ≤ t} ‖F_{s,t}‖` (Frobenius).
    pub fn sup_norm(&self) -> S {
        let n = self.len();
        let mut best = S::zero();
        for s in 0..n {
            let left_p = self.p[s] * self.winv[s].transpose();
            let left_r = self.r[s] * self.winv[s].transpose();
            for t in s..n {
                let v = (left_p * self.alpha[t] + left_r) * self.w[t].transpose();
                best = best.max(v.norm());
            }
        }
        best
    }
}

/// `Z_{s,t} = λ(s)λ(t) (1 ⊗ W^s_t) W_s^{(2)} V`.
pub fn z_field<S: Real>(
    m: &Manifold<S>,
    path: &PathSample<S>,
    stack: &TransportStack<S>,
    lambda: &ScalarSchedule,
    v: &MultiVector<S>,
) -> Result<TwoVectorField<S>> {
    gradient_only(m)?;
    let f = frames(path, stack, v)?;
    let (l, _) = lambda_grid::<S>(lambda, path.h.as_f64(), path.len())?;
    let p = (0..=path.len()).map(|k| f.w2v[k].to_mat() * l[k]).collect();
    let r = vec![Mat4::zeros(); path.len() + 1];
    Ok(TwoVectorField::from_parts(&f, l, p, r))
}

/// `A_s = ∫_0^s λ² ∧²(W_r)^{-1} ℛ(W_r^{(2)} V) dr`, left-point.
fn a_integral<S: Real>(
    m: &Manifold<S>,
    path: &PathSample<S>,
    f: &Frames<S>,
    l: &[S],
    scale: S,
) -> Result<Vec<MultiVector<S>>> {
    let mut out = Vec::with_capacity(path.len() + 1);
    let mut acc = MultiVector::zero(2);
    out.push(acc);
    for k in 0..path.len() {
        let curv = m.curvature_apply(&path.points[k], &f.w2v[k])?;
        acc += push_all(&f.winv[k], &curv) * (scale * l[k] * l[k] * path.h);
        out.push(acc);
    }
    Ok(out)
}

/// `U_{s,t} = Z_{s,t} − (W_s ⊗ W_t) A_s`.
pub fn u_field<S: Real>(
    m: &Manifold<S>,
    path: &PathSample<S>,
    stack: &TransportStack<S>,
    lambda: &ScalarSchedule,
    v: &MultiVector<S>,
) -> Result<TwoVectorField<S>> {
    u_field_scaled(m, path, stack, lambda, v, S::one())
}

fn u_field_scaled<S: Real>(
    m: &Manifold<S>,
    path: &PathSample<S>,
    stack: &TransportStack<S>,
    lambda: &ScalarSchedule,
    v: &MultiVector<S>,
    scale: S,
) -> Result<TwoVectorField<S>> {
    gradient_only(m)?;
    let f = frames(path, stack, v)?;
    let (l, _) = lambda_grid::<S>(lambda, path.h.as_f64(), path.len())?;
    let a = a_integral(m, path, &f, &l, scale)?;
    let p = (0..=path.len()).map(|k| f.w2v[k].to_mat() * l[k]).collect();
    let r = (0..=path.len()).map(|k| -push_all(&f.w[k], &a[k]).to_mat()).collect();
    Ok(TwoVectorField::from_parts(&f, l, p, r))
}

/// `Q(U)_{s,t} = (1 ⊗ W^s_t) W_s^{(2)} ∫_0^s (W_r^{(2)})^{-1} ℛ(U_{r,r}) dr`.
pub fn q_operator<S: Real>(
    m: &Manifold<S>,
    path: &PathSample<S>,
    stack: &TransportStack<S>,
    u: &TwoVectorField<S>,
) -> Result<TwoVectorField<S>> {
    q_operator_scaled(m, path, stack, u, S::one())
}

fn q_operator_scaled<S: Real>(
    m: &Manifold<S>,
    path: &PathSample<S>,
    stack: &TransportStack<S>,
    u: &TwoVectorField<S>,
    scale: S,
) -> Result<TwoVectorField<S>> {
    gradient_only(m)?;
    if u.len() != path.len() + 1 {
        return Err(Error::LengthMismatch { expected: path.len() + 1, got: u.len() });
    }
    let w2 = &stack.damped[2];
    let mut r = Vec::with_capacity(path.len() + 1);
    let mut acc = MultiVector::zero(2);
    for k in 0..=path.len() {
        r.push(w2[k].apply(&acc)?.to_mat());
        if k < path.len() {
            let curv = m.curvature_apply(&path.points[k], &u.diagonal(k))?;
            acc += w2[k].solve(&curv)? * (scale * path.h);
        }
    }
    let n = path.len() + 1;
    Ok(TwoVectorField {
        alpha: vec![S::zero(); n],
        p: vec![Mat4::zeros(); n],
        r,
        w: u.w.clone(),
        winv: u.winv.clone(),
    })
}

/// `sup_{s ≤ t} ‖U + Q(U) − Z‖`.
pub fn identity_check<S: Real>(
    m: &Manifold<S>,
    path: &PathSample<S>,
    stack: &TransportStack<S>,
    lambda: &ScalarSchedule,
    v: &MultiVector<S>,
) -> Result<S> {
    identity_check_scaled(m, path, stack, lambda, v, S::one())
}

/// The same residual with `ℛ` replaced by `c ℛ` in `U` and `Q`; it vanishes
/// as `h -> 0` only for `c = 1`.
pub fn identity_check_scaled<S: Real>(
    m: &Manifold<S>,
    path: &PathSample<S>,
    stack: &TransportStack<S>,
    lambda: &ScalarSchedule,
    v: &MultiVector<S>,
    c: S,
) -> Result<S> {
    let u = u_field_scaled(m, path, stack, lambda, v, c)?;
    let q = q_operator_scaled(m, path, stack, &u, c)?;
    let z = z_field(m, path, stack, lambda, v)?;
    Ok(u.add(&q)?.sub(&z)?.sup_norm())
}

/// Discrete energy `Σ h² ‖∂_s ∂_t Ũ‖²` of the double-derivative representation.
pub fn double_energy<S: Real>(u: &TwoVectorField<S>, h: S) -> S {
    let n = u.len();
    let tilde: Vec<Vec<Mat4<S>>> = (0..n).map(|s| (0..n).map(|t| u.tilde(s, t)).collect()).collect();
    let mut e = S::zero();
    for s in 0..n - 1 {
        for t in 0..n - 1 {
            let d = (tilde[s + 1][t + 1] - tilde[s + 1][t] - tilde[s][t + 1] + tilde[s][t]) / (h * h);
            e += d.norm_squared() * h * h;
        }
    }
    e
}

/// `(div Z)_t = J̄⁰_t + J̄¹_t` along the path, with
/// `J̄⁰_t = λ_t W_t^{(2)}V (W_t^{-1})^T Σ_{r ≥ t} λ̇_r W_r^T dx_r` and
/// `J̄¹_t = −λ_t W_t Σ_{r < t} λ̇_r W_r^{-1} (W_r^{(2)}V)^T dx_r`.
pub fn z_divergence<S: Real>(
    m: &Manifold<S>,
    path: &PathSample<S>,
    stack: &TransportStack<S>,
    lambda: &ScalarSchedule,
    v: &MultiVector<S>,
) -> Result<Vec<Vec4<S>>> {
    gradient_only(m)?;
    let f = frames(path, stack, v)?;
    let n = path.len();
    let (l, ld) = lambda_grid::<S>(lambda, path.h.as_f64(), n)?;
    let dx: Vec<Vec4<S>> = (0..n).map(|k| path.dx(m, k)).collect();
    let mut future = vec![Vec4::zeros(); n + 1];
    for k in (0..n).rev() {
        future[k] = future[k + 1] + f.w[k].transpose() * dx[k] * ld[k];
    }
    let mut past = Vec4::zeros();
    let mut out = Vec::with_capacity(n + 1);
    for k in 0..=n {
        let j0 = f.w2v[k].to_mat() * f.winv[k].transpose() * future[k] * l[k];
        let j1 = -(f.w[k] * past) * l[k];
        out.push(j0 + j1);
        if k < n {
            past += f.winv[k] * (f.w2v[k].to_mat().transpose() * dx[k]) * ld[k];
        }
    }
    Ok(out)
}

/// Per-path value `dφ(Z_{t,t}) + φ((div Z)_t)` for a 1-form `φ`, computed in
/// one forward sweep.
#[derive(Clone, Debug)]
pub struct ZDivergenceIbp<S> {
    pub form: FormId,
    pub lambda: ScalarSchedule,
    pub v: MultiVector<S>,
    /// Evaluation time `t`, at most the horizon.
    pub at: f64,
}

struct ZTracker<'a, S> {
    f: &'a ZDivergenceIbp<S>,
    at: Option<usize>,
    past: Vec4<S>,
    future: Vec4<S>,
    snap: Option<Snapshot<S>>,
}

#[derive(Clone, Copy)]
struct Snapshot<S> {
    x: crate::manifold::Point<S>,
    lambda: S,
    w: Mat4<S>,
    winv: Mat4<S>,
    w2v: MultiVector<S>,
}

impl<S: Real> ZTracker<'_, S> {
    fn snapshot(&mut self, st: &FlowState<S>) -> Result<()> {
        let w = st.damped(1)?.as_matrix()?;
        self.snap = Some(Snapshot {
            x: st.x,
            lambda: S::lit(self.f.lambda.value(st.t.as_f64())),
            winv: inverse_map(&w, &st.normal0)?,
            w,
            w2v: st.damped(2)?.apply(&self.f.v)?,
        });
        Ok(())
    }
}

impl<S: Real> Functional<S> for ZDivergenceIbp<S> {
    fn formula_id(&self) -> &'static str {
        "z_divergence_ibp"
    }

    fn degree(&self) -> usize {
        self.form.degree()
    }

    fn needs(&self, _m: &Manifold<S>) -> Needs {
        Needs::damped(&[1, 2])
    }

    fn start<'a>(&'a self, m: &Manifold<S>, _st: &FlowState<S>) -> Result<Box<dyn Tracker<S> + 'a>> {
        gradient_only(m)?;
        if self.form.degree() != 1 {
            return Err(Error::DegreeMismatch { expected: 1, got: self.form.degree() });
        }
        if self.v.degree() != 2 {
            return Err(Error::DegreeMismatch { expected: 2, got: self.v.degree() });
        }
        lambda_grid::<f64>(&self.lambda, 1.0, 0)?;
        Ok(Box::new(ZTracker { f: self, at: None, past: Vec4::zeros(), future: Vec4::zeros(), snap: None }))
    }
}

impl<S: Real> Tracker<S> for ZTracker<'_, S> {
    fn step(&mut self, _m: &Manifold<S>, st: &FlowState<S>, ctx: &StepCtx<S>) -> Result<()> {
        let at = *self.at.get_or_insert_with(|| (self.f.at / ctx.h.as_f64()).round() as usize);
        let h = ctx.h.as_f64();
        let t = ctx.t.as_f64();
        let ld = S::lit((self.f.lambda.value(t + h) - self.f.lambda.value(t)) / h);
        if ctx.k == at {
            self.snapshot(st)?;
        }
        let w = st.damped(1)?.as_matrix()?;
        if ctx.k < at {
            let w2v = st.damped(2)?.apply(&self.f.v)?.to_mat();
            let y = w2v.transpose() * ctx.dx;
            self.past += crate::linalg::inverse_apply(&w, &st.normal0, &y)? * ld;
        } else {
            self.future += w.transpose() * ctx.dx * ld;
        }
        Ok(())
    }

    fn finish(&mut self, m: &Manifold<S>, st: &FlowState<S>) -> Result<f64> {
        if self.snap.is_none() {
            if self.at.is_some_and(|a| a != st.k) || (self.f.at - st.t.as_f64()).abs() > 1e-9 {
                return Err(Error::InvalidParameter("evaluation time is not on the grid".into()));
            }
            self.snapshot(st)?;
        }
        let s = self.snap.expect("snapshot taken");
        let z = s.w2v * (s.lambda * s.lambda);
        let j0 = s.w2v.to_mat() * s.winv.transpose() * self.future * s.lambda;
        let j1 = -(s.w * self.past) * s.lambda;
        let div = MultiVector::vector(&(j0 + j1));
        let d = self.f.form.d_eval(m, &s.x, &z)?;
        let phi = self.f.form.eval(m, &s.x, &div)?;
        Ok((d + phi).as_f64())
    }
}
