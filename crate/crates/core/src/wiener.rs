//! Calculus on the driving Wiener space: the derivative of the Itô map,
//! adapted Cameron–Martin fields built from the flow, their Lie brackets,
//! and the divergence of H-multivector fields.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::mean_stderr;
use crate::flow::{simulate_increments, Needs, NoiseDriver, PathSample, TransportStack};
use crate::linalg::{Vec4, Vec6};
use crate::manifold::{Manifold, Point};
use crate::scalar::Real;
use crate::schedule::ScalarSchedule;

/// A Cameron–Martin path given by its left-point derivative on a uniform grid.
#[derive(Clone, Debug, PartialEq)]
pub struct HVector<S> {
    pub h: S,
    pub hdot: Vec<Vec6<S>>,
}

impl<S: Real> HVector<S> {
    pub fn zeros(steps: usize, h: S) -> Self {
        Self { h, hdot: vec![Vec6::zeros(); steps] }
    }

    pub fn constant(steps: usize, h: S, v: Vec6<S>) -> Self {
        Self { h, hdot: vec![v; steps] }
    }

    pub fn len(&self) -> usize {
        self.hdot.len()
    }

    pub fn is_empty(&self) -> bool {
        self.hdot.is_empty()
    }

    /// `h(t_k) = Σ_{j<k} ḣ_j h`.
    pub fn value(&self, k: usize) -> Vec6<S> {
        self.hdot[..k].iter().fold(Vec6::zeros(), |acc, d| acc + d * self.h)
    }

    pub fn values(&self) -> Vec<Vec6<S>> {
        let mut out = Vec::with_capacity(self.len() + 1);
        let mut acc = Vec6::zeros();
        out.push(acc);
        for d in &self.hdot {
            acc += d * self.h;
            out.push(acc);
        }
        out
    }

    pub fn inner(&self, o: &Self) -> Result<S> {
        if self.len() != o.len() {
            return Err(Error::LengthMismatch { expected: self.len(), got: o.len() });
        }
        Ok(self.hdot.iter().zip(&o.hdot).fold(S::zero(), |acc, (a, b)| acc + a.dot(b) * self.h))
    }

    pub fn norm(&self) -> S {
        self.hdot.iter().fold(S::zero(), |acc, a| acc + a.norm_squared() * self.h).sqrt()
    }

    pub fn scale(&self, c: S) -> Self {
        Self { h: self.h, hdot: self.hdot.iter().map(|d| d * c).collect() }
    }

    pub fn sub(&self, o: &Self) -> Result<Self> {
        if self.len() != o.len() {
            return Err(Error::LengthMismatch { expected: self.len(), got: o.len() });
        }
        Ok(Self { h: self.h, hdot: self.hdot.iter().zip(&o.hdot).map(|(a, b)| a - b).collect() })
    }

    pub fn add(&self, o: &Self) -> Result<Self> {
        self.sub(&o.scale(-S::one()))
    }

    /// Itô integral `Σ_k ⟨ḣ_k, ΔB_k⟩`.
    pub fn ito(&self, increments: &[Vec6<S>]) -> Result<S> {
        if self.len() != increments.len() {
            return Err(Error::LengthMismatch { expected: self.len(), got: increments.len() });
        }
        Ok(self.hdot.iter().zip(increments).fold(S::zero(), |acc, (a, b)| acc + a.dot(b)))
    }
}

fn check_stack<S: Real>(path: &PathSample<S>, stack: &TransportStack<S>) -> Result<()> {
    if stack.txi.len() != path.len() + 1 {
        return Err(Error::InvalidParameter("transport stack must carry the derivative flow".into()));
    }
    Ok(())
}

fn weights<S: Real>(rho: &ScalarSchedule, path: &PathSample<S>) -> Result<(Vec<S>, Vec<S>)> {
    rho.validate()?;
    let h = path.h.as_f64();
    let r: Vec<S> = rho.on_grid(h, path.len()).into_iter().map(S::lit).collect();
    let mut cum = Vec::with_capacity(path.len() + 1);
    let mut acc = S::zero();
    cum.push(acc);
    for v in &r[..path.len()] {
        acc += *v * path.h;
        cum.push(acc);
    }
    Ok((r, cum))
}

/// `T𝕀(h)_k = Tξ_k Σ_{j<k} Tξ_j^{-1} X(x_j) ḣ_j h`.
pub fn t_ito<S: Real>(
    m: &Manifold<S>,
    path: &PathSample<S>,
    stack: &TransportStack<S>,
    hv: &HVector<S>,
) -> Result<Vec<Vec4<S>>> {
    check_stack(path, stack)?;
    if hv.len() != path.len() {
        return Err(Error::LengthMismatch { expected: path.len(), got: hv.len() });
    }
    let mut out = Vec::with_capacity(path.len() + 1);
    let mut acc = Vec4::zeros();
    out.push(acc);
    for k in 0..path.len() {
        let v = m.x_map(&path.points[k], &hv.hdot[k]) * path.h;
        acc += stack.invert(&stack.txi[k], &v)?;
        out.push(stack.txi[k + 1] * acc);
    }
    Ok(out)
}

/// Adapted field `ḣ_k = ρ(t_k) Y_{x_k}(Tξ_k b)`.
pub fn make_h<S: Real>(
    m: &Manifold<S>,
    path: &PathSample<S>,
    stack: &TransportStack<S>,
    rho: &ScalarSchedule,
    b: &Vec4<S>,
) -> Result<HVector<S>> {
    check_stack(path, stack)?;
    m.check_tangent(path.x0(), b)?;
    let (r, _) = weights(rho, path)?;
    let hdot = (0..path.len())
        .map(|k| m.y_map_unchecked(&path.points[k], &(stack.txi[k] * b)) * r[k])
        .collect();
    Ok(HVector { h: path.h, hdot })
}

/// Running sum `S_k = Σ_{j<k} h ρ_j Tξ_j^{-1} T(Tξ_j b1, Tξ_j b2)`.
fn torsion_sums<S: Real>(
    m: &Manifold<S>,
    path: &PathSample<S>,
    stack: &TransportStack<S>,
    r: &[S],
    b1: &Vec4<S>,
    b2: &Vec4<S>,
) -> Result<Vec<Vec4<S>>> {
    let mut out = Vec::with_capacity(path.len() + 1);
    let mut acc = Vec4::zeros();
    out.push(acc);
    for k in 0..path.len() {
        if m.has_torsion() {
            let x = &path.points[k];
            let t = m.torsion(x, &(stack.txi[k] * b1), &(stack.txi[k] * b2));
            acc += stack.invert(&stack.txi[k], &t)? * (path.h * r[k]);
        }
        out.push(acc);
    }
    Ok(out)
}

/// Lie bracket `[h¹, h²]` of two fields from [`make_h`]:
/// `ḣ_k = ρ_k (∫_0^{t_{k+1}} ρ) dY(Tξ_k b1, Tξ_k b2) + ρ_k Y(Tξ_k S_k)`.
pub fn bracket_formula<S: Real>(
    m: &Manifold<S>,
    path: &PathSample<S>,
    stack: &TransportStack<S>,
    rho: &ScalarSchedule,
    b1: &Vec4<S>,
    b2: &Vec4<S>,
) -> Result<HVector<S>> {
    check_stack(path, stack)?;
    let (r, cum) = weights(rho, path)?;
    let mut out = HVector::zeros(path.len(), path.h);
    if m.kind().is_gradient() {
        return Ok(out);
    }
    let sums = torsion_sums(m, path, stack, &r, b1, b2)?;
    for k in 0..path.len() {
        let x = &path.points[k];
        let u = stack.txi[k] * b1;
        let v = stack.txi[k] * b2;
        out.hdot[k] = m.dy(x, &u, &v) * (r[k] * cum[k + 1]) + m.y_map_unchecked(x, &(stack.txi[k] * sums[k])) * r[k];
    }
    Ok(out)
}

/// The bracket with `dY` replaced by `Y T`; agrees with [`bracket_formula`]
/// whenever `Y X` is the identity on the range of `dY`.
pub fn bracket_torsion_form<S: Real>(
    m: &Manifold<S>,
    path: &PathSample<S>,
    stack: &TransportStack<S>,
    rho: &ScalarSchedule,
    b1: &Vec4<S>,
    b2: &Vec4<S>,
) -> Result<HVector<S>> {
    check_stack(path, stack)?;
    let (r, cum) = weights(rho, path)?;
    let sums = torsion_sums(m, path, stack, &r, b1, b2)?;
    let mut out = HVector::zeros(path.len(), path.h);
    for k in 0..path.len() {
        let x = &path.points[k];
        let t = m.torsion(x, &(stack.txi[k] * b1), &(stack.txi[k] * b2));
        let tangent = t * (r[k] * cum[k + 1]) + stack.txi[k] * sums[k] * r[k];
        out.hdot[k] = m.y_map_unchecked(x, &tangent);
    }
    Ok(out)
}

/// `T𝕀([h¹, h²])_k = (∫_0^{t_k} ρ) Tξ_k S_k`.
pub fn t_ito_bracket<S: Real>(
    m: &Manifold<S>,
    path: &PathSample<S>,
    stack: &TransportStack<S>,
    rho: &ScalarSchedule,
    b1: &Vec4<S>,
    b2: &Vec4<S>,
) -> Result<Vec<Vec4<S>>> {
    check_stack(path, stack)?;
    let (r, cum) = weights(rho, path)?;
    let sums = torsion_sums(m, path, stack, &r, b1, b2)?;
    Ok((0..=path.len()).map(|k| stack.txi[k] * sums[k] * cum[k]).collect())
}

/// Finite-difference bracket with its convergence diagnostic.
#[derive(Clone, Debug)]
pub struct FdBracket<S> {
    pub value: HVector<S>,
    /// `‖o(ε) − o(ε/2)‖ / ‖o(ε/2) − o(ε/4)‖`, absent when both differences
    /// are at round-off level.
    pub ratio: Option<f64>,
}

fn h_field<S: Real>(
    m: &Manifold<S>,
    x0: &Point<S>,
    h: S,
    incs: &[Vec6<S>],
    rho: &ScalarSchedule,
    b: &Vec4<S>,
) -> Result<HVector<S>> {
    let path = simulate_increments(m, x0, h, incs.to_vec())?;
    let stack = TransportStack::build(m, &path, Needs::txi())?;
    make_h(m, &path, &stack, rho, b)
}

/// `(ḣ^b(ω + ε h^a) − ḣ^b(ω)) / ε`.
fn directional<S: Real>(
    m: &Manifold<S>,
    x0: &Point<S>,
    h: S,
    incs: &[Vec6<S>],
    rho: &ScalarSchedule,
    dir: &HVector<S>,
    b: &Vec4<S>,
    base: &HVector<S>,
    eps: S,
) -> Result<HVector<S>> {
    let shifted: Vec<Vec6<S>> = incs.iter().zip(&dir.hdot).map(|(d, v)| d + v * (eps * h)).collect();
    Ok(h_field(m, x0, h, &shifted, rho, b)?.sub(base)?.scale(S::one() / eps))
}

fn fd_once<S: Real>(
    m: &Manifold<S>,
    x0: &Point<S>,
    h: S,
    incs: &[Vec6<S>],
    rho: &ScalarSchedule,
    b1: &Vec4<S>,
    b2: &Vec4<S>,
    eps: S,
) -> Result<HVector<S>> {
    let h1 = h_field(m, x0, h, incs, rho, b1)?;
    let h2 = h_field(m, x0, h, incs, rho, b2)?;
    let d21 = directional(m, x0, h, incs, rho, &h1, b2, &h2, eps)?;
    let d12 = directional(m, x0, h, incs, rho, &h2, b1, &h1, eps)?;
    d21.sub(&d12)
}

/// `[h¹, h²] = D^H h²(h¹) − D^H h¹(h²)` by re-solving the flow with shifted
/// noise `ΔB_k + ε ḣ_k h`.
pub fn bracket_fd_oracle<S: Real>(
    m: &Manifold<S>,
    x0: &Point<S>,
    h: S,
    increments: &[Vec6<S>],
    rho: &ScalarSchedule,
    b1: &Vec4<S>,
    b2: &Vec4<S>,
    eps: S,
) -> Result<FdBracket<S>> {
    if !(eps > S::zero()) {
        return Err(Error::InvalidParameter("finite-difference step must be positive".into()));
    }
    let two = S::lit(2.0);
    let o1 = fd_once(m, x0, h, increments, rho, b1, b2, eps)?;
    let o2 = fd_once(m, x0, h, increments, rho, b1, b2, eps / two)?;
    let o4 = fd_once(m, x0, h, increments, rho, b1, b2, eps / (two * two))?;
    let num = o1.sub(&o2)?.norm().as_f64();
    let den = o2.sub(&o4)?.norm().as_f64();
    let floor = 1e-9 * o1.norm().as_f64().max(1.0);
    let ratio = if num < floor && den < floor {
        None
    } else {
        let r = num / den;
        if !(1.5..=2.7).contains(&r) {
            return Err(Error::OracleUnstable { ratio: r });
        }
        Some(r)
    };
    Ok(FdBracket { value: o1, ratio })
}

/// One term `coeff · h_{f1} ∧ ... ∧ h_{fr}` of a divergence expansion.
#[derive(Clone, Debug)]
pub struct DivTerm<S> {
    pub coeff: S,
    pub factors: Vec<HVector<S>>,
}

/// Divergence of `h¹ ∧ ... ∧ h^p` for adapted fields:
/// `Σ_j (−1)^j (∫⟨ḣ^j, dB⟩) h^{(ĵ)} − Σ_{i<j} (−1)^{i+j} [h^i, h^j] ∧ h^{(î,ĵ)}`
/// (indices from 1). `brackets` lists `[h^i, h^j]` for `i < j` in
/// lexicographic order, or is empty when all brackets vanish.
pub fn shigekawa_div<S: Real>(
    hs: &[HVector<S>],
    brackets: &[HVector<S>],
    increments: &[Vec6<S>],
) -> Result<Vec<DivTerm<S>>> {
    let p = hs.len();
    if p == 0 {
        return Err(Error::InvalidParameter("divergence of an empty wedge".into()));
    }
    let n_pairs = p * (p - 1) / 2;
    if !brackets.is_empty() && brackets.len() != n_pairs {
        return Err(Error::LengthMismatch { expected: n_pairs, got: brackets.len() });
    }
    let rest = |skip: &[usize]| -> Vec<HVector<S>> {
        hs.iter().enumerate().filter(|(i, _)| !skip.contains(i)).map(|(_, h)| h.clone()).collect()
    };
    let mut out = Vec::new();
    for (a, h) in hs.iter().enumerate() {
        let sign = if a % 2 == 0 { -S::one() } else { S::one() };
        out.push(DivTerm { coeff: sign * h.ito(increments)?, factors: rest(&[a]) });
    }
    let mut idx = 0;
    for a in 0..p {
        for b in a + 1..p {
            if let Some(br) = brackets.get(idx) {
                let sign = if (a + b) % 2 == 0 { -S::one() } else { S::one() };
                let mut factors = vec![br.clone()];
                factors.extend(rest(&[a, b]));
                out.push(DivTerm { coeff: sign, factors });
            }
            idx += 1;
        }
    }
    Ok(out)
}

/// Scalar profile `g` of a cylindrical form.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Kernel {
    Constant,
    Linear,
    Sin,
    Quadratic,
}

impl Kernel {
    pub fn value(self, s: f64) -> f64 {
        match self {
            Kernel::Constant => 1.0,
            Kernel::Linear => s,
            Kernel::Sin => s.sin(),
            Kernel::Quadratic => s * s,
        }
    }

    pub fn derivative(self, s: f64) -> f64 {
        match self {
            Kernel::Constant => 0.0,
            Kernel::Linear => 1.0,
            Kernel::Sin => s.cos(),
            Kernel::Quadratic => 2.0 * s,
        }
    }
}

/// A q-form on Wiener space, `q ≤ 2`:
/// `φ(ω)(k¹, ..., k^q) = g(⟨w, ω(t_g)⟩) det[⟨c_a, k^b(τ_a)⟩]`.
#[derive(Clone, Debug, PartialEq)]
pub struct CylindricalWienerForm<S> {
    pub kernel: Kernel,
    pub weight: Vec6<S>,
    /// Grid index of the time at which `ω` is read.
    pub read_at: usize,
    /// `(c_a, grid index of τ_a)` for each slot.
    pub slots: Vec<(Vec6<S>, usize)>,
}

impl<S: Real> CylindricalWienerForm<S> {
    pub fn new(kernel: Kernel, weight: Vec6<S>, read_at: usize, slots: Vec<(Vec6<S>, usize)>) -> Result<Self> {
        if slots.len() > 2 {
            return Err(Error::DegreeOverflow { degree: slots.len(), max: 2 });
        }
        Ok(Self { kernel, weight, read_at, slots })
    }

    pub fn degree(&self) -> usize {
        self.slots.len()
    }

    fn argument(&self, omega: &[Vec6<S>]) -> f64 {
        self.weight.dot(&omega[self.read_at]).as_f64()
    }

    fn slot_matrix(&self, ks: &[HVector<S>]) -> Vec<Vec<f64>> {
        self.slots
            .iter()
            .map(|(c, tau)| ks.iter().map(|k| c.dot(&k.value(*tau)).as_f64()).collect())
            .collect()
    }

    fn check(&self, omega: &[Vec6<S>], ks: &[HVector<S>], deg: usize) -> Result<()> {
        if ks.len() != deg {
            return Err(Error::DegreeMismatch { expected: deg, got: ks.len() });
        }
        let last = self.slots.iter().map(|s| s.1).chain([self.read_at]).max().unwrap_or(0);
        if last >= omega.len() {
            return Err(Error::InvalidParameter("form reads the path beyond the grid".into()));
        }
        Ok(())
    }

    /// `ω` given as path values on the grid, `ω[0] = 0`.
    pub fn eval(&self, omega: &[Vec6<S>], ks: &[HVector<S>]) -> Result<f64> {
        self.check(omega, ks, self.degree())?;
        Ok(self.kernel.value(self.argument(omega)) * det(&self.slot_matrix(ks)))
    }

    /// `dφ(k⁰, ..., k^q) = Σ_i (−1)^i D_{k^i} g · det(slots on the rest)`.
    pub fn d_eval(&self, omega: &[Vec6<S>], ks: &[HVector<S>]) -> Result<f64> {
        self.check(omega, ks, self.degree() + 1)?;
        let gp = self.kernel.derivative(self.argument(omega));
        let mut total = 0.0;
        for (i, k) in ks.iter().enumerate() {
            let dg = gp * self.weight.dot(&k.value(self.read_at)).as_f64();
            let rest: Vec<HVector<S>> =
                ks.iter().enumerate().filter(|(j, _)| *j != i).map(|(_, v)| v.clone()).collect();
            let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
            total += sign * dg * det(&self.slot_matrix(&rest));
        }
        Ok(total)
    }
}

fn det(m: &[Vec<f64>]) -> f64 {
    match m.len() {
        0 => 1.0,
        1 => m[0][0],
        2 => m[0][0] * m[1][1] - m[0][1] * m[1][0],
        _ => unreachable!("cylindrical forms have degree at most two"),
    }
}

/// Path values `ω_k = Σ_{j<k} ΔB_j`.
pub fn path_values<S: Real>(increments: &[Vec6<S>]) -> Vec<Vec6<S>> {
    let mut out = Vec::with_capacity(increments.len() + 1);
    let mut acc = Vec6::zeros();
    out.push(acc);
    for d in increments {
        acc += d;
        out.push(acc);
    }
    out
}

/// Adapted field `ḣ_k = base + amp · sin⟨freq, ω_k⟩`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SineField<S> {
    pub base: Vec6<S>,
    pub amp: Vec6<S>,
    pub freq: Vec6<S>,
}

impl<S: Real> SineField<S> {
    pub fn field(&self, omega: &[Vec6<S>], h: S) -> HVector<S> {
        let steps = omega.len() - 1;
        let hdot = (0..steps).map(|k| self.base + self.amp * self.freq.dot(&omega[k]).sin()).collect();
        HVector { h, hdot }
    }

    /// `D_k ḣ` at `ω`.
    pub fn derivative(&self, omega: &[Vec6<S>], k: &HVector<S>) -> HVector<S> {
        let kv = k.values();
        let hdot = (0..k.len())
            .map(|j| self.amp * (self.freq.dot(&omega[j]).cos() * self.freq.dot(&kv[j])))
            .collect();
        HVector { h: k.h, hdot }
    }
}

/// Exact brackets `D_{h^a} h^b − D_{h^b} h^a` of a family of sine fields.
pub fn sine_brackets<S: Real>(fields: &[SineField<S>], omega: &[Vec6<S>], hs: &[HVector<S>]) -> Result<Vec<HVector<S>>> {
    let mut out = Vec::new();
    for a in 0..fields.len() {
        for b in a + 1..fields.len() {
            out.push(fields[b].derivative(omega, &hs[a]).sub(&fields[a].derivative(omega, &hs[b]))?);
        }
    }
    Ok(out)
}

/// One Wiener-space sample for an integration-by-parts check.
#[derive(Clone, Debug)]
pub struct IbpSample<S> {
    pub increments: Vec<Vec6<S>>,
    pub fields: Vec<HVector<S>>,
    pub brackets: Vec<HVector<S>>,
}

#[derive(Clone, Debug, Serialize)]
pub struct IbpReport {
    pub n_paths: usize,
    pub d_phi: f64,
    pub phi_div: f64,
    /// Mean of `dφ(h) + φ(div h)`.
    pub residual: f64,
    pub stderr: f64,
}

impl IbpReport {
    pub fn within(&self, n_se: f64) -> bool {
        self.residual.abs() <= n_se * self.stderr || (self.residual == 0.0 && self.stderr == 0.0)
    }
}

/// Per-path `(dφ(h), φ(div h))`.
pub fn ibp_terms<S: Real>(phi: &CylindricalWienerForm<S>, s: &IbpSample<S>) -> Result<(f64, f64)> {
    if phi.degree() + 1 != s.fields.len() {
        return Err(Error::DegreeMismatch { expected: phi.degree() + 1, got: s.fields.len() });
    }
    let omega = path_values(&s.increments);
    let d = phi.d_eval(&omega, &s.fields)?;
    let mut div = 0.0;
    for term in shigekawa_div(&s.fields, &s.brackets, &s.increments)? {
        div += term.coeff.as_f64() * phi.eval(&omega, &term.factors)?;
    }
    Ok((d, div))
}

/// Monte Carlo estimate of `E[dφ(h)] + E[φ(div h)]`; the sampler maps a path
/// index to its sample.
pub fn ibp_check<S, F>(phi: &CylindricalWienerForm<S>, n_paths: usize, sampler: F) -> Result<IbpReport>
where
    S: Real,
    F: Fn(usize) -> Result<IbpSample<S>> + Sync,
{
    use rayon::prelude::*;
    if n_paths < 2 {
        return Err(Error::InvalidParameter("need at least two paths".into()));
    }
    let terms: Vec<(f64, f64)> = (0..n_paths)
        .into_par_iter()
        .map(|p| ibp_terms(phi, &sampler(p)?))
        .collect::<Result<Vec<_>>>()?;
    let d: Vec<f64> = terms.iter().map(|t| t.0).collect();
    let v: Vec<f64> = terms.iter().map(|t| t.0 + t.1).collect();
    let (d_phi, _) = mean_stderr(&d);
    let (residual, stderr) = mean_stderr(&v);
    Ok(IbpReport { n_paths, d_phi, phi_div: residual - d_phi, residual, stderr })
}

/// Gaussian increments of path `p` on a grid of `steps` steps of size `h`.
pub fn wiener_increments<S: Real>(seed: u64, p: usize, dim: usize, h: f64, steps: usize) -> Vec<Vec6<S>> {
    NoiseDriver::new(seed, p as u64, dim, h).increments(steps)
}

/// Sampler for constant (deterministic) fields.
pub fn constant_sampler<S: Real>(
    seed: u64,
    dim: usize,
    h: f64,
    steps: usize,
    fields: Vec<Vec6<S>>,
) -> impl Fn(usize) -> Result<IbpSample<S>> + Sync {
    move |p| {
        Ok(IbpSample {
            increments: wiener_increments(seed, p, dim, h, steps),
            fields: fields.iter().map(|v| HVector::constant(steps, S::lit(h), *v)).collect(),
            brackets: Vec::new(),
        })
    }
}

/// Sampler for adapted sine fields with their exact brackets.
pub fn sine_sampler<S: Real>(
    seed: u64,
    dim: usize,
    h: f64,
    steps: usize,
    fields: Vec<SineField<S>>,
) -> impl Fn(usize) -> Result<IbpSample<S>> + Sync {
    move |p| {
        let increments = wiener_increments(seed, p, dim, h, steps);
        let omega = path_values(&increments);
        let hs: Vec<HVector<S>> = fields.iter().map(|f| f.field(&omega, S::lit(h))).collect();
        let brackets = sine_brackets(&fields, &omega, &hs)?;
        Ok(IbpSample { increments, fields: hs, brackets })
    }
}

/// Sampler for fields `ρ Y(Tξ b_i)` generated by a flow on `m`, with brackets
/// from [`bracket_formula`].
pub fn manifold_sampler<'a, S: Real>(
    m: &'a Manifold<S>,
    x0: Point<S>,
    seed: u64,
    h: f64,
    steps: usize,
    rho: ScalarSchedule,
    bs: Vec<Vec4<S>>,
) -> impl Fn(usize) -> Result<IbpSample<S>> + Sync + 'a {
    move |p| {
        let increments = wiener_increments(seed, p, m.noise_dim(), h, steps);
        let path = simulate_increments(m, &x0, S::lit(h), increments.clone())?;
        let stack = TransportStack::build(m, &path, Needs::txi())?;
        let fields = bs.iter().map(|b| make_h(m, &path, &stack, &rho, b)).collect::<Result<Vec<_>>>()?;
        let mut brackets = Vec::new();
        for a in 0..bs.len() {
            for b in a + 1..bs.len() {
                brackets.push(bracket_formula(m, &path, &stack, &rho, &bs[a], &bs[b])?);
            }
        }
        Ok(IbpSample { increments, fields, brackets })
    }
}

/// Deterministic random vector in the first `dim` coordinates.
pub fn random_direction<S: Real>(seed: u64, dim: usize) -> Vec6<S> {
    use rand_distr::{Distribution, StandardNormal};
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut v = Vec6::zeros();
    for i in 0..dim {
        let z: f64 = StandardNormal.sample(&mut rng);
        v[i] = S::lit(z);
    }
    v
}
