//! Dense antisymmetric tensors over the padded 4-dimensional tangent
//! coordinates, with determinant normalisation:
//! `(u ∧ v)_{ij} = u_i v_j - u_j v_i`.

use std::ops::{Add, AddAssign, Mul, Neg, Sub, SubAssign};

use crate::error::{Error, Result};
use crate::linalg::{Mat4, Vec4};
use crate::manifold::{Manifold, Point};
use crate::scalar::Real;

pub const MAX_DEGREE: usize = 3;
const DIM: usize = 4;
const CAP: usize = 64;

const PERMS1: &[(&[usize], i8)] = &[(&[0], 1)];
const PERMS2: &[(&[usize], i8)] = &[(&[0, 1], 1), (&[1, 0], -1)];
const PERMS3: &[(&[usize], i8)] = &[
    (&[0, 1, 2], 1),
    (&[1, 2, 0], 1),
    (&[2, 0, 1], 1),
    (&[1, 0, 2], -1),
    (&[0, 2, 1], -1),
    (&[2, 1, 0], -1),
];

pub(crate) fn permutations(n: usize) -> &'static [(&'static [usize], i8)] {
    match n {
        0 => &[(&[], 1)],
        1 => PERMS1,
        2 => PERMS2,
        3 => PERMS3,
        _ => &[],
    }
}

fn factorial(n: usize) -> usize {
    (1..=n).product()
}

fn decode(mut flat: usize, deg: usize, out: &mut [usize; MAX_DEGREE]) {
    for a in (0..deg).rev() {
        out[a] = flat % DIM;
        flat /= DIM;
    }
}

fn encode(idx: &[usize]) -> usize {
    idx.iter().fold(0, |acc, &i| acc * DIM + i)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MultiVector<S> {
    deg: usize,
    data: [S; CAP],
}

impl<S: Real> MultiVector<S> {
    /// Zero tensor of the given degree. Panics above [`MAX_DEGREE`].
    pub fn zero(deg: usize) -> Self {
        assert!(deg <= MAX_DEGREE, "degree {deg} above {MAX_DEGREE}");
        Self { deg, data: [S::zero(); CAP] }
    }

    pub fn try_zero(deg: usize) -> Result<Self> {
        if deg > MAX_DEGREE {
            return Err(Error::DegreeOverflow { degree: deg, max: MAX_DEGREE });
        }
        Ok(Self::zero(deg))
    }

    pub fn scalar(s: S) -> Self {
        let mut out = Self::zero(0);
        out.data[0] = s;
        out
    }

    pub fn vector(v: &Vec4<S>) -> Self {
        let mut out = Self::zero(1);
        out.data[..DIM].copy_from_slice(v.as_slice());
        out
    }

    /// `v_1 ∧ ... ∧ v_q` for the given factors.
    pub fn primitive(factors: &[Vec4<S>]) -> Result<Self> {
        let mut out = Self::scalar(S::one());
        for f in factors {
            out = wedge(&out, &Self::vector(f))?;
        }
        Ok(out)
    }

    pub fn from_mat(m: &Mat4<S>) -> Self {
        let mut out = Self::zero(2);
        for i in 0..DIM {
            for j in 0..DIM {
                out.data[i * DIM + j] = m[(i, j)];
            }
        }
        out
    }

    pub fn degree(&self) -> usize {
        self.deg
    }

    pub fn len(&self) -> usize {
        DIM.pow(self.deg as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn as_slice(&self) -> &[S] {
        &self.data[..self.len()]
    }

    pub fn as_mut_slice(&mut self) -> &mut [S] {
        let n = self.len();
        &mut self.data[..n]
    }

    pub fn get(&self, idx: &[usize]) -> S {
        debug_assert_eq!(idx.len(), self.deg);
        self.data[encode(idx)]
    }

    pub fn set(&mut self, idx: &[usize], value: S) {
        debug_assert_eq!(idx.len(), self.deg);
        self.data[encode(idx)] = value;
    }

    pub fn scalar_value(&self) -> S {
        self.data[0]
    }

    pub fn to_vec4(&self) -> Vec4<S> {
        Vec4::from_column_slice(&self.data[..DIM])
    }

    pub fn to_mat(&self) -> Mat4<S> {
        Mat4::from_fn(|i, j| self.data[i * DIM + j])
    }

    /// Inner product normalised so that primitive wedges of orthonormal
    /// vectors have unit length.
    pub fn dot(&self, other: &Self) -> S {
        debug_assert_eq!(self.deg, other.deg);
        let raw = self
            .as_slice()
            .iter()
            .zip(other.as_slice())
            .fold(S::zero(), |acc, (a, b)| acc + *a * *b);
        raw / S::lit(factorial(self.deg) as f64)
    }

    pub fn norm(&self) -> S {
        self.dot(self).max(S::zero()).sqrt()
    }

    pub fn max_abs(&self) -> S {
        self.as_slice().iter().fold(S::zero(), |m, a| m.max(a.abs()))
    }

    /// `T^σ_{i_1..i_q} = T_{i_σ(1)..i_σ(q)}`.
    pub fn permute(&self, perm: &[usize]) -> Self {
        let mut out = Self::zero(self.deg);
        let mut idx = [0usize; MAX_DEGREE];
        let mut src = [0usize; MAX_DEGREE];
        for flat in 0..self.len() {
            decode(flat, self.deg, &mut idx);
            for a in 0..self.deg {
                src[a] = idx[perm[a]];
            }
            out.data[flat] = self.data[encode(&src[..self.deg])];
        }
        out
    }

    /// Projection onto alternating tensors.
    pub fn alternate(&self) -> Self {
        let mut out = Self::zero(self.deg);
        for (perm, sign) in permutations(self.deg) {
            let p = self.permute(perm);
            if *sign > 0 {
                out += p;
            } else {
                out -= p;
            }
        }
        out * (S::one() / S::lit(factorial(self.deg) as f64))
    }

    pub fn is_alternating(&self, tol: S) -> bool {
        (*self - self.alternate()).max_abs() <= tol * (S::one() + self.max_abs())
    }

    pub fn cast<T: Real>(&self) -> MultiVector<T> {
        let mut out = MultiVector::<T>::zero(self.deg);
        for (o, s) in out.data.iter_mut().zip(self.data.iter()) {
            *o = T::lit(s.as_f64());
        }
        out
    }
}

impl<S: Real> Add for MultiVector<S> {
    type Output = Self;
    fn add(mut self, rhs: Self) -> Self {
        self += rhs;
        self
    }
}

impl<S: Real> AddAssign for MultiVector<S> {
    fn add_assign(&mut self, rhs: Self) {
        debug_assert_eq!(self.deg, rhs.deg);
        for (a, b) in self.data.iter_mut().zip(rhs.data.iter()) {
            *a += *b;
        }
    }
}

impl<S: Real> Sub for MultiVector<S> {
    type Output = Self;
    fn sub(mut self, rhs: Self) -> Self {
        self -= rhs;
        self
    }
}

impl<S: Real> SubAssign for MultiVector<S> {
    fn sub_assign(&mut self, rhs: Self) {
        debug_assert_eq!(self.deg, rhs.deg);
        for (a, b) in self.data.iter_mut().zip(rhs.data.iter()) {
            *a -= *b;
        }
    }
}

impl<S: Real> Mul<S> for MultiVector<S> {
    type Output = Self;
    fn mul(mut self, rhs: S) -> Self {
        for a in self.data.iter_mut() {
            *a *= rhs;
        }
        self
    }
}

impl<S: Real> Neg for MultiVector<S> {
    type Output = Self;
    fn neg(self) -> Self {
        self * -S::one()
    }
}

pub fn wedge<S: Real>(a: &MultiVector<S>, b: &MultiVector<S>) -> Result<MultiVector<S>> {
    let deg = a.deg + b.deg;
    if deg > MAX_DEGREE {
        return Err(Error::DegreeOverflow { degree: deg, max: MAX_DEGREE });
    }
    if a.deg == 0 {
        return Ok(*b * a.data[0]);
    }
    if b.deg == 0 {
        return Ok(*a * b.data[0]);
    }
    let mut prod = MultiVector::zero(deg);
    let nb = b.len();
    for (ia, va) in a.as_slice().iter().enumerate() {
        if *va == S::zero() {
            continue;
        }
        for (ib, vb) in b.as_slice().iter().enumerate() {
            prod.data[ia * nb + ib] = *va * *vb;
        }
    }
    let norm = S::lit((factorial(a.deg) * factorial(b.deg)) as f64);
    let mut out = MultiVector::zero(deg);
    for (perm, sign) in permutations(deg) {
        let p = prod.permute(perm);
        if *sign > 0 {
            out += p;
        } else {
            out -= p;
        }
    }
    Ok(out * (S::one() / norm))
}

/// Applies `m` to one tensor slot.
pub fn map_slot<S: Real>(v: &MultiVector<S>, slot: usize, m: &Mat4<S>) -> MultiVector<S> {
    let deg = v.deg;
    let mut out = MultiVector::zero(deg);
    match deg {
        1 => {
            let r = m * v.to_vec4();
            out.data[..DIM].copy_from_slice(r.as_slice());
        }
        2 => {
            let x = v.to_mat();
            let r = if slot == 0 { m * x } else { x * m.transpose() };
            out = MultiVector::from_mat(&r);
        }
        _ => {
            let stride = DIM.pow((deg - 1 - slot) as u32);
            let mut idx = [0usize; MAX_DEGREE];
            for flat in 0..v.len() {
                decode(flat, deg, &mut idx);
                let i = idx[slot];
                let base = flat - i * stride;
                let mut acc = S::zero();
                for k in 0..DIM {
                    acc += m[(i, k)] * v.data[base + k * stride];
                }
                out.data[flat] = acc;
            }
        }
    }
    out
}

/// Slot-wise push-forward `(A_1 ⊗ ... ⊗ A_q) V`.
pub fn push<S: Real>(maps: &[&Mat4<S>], v: &MultiVector<S>) -> Result<MultiVector<S>> {
    if maps.len() != v.deg {
        return Err(Error::SlotMismatch { expected: v.deg, got: maps.len() });
    }
    let mut out = *v;
    for (slot, m) in maps.iter().enumerate() {
        out = map_slot(&out, slot, m);
    }
    Ok(out)
}

/// `∧^q A` applied to `v`.
pub fn push_all<S: Real>(a: &Mat4<S>, v: &MultiVector<S>) -> MultiVector<S> {
    match v.deg {
        0 => *v,
        1 => MultiVector::vector(&(a * v.to_vec4())),
        2 => MultiVector::from_mat(&(a * v.to_mat() * a.transpose())),
        _ => {
            let mut out = *v;
            for slot in 0..v.deg {
                out = map_slot(&out, slot, a);
            }
            out
        }
    }
}

/// `ι_ℓ V` for the linear form `ℓ = ⟨a, -⟩`, contracting the first slot:
/// `ι_ℓ(b_1 ∧ ... ∧ b_p) = Σ_j (-1)^{j+1} ℓ(b_j) b_1 ∧ ..(omit j).. ∧ b_p`.
pub fn interior_linear<S: Real>(a: &Vec4<S>, v: &MultiVector<S>) -> Result<MultiVector<S>> {
    if v.deg == 0 {
        return Err(Error::DegreeMismatch { expected: 1, got: 0 });
    }
    let deg = v.deg - 1;
    let mut out = MultiVector::zero(deg);
    let n = out.len();
    for i in 0..DIM {
        if a[i] == S::zero() {
            continue;
        }
        for r in 0..n {
            out.data[r] += a[i] * v.data[i * n + r];
        }
    }
    Ok(out)
}

/// `Σ_{i<j} (-1)^{i+j+1} f(b_i, b_j) ∧ b_1 ∧ ..(omit i, j).. ∧ b_p` for an
/// antisymmetric vector-valued bilinear map `f`.
pub fn interior_bilinear<S: Real, F>(v: &MultiVector<S>, f: F) -> Result<MultiVector<S>>
where
    F: Fn(&Vec4<S>, &Vec4<S>) -> Vec4<S>,
{
    match v.deg {
        0 => Err(Error::DegreeMismatch { expected: 2, got: 0 }),
        1 => Ok(MultiVector::scalar(S::zero())),
        deg => {
            let half = S::lit(0.5);
            let mut pairs = [[Vec4::<S>::zeros(); DIM]; DIM];
            for i in 0..DIM {
                for j in 0..DIM {
                    if i != j {
                        let ei = Vec4::ith(i, S::one());
                        let ej = Vec4::ith(j, S::one());
                        pairs[i][j] = f(&ei, &ej);
                    }
                }
            }
            if deg == 2 {
                let mut acc = Vec4::zeros();
                for i in 0..DIM {
                    for j in 0..DIM {
                        let c = v.data[i * DIM + j];
                        if c != S::zero() {
                            acc += pairs[i][j] * (c * half);
                        }
                    }
                }
                return Ok(MultiVector::vector(&acc));
            }
            let mut c = Mat4::<S>::zeros();
            for i in 0..DIM {
                for j in 0..DIM {
                    for k in 0..DIM {
                        let coeff = v.data[(i * DIM + j) * DIM + k];
                        if coeff != S::zero() {
                            for l in 0..DIM {
                                c[(l, k)] += half * coeff * pairs[i][j][l];
                            }
                        }
                    }
                }
            }
            Ok(MultiVector::from_mat(&(c - c.transpose())))
        }
    }
}

/// Torsion contraction `ι_T V` for the torsion of the flow's connection at `x`.
pub fn interior_torsion<S: Real>(
    m: &Manifold<S>,
    x: &Point<S>,
    v: &MultiVector<S>,
) -> Result<MultiVector<S>> {
    interior_bilinear(v, |a, b| m.torsion(x, a, b))
}

/// Evaluates a coefficient tensor `phi` (alternating form, `phi_I = φ(e_I)`)
/// on a dense multivector of the same degree.
pub fn pair<S: Real>(phi: &MultiVector<S>, v: &MultiVector<S>) -> Result<S> {
    if phi.deg != v.deg {
        return Err(Error::DegreeMismatch { expected: phi.deg, got: v.deg });
    }
    Ok(phi.dot(v))
}

/// Removes entries `skip` from the factor list.
pub fn omit<S: Real>(factors: &[Vec4<S>], skip: &[usize]) -> Vec<Vec4<S>> {
    factors
        .iter()
        .enumerate()
        .filter(|(i, _)| !skip.contains(i))
        .map(|(_, v)| *v)
        .collect()
}
