//! Catalog manifolds with their stochastic flows `dx = X(x)∘dB + A(x)dt`.
//!
//! Spheres and the Clifford torus are embedded gradient systems: tangent
//! vectors are ambient coordinates and `X(x)` is the orthogonal projection.
//! The three SO(3) systems use left-trivialised coordinates, so a tangent
//! vector at `g` is the `α ∈ R^3` with `v = TL_g α`; the bi-invariant metric
//! is then Euclidean in every chart.

use std::f64::consts::FRAC_1_SQRT_2;

use arrayvec::ArrayVec;
use nalgebra::{DMatrix, DVector, UnitQuaternion};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{
    ext3, pad3, quat_coords, quat_from_coords, rotation, so3_exp, so3_log, top3, Mat3, Mat4,
    Mat46, Mat64, Vec3, Vec4, Vec6,
};
use crate::multilinear::{map_slot, MultiVector, MAX_DEGREE};
use crate::scalar::Real;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ManifoldKind {
    #[serde(rename = "s1", alias = "sphere1")]
    S1,
    #[serde(rename = "s2", alias = "sphere2")]
    S2,
    #[serde(rename = "s3", alias = "sphere3")]
    S3,
    #[serde(rename = "torus", alias = "clifford_torus")]
    Torus,
    #[serde(rename = "so3_left")]
    So3Left,
    #[serde(rename = "so3_right")]
    So3Right,
    #[serde(rename = "so3_biinvariant")]
    So3BiInvariant,
}

impl ManifoldKind {
    pub const ALL: [ManifoldKind; 7] = [
        ManifoldKind::S1,
        ManifoldKind::S2,
        ManifoldKind::S3,
        ManifoldKind::Torus,
        ManifoldKind::So3Left,
        ManifoldKind::So3Right,
        ManifoldKind::So3BiInvariant,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ManifoldKind::S1 => "s1",
            ManifoldKind::S2 => "s2",
            ManifoldKind::S3 => "s3",
            ManifoldKind::Torus => "torus",
            ManifoldKind::So3Left => "so3_left",
            ManifoldKind::So3Right => "so3_right",
            ManifoldKind::So3BiInvariant => "so3_biinvariant",
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        Self::ALL.into_iter().find(|k| k.name() == name || k.alias() == name).ok_or_else(|| {
            let valid: Vec<_> = Self::ALL
                .iter()
                .map(|k| if k.alias() == k.name() { k.name().to_string() } else { format!("{} ({})", k.name(), k.alias()) })
                .collect();
            Error::InvalidParameter(format!(
                "unknown manifold '{name}' (valid: {})",
                valid.join(", ")
            ))
        })
    }

    /// Long-form name accepted alongside [`ManifoldKind::name`].
    pub fn alias(self) -> &'static str {
        match self {
            ManifoldKind::S1 => "sphere1",
            ManifoldKind::S2 => "sphere2",
            ManifoldKind::S3 => "sphere3",
            ManifoldKind::Torus => "clifford_torus",
            other => other.name(),
        }
    }

    pub fn is_so3(self) -> bool {
        matches!(
            self,
            ManifoldKind::So3Left | ManifoldKind::So3Right | ManifoldKind::So3BiInvariant
        )
    }

    /// Gradient systems: the flow's connection is Levi-Civita and torsion-free.
    pub fn is_gradient(self) -> bool {
        !self.is_so3()
    }
}

/// Connections attached to a flow.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Connection {
    LeviCivita,
    /// `∇̆_v U = X(x) d(Y U)(v)`.
    Breve,
    /// The adjoint of the breve connection, `∇̂ = ∇̆ - T̆`.
    Hat,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Affine {
    LeviCivita,
    LeftInvariant,
    RightInvariant,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Point<S> {
    /// Ambient coordinates, or quaternion coordinates `(i, j, k, w)` on SO(3).
    pub coords: Vec4<S>,
}

impl<S: Real> Point<S> {
    pub fn new(coords: Vec4<S>) -> Self {
        Self { coords }
    }

    pub fn from_rotation(q: &UnitQuaternion<S>) -> Self {
        Self { coords: quat_coords(q) }
    }

    pub fn quaternion(&self) -> UnitQuaternion<S> {
        quat_from_coords(&self.coords)
    }

    pub fn cast<T: Real>(&self) -> Point<T> {
        Point { coords: self.coords.map(|c| T::lit(c.as_f64())) }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Tangent<S> {
    pub base: Point<S>,
    pub vector: Vec4<S>,
}

/// A q-vector together with its base point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QVector<S> {
    pub base: Point<S>,
    pub vector: MultiVector<S>,
}

impl<S: Real> QVector<S> {
    pub fn degree(&self) -> usize {
        self.vector.degree()
    }
}

/// One integrator step together with its tangent linearisation.
#[derive(Clone, Copy, Debug)]
pub struct StepOutcome<S> {
    pub next: Point<S>,
    /// Derivative of the discrete step map, `T_x -> T_next`.
    pub jac: Mat4<S>,
    /// `log(x^{-1} next)` in left coordinates (SO(3) only).
    pub omega: Vec3<S>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Manifold<S> {
    kind: ManifoldKind,
    drift: Vec3<S>,
}

const S1_BLOCKS: &[(usize, usize)] = &[(0, 2)];
const S2_BLOCKS: &[(usize, usize)] = &[(0, 3)];
const S3_BLOCKS: &[(usize, usize)] = &[(0, 4)];
const TORUS_BLOCKS: &[(usize, usize)] = &[(0, 2), (2, 2)];

impl<S: Real> Manifold<S> {
    pub fn new(kind: ManifoldKind) -> Self {
        Self { kind, drift: Vec3::zeros() }
    }

    pub fn parse(name: &str) -> Result<Self> {
        Ok(Self::new(ManifoldKind::parse(name)?))
    }

    /// Adds the left-invariant drift `A(g) = TL_g a`; only the left system supports it.
    pub fn with_drift(mut self, a: Vec3<S>) -> Result<Self> {
        if self.kind != ManifoldKind::So3Left {
            return Err(Error::Unsupported {
                operation: "drift",
                manifold: self.kind.name().into(),
            });
        }
        self.drift = a;
        Ok(self)
    }

    pub fn kind(&self) -> ManifoldKind {
        self.kind
    }

    pub fn name(&self) -> &'static str {
        self.kind.name()
    }

    pub fn drift(&self) -> Vec3<S> {
        self.drift
    }

    pub fn has_drift(&self) -> bool {
        self.drift != Vec3::zeros()
    }

    pub fn dim(&self) -> usize {
        match self.kind {
            ManifoldKind::S1 => 1,
            ManifoldKind::S2 | ManifoldKind::Torus => 2,
            _ => 3,
        }
    }

    /// Number of tangent coordinates.
    pub fn tangent_coords(&self) -> usize {
        match self.kind {
            ManifoldKind::S1 => 2,
            ManifoldKind::S2 => 3,
            ManifoldKind::S3 | ManifoldKind::Torus => 4,
            _ => 3,
        }
    }

    pub fn noise_dim(&self) -> usize {
        match self.kind {
            ManifoldKind::So3BiInvariant => 6,
            _ => self.tangent_coords(),
        }
    }

    fn blocks(&self) -> &'static [(usize, usize)] {
        match self.kind {
            ManifoldKind::S1 => S1_BLOCKS,
            ManifoldKind::S2 => S2_BLOCKS,
            ManifoldKind::S3 => S3_BLOCKS,
            ManifoldKind::Torus => TORUS_BLOCKS,
            _ => &[],
        }
    }

    /// Constant sectional curvature of the catalog metric.
    pub fn sectional_curvature(&self) -> S {
        match self.kind {
            ManifoldKind::S2 | ManifoldKind::S3 => S::one(),
            ManifoldKind::S1 | ManifoldKind::Torus => S::zero(),
            _ => S::lit(0.25),
        }
    }

    pub fn origin(&self) -> Point<S> {
        let o = S::one();
        let z = S::zero();
        let c = match self.kind {
            ManifoldKind::S1 => Vec4::new(o, z, z, z),
            ManifoldKind::S2 => Vec4::new(z, z, o, z),
            ManifoldKind::S3 => Vec4::new(z, z, z, o),
            ManifoldKind::Torus => Vec4::new(o, z, o, z),
            _ => quat_coords(&UnitQuaternion::identity()),
        };
        Point::new(c)
    }

    pub fn check_point(&self, x: &Point<S>) -> Result<()> {
        let tol = S::default_epsilon().sqrt() * S::lit(10.0);
        let defect = if self.kind.is_so3() {
            (x.coords.norm() - S::one()).abs()
        } else {
            let mut d = S::zero();
            let mut used = 0;
            for &(o, l) in self.blocks() {
                let n = x.coords.rows(o, l).norm();
                d = d.max((n - S::one()).abs());
                used = o + l;
            }
            for i in used..4 {
                d = d.max(x.coords[i].abs());
            }
            d
        };
        if defect > tol || !defect.is_finite() {
            return Err(Error::OffManifold { defect: defect.as_f64() });
        }
        Ok(())
    }

    /// Nearest point (blockwise normalisation, or quaternion normalisation).
    pub fn project_point(&self, y: &Vec4<S>) -> Point<S> {
        if self.kind.is_so3() {
            return Point::new(y / y.norm());
        }
        let mut c = Vec4::zeros();
        for &(o, l) in self.blocks() {
            let b = y.rows(o, l);
            let n = b.norm();
            c.rows_mut(o, l).copy_from(&(b / n));
        }
        Point::new(c)
    }

    pub fn point(&self, coords: Vec4<S>) -> Result<Point<S>> {
        let p = Point::new(coords);
        self.check_point(&p)?;
        Ok(p)
    }

    pub fn rotation(&self, x: &Point<S>) -> Mat3<S> {
        rotation(&x.quaternion())
    }

    /// Orthogonal projector onto `T_x` in tangent coordinates.
    pub fn tangent_projector(&self, x: &Point<S>) -> Mat4<S> {
        if self.kind.is_so3() {
            return pad3(&Mat3::identity());
        }
        embedded_projector(self.blocks(), &x.coords)
    }

    /// Projector onto the normal space at `x` plus unused padding coordinates.
    pub fn normal_projector(&self, x: &Point<S>) -> Mat4<S> {
        Mat4::identity() - self.tangent_projector(x)
    }

    pub fn check_tangent(&self, x: &Point<S>, v: &Vec4<S>) -> Result<()> {
        let normal = (self.normal_projector(x) * v).norm();
        let tol = S::default_epsilon().sqrt() * (S::one() + v.norm());
        if normal > tol {
            return Err(Error::NotTangent { normal: normal.as_f64() });
        }
        Ok(())
    }

    pub fn x_matrix(&self, x: &Point<S>) -> Mat46<S> {
        let mut out = Mat46::zeros();
        match self.kind {
            ManifoldKind::So3Left => {
                out.fixed_view_mut::<3, 3>(0, 0).copy_from(&Mat3::identity());
            }
            ManifoldKind::So3Right => {
                out.fixed_view_mut::<3, 3>(0, 0)
                    .copy_from(&self.rotation(x).transpose());
            }
            ManifoldKind::So3BiInvariant => {
                let s = S::lit(FRAC_1_SQRT_2);
                out.fixed_view_mut::<3, 3>(0, 0)
                    .copy_from(&(self.rotation(x).transpose() * s));
                out.fixed_view_mut::<3, 3>(0, 3).copy_from(&(Mat3::identity() * -s));
            }
            _ => {
                let p = self.tangent_projector(x);
                out.fixed_view_mut::<4, 4>(0, 0).copy_from(&p);
            }
        }
        out
    }

    /// `X(x)e`, the tangent vector driven by noise direction `e`.
    pub fn x_map(&self, x: &Point<S>, e: &Vec6<S>) -> Vec4<S> {
        if self.kind == ManifoldKind::So3Left {
            return Vec4::new(e[0], e[1], e[2], S::zero());
        }
        self.x_matrix(x) * e
    }

    /// `Y_x = X(x)^*`; the right inverse of `X(x)` on `T_x`.
    pub fn y_matrix(&self, x: &Point<S>) -> Mat64<S> {
        self.x_matrix(x).transpose()
    }

    pub fn y_map(&self, x: &Point<S>, v: &Vec4<S>) -> Result<Vec6<S>> {
        self.check_tangent(x, v)?;
        Ok(self.y_map_unchecked(x, v))
    }

    pub fn y_map_unchecked(&self, x: &Point<S>, v: &Vec4<S>) -> Vec6<S> {
        self.y_matrix(x) * v
    }

    /// Torsion `T̆ = X dY` of the breve connection.
    pub fn torsion(&self, _x: &Point<S>, u: &Vec4<S>, v: &Vec4<S>) -> Vec4<S> {
        match self.kind {
            ManifoldKind::So3Left => -ext3(&top3(u).cross(&top3(v))),
            ManifoldKind::So3Right => ext3(&top3(u).cross(&top3(v))),
            _ => Vec4::zeros(),
        }
    }

    pub fn has_torsion(&self) -> bool {
        matches!(self.kind, ManifoldKind::So3Left | ManifoldKind::So3Right)
    }

    /// Correction `∇̂_u V - ∇̆_u V = -T̆(u, V)`.
    pub fn adjoint_connection_correction(&self, x: &Point<S>, u: &Vec4<S>, v: &Vec4<S>) -> Vec4<S> {
        -self.torsion(x, u, v)
    }

    /// Exterior derivative of the R^m-valued form `Y`.
    pub fn dy(&self, x: &Point<S>, u: &Vec4<S>, v: &Vec4<S>) -> Vec6<S> {
        let c = top3(u).cross(&top3(v));
        let mut out = Vec6::zeros();
        match self.kind {
            ManifoldKind::So3Left => out.fixed_rows_mut::<3>(0).copy_from(&(-c)),
            ManifoldKind::So3Right => out.fixed_rows_mut::<3>(0).copy_from(&(self.rotation(x) * c)),
            ManifoldKind::So3BiInvariant => {
                let s = S::lit(FRAC_1_SQRT_2);
                out.fixed_rows_mut::<3>(0).copy_from(&(self.rotation(x) * c * s));
                out.fixed_rows_mut::<3>(3).copy_from(&(c * s));
            }
            _ => {}
        }
        out
    }

    /// Second fundamental form of an embedded manifold (normal-valued).
    pub fn second_fundamental_form(&self, x: &Point<S>, u: &Vec4<S>, v: &Vec4<S>) -> Result<Vec4<S>> {
        if self.kind.is_so3() {
            return Err(Error::Unsupported {
                operation: "second fundamental form",
                manifold: self.name().into(),
            });
        }
        let mut out = Vec4::zeros();
        for &(o, l) in self.blocks() {
            let ip = u.rows(o, l).dot(&v.rows(o, l));
            let xb = x.coords.rows(o, l) * -ip;
            out.rows_mut(o, l).copy_from(&xb);
        }
        Ok(out)
    }

    /// Levi-Civita curvature `R(u, v)w`. Embedded manifolds go through the
    /// Gauss equation `⟨R(u,v)w, z⟩ = ⟨II(v,w), II(u,z)⟩ - ⟨II(u,w), II(v,z)⟩`;
    /// SO(3) uses `R(u,v)w = -¼[[u,v],w]`.
    pub fn riemann(&self, x: &Point<S>, u: &Vec4<S>, v: &Vec4<S>, w: &Vec4<S>) -> Vec4<S> {
        if self.kind.is_so3() {
            let c = top3(u).cross(&top3(v)).cross(&top3(w));
            return ext3(&(c * S::lit(-0.25)));
        }
        let p = self.tangent_projector(x);
        let (u, v, w) = (p * u, p * v, p * w);
        let ii = |a: &Vec4<S>, b: &Vec4<S>| self.second_fundamental_form(x, a, b).unwrap();
        let vw = ii(&v, &w);
        let uw = ii(&u, &w);
        let mut out = Vec4::zeros();
        for i in 0..4 {
            let z = p * Vec4::ith(i, S::one());
            out[i] = vw.dot(&ii(&u, &z)) - uw.dot(&ii(&v, &z));
        }
        out
    }

    /// Orthonormal basis of `T_x`.
    pub fn tangent_frame(&self, x: &Point<S>) -> ArrayVec<Vec4<S>, 4> {
        let p = self.tangent_projector(x);
        let mut frame: ArrayVec<Vec4<S>, 4> = ArrayVec::new();
        for i in 0..4 {
            let mut e = p * Vec4::ith(i, S::one());
            for f in &frame {
                let c = f.dot(&e);
                e -= f * c;
            }
            let n = e.norm();
            if n > S::lit(1e-3) {
                frame.push(e / n);
            }
            if frame.len() == self.dim() {
                break;
            }
        }
        frame
    }

    /// Ricci endomorphism of `T_x` as a tangent-coordinate matrix.
    pub fn ricci(&self, x: &Point<S>) -> Mat4<S> {
        let p = self.tangent_projector(x);
        let frame = self.tangent_frame(x);
        let mut out = Mat4::zeros();
        for j in 0..4 {
            let v = p * Vec4::ith(j, S::one());
            let mut col = Vec4::zeros();
            for f in &frame {
                col += self.riemann(x, &v, f, f);
            }
            out.set_column(j, &col);
        }
        out
    }

    /// Curvature operator on bivectors, acting on flattened dense 2-tensors:
    /// `ℛ(u ∧ v)` is the bivector of the endomorphism `R(u, v)`, so it is
    /// positive on spheres.
    pub fn curvature_operator(&self, x: &Point<S>) -> DMatrix<S> {
        let p = self.tangent_projector(x);
        let e: Vec<Vec4<S>> = (0..4).map(|i| p * Vec4::ith(i, S::one())).collect();
        let half = S::lit(0.5);
        let mut out = DMatrix::zeros(16, 16);
        for k in 0..4 {
            for l in 0..4 {
                if k == l {
                    continue;
                }
                for j in 0..4 {
                    let r = self.riemann(x, &e[k], &e[l], &e[j]);
                    for i in 0..4 {
                        out[(i * 4 + j, k * 4 + l)] = half * r.dot(&e[i]);
                    }
                }
            }
        }
        out
    }

    pub fn curvature_apply(&self, x: &Point<S>, y: &MultiVector<S>) -> Result<MultiVector<S>> {
        if y.degree() != 2 {
            return Err(Error::DegreeMismatch { expected: 2, got: y.degree() });
        }
        let op = self.curvature_operator(x);
        Ok(apply_flat(&op, y))
    }

    /// Weitzenböck curvature on q-vectors: the Ricci derivation minus twice
    /// the curvature operator acting on every pair of slots.
    pub fn weitzenbock_apply(&self, x: &Point<S>, t: &MultiVector<S>) -> MultiVector<S> {
        let q = t.degree();
        if q == 0 {
            return MultiVector::scalar(S::zero());
        }
        let ric = self.ricci(x);
        let mut out = MultiVector::zero(q);
        for a in 0..q {
            out += map_slot(t, a, &ric);
        }
        if q >= 2 {
            let rm = self.curvature_operator(x);
            for a in 0..q {
                for b in (a + 1)..q {
                    out -= pair_action(t, a, b, &rm) * S::lit(2.0);
                }
            }
        }
        out
    }

    /// Matrix of [`Self::weitzenbock_apply`] on flattened degree-q tensors.
    pub fn weitzenbock(&self, x: &Point<S>, q: usize) -> Result<DMatrix<S>> {
        if q > MAX_DEGREE {
            return Err(Error::DegreeOverflow { degree: q, max: MAX_DEGREE });
        }
        let n = 4usize.pow(q as u32);
        let mut out = DMatrix::zeros(n, n);
        for c in 0..n {
            let mut basis = MultiVector::zero(q);
            basis.as_mut_slice()[c] = S::one();
            let img = self.weitzenbock_apply(x, &basis);
            for r in 0..n {
                out[(r, c)] = img.as_slice()[r];
            }
        }
        Ok(out)
    }

    /// On the catalog (constant curvature) the Weitzenböck operator on
    /// `∧^q T_x` is `q(n-q)K` times the identity.
    pub fn weitzenbock_scalar(&self, q: usize) -> Option<S> {
        let n = self.dim();
        if q > n {
            return Some(S::zero());
        }
        Some(S::lit((q * (n - q)) as f64) * self.sectional_curvature())
    }

    /// Zero-order term of the flow's generator on q-forms written with the
    /// hat connection.
    pub fn breve_weitzenbock_scalar(&self, q: usize) -> Option<S> {
        match self.kind {
            ManifoldKind::So3Left | ManifoldKind::So3Right => Some(S::zero()),
            _ => self.weitzenbock_scalar(q),
        }
    }

    fn affine(&self, conn: Connection) -> Affine {
        match (self.kind, conn) {
            (ManifoldKind::So3Left, Connection::Breve) => Affine::LeftInvariant,
            (ManifoldKind::So3Left, Connection::Hat) => Affine::RightInvariant,
            (ManifoldKind::So3Right, Connection::Breve) => Affine::RightInvariant,
            (ManifoldKind::So3Right, Connection::Hat) => Affine::LeftInvariant,
            _ => Affine::LeviCivita,
        }
    }

    /// Whether the breve and hat connections coincide with Levi-Civita.
    pub fn connections_coincide(&self) -> bool {
        !self.has_torsion()
    }

    /// One step of the flow driven by the increment `db` over time `h`.
    pub fn step(&self, x: &Point<S>, db: &Vec6<S>, h: S, index: usize) -> Result<StepOutcome<S>> {
        self.step_with(x, db, h, index, true)
    }

    /// As [`Manifold::step`]; when `jacobian` is false the embedded
    /// manifolds leave `jac` at zero.
    pub fn step_with(&self, x: &Point<S>, db: &Vec6<S>, h: S, index: usize, jacobian: bool) -> Result<StepOutcome<S>> {
        match self.kind {
            ManifoldKind::So3Left => {
                let w = Vec3::new(db[0], db[1], db[2]) + self.drift * h;
                let c = so3_exp(&w);
                let y = x.quaternion() * c;
                Ok(StepOutcome {
                    next: Point::from_rotation(&y.renormalize_fast_copy()),
                    jac: pad3(&rotation(&c).transpose()),
                    omega: w,
                })
            }
            ManifoldKind::So3Right => {
                let a = Vec3::new(db[0], db[1], db[2]);
                let q = x.quaternion();
                let y = so3_exp(&a) * q;
                let omega = rotation(&q).transpose() * a;
                Ok(StepOutcome {
                    next: Point::from_rotation(&y.renormalize_fast_copy()),
                    jac: pad3(&Mat3::identity()),
                    omega,
                })
            }
            ManifoldKind::So3BiInvariant => {
                let s = S::lit(FRAC_1_SQRT_2);
                let a1 = Vec3::new(db[0], db[1], db[2]) * s;
                let a2 = Vec3::new(db[3], db[4], db[5]) * s;
                let q = x.quaternion();
                let c2 = so3_exp(&a2);
                let y = (so3_exp(&a1) * q * c2.inverse()).renormalize_fast_copy();
                let omega = so3_log(&(q.inverse() * y));
                Ok(StepOutcome {
                    next: Point::from_rotation(&y),
                    jac: pad3(&rotation(&c2)),
                    omega,
                })
            }
            _ => self.heun_step(x, db, h, index, jacobian),
        }
    }

    fn heun_step(&self, x: &Point<S>, db: &Vec6<S>, h: S, index: usize, jacobian: bool) -> Result<StepOutcome<S>> {
        let blocks = self.blocks();
        let d = Vec4::new(db[0], db[1], db[2], db[3]);
        let px = embedded_projector(blocks, &x.coords);
        let xt = x.coords + px * d;
        let pt = embedded_projector(blocks, &xt);
        let xp = x.coords + (px + pt) * d * S::lit(0.5);
        let mut next = Vec4::zeros();
        let mut dn = Mat4::zeros();
        for &(o, l) in blocks {
            let mut n2 = S::zero();
            for i in 0..l {
                n2 += xp[o + i] * xp[o + i];
            }
            let n = n2.sqrt();
            for i in 0..l {
                next[o + i] = xp[o + i] / n;
            }
            if !jacobian {
                continue;
            }
            for i in 0..l {
                for j in 0..l {
                    let delta = if i == j { S::one() } else { S::zero() };
                    dn[(o + i, o + j)] = (delta - next[o + i] * next[o + j]) / n;
                }
            }
        }
        let jump = (next - xp).norm();
        let bound = S::lit(10.0) * (d.norm() + h);
        if !(jump <= bound) {
            return Err(Error::BlowUp { step: index, jump: jump.as_f64() });
        }
        if !jacobian {
            return Ok(StepOutcome { next: Point::new(next), jac: Mat4::zeros(), omega: Vec3::zeros() });
        }
        let gx = noise_jacobian(blocks, &x.coords, &d);
        let gt = noise_jacobian(blocks, &xt, &d);
        let id = block_identity::<S>(blocks);
        let half = S::lit(0.5);
        let dxp = id + gx * half + gt * (id + gx) * half;
        Ok(StepOutcome { next: Point::new(next), jac: dn * dxp * px, omega: Vec3::zeros() })
    }

    /// Parallel transport `T_x -> T_next` over one integrator step.
    pub fn transport_step(&self, conn: Connection, x: &Point<S>, out: &StepOutcome<S>) -> Mat4<S> {
        if !self.kind.is_so3() {
            return sphere_rotation(self.blocks(), &x.coords, &out.next.coords);
        }
        so3_transport(self.affine(conn), &out.omega)
    }

    /// Parallel transport along the minimising geodesic from `x` to `y`.
    pub fn transport_between(&self, conn: Connection, x: &Point<S>, y: &Point<S>) -> Mat4<S> {
        if !self.kind.is_so3() {
            return sphere_rotation(self.blocks(), &x.coords, &y.coords);
        }
        let omega = so3_log(&(x.quaternion().inverse() * y.quaternion()));
        so3_transport(self.affine(conn), &omega)
    }

    pub fn exp_map(&self, x: &Point<S>, v: &Vec4<S>) -> Point<S> {
        if self.kind.is_so3() {
            let y = x.quaternion() * so3_exp(&top3(v));
            return Point::from_rotation(&y);
        }
        let mut c = Vec4::zeros();
        for &(o, l) in self.blocks() {
            let xb = x.coords.rows(o, l);
            let vb = v.rows(o, l);
            let th = vb.norm();
            let yb = if th > S::zero() {
                xb * th.cos() + vb * (th.sin() / th)
            } else {
                xb.into_owned()
            };
            c.rows_mut(o, l).copy_from(&yb);
        }
        self.project_point(&c)
    }

    pub fn log_map(&self, x: &Point<S>, y: &Point<S>) -> Vec4<S> {
        if self.kind.is_so3() {
            return ext3(&so3_log(&(x.quaternion().inverse() * y.quaternion())));
        }
        let mut out = Vec4::zeros();
        for &(o, l) in self.blocks() {
            let xb = x.coords.rows(o, l);
            let yb = y.coords.rows(o, l);
            let c = xb.dot(&yb).max(-S::one()).min(S::one());
            let perp = yb - xb * c;
            let n = perp.norm();
            if n > S::zero() {
                out.rows_mut(o, l).copy_from(&(perp * (c.acos() / n)));
            }
        }
        out
    }

    pub fn distance(&self, x: &Point<S>, y: &Point<S>) -> S {
        self.log_map(x, y).norm()
    }

    pub fn random_point<R: Rng + ?Sized>(&self, rng: &mut R) -> Point<S> {
        let mut g = Vec4::zeros();
        for i in 0..4 {
            let z: f64 = rng.sample(StandardNormal);
            g[i] = S::lit(z);
        }
        if !self.kind.is_so3() {
            let used: usize = self.blocks().iter().map(|&(o, l)| o + l).max().unwrap_or(0);
            for i in used..4 {
                g[i] = S::zero();
            }
        }
        self.project_point(&g)
    }

    pub fn random_tangent<R: Rng + ?Sized>(&self, x: &Point<S>, rng: &mut R) -> Vec4<S> {
        let mut g = Vec4::zeros();
        for i in 0..4 {
            let z: f64 = rng.sample(StandardNormal);
            g[i] = S::lit(z);
        }
        self.tangent_projector(x) * g
    }
}

trait RenormalizeCopy {
    fn renormalize_fast_copy(self) -> Self;
}

impl<S: Real> RenormalizeCopy for UnitQuaternion<S> {
    fn renormalize_fast_copy(mut self) -> Self {
        self.renormalize();
        self
    }
}

fn embedded_projector<S: Real>(blocks: &[(usize, usize)], y: &Vec4<S>) -> Mat4<S> {
    let mut p = Mat4::zeros();
    for &(o, l) in blocks {
        for i in 0..l {
            for j in 0..l {
                let delta = if i == j { S::one() } else { S::zero() };
                p[(o + i, o + j)] = delta - y[o + i] * y[o + j];
            }
        }
    }
    p
}

fn block_identity<S: Real>(blocks: &[(usize, usize)]) -> Mat4<S> {
    let mut p = Mat4::zeros();
    for &(o, l) in blocks {
        for i in 0..l {
            p[(o + i, o + i)] = S::one();
        }
    }
    p
}

/// `v ↦ D_y[P(y) d][v] = -v⟨y, d⟩ - y⟨v, d⟩`, blockwise.
fn noise_jacobian<S: Real>(blocks: &[(usize, usize)], y: &Vec4<S>, d: &Vec4<S>) -> Mat4<S> {
    let mut g = Mat4::zeros();
    for &(o, l) in blocks {
        let yd = y.rows(o, l).dot(&d.rows(o, l));
        for i in 0..l {
            for j in 0..l {
                let mut v = -y[o + i] * d[o + j];
                if i == j {
                    v -= yd;
                }
                g[(o + i, o + j)] = v;
            }
        }
    }
    g
}

/// Minimal rotation carrying `T_x` onto `T_y` on each sphere block.
fn sphere_rotation<S: Real>(blocks: &[(usize, usize)], x: &Vec4<S>, y: &Vec4<S>) -> Mat4<S> {
    let mut m = Mat4::zeros();
    for &(o, l) in blocks {
        let xb = x.rows(o, l);
        let yb = y.rows(o, l);
        let denom = S::one() + xb.dot(&yb);
        for i in 0..l {
            for j in 0..l {
                let delta = if i == j { S::one() } else { S::zero() };
                m[(o + i, o + j)] = delta - (x[o + i] + y[o + i]) * y[o + j] / denom;
            }
        }
    }
    m
}

fn so3_transport<S: Real>(affine: Affine, omega: &Vec3<S>) -> Mat4<S> {
    match affine {
        Affine::LeftInvariant => pad3(&Mat3::identity()),
        Affine::RightInvariant => pad3(&rotation(&so3_exp(&(-omega)))),
        Affine::LeviCivita => pad3(&rotation(&so3_exp(&(omega * S::lit(-0.5))))),
    }
}

pub(crate) fn apply_flat<S: Real>(op: &DMatrix<S>, y: &MultiVector<S>) -> MultiVector<S> {
    let v = DVector::from_column_slice(y.as_slice());
    let r = op * v;
    let mut out = MultiVector::zero(y.degree());
    out.as_mut_slice().copy_from_slice(r.as_slice());
    out
}

/// Curvature operator acting on slots `a < b` of a dense tensor.
fn pair_action<S: Real>(t: &MultiVector<S>, a: usize, b: usize, rm: &DMatrix<S>) -> MultiVector<S> {
    let q = t.degree();
    if q == 2 {
        return apply_flat(rm, t);
    }
    let mut out = MultiVector::zero(q);
    let mut idx = [0usize; MAX_DEGREE];
    let n = t.len();
    for flat in 0..n {
        let mut f = flat;
        for s in (0..q).rev() {
            idx[s] = f % 4;
            f /= 4;
        }
        let (i, j) = (idx[a], idx[b]);
        let mut acc = S::zero();
        let mut src = idx;
        for k in 0..4 {
            for l in 0..4 {
                let c = rm[(i * 4 + j, k * 4 + l)];
                if c != S::zero() {
                    src[a] = k;
                    src[b] = l;
                    acc += c * t.get(&src[..q]);
                }
            }
        }
        out.as_mut_slice()[flat] = acc;
    }
    out
}
