use arrayvec::ArrayVec;
use nalgebra::{DMatrix, Matrix3, Vector3};

use crate::error::{Error, Result};
use crate::linalg::{Mat4, Vec4, Vec6};
use crate::manifold::{apply_flat, Connection, Manifold, Point, StepOutcome};
use crate::multilinear::{push_all, MultiVector};
use crate::scalar::Real;

const MAX_BASIS: usize = 3;

/// A linear map `∧^q T_{x0} -> ∧^q T_x`, stored as the images of an
/// orthonormal basis of `∧^q T_{x0}`.
#[derive(Clone, Debug, PartialEq)]
pub struct WedgeOp<S> {
    degree: usize,
    basis: ArrayVec<MultiVector<S>, MAX_BASIS>,
    images: ArrayVec<MultiVector<S>, MAX_BASIS>,
}

fn subsets(n: usize, q: usize) -> Vec<Vec<usize>> {
    if q == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for first in 0..n {
        for rest in subsets(n, q - 1) {
            if rest.first().is_none_or(|&r| r > first) {
                let mut v = vec![first];
                v.extend(rest);
                out.push(v);
            }
        }
    }
    out
}

impl<S: Real> WedgeOp<S> {
    pub fn identity(m: &Manifold<S>, x0: &Point<S>, q: usize) -> Result<Self> {
        let frame = m.tangent_frame(x0);
        let mut basis = ArrayVec::new();
        for set in subsets(frame.len(), q) {
            let factors: Vec<Vec4<S>> = set.iter().map(|&i| frame[i]).collect();
            basis.push(MultiVector::primitive(&factors)?);
        }
        if q == 0 {
            basis.clear();
            basis.push(MultiVector::scalar(S::one()));
        }
        Ok(Self { degree: q, images: basis.clone(), basis })
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn images(&self) -> &[MultiVector<S>] {
        &self.images
    }

    pub fn apply(&self, v: &MultiVector<S>) -> Result<MultiVector<S>> {
        if v.degree() != self.degree {
            return Err(Error::DegreeMismatch { expected: self.degree, got: v.degree() });
        }
        let mut out = MultiVector::zero(self.degree);
        for (b, img) in self.basis.iter().zip(&self.images) {
            let c = b.dot(v);
            if c != S::zero() {
                out += *img * c;
            }
        }
        Ok(out)
    }

    /// Applies the inverse map to a q-vector at the current point by solving
    /// the Gram system of the images.
    pub fn solve(&self, y: &MultiVector<S>) -> Result<MultiVector<S>> {
        if y.degree() != self.degree {
            return Err(Error::DegreeMismatch { expected: self.degree, got: y.degree() });
        }
        let n = self.images.len();
        let mut out = MultiVector::zero(self.degree);
        if n == 0 {
            return Ok(out);
        }
        let mut g = Matrix3::<S>::identity();
        let mut rhs = Vector3::<S>::zeros();
        for i in 0..n {
            rhs[i] = self.images[i].dot(y);
            for j in 0..n {
                g[(i, j)] = self.images[i].dot(&self.images[j]);
            }
        }
        let c = g.lu().solve(&rhs).ok_or(Error::Singular)?;
        for i in 0..n {
            out += self.basis[i] * c[i];
        }
        Ok(out)
    }

    pub fn map_images<F: FnMut(&MultiVector<S>) -> MultiVector<S>>(&mut self, mut f: F) {
        for img in self.images.iter_mut() {
            *img = f(img);
        }
    }

    /// Matrix form of a degree-1 map, vanishing on the normal space at `x0`.
    pub fn as_matrix(&self) -> Result<Mat4<S>> {
        if self.degree != 1 {
            return Err(Error::DegreeMismatch { expected: 1, got: self.degree });
        }
        let mut out = Mat4::zeros();
        for (b, img) in self.basis.iter().zip(&self.images) {
            out += img.to_vec4() * b.to_vec4().transpose();
        }
        Ok(out)
    }
}

/// Which transported quantities a sweep must carry.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Needs {
    pub txi: bool,
    pub par: bool,
    pub breve_par: bool,
    pub damped: [bool; 4],
    pub breve_damped: [bool; 4],
}

impl Needs {
    pub fn union(self, o: Needs) -> Needs {
        let mut d = [false; 4];
        let mut b = [false; 4];
        for q in 0..4 {
            d[q] = self.damped[q] || o.damped[q];
            b[q] = self.breve_damped[q] || o.breve_damped[q];
        }
        Needs {
            txi: self.txi || o.txi,
            par: self.par || o.par,
            breve_par: self.breve_par || o.breve_par,
            damped: d,
            breve_damped: b,
        }
    }

    pub fn txi() -> Self {
        Needs { txi: true, ..Default::default() }
    }

    pub fn damped(degrees: &[usize]) -> Self {
        let mut n = Needs::default();
        for &q in degrees {
            n.damped[q] = true;
        }
        n
    }

    pub fn breve_damped(degrees: &[usize]) -> Self {
        let mut n = Needs::default();
        for &q in degrees {
            n.breve_damped[q] = true;
        }
        n
    }
}

/// How the damping factor `exp(-½ h ℛ^q)` is formed on each step.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum DampingMode {
    /// Use the constant Weitzenböck eigenvalue of the catalog manifolds.
    #[default]
    Scalar,
    /// Assemble the Weitzenböck matrix at `x_k` and exponentiate it.
    Matrix,
}

/// Left-point data of one step, handed to integrands before advancing.
#[derive(Clone, Copy, Debug)]
pub struct StepCtx<S> {
    pub k: usize,
    pub t: S,
    pub h: S,
    pub db: Vec6<S>,
    /// `X(x_k) ΔB_k`.
    pub dx: Vec4<S>,
}

/// Streaming state of the flow and its transported linear maps at `x_k`.
#[derive(Clone, Debug)]
pub struct FlowState<S> {
    pub k: usize,
    pub t: S,
    pub x: Point<S>,
    pub x0: Point<S>,
    /// Projector onto the normal space at `x0`, used to invert maps out of `T_{x0}`.
    pub normal0: Mat4<S>,
    pub txi: Mat4<S>,
    pub par: Mat4<S>,
    pub breve_par: Mat4<S>,
    pub damped: [Option<WedgeOp<S>>; 4],
    pub breve_damped: [Option<WedgeOp<S>>; 4],
    needs: Needs,
    mode: DampingMode,
}

impl<S: Real> FlowState<S> {
    pub fn new(m: &Manifold<S>, x0: &Point<S>, needs: Needs) -> Result<Self> {
        m.check_point(x0)?;
        let p0 = m.tangent_projector(x0);
        let mut damped: [Option<WedgeOp<S>>; 4] = Default::default();
        let mut breve: [Option<WedgeOp<S>>; 4] = Default::default();
        for q in 0..4 {
            if needs.damped[q] {
                damped[q] = Some(WedgeOp::identity(m, x0, q)?);
            }
            if needs.breve_damped[q] {
                breve[q] = Some(WedgeOp::identity(m, x0, q)?);
            }
        }
        Ok(Self {
            k: 0,
            t: S::zero(),
            x: *x0,
            x0: *x0,
            normal0: Mat4::identity() - p0,
            txi: p0,
            par: p0,
            breve_par: p0,
            damped,
            breve_damped: breve,
            needs,
            mode: DampingMode::Scalar,
        })
    }

    pub fn with_mode(mut self, mode: DampingMode) -> Self {
        self.mode = mode;
        self
    }

    pub fn needs(&self) -> Needs {
        self.needs
    }

    pub fn ctx(&self, m: &Manifold<S>, db: &Vec6<S>, h: S) -> StepCtx<S> {
        StepCtx { k: self.k, t: self.t, h, db: *db, dx: m.x_map(&self.x, db) }
    }

    pub fn damped(&self, q: usize) -> Result<&WedgeOp<S>> {
        self.damped[q].as_ref().ok_or_else(|| missing("damped transport"))
    }

    pub fn breve_damped(&self, q: usize) -> Result<&WedgeOp<S>> {
        self.breve_damped[q].as_ref().ok_or_else(|| missing("breve damped transport"))
    }

    /// `(Tξ_t)^{-1}` applied to a vector tangent at `x_t`.
    pub fn txi_inverse(&self, v: &Vec4<S>) -> Result<Vec4<S>> {
        crate::linalg::inverse_apply(&self.txi, &self.normal0, v)
    }

    pub fn advance(&mut self, m: &Manifold<S>, db: &Vec6<S>, h: S) -> Result<StepOutcome<S>> {
        let out = m.step_with(&self.x, db, h, self.k, self.needs.txi)?;
        self.apply_step(m, &out, h)?;
        Ok(out)
    }

    /// Advances along a precomputed step.
    pub fn apply_step(&mut self, m: &Manifold<S>, out: &StepOutcome<S>, h: S) -> Result<()> {
        let n = self.needs;
        if n.txi {
            self.txi = out.jac * self.txi;
        }
        let any_lc = n.par || n.damped.iter().any(|b| *b);
        let any_breve = n.breve_par || n.breve_damped.iter().any(|b| *b);
        let lc = if any_lc || (any_breve && m.connections_coincide()) {
            m.transport_step(Connection::LeviCivita, &self.x, out)
        } else {
            Mat4::zeros()
        };
        if n.par {
            self.par = lc * self.par;
        }
        let half_h = h * S::lit(0.5);
        for q in 0..4 {
            if let Some(op) = self.damped[q].as_mut() {
                match (self.mode, m.weitzenbock_scalar(q)) {
                    (DampingMode::Scalar, Some(c)) => {
                        let f = (-half_h * c).exp();
                        op.map_images(|img| push_all(&lc, &(*img * f)));
                    }
                    _ => {
                        let w: DMatrix<S> = m.weitzenbock(&self.x, q)? * (-half_h);
                        let e = w.exp();
                        op.map_images(|img| push_all(&lc, &apply_flat(&e, img)));
                    }
                }
            }
        }
        if any_breve {
            let (breve, hat) = if m.connections_coincide() {
                (lc, lc)
            } else {
                (
                    m.transport_step(Connection::Breve, &self.x, out),
                    m.transport_step(Connection::Hat, &self.x, out),
                )
            };
            if n.breve_par {
                self.breve_par = breve * self.breve_par;
            }
            // The drift term of the breve equation vanishes: the only drift
            // supported is left-invariant on the left system, where it is
            // parallel for the breve connection.
            for q in 0..4 {
                if let Some(op) = self.breve_damped[q].as_mut() {
                    let c = m.breve_weitzenbock_scalar(q).unwrap_or(S::zero());
                    let f = (-half_h * c).exp();
                    op.map_images(|img| push_all(&hat, &(*img * f)));
                }
            }
        }
        self.x = out.next;
        self.k += 1;
        self.t += h;
        Ok(())
    }
}

fn missing(what: &str) -> Error {
    Error::InvalidParameter(format!("{what} was not requested for this sweep"))
}
