use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::forms::FormId;
use crate::linalg::{so3_exp, Vec3};
use crate::manifold::{Manifold, ManifoldKind, Point};
use crate::multilinear::MultiVector;
use crate::scalar::Real;

/// `d(P_t φ)(V) = e^{-ct} dφ(V)` for catalog eigenforms with rate `c`.
pub fn spectral_target<S: Real>(
    m: &Manifold<S>,
    x0: &Point<S>,
    form: FormId,
    v: &MultiVector<S>,
    t: f64,
) -> Result<f64> {
    let c = form.heat_rate().ok_or_else(|| {
        Error::InvalidParameter(format!("{} has no closed-form heat rate", form.name()))
    })?;
    Ok((-c * t).exp() * form.d_eval(m, x0, v)?.as_f64())
}

/// `P_t φ(V) = e^{-ct} φ(V)` for catalog eigenforms.
pub fn heat_value<S: Real>(
    m: &Manifold<S>,
    x0: &Point<S>,
    form: FormId,
    v: &MultiVector<S>,
    t: f64,
) -> Result<f64> {
    let c = form.heat_rate().ok_or_else(|| {
        Error::InvalidParameter(format!("{} has no closed-form heat rate", form.name()))
    })?;
    Ok((-c * t).exp() * form.eval(m, x0, v)?.as_f64())
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct HaarEigenvalue {
    /// Eigenvalue of `Σ_i L_i²` (left-invariant fields of an orthonormal basis).
    pub lambda: f64,
    pub samples: usize,
}

/// Haar-averaged Rayleigh quotient `∫ f Δf / ∫ f²` on SO(3) with a central
/// finite-difference Casimir.
pub fn haar_casimir_eigenvalue(f: FormId, samples: usize, seed: u64) -> Result<HaarEigenvalue> {
    if f.degree() != 0 || !f.applies_to(ManifoldKind::So3Left) {
        return Err(Error::InvalidParameter(format!("{} is not a function on SO(3)", f.name())));
    }
    if samples == 0 {
        return Err(Error::InvalidParameter("need at least one Haar sample".into()));
    }
    let m = Manifold::<f64>::new(ManifoldKind::So3Left);
    let one = MultiVector::scalar(1.0);
    let eps = 1e-4;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut num, mut den) = (0.0, 0.0);
    for _ in 0..samples {
        let g = m.random_point(&mut rng);
        let q = g.quaternion();
        let f0 = f.eval(&m, &g, &one)?;
        let mut lap = 0.0;
        for i in 0..3 {
            let e = Vec3::ith(i, eps);
            let up = Point::from_rotation(&(q * so3_exp(&e)));
            let down = Point::from_rotation(&(q * so3_exp(&-e)));
            lap += (f.eval(&m, &up, &one)? - 2.0 * f0 + f.eval(&m, &down, &one)?) / (eps * eps);
        }
        num += f0 * lap;
        den += f0 * f0;
    }
    Ok(HaarEigenvalue { lambda: num / den, samples })
}

/// `d(P_t f)_e(b) = e^{λt/2} df_e(b)` with `λ` from the Haar oracle.
pub fn haar_spectral_target<S: Real>(
    m: &Manifold<S>,
    f: FormId,
    b: &MultiVector<S>,
    t: f64,
    eig: &HaarEigenvalue,
) -> Result<f64> {
    let e = m.origin();
    Ok((0.5 * eig.lambda * t).exp() * f.d_eval(m, &e, b)?.as_f64())
}
