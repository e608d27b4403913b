//! Closed-form catalog of smooth forms with their exterior derivatives.
//!
//! Forms on embedded manifolds are restrictions of ambient polynomial forms;
//! forms on SO(3) are written in left-trivialised coordinates. A form is
//! stored as its coefficient tensor `φ_I = φ(e_I)` and evaluated with
//! [`crate::multilinear::pair`].

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{hat, Vec4};
use crate::manifold::{Manifold, ManifoldKind, Point};
use crate::multilinear::{pair, wedge, MultiVector};
use crate::scalar::Real;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FormId {
    CircleCos,
    CircleDtheta,
    SphereZ,
    SphereDz,
    SphereRotZ,
    SphereArea,
    SphereZArea,
    S3X4,
    S3Rot12,
    S3Dx12,
    TorusCosCos,
    TorusDtheta,
    TorusDpsi,
    TorusCospsiDtheta,
    TorusDthetaDpsi,
    So3R12,
    So3ThetaL1,
    So3ThetaL2,
    So3ThetaL3,
    So3ThetaR3,
    So3ThetaL12,
    So3R12ThetaL3,
}

pub const ALL_FORMS: [FormId; 22] = [
    FormId::CircleCos,
    FormId::CircleDtheta,
    FormId::SphereZ,
    FormId::SphereDz,
    FormId::SphereRotZ,
    FormId::SphereArea,
    FormId::SphereZArea,
    FormId::S3X4,
    FormId::S3Rot12,
    FormId::S3Dx12,
    FormId::TorusCosCos,
    FormId::TorusDtheta,
    FormId::TorusDpsi,
    FormId::TorusCospsiDtheta,
    FormId::TorusDthetaDpsi,
    FormId::So3R12,
    FormId::So3ThetaL1,
    FormId::So3ThetaL2,
    FormId::So3ThetaL3,
    FormId::So3ThetaR3,
    FormId::So3ThetaL12,
    FormId::So3R12ThetaL3,
];

fn e<S: Real>(i: usize) -> Vec4<S> {
    Vec4::ith(i, S::one())
}

fn e2<S: Real>(i: usize, j: usize) -> MultiVector<S> {
    MultiVector::primitive(&[e(i), e(j)]).expect("degree 2")
}

fn e3<S: Real>(i: usize, j: usize, k: usize) -> MultiVector<S> {
    MultiVector::primitive(&[e(i), e(j), e(k)]).expect("degree 3")
}

fn w<S: Real>(a: &MultiVector<S>, b: &MultiVector<S>) -> MultiVector<S> {
    wedge(a, b).expect("catalog degrees stay below the cap")
}

fn vec<S: Real>(a: S, b: S, c: S, d: S) -> MultiVector<S> {
    MultiVector::vector(&Vec4::new(a, b, c, d))
}

/// `-[u, v]_k` as the coefficient tensor of `dθ^k`.
fn d_theta_left<S: Real>(k: usize) -> MultiVector<S> {
    let mut out = MultiVector::zero(2);
    for i in 0..3 {
        for j in 0..3 {
            let c = e::<S>(i).xyz().cross(&e::<S>(j).xyz())[k];
            out.set(&[i, j], -c);
        }
    }
    out
}

impl FormId {
    pub fn name(self) -> &'static str {
        match self {
            FormId::CircleCos => "cos",
            FormId::CircleDtheta => "dtheta",
            FormId::SphereZ => "z",
            FormId::SphereDz => "dz",
            FormId::SphereRotZ => "rot_z",
            FormId::SphereArea => "area",
            FormId::SphereZArea => "z_area",
            FormId::S3X4 => "x4",
            FormId::S3Rot12 => "rot12",
            FormId::S3Dx12 => "dx12",
            FormId::TorusCosCos => "cos_cos",
            FormId::TorusDtheta => "dtheta",
            FormId::TorusDpsi => "dpsi",
            FormId::TorusCospsiDtheta => "cospsi_dtheta",
            FormId::TorusDthetaDpsi => "dtheta_dpsi",
            FormId::So3R12 => "r12",
            FormId::So3ThetaL1 => "theta_l1",
            FormId::So3ThetaL2 => "theta_l2",
            FormId::So3ThetaL3 => "theta_l3",
            FormId::So3ThetaR3 => "theta_r3",
            FormId::So3ThetaL12 => "theta_l12",
            FormId::So3R12ThetaL3 => "r12_theta_l3",
        }
    }

    /// Whether the form lives on manifolds of this kind.
    pub fn applies_to(self, kind: ManifoldKind) -> bool {
        match self {
            FormId::CircleCos | FormId::CircleDtheta => kind == ManifoldKind::S1,
            FormId::SphereZ
            | FormId::SphereDz
            | FormId::SphereRotZ
            | FormId::SphereArea
            | FormId::SphereZArea => kind == ManifoldKind::S2,
            FormId::S3X4 | FormId::S3Rot12 | FormId::S3Dx12 => kind == ManifoldKind::S3,
            FormId::TorusCosCos
            | FormId::TorusDtheta
            | FormId::TorusDpsi
            | FormId::TorusCospsiDtheta
            | FormId::TorusDthetaDpsi => kind == ManifoldKind::Torus,
            _ => kind.is_so3(),
        }
    }

    pub fn parse(kind: ManifoldKind, name: &str) -> Result<Self> {
        let cat = form_catalog(kind);
        cat.iter().copied().find(|f| f.name() == name).ok_or_else(|| {
            let valid: Vec<_> = cat.iter().map(|f| f.name()).collect();
            Error::InvalidParameter(format!(
                "unknown form '{name}' on {} (valid: {})",
                kind.name(),
                valid.join(", ")
            ))
        })
    }

    pub fn degree(self) -> usize {
        match self {
            FormId::CircleCos
            | FormId::SphereZ
            | FormId::S3X4
            | FormId::TorusCosCos
            | FormId::So3R12 => 0,
            FormId::SphereArea
            | FormId::SphereZArea
            | FormId::S3Dx12
            | FormId::TorusDthetaDpsi
            | FormId::So3ThetaL12 => 2,
            _ => 1,
        }
    }

    /// Rate `c` with `P_t φ = e^{-ct} φ` for the Hodge heat semigroup
    /// `e^{tΔ/2}`, where the form is an eigenform.
    pub fn heat_rate(self) -> Option<f64> {
        match self {
            FormId::CircleCos => Some(0.5),
            FormId::CircleDtheta => Some(0.0),
            FormId::SphereZ | FormId::SphereDz | FormId::SphereRotZ | FormId::SphereZArea => {
                Some(1.0)
            }
            FormId::SphereArea => Some(0.0),
            FormId::S3X4 => Some(1.5),
            FormId::S3Rot12 => Some(2.0),
            FormId::TorusCosCos => Some(1.0),
            FormId::TorusDtheta | FormId::TorusDpsi | FormId::TorusDthetaDpsi => Some(0.0),
            FormId::TorusCospsiDtheta => Some(0.5),
            FormId::So3R12 => Some(1.0),
            _ => None,
        }
    }

    /// Coefficient tensor of the form at `x`.
    pub fn coeffs<S: Real>(self, m: &Manifold<S>, x: &Point<S>) -> MultiVector<S> {
        let c = x.coords;
        let z = S::zero();
        match self {
            FormId::CircleCos => MultiVector::scalar(c[0]),
            FormId::CircleDtheta | FormId::SphereRotZ | FormId::S3Rot12 | FormId::TorusDtheta => {
                vec(-c[1], c[0], z, z)
            }
            FormId::SphereZ => MultiVector::scalar(c[2]),
            FormId::SphereDz => MultiVector::vector(&e(2)),
            FormId::SphereArea => area(&c),
            FormId::SphereZArea => area(&c) * c[2],
            FormId::S3X4 => MultiVector::scalar(c[3]),
            FormId::S3Dx12 => e2(0, 1),
            FormId::TorusCosCos => MultiVector::scalar(c[0] * c[2]),
            FormId::TorusDpsi => vec(z, z, -c[3], c[2]),
            FormId::TorusCospsiDtheta => vec(-c[1], c[0], z, z) * c[2],
            FormId::TorusDthetaDpsi => w(&vec(-c[1], c[0], z, z), &vec(z, z, -c[3], c[2])),
            FormId::So3R12 => MultiVector::scalar(m.rotation(x)[(0, 1)]),
            FormId::So3ThetaL1 => MultiVector::vector(&e(0)),
            FormId::So3ThetaL2 => MultiVector::vector(&e(1)),
            FormId::So3ThetaL3 => MultiVector::vector(&e(2)),
            FormId::So3ThetaR3 => {
                let r = m.rotation(x);
                vec(r[(2, 0)], r[(2, 1)], r[(2, 2)], z)
            }
            FormId::So3ThetaL12 => e2(0, 1),
            FormId::So3R12ThetaL3 => MultiVector::vector(&e(2)) * m.rotation(x)[(0, 1)],
        }
    }

    /// Coefficient tensor of the exterior derivative at `x`.
    pub fn d_coeffs<S: Real>(self, m: &Manifold<S>, x: &Point<S>) -> MultiVector<S> {
        let c = x.coords;
        let z = S::zero();
        let two = S::lit(2.0);
        match self {
            FormId::CircleCos => MultiVector::vector(&e(0)),
            FormId::CircleDtheta | FormId::SphereRotZ | FormId::S3Rot12 | FormId::TorusDtheta => {
                e2(0, 1) * two
            }
            FormId::SphereZ => MultiVector::vector(&e(2)),
            FormId::SphereDz | FormId::S3Dx12 => MultiVector::zero(self.degree() + 1),
            FormId::SphereArea => e3(0, 1, 2) * S::lit(3.0),
            FormId::SphereZArea => e3(0, 1, 2) * (S::lit(4.0) * c[2]),
            FormId::S3X4 => MultiVector::vector(&e(3)),
            FormId::TorusCosCos => vec(c[2], z, c[0], z),
            FormId::TorusDpsi => e2(2, 3) * two,
            FormId::TorusCospsiDtheta => {
                w(&MultiVector::vector(&e(2)), &vec(-c[1], c[0], z, z)) + e2(0, 1) * (two * c[2])
            }
            FormId::TorusDthetaDpsi => {
                w(&(e2(0, 1) * two), &vec(z, z, -c[3], c[2]))
                    - w(&vec(-c[1], c[0], z, z), &(e2(2, 3) * two))
            }
            FormId::So3R12 => {
                let r = m.rotation(x);
                let mut g = Vec4::zeros();
                for i in 0..3 {
                    g[i] = (r * hat(&e::<S>(i).xyz()))[(0, 1)];
                }
                MultiVector::vector(&g)
            }
            FormId::So3ThetaL1 => d_theta_left(0),
            FormId::So3ThetaL2 => d_theta_left(1),
            FormId::So3ThetaL3 => d_theta_left(2),
            FormId::So3ThetaR3 => {
                let r = m.rotation(x);
                let mut out = MultiVector::zero(2);
                for i in 0..3 {
                    for j in 0..3 {
                        let cr = e::<S>(i).xyz().cross(&e::<S>(j).xyz());
                        out.set(&[i, j], (r * cr)[2]);
                    }
                }
                out
            }
            FormId::So3ThetaL12 => {
                w(&d_theta_left(0), &MultiVector::vector(&e(1)))
                    - w(&MultiVector::vector(&e(0)), &d_theta_left(1))
            }
            FormId::So3R12ThetaL3 => {
                let f = m.rotation(x)[(0, 1)];
                let df = FormId::So3R12.d_coeffs(m, x);
                w(&df, &MultiVector::vector(&e(2))) + d_theta_left(2) * f
            }
        }
    }

    pub fn eval<S: Real>(self, m: &Manifold<S>, x: &Point<S>, v: &MultiVector<S>) -> Result<S> {
        pair(&self.coeffs(m, x), v)
    }

    pub fn d_eval<S: Real>(self, m: &Manifold<S>, x: &Point<S>, v: &MultiVector<S>) -> Result<S> {
        pair(&self.d_coeffs(m, x), v)
    }
}

fn area<S: Real>(c: &Vec4<S>) -> MultiVector<S> {
    e2(1, 2) * c[0] + e2(2, 0) * c[1] + e2(0, 1) * c[2]
}

/// Forms available on a manifold kind.
pub fn form_catalog(kind: ManifoldKind) -> Vec<FormId> {
    ALL_FORMS.iter().copied().filter(|f| f.applies_to(kind)).collect()
}

/// A form or its exterior derivative, as the thing an estimator evaluates.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FormRef {
    pub form: FormId,
    pub exterior: bool,
}

impl FormRef {
    pub fn form(form: FormId) -> Self {
        Self { form, exterior: false }
    }

    pub fn exterior(form: FormId) -> Self {
        Self { form, exterior: true }
    }

    pub fn degree(&self) -> usize {
        self.form.degree() + usize::from(self.exterior)
    }

    pub fn eval<S: Real>(&self, m: &Manifold<S>, x: &Point<S>, v: &MultiVector<S>) -> Result<S> {
        if self.exterior {
            self.form.d_eval(m, x, v)
        } else {
            self.form.eval(m, x, v)
        }
    }
}
