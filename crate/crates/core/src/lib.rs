//! Monte Carlo lab for derivative formulas of heat semigroups on forms.
//!
//! Everything is generic over the scalar type `S: Real` (`f32` or `f64`);
//! the aliases below fix `S = f64`.

pub mod error;
pub mod estimators;
pub mod flow;
pub mod forms;
pub mod hspaces;
pub mod linalg;
pub mod manifold;
pub mod multilinear;
pub mod scalar;
pub mod schedule;
pub mod wiener;

pub use error::{Error, Result};
pub use scalar::Real;

pub type Manifold = manifold::Manifold<f64>;
pub type Point = manifold::Point<f64>;
pub type Tangent = manifold::Tangent<f64>;
pub type QVector = manifold::QVector<f64>;
pub type MultiVector = multilinear::MultiVector<f64>;
pub type PathSample = flow::PathSample<f64>;
pub type TransportStack = flow::TransportStack<f64>;
pub type FlowState = flow::FlowState<f64>;
pub type HVector = wiener::HVector<f64>;
pub type CylindricalWienerForm = wiener::CylindricalWienerForm<f64>;
pub type TwoVectorField = hspaces::TwoVectorField<f64>;
pub type Vec4 = linalg::Vec4<f64>;
pub type Vec6 = linalg::Vec6<f64>;
