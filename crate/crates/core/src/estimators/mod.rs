//! Monte Carlo estimators for derivatives of heat semigroups on forms,
//! their direct references, and exact spectral targets.

mod engine;
mod formulas;
mod spectral;

pub use engine::{
    mean_stderr, paired_compare, run_functionals, run_one, EstimatorReport, Functional,
    McConfig, PairedReport, Tracker, CHUNK,
};
pub use formulas::{
    BismutFlow, BismutFlowTorsion, BismutGeneral, BismutIntrinsic, BismutLieGroup, BismutQ0, DirectDamped,
    DirectPullback,
};
pub use spectral::{
    haar_casimir_eigenvalue, haar_spectral_target, heat_value, spectral_target, HaarEigenvalue,
};
