//! m-set semi-bandit algorithms and experiment tooling.
//!
//! The centerpiece is Follow-the-Perturbed-Leader with Frechet(shape 2)
//! perturbations and geometric resampling ([`ftpl`]), together with a
//! deterministic oracle for its arm-selection probabilities ([`phi`]),
//! simulated loss environments ([`env`]), the standard baseline policies
//! ([`baselines`]), and a reproducible experiment harness ([`harness`]).

pub mod baselines;
pub mod env;
pub mod error;
pub mod ftpl;
pub mod harness;
pub mod phi;
pub mod policy;
pub mod rng;

pub use error::{Error, Result};
pub use ftpl::ActionSet;
