//! Estimation of the proportion `theta` of true null hypotheses from a
//! sample of p-values drawn from `g(x) = theta + (1 - theta) f(x)`, where the
//! alternative density `f` is nonincreasing and vanishes on `[1 - delta, 1]`.
//!
//! Estimators: minimum histogram height ([`histogram`]), leave-p-out
//! partition selection ([`cr`]), Storey, Grenander/Langaas and the oracle
//! threshold estimator ([`shape`]), and a cross-fitted one-step estimator
//! ([`efficiency`]). [`sim`] reproduces the benchmark study.

pub mod cli;
pub mod cr;
pub mod efficiency;
pub mod error;
pub mod estimate;
pub mod fmt;
pub mod histogram;
pub mod mixture;
pub mod partition;
pub mod quadrature;
pub mod shape;
pub mod sim;

pub use error::{Error, Result};
pub use estimate::{EstimateResult, Method, Trace};
pub use mixture::{MixtureParams, PValueSample};
pub use partition::Partition;
