//! Orthogonal subsampling for linear regression on large datasets.
//!
//! Given an `n × p` covariate table, [`oss::oss_select`] picks `k` rows whose
//! signs and magnitudes best imitate a two-level orthogonal array, the design
//! that is D- and A-optimal for a first-order linear model. The crate also
//! carries the usual comparators ([`baselines`]), the discrepancy mathematics
//! with an exhaustive oracle ([`discrepancy`]), and least-squares evaluation
//! with simulation and bootstrap drivers ([`evaluation`]).
//!
//! ```
//! use orthosub::dataio::{generate_covariates, scale_to_unit, CovariateCase, ModelKind, SyntheticSpec};
//! use orthosub::oss::{oss_select, OssConfig};
//!
//! let spec = SyntheticSpec::unit_effects(CovariateCase::Uniform, 1000, 2, 7, ModelKind::FirstOrder, 1.0, 9.0);
//! let x = generate_covariates(&spec)?;
//! let (scaled, _) = scale_to_unit(&x)?;
//! let picked = oss_select(&scaled, &OssConfig::new(20))?;
//! assert_eq!(picked.indices.len(), 20);
//! # Ok::<(), orthosub::Error>(())
//! ```

pub mod baselines;
pub mod dataio;
pub mod discrepancy;
pub mod error;
pub mod evaluation;
pub mod oss;

pub use error::{Error, Result};
