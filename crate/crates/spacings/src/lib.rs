//! Parametric hypothesis tests based on sample spacings.
//!
//! For a univariate family the m-step spacings of a sorted sample are the
//! model-CDF masses between order statistics m steps apart; averaging a
//! strictly convex function of the scaled spacings gives a statistic whose
//! minimizer over the parameter space is the generalized spacings estimator,
//! and whose scaled gap at a hypothesized parameter is an asymptotically
//! chi-square test statistic. For multivariate data the same construction
//! runs on nearest-neighbour-ball probabilities. The [`harness`] module
//! reproduces the Monte-Carlo studies (type-I rates, power curves, Q-Q
//! exports, step-size selection); the `spacings-cli` crate exposes all of it
//! on the command line.
//!
//! ```
//! use spacings::model::Exponential;
//! use spacings::phi::phi_neglog;
//! use spacings::univariate::{test_simple, SortedSample};
//!
//! let data = vec![0.31, 1.8, 0.45, 0.09, 1.1, 0.66, 0.4, 2.3, 0.17, 0.52];
//! let sample = SortedSample::new(data).unwrap();
//! let report = test_simple(&sample, &Exponential, &[1.0], &phi_neglog(), 1, 0.05).unwrap();
//! assert!(report.p_value > 0.0 && report.p_value <= 1.0);
//! ```

pub mod error;
pub mod harness;
pub mod model;
pub mod multivariate;
pub mod optimize;
pub mod phi;
pub mod report;
pub mod rng;
pub mod special;
pub mod univariate;

pub use error::{Result, SpacingsError};

#[cfg(doctest)]
mod book;
