//! Valid confidence intervals after data-driven model selection in linear
//! regression, by making the selection step stable.
//!
//! A selector is randomized with calibrated Laplace noise so that its output
//! distribution barely moves between nearby responses. The resulting stability
//! budget `(eta, tau, nu)` is turned into a slightly wider Bonferroni constant,
//! and the usual OLS intervals on the selected model then keep their coverage.
//!
//! Modules, bottom up:
//! - [`linmodel`]: OLS on submodels, projection targets, standard errors.
//! - [`stability`]: budget arithmetic, corrected levels, PoSI constants, intervals.
//! - [`noise`]: path-keyed RNG, Laplace draws, noise-scale calibration.
//! - [`selectors`]: exact and stable LASSO, marginal screening, forward stepwise.
//! - [`experiments`]: synthetic coverage studies and their summaries.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod experiments;
pub mod linmodel;
pub mod noise;
pub mod selectors;
pub mod stability;

pub use error::{PosiError, Result};
