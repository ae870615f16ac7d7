//! Cluster-robust inference for linear regression with critical values
//! corrected by an estimated Edgeworth expansion of the t-statistic.
//!
//! The pipeline for one dataset is [`ols::fit`] -> [`ols::score_components`]
//! -> [`edgeworth::estimate_moments`] -> [`edgeworth::critical_value`].
//! [`methods`] provides the comparison critical values (normal, Student
//! with small-sample adjustments, pairs and wild cluster bootstraps) and
//! [`mc`] the simulation harness that evaluates them.
//!
//! All inference is conditional on the regressors.

pub mod cli;
pub mod data;
pub mod edgeworth;
pub mod error;
pub mod mc;
pub mod methods;
pub mod numeric;
pub mod ols;
pub mod rng;

pub use data::{ClusterBlock, ClusteredDataset, Hypothesis, PanelSchema};
pub use edgeworth::{CorrectedCritical, EdgeworthMoments, MomentOptions};
pub use error::{Error, Result};
pub use methods::{Method, MethodResult};
pub use ols::{ClusterFit, ScoreComponents};
