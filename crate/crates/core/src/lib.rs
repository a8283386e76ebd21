//! Cluster validation, component merging and cluster-existence testing
//! built on the misclassification probability `P_mc`: the Bayes risk, under
//! 0-1 loss, of assigning a random point to the cluster that generated it.
//!
//! * [`pmc`] estimates `P_mc` for a Gaussian mixture whose components are
//!   grouped into clusters, under the randomized or the optimal decision
//!   rule, by Monte Carlo or (in one or two dimensions) by quadrature.
//! * [`phm`] greedily merges mixture components into clusters until `P_mc`
//!   drops to a threshold.
//! * [`selection`] picks the number of clusters for k-means or Ward
//!   clustering subject to a `P_mc` ceiling and computes the usual validity
//!   indices alongside.
//! * [`hyptest`] tests a Ward split against a single-Gaussian null.

pub mod data;
pub mod error;
pub mod estimators;
pub mod hyptest;
pub mod io;
pub mod linalg;
pub mod phm;
pub mod pmc;
pub mod preprocess;
pub mod rng;
pub mod selection;

pub use data::{
    validate, ClusterConfiguration, DataMatrix, GaussianComponent, McEstimate, MergeStep,
    MergeTrace, MixtureModel, Partition, ValidationReport,
};
pub use error::{Error, Result};
pub use pmc::{PmcSettings, Rule};
