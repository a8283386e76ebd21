//! Clustering procedures that feed the misclassification probability:
//! k-means, Ward hierarchical clustering and Gaussian mixtures, plus the
//! conversion of a hard partition into a Gaussian mixture.

pub mod gaussians;
pub mod gmm;
pub mod hclust;
pub mod kmeans;

pub use gaussians::{default_regularization, partition_to_gaussians, CovarianceModel};
pub use gmm::{fit_gmm_em, select_gmm_bic, BicSelection, EmFit, EmOptions};
pub use hclust::{cut_tree, fit_hclust, HclustTree};
pub use kmeans::{fit_kmeans, KmeansFit};
