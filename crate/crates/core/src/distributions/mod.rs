//! Diagonal-covariance Gaussian mixtures, midpoint quadrature, numeric
//! KL/JS divergences and the synthetic benchmark datasets.

mod datasets;
mod divergence;
mod mog;
mod quadrature;

pub use datasets::{grid_mixture, make_dataset, ring_mixture, DatasetKind};
pub use divergence::{
    divergence_landscape, landscape_descent, numeric_divergence, two_mean_model, DescentResult,
    DivergenceEstimate, DivergenceKind, Landscape, ThetaLattice,
};
pub use mog::{gaussian_kl_closed_form, mog_log_density_node, DiagGaussian, GaussianMixture};
pub use quadrature::QuadratureGrid;

use thiserror::Error;

#[derive(Debug, Clone, Error)]
pub enum DistError {
    #[error("mixture weights must sum to 1 (got {sum}) with all stds positive")]
    InvalidMixture { sum: f64 },
    #[error("{context}: dimension mismatch, expected {expected} got {got}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("std must be positive, got {value}")]
    NonPositiveStd { value: f64 },
    #[error("quadrature grid: {reason}")]
    BadGrid { reason: String },
    #[error(transparent)]
    Diff(#[from] crate::diffcore::DiffError),
}
