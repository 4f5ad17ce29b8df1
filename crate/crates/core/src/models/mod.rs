//! Generators, density estimators and the discriminator.
//!
//! Every model keeps its parameters as a single flat `f64` vector with a
//! documented, stable layout; forward passes slice the flat vector inside
//! the graph, so gradients with respect to the whole parameter block come
//! out of one `gradient` call and the bilevel machinery can treat
//! parameters uniformly. Models themselves are immutable architecture
//! descriptions; training loops own the parameter vectors.

mod discriminator;
mod estimator;
mod generator;
mod mlp;
mod vae;

pub use discriminator::{
    gan_value, log_one_minus_sigmoid, log_sigmoid, non_saturating_gen_value, softplus,
    Discriminator,
};
pub use estimator::{GaussianEstimator, MoGEstimator, MoGParams};
pub use generator::{MlpGenerator, MoGInit, ParametricMoGGenerator};
pub use mlp::MlpSpec;
pub use vae::VaeEstimator;

use crate::diffcore::{Node, Rng, Tensor};
use thiserror::Error;

#[derive(Debug, Clone, Error)]
pub enum ModelError {
    #[error("{context}: dimension mismatch, expected {expected} got {got}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("{context}: parameter vector length {got}, expected {expected}")]
    ParamLength {
        context: &'static str,
        expected: usize,
        got: usize,
    },
    #[error(transparent)]
    Diff(#[from] crate::diffcore::DiffError),
    #[error(transparent)]
    Dist(#[from] crate::distributions::DistError),
}

/// Implicit sample generator: maps latent noise (drawn from `rng`) to a
/// `[n, output_dim]` batch, differentiably in the flat parameter node.
pub trait Generator {
    fn output_dim(&self) -> usize;
    fn param_count(&self) -> usize;
    fn init_params(&self, rng: &mut Rng) -> Tensor;
    fn generate(&self, theta: &Node, n: usize, rng: &mut Rng) -> Result<Node, ModelError>;

    /// Plain sample values for a fixed parameter vector, built in chunks so
    /// large sample counts never materialize one huge graph.
    fn sample_values(&self, theta: &Tensor, n: usize, rng: &mut Rng) -> Result<Tensor, ModelError> {
        const CHUNK: usize = 20_000;
        let d = self.output_dim();
        let mut data = Vec::with_capacity(n * d);
        let mut remaining = n;
        while remaining > 0 {
            let take = remaining.min(CHUNK);
            let batch = self.generate(&Node::constant(theta.clone()), take, rng)?;
            data.extend_from_slice(batch.value().data());
            remaining -= take;
        }
        Ok(Tensor::from_vec(vec![n, d], data).expect("chunk sizes add up"))
    }
}

/// Density estimator exposing a per-sample (surrogate) log-likelihood.
///
/// The returned node is differentiable both in the flat parameter node and
/// in the sample node; the sample path is the one the hypergradient chains
/// through. Estimators that use internal noise (the VAE's reparameterized
/// ELBO) draw it from `rng`, so cloning the RNG freezes the noise.
pub trait Estimator {
    fn data_dim(&self) -> usize;
    fn param_count(&self) -> usize;
    fn init_params(&self, rng: &mut Rng) -> Tensor;

    /// `[n]` vector of per-sample log densities (ELBO for the VAE).
    fn per_sample_ll(&self, phi: &Node, x: &Node, rng: &mut Rng) -> Result<Node, ModelError>;

    /// Mean log-likelihood over the batch (scalar).
    fn log_likelihood(&self, phi: &Node, x: &Node, rng: &mut Rng) -> Result<Node, ModelError> {
        Ok(self.per_sample_ll(phi, x, rng)?.mean())
    }

    /// Expectation of the per-sample log-likelihood under explicit weights
    /// (population mode: quadrature weights times a density).
    fn weighted_log_likelihood(
        &self,
        phi: &Node,
        x: &Node,
        weights: &Node,
        rng: &mut Rng,
    ) -> Result<Node, ModelError> {
        Ok((&self.per_sample_ll(phi, x, rng)? * weights).sum())
    }
}

pub(crate) fn check_batch(
    context: &'static str,
    x: &Node,
    dim: usize,
) -> Result<usize, ModelError> {
    let shape = x.shape();
    if shape.len() != 2 || shape[1] != dim {
        return Err(ModelError::DimensionMismatch {
            context,
            expected: dim,
            got: shape.last().copied().unwrap_or(0),
        });
    }
    Ok(shape[0])
}

pub(crate) fn check_params(
    context: &'static str,
    phi: &Node,
    expected: usize,
) -> Result<(), ModelError> {
    if phi.numel() != expected {
        return Err(ModelError::ParamLength {
            context,
            expected,
            got: phi.numel(),
        });
    }
    Ok(())
}
