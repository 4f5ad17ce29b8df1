//! Desk-scale laboratory for training implicit generators by teaching an
//! auxiliary density estimator.
//!
//! The crate is organized bottom-up:
//!
//! * [`diffcore`] — reverse-mode automatic differentiation over dense `f64`
//!   tensors. Gradients are graph nodes, so programs that contain gradients
//!   can be differentiated again (the second-order machinery everything
//!   else relies on), plus a deterministic PRNG and finite-difference
//!   validation.
//! * [`distributions`] — diagonal-covariance Gaussian mixtures, midpoint
//!   quadrature, numeric KL/JS divergences, divergence landscapes over a
//!   two-mean mixture family, and the synthetic benchmark datasets.
//! * [`models`] — generators (parametric mixture, MLP), density estimators
//!   (Gaussian, mixture, VAE) and an MLP discriminator, all exposing their
//!   parameters as a single flat vector.
//! * [`bilevel`] — unrolled inner optimization, the hypergradient of the
//!   teaching objective, and the influence-function sensitivity oracle used
//!   to validate the unrolling approximation.
//! * [`training`] — the three training loops (teaching only, teaching + GAN,
//!   vanilla GAN) with Adam outer updates and full trajectory recording.
//! * [`metrics`] — mode-coverage metrics for mixture benchmarks and kernel
//!   density grids for plotting.

pub mod bilevel;
pub mod diffcore;
pub mod distributions;
pub mod metrics;
pub mod models;
pub mod training;
