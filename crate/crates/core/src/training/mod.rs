//! The three training loops — teaching only (LBT), teaching + GAN, and
//! vanilla GAN — with Adam outer updates and full trajectory recording.
//!
//! Determinism: every consumer of randomness gets its own stream derived
//! from `(seed, role)`, so a run is bit-reproducible from `(config, seed)`
//! and adding a component (say a discriminator with `lambda_g = 0`) does
//! not shift the draws of the others.

mod adam;
mod loops;
mod trajectory;

pub use adam::{AdamState, Direction};
pub use loops::{train_gan, train_lbt, train_lbt_gan, RunOutput, RunStatus};
pub use trajectory::{fmt_f64, trajectory_csv, Trajectory, TrajectoryRow};

use crate::bilevel::{BilevelError, UnrollConfig};
use crate::diffcore::{Node, Rng, Tensor};
use crate::distributions::{DatasetKind, DistError, GaussianMixture, QuadratureGrid};
use crate::metrics::HqRule;
use crate::models::{
    Estimator, GaussianEstimator, Generator, MlpGenerator, MoGEstimator, MoGInit, ModelError,
    ParametricMoGGenerator, VaeEstimator,
};

use thiserror::Error;

#[derive(Debug, Clone, Error)]
pub enum TrainError {
    #[error("config.{field}: {reason}")]
    BadConfig { field: &'static str, reason: String },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Bilevel(#[from] BilevelError),
    #[error(transparent)]
    Dist(#[from] DistError),
}

/// Which loop a config drives.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TrainMethod {
    Lbt,
    LbtGan,
    Gan,
}

/// Generator architecture block.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case", deny_unknown_fields)]
pub enum GeneratorSpec {
    /// Mixture with learnable means, equal fixed weights, shared fixed std.
    ParametricMog {
        k: usize,
        std: f64,
        init: MoGInitSpec,
    },
    Mlp {
        latent_dim: usize,
        hidden: Vec<usize>,
    },
}

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum MoGInitSpec {
    /// Row-major `K x D` means.
    Fixed { means: Vec<f64> },
    /// Every mean coordinate drawn from `U(lo, hi)`.
    UniformBox { lo: f64, hi: f64 },
}

/// Estimator architecture block.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case", deny_unknown_fields)]
pub enum EstimatorSpec {
    Gaussian {
        #[serde(default)]
        learn_std: bool,
    },
    Mog {
        k: usize,
        #[serde(default = "default_mean_scale")]
        init_mean_scale: f64,
        #[serde(default)]
        init_log_std: f64,
    },
    Vae {
        #[serde(default = "default_latent")]
        latent_dim: usize,
        #[serde(default = "default_hidden")]
        hidden: Vec<usize>,
        #[serde(default = "default_one")]
        elbo_samples: usize,
    },
}

fn default_mean_scale() -> f64 {
    0.5
}
fn default_latent() -> usize {
    2
}
fn default_hidden() -> Vec<usize> {
    vec![128, 128]
}
fn default_one() -> usize {
    1
}

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiscriminatorSpec {
    #[serde(default = "default_hidden")]
    pub hidden: Vec<usize>,
}

impl Default for DiscriminatorSpec {
    fn default() -> Self {
        Self {
            hidden: default_hidden(),
        }
    }
}

/// Full training configuration; `(config, seed)` determines a run
/// bit-exactly.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub dataset: DatasetKind,
    pub method: TrainMethod,
    pub generator: GeneratorSpec,
    #[serde(default)]
    pub estimator: Option<EstimatorSpec>,
    #[serde(default)]
    pub discriminator: Option<DiscriminatorSpec>,
    pub unroll: UnrollConfig,
    /// Estimator updates per generator update (Adam ascent).
    #[serde(default = "default_m")]
    pub m_steps: usize,
    #[serde(default = "default_one")]
    pub disc_steps: usize,
    #[serde(default = "default_lambda")]
    pub lambda_g: f64,
    #[serde(default = "default_lr")]
    pub eta_theta: f64,
    /// Learning rate of the persistent (M-loop) estimator optimizer.
    #[serde(default = "default_lr")]
    pub eta_phi: f64,
    #[serde(default = "default_lr")]
    pub eta_psi: f64,
    #[serde(default = "default_batch")]
    pub batch_gen: usize,
    #[serde(default = "default_batch")]
    pub batch_data: usize,
    #[serde(default = "default_batch")]
    pub batch_disc: usize,
    pub iters: usize,
    /// Evaluate metrics every this many iterations (0: never).
    #[serde(default)]
    pub metric_every: usize,
    #[serde(default = "default_metric_samples")]
    pub metric_samples: usize,
    #[serde(default)]
    pub hq_rule: HqRule,
    /// Use the non-saturating generator loss instead of the minimax form.
    #[serde(default)]
    pub non_saturating: bool,
    /// Record full theta snapshots per iteration (defaults to on for the
    /// parametric mixture generator).
    #[serde(default)]
    pub record_theta: Option<bool>,
}

fn default_m() -> usize {
    15
}
fn default_lambda() -> f64 {
    1.0
}
fn default_lr() -> f64 {
    1e-3
}
fn default_batch() -> usize {
    128
}
fn default_metric_samples() -> usize {
    10_000
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        if self.unroll.k < 1 {
            return Err(TrainError::BadConfig {
                field: "unroll.k",
                reason: format!(
                    "must be >= 1 (UnrollConfig invariant K >= 1), got {}",
                    self.unroll.k
                ),
            });
        }
        if !(self.unroll.eta_phi > 0.0) {
            return Err(TrainError::BadConfig {
                field: "unroll.eta_phi",
                reason: format!(
                    "must be > 0 (UnrollConfig invariant), got {}",
                    self.unroll.eta_phi
                ),
            });
        }
        if self.m_steps < 1 {
            return Err(TrainError::BadConfig {
                field: "m_steps",
                reason: format!("must be >= 1 (TrainConfig invariant M >= 1), got {}", self.m_steps),
            });
        }
        if self.lambda_g < 0.0 {
            return Err(TrainError::BadConfig {
                field: "lambda_g",
                reason: format!("must be >= 0, got {}", self.lambda_g),
            });
        }
        let needs_estimator = matches!(self.method, TrainMethod::Lbt | TrainMethod::LbtGan);
        if needs_estimator && self.estimator.is_none() {
            return Err(TrainError::BadConfig {
                field: "estimator",
                reason: "required for lbt / lbt-gan".into(),
            });
        }
        let needs_disc = matches!(self.method, TrainMethod::LbtGan | TrainMethod::Gan);
        if needs_disc && self.discriminator.is_none() {
            return Err(TrainError::BadConfig {
                field: "discriminator",
                reason: "required for lbt-gan / gan".into(),
            });
        }
        if self.unroll.population {
            if !matches!(self.generator, GeneratorSpec::ParametricMog { .. }) {
                return Err(TrainError::BadConfig {
                    field: "unroll.population",
                    reason: "population mode needs the parametric mixture generator".into(),
                });
            }
            if self.data_dim() != 1 {
                return Err(TrainError::BadConfig {
                    field: "unroll.population",
                    reason: "population mode is limited to 1-D datasets".into(),
                });
            }
        }
        if let GeneratorSpec::ParametricMog { k, std, init } = &self.generator {
            if *k < 1 || !(*std > 0.0) {
                return Err(TrainError::BadConfig {
                    field: "generator",
                    reason: "parametric mixture needs k >= 1 and std > 0".into(),
                });
            }
            if let MoGInitSpec::Fixed { means } = init {
                if means.len() != k * self.data_dim() {
                    return Err(TrainError::BadConfig {
                        field: "generator.init",
                        reason: format!(
                            "fixed init has {} values, expected {}",
                            means.len(),
                            k * self.data_dim()
                        ),
                    });
                }
            }
        }
        Ok(())
    }

    pub fn data_dim(&self) -> usize {
        make_data(self.dataset).dim()
    }
}

pub(crate) fn make_data(kind: DatasetKind) -> GaussianMixture {
    crate::distributions::make_dataset(kind)
}

/// Runtime generator, estimator: concrete enums so population mode and
/// theta snapshots can reach the mixture-specific methods.
pub(crate) enum BuiltGenerator {
    MoG(ParametricMoGGenerator),
    Mlp(MlpGenerator),
}

impl BuiltGenerator {
    pub(crate) fn build(spec: &GeneratorSpec, dim: usize) -> Result<Self, TrainError> {
        Ok(match spec {
            GeneratorSpec::ParametricMog { k, std, init } => {
                let init = match init {
                    MoGInitSpec::Fixed { means } => MoGInit::Fixed(
                        Tensor::from_vec(vec![*k, dim], means.clone()).map_err(ModelError::from)?,
                    ),
                    MoGInitSpec::UniformBox { lo, hi } => MoGInit::UniformBox { lo: *lo, hi: *hi },
                };
                BuiltGenerator::MoG(ParametricMoGGenerator::new(
                    vec![1.0 / *k as f64; *k],
                    Tensor::full([*k, dim], *std),
                    init,
                )?)
            }
            GeneratorSpec::Mlp { latent_dim, hidden } => {
                BuiltGenerator::Mlp(MlpGenerator::new(*latent_dim, hidden, dim))
            }
        })
    }

    pub(crate) fn as_mog(&self) -> Option<&ParametricMoGGenerator> {
        match self {
            BuiltGenerator::MoG(g) => Some(g),
            BuiltGenerator::Mlp(_) => None,
        }
    }
}

impl Generator for BuiltGenerator {
    fn output_dim(&self) -> usize {
        match self {
            BuiltGenerator::MoG(g) => g.output_dim(),
            BuiltGenerator::Mlp(g) => g.output_dim(),
        }
    }

    fn param_count(&self) -> usize {
        match self {
            BuiltGenerator::MoG(g) => g.param_count(),
            BuiltGenerator::Mlp(g) => g.param_count(),
        }
    }

    fn init_params(&self, rng: &mut Rng) -> Tensor {
        match self {
            BuiltGenerator::MoG(g) => g.init_params(rng),
            BuiltGenerator::Mlp(g) => g.init_params(rng),
        }
    }

    fn generate(&self, theta: &Node, n: usize, rng: &mut Rng) -> Result<Node, ModelError> {
        match self {
            BuiltGenerator::MoG(g) => g.generate(theta, n, rng),
            BuiltGenerator::Mlp(g) => g.generate(theta, n, rng),
        }
    }
}

pub(crate) enum BuiltEstimator {
    Gaussian(GaussianEstimator),
    MoG(MoGEstimator),
    Vae(VaeEstimator),
}

impl BuiltEstimator {
    pub(crate) fn build(spec: &EstimatorSpec, dim: usize) -> Self {
        match spec {
            EstimatorSpec::Gaussian { learn_std } => BuiltEstimator::Gaussian(if *learn_std {
                GaussianEstimator::with_learnable_std(dim)
            } else {
                GaussianEstimator::unit_variance(dim)
            }),
            EstimatorSpec::Mog {
                k,
                init_mean_scale,
                init_log_std,
            } => BuiltEstimator::MoG(
                MoGEstimator::new(*k, dim).with_init(*init_mean_scale, *init_log_std),
            ),
            EstimatorSpec::Vae {
                latent_dim,
                hidden,
                elbo_samples,
            } => BuiltEstimator::Vae(
                VaeEstimator::new(dim, *latent_dim, hidden).with_elbo_samples(*elbo_samples),
            ),
        }
    }
}

impl Estimator for BuiltEstimator {
    fn data_dim(&self) -> usize {
        match self {
            BuiltEstimator::Gaussian(e) => e.data_dim(),
            BuiltEstimator::MoG(e) => e.data_dim(),
            BuiltEstimator::Vae(e) => e.data_dim(),
        }
    }

    fn param_count(&self) -> usize {
        match self {
            BuiltEstimator::Gaussian(e) => e.param_count(),
            BuiltEstimator::MoG(e) => e.param_count(),
            BuiltEstimator::Vae(e) => e.param_count(),
        }
    }

    fn init_params(&self, rng: &mut Rng) -> Tensor {
        match self {
            BuiltEstimator::Gaussian(e) => e.init_params(rng),
            BuiltEstimator::MoG(e) => e.init_params(rng),
            BuiltEstimator::Vae(e) => e.init_params(rng),
        }
    }

    fn per_sample_ll(&self, phi: &Node, x: &Node, rng: &mut Rng) -> Result<Node, ModelError> {
        match self {
            BuiltEstimator::Gaussian(e) => e.per_sample_ll(phi, x, rng),
            BuiltEstimator::MoG(e) => e.per_sample_ll(phi, x, rng),
            BuiltEstimator::Vae(e) => e.per_sample_ll(phi, x, rng),
        }
    }
}

/// Default quadrature grid for population-mode runs.
pub(crate) fn population_grid() -> QuadratureGrid {
    QuadratureGrid::default_1d()
}
