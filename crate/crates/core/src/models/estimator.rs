use crate::diffcore::{Node, Rng, Tensor};
use crate::distributions::mog_log_density_node;

use super::{check_batch, check_params, Estimator, ModelError};

const LN_2PI: f64 = 1.8378770664093453;

/// Single diagonal Gaussian estimator `N(phi, sigma^2 I)`.
///
/// Flat layout: `[mean (D)]`, or `[mean (D) | log_std (D)]` when the
/// standard deviation is learnable. With the std fixed the density is
/// exactly `N(phi, I)`.
#[derive(Debug, Clone)]
pub struct GaussianEstimator {
    dim: usize,
    learn_log_std: bool,
}

impl GaussianEstimator {
    pub fn unit_variance(dim: usize) -> Self {
        Self {
            dim,
            learn_log_std: false,
        }
    }

    pub fn with_learnable_std(dim: usize) -> Self {
        Self {
            dim,
            learn_log_std: true,
        }
    }

    pub fn learns_std(&self) -> bool {
        self.learn_log_std
    }
}

impl Estimator for GaussianEstimator {
    fn data_dim(&self) -> usize {
        self.dim
    }

    fn param_count(&self) -> usize {
        if self.learn_log_std {
            2 * self.dim
        } else {
            self.dim
        }
    }

    fn init_params(&self, _rng: &mut Rng) -> Tensor {
        Tensor::zeros([self.param_count()])
    }

    fn per_sample_ll(&self, phi: &Node, x: &Node, _rng: &mut Rng) -> Result<Node, ModelError> {
        check_params("GaussianEstimator", phi, self.param_count())?;
        let n = check_batch("GaussianEstimator", x, self.dim)?;
        let d = self.dim;
        let mean = phi.slice(0, 0, d);
        let centered = x.try_sub(&mean.broadcast([n, d]))?;
        if self.learn_log_std {
            let log_std = phi.slice(0, d, 2 * d);
            let z = &centered / &log_std.exp().broadcast([n, d]);
            let quad = z.square().sum_to([n, 1]).scale(-0.5);
            let log_norm = log_std.sum().neg().shift(-0.5 * d as f64 * LN_2PI);
            Ok((&quad + &log_norm).reshape([n]))
        } else {
            let quad = centered.square().sum_to([n, 1]).scale(-0.5);
            Ok(quad.shift(-0.5 * d as f64 * LN_2PI).reshape([n]))
        }
    }
}

/// Typed view of a [`MoGEstimator`] flat parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct MoGParams {
    pub logits: Vec<f64>,
    /// Row-major `K x D`.
    pub means: Vec<f64>,
    /// Row-major `K x D`.
    pub log_stds: Vec<f64>,
}

/// Mixture-of-Gaussians estimator with learnable weights (via softmax of
/// logits), means and log-stds.
///
/// Flat layout: `[logits (K) | means (K*D) | log_stds (K*D)]`. Weights come
/// from a softmax and stds from an exp, so the simplex and positivity
/// constraints hold by construction.
#[derive(Debug, Clone)]
pub struct MoGEstimator {
    k: usize,
    dim: usize,
    init_mean_scale: f64,
    init_log_std: f64,
}

impl MoGEstimator {
    pub fn new(k: usize, dim: usize) -> Self {
        Self {
            k,
            dim,
            init_mean_scale: 0.5,
            init_log_std: 0.0,
        }
    }

    pub fn with_init(mut self, mean_scale: f64, log_std: f64) -> Self {
        self.init_mean_scale = mean_scale;
        self.init_log_std = log_std;
        self
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn unpack(&self, flat: &Tensor) -> Result<MoGParams, ModelError> {
        if flat.numel() != self.param_count() {
            return Err(ModelError::ParamLength {
                context: "MoGEstimator::unpack",
                expected: self.param_count(),
                got: flat.numel(),
            });
        }
        let kd = self.k * self.dim;
        let d = flat.data();
        Ok(MoGParams {
            logits: d[0..self.k].to_vec(),
            means: d[self.k..self.k + kd].to_vec(),
            log_stds: d[self.k + kd..].to_vec(),
        })
    }

    pub fn pack(&self, params: &MoGParams) -> Result<Tensor, ModelError> {
        let kd = self.k * self.dim;
        if params.logits.len() != self.k || params.means.len() != kd || params.log_stds.len() != kd
        {
            return Err(ModelError::ParamLength {
                context: "MoGEstimator::pack",
                expected: self.param_count(),
                got: params.logits.len() + params.means.len() + params.log_stds.len(),
            });
        }
        let mut data = Vec::with_capacity(self.param_count());
        data.extend_from_slice(&params.logits);
        data.extend_from_slice(&params.means);
        data.extend_from_slice(&params.log_stds);
        Ok(Tensor::from_vec(vec![data.len()], data).expect("packed length"))
    }
}

impl Estimator for MoGEstimator {
    fn data_dim(&self) -> usize {
        self.dim
    }

    fn param_count(&self) -> usize {
        self.k + 2 * self.k * self.dim
    }

    fn init_params(&self, rng: &mut Rng) -> Tensor {
        let kd = self.k * self.dim;
        let mut data = vec![0.0; self.k];
        for _ in 0..kd {
            data.push(self.init_mean_scale * rng.normal());
        }
        data.extend(std::iter::repeat(self.init_log_std).take(kd));
        Tensor::from_vec(vec![data.len()], data).expect("init length")
    }

    fn per_sample_ll(&self, phi: &Node, x: &Node, _rng: &mut Rng) -> Result<Node, ModelError> {
        check_params("MoGEstimator", phi, self.param_count())?;
        check_batch("MoGEstimator", x, self.dim)?;
        let (k, d) = (self.k, self.dim);
        let kd = k * d;
        let logits = phi.slice(0, 0, k);
        let log_weights = logits.try_sub(&logits.logsumexp(0))?;
        let means = phi.slice(0, k, k + kd).reshape([k, d]);
        let log_stds = phi.slice(0, k + kd, k + 2 * kd).reshape([k, d]);
        Ok(mog_log_density_node(&log_weights, &means, &log_stds, x)?)
    }
}
