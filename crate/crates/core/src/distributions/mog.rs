use crate::diffcore::{Node, Rng, Tensor};

use super::DistError;

const LN_2PI: f64 = 1.8378770664093453;

/// Single Gaussian with diagonal covariance.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagGaussian {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl DiagGaussian {
    pub fn new(mean: Vec<f64>, std: Vec<f64>) -> Result<Self, DistError> {
        if mean.len() != std.len() {
            return Err(DistError::DimensionMismatch {
                context: "DiagGaussian",
                expected: mean.len(),
                got: std.len(),
            });
        }
        if let Some(&bad) = std.iter().find(|s| **s <= 0.0 || !s.is_finite()) {
            return Err(DistError::NonPositiveStd { value: bad });
        }
        Ok(Self { mean, std })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

/// Closed-form KL divergence `KL(p || q)` between diagonal Gaussians.
pub fn gaussian_kl_closed_form(p: &DiagGaussian, q: &DiagGaussian) -> Result<f64, DistError> {
    if p.dim() != q.dim() {
        return Err(DistError::DimensionMismatch {
            context: "gaussian_kl_closed_form",
            expected: p.dim(),
            got: q.dim(),
        });
    }
    let mut kl = 0.0;
    for d in 0..p.dim() {
        let (mp, sp) = (p.mean[d], p.std[d]);
        let (mq, sq) = (q.mean[d], q.std[d]);
        kl += (sq / sp).ln() + (sp * sp + (mp - mq) * (mp - mq)) / (2.0 * sq * sq) - 0.5;
    }
    Ok(kl)
}

/// Weighted mixture of diagonal-covariance Gaussians.
///
/// Serves as the data distribution, the toy generator family and the
/// analytic density estimator. Weights live on the simplex; `means` and
/// `stds` are `K x D`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianMixture {
    weights: Vec<f64>,
    means: Tensor,
    stds: Tensor,
}

impl GaussianMixture {
    pub fn new(weights: Vec<f64>, means: Tensor, stds: Tensor) -> Result<Self, DistError> {
        let sum: f64 = weights.iter().sum();
        let valid = !weights.is_empty()
            && (sum - 1.0).abs() <= 1e-12
            && weights.iter().all(|w| *w >= 0.0)
            && means.rank() == 2
            && stds.shape() == means.shape()
            && means.rows() == weights.len()
            && means.cols() >= 1
            && stds.data().iter().all(|s| *s > 0.0 && s.is_finite());
        if !valid {
            return Err(DistError::InvalidMixture { sum });
        }
        Ok(Self {
            weights,
            means,
            stds,
        })
    }

    /// Single-component mixture.
    pub fn single(mean: Vec<f64>, std: Vec<f64>) -> Result<Self, DistError> {
        let d = mean.len();
        Ok(Self::new(
            vec![1.0],
            Tensor::from_vec(vec![1, d], mean)?,
            Tensor::from_vec(vec![1, d], std)?,
        )?)
    }

    pub fn k(&self) -> usize {
        self.weights.len()
    }

    pub fn dim(&self) -> usize {
        self.means.cols()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn means(&self) -> &Tensor {
        &self.means
    }

    pub fn stds(&self) -> &Tensor {
        &self.stds
    }

    pub fn component(&self, k: usize) -> DiagGaussian {
        DiagGaussian {
            mean: self.means.row(k).to_vec(),
            std: self.stds.row(k).to_vec(),
        }
    }

    /// Mixture mean `sum_k w_k mu_k`.
    pub fn mean(&self) -> Vec<f64> {
        let d = self.dim();
        let mut out = vec![0.0; d];
        for k in 0..self.k() {
            for (o, m) in out.iter_mut().zip(self.means.row(k)) {
                *o += self.weights[k] * m;
            }
        }
        out
    }

    /// Log density at one point (stable log-sum-exp over components).
    pub fn log_density(&self, point: &[f64]) -> f64 {
        debug_assert_eq!(point.len(), self.dim());
        let d = self.dim();
        let mut max_term = f64::NEG_INFINITY;
        let mut terms = Vec::with_capacity(self.k());
        for k in 0..self.k() {
            let mut t = self.weights[k].ln() - 0.5 * d as f64 * LN_2PI;
            let (mu, sd) = (self.means.row(k), self.stds.row(k));
            for j in 0..d {
                let z = (point[j] - mu[j]) / sd[j];
                t -= sd[j].ln() + 0.5 * z * z;
            }
            max_term = max_term.max(t);
            terms.push(t);
        }
        let s: f64 = terms.iter().map(|t| (t - max_term).exp()).sum();
        max_term + s.ln()
    }

    /// Log densities for a `n x D` batch.
    pub fn log_density_batch(&self, x: &Tensor) -> Result<Vec<f64>, DistError> {
        if x.rank() != 2 || x.cols() != self.dim() {
            return Err(DistError::DimensionMismatch {
                context: "mog_log_density",
                expected: self.dim(),
                got: if x.rank() == 2 { x.cols() } else { x.rank() },
            });
        }
        Ok((0..x.rows()).map(|i| self.log_density(x.row(i))).collect())
    }

    /// Draw `n` points; component choice from the weights, then a Gaussian
    /// draw. Deterministic given the RNG state.
    pub fn sample(&self, n: usize, rng: &mut Rng) -> Tensor {
        self.sample_with_components(n, rng).0
    }

    pub fn sample_with_components(&self, n: usize, rng: &mut Rng) -> (Tensor, Vec<usize>) {
        let d = self.dim();
        let mut data = Vec::with_capacity(n * d);
        let mut comps = Vec::with_capacity(n);
        for _ in 0..n {
            let k = rng.categorical(&self.weights);
            comps.push(k);
            let (mu, sd) = (self.means.row(k), self.stds.row(k));
            for j in 0..d {
                data.push(mu[j] + sd[j] * rng.normal());
            }
        }
        (
            Tensor::from_vec(vec![n, d], data).expect("sample length"),
            comps,
        )
    }

    /// Probability mass inside an axis-aligned box.
    pub fn mass_within(&self, bounds: &[(f64, f64)]) -> f64 {
        debug_assert_eq!(bounds.len(), self.dim());
        let mut total = 0.0;
        for k in 0..self.k() {
            let (mu, sd) = (self.means.row(k), self.stds.row(k));
            let mut m = self.weights[k];
            for (j, (lo, hi)) in bounds.iter().enumerate() {
                m *= normal_cdf((hi - mu[j]) / sd[j]) - normal_cdf((lo - mu[j]) / sd[j]);
            }
            total += m;
        }
        total
    }
}

fn normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z / std::f64::consts::SQRT_2)
}

/// Graph-space mixture log density: differentiable w.r.t. the points, the
/// means, the log-stds and the log-weights.
///
/// `log_weights` is `[K]`, `means` and `log_stds` are `[K, D]`, `x` is
/// `[n, D]`; the result is the `[n]` vector of log densities.
pub fn mog_log_density_node(
    log_weights: &Node,
    means: &Node,
    log_stds: &Node,
    x: &Node,
) -> Result<Node, DistError> {
    let k = log_weights.numel();
    if means.shape().len() != 2 || means.shape()[0] != k || log_stds.shape() != means.shape() {
        return Err(DistError::DimensionMismatch {
            context: "mog_log_density_node",
            expected: k,
            got: means.shape().first().copied().unwrap_or(0),
        });
    }
    let d = means.shape()[1];
    if x.shape().len() != 2 || x.shape()[1] != d {
        return Err(DistError::DimensionMismatch {
            context: "mog_log_density_node",
            expected: d,
            got: x.shape().last().copied().unwrap_or(0),
        });
    }
    let n = x.shape()[0];
    let batch = vec![n, d];
    let mut columns = Vec::with_capacity(k);
    for comp in 0..k {
        let mu = means.slice(0, comp, comp + 1).broadcast(batch.clone());
        let ls = log_stds.slice(0, comp, comp + 1);
        let sd = ls.exp().broadcast(batch.clone());
        let z = &(x - &mu) / &sd;
        let quad = z.square().sum_to([n, 1]).scale(-0.5);
        let log_norm = log_weights
            .slice(0, comp, comp + 1)
            .try_sub(&ls.sum())?
            .shift(-0.5 * d as f64 * LN_2PI);
        columns.push(quad.try_add(&log_norm)?);
    }
    Ok(Node::concat(&columns, 1).logsumexp(1))
}
