use crate::diffcore::{Node, Rng, Tensor};
use crate::distributions::{mog_log_density_node, GaussianMixture};

use super::{check_params, Generator, MlpSpec, ModelError};

/// How a parametric mixture generator's means are initialized.
#[derive(Debug, Clone, PartialEq)]
pub enum MoGInit {
    /// Explicit `K x D` means.
    Fixed(Tensor),
    /// Every coordinate drawn uniformly from `[lo, hi]`.
    UniformBox { lo: f64, hi: f64 },
}

/// Mixture-of-Gaussians generator with learnable means and fixed weights
/// and stds.
///
/// Sampling is reparameterized: a component index is drawn from the fixed
/// weights, then `x = theta_k + sigma_k * eps`, so the gradient flows to
/// the chosen component's mean and nothing else. The flat parameter vector
/// is the `K x D` mean matrix in row-major order.
#[derive(Debug, Clone)]
pub struct ParametricMoGGenerator {
    weights: Vec<f64>,
    stds: Tensor,
    init: MoGInit,
}

impl ParametricMoGGenerator {
    pub fn new(weights: Vec<f64>, stds: Tensor, init: MoGInit) -> Result<Self, ModelError> {
        if stds.rank() != 2 || stds.rows() != weights.len() {
            return Err(ModelError::DimensionMismatch {
                context: "ParametricMoGGenerator",
                expected: weights.len(),
                got: if stds.rank() == 2 { stds.rows() } else { 0 },
            });
        }
        if let MoGInit::Fixed(t) = &init {
            if t.shape() != stds.shape() {
                return Err(ModelError::ParamLength {
                    context: "ParametricMoGGenerator init",
                    expected: stds.numel(),
                    got: t.numel(),
                });
            }
        }
        Ok(Self {
            weights,
            stds,
            init,
        })
    }

    /// Equal-weight two-component family on the line with unit stds, the
    /// toy of the divergence landscapes.
    pub fn two_mean_1d(init: MoGInit) -> Self {
        Self::new(
            vec![0.5, 0.5],
            Tensor::ones([2, 1]),
            init,
        )
        .expect("valid two-mean family")
    }

    pub fn k(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn stds(&self) -> &Tensor {
        &self.stds
    }

    /// The generator's analytic distribution at the given means.
    pub fn mixture_at(&self, theta: &Tensor) -> Result<GaussianMixture, ModelError> {
        if theta.numel() != self.param_count() {
            return Err(ModelError::ParamLength {
                context: "ParametricMoGGenerator::mixture_at",
                expected: self.param_count(),
                got: theta.numel(),
            });
        }
        let means = Tensor::from_vec(self.stds.shape().to_vec(), theta.data().to_vec())
            .expect("theta length checked");
        Ok(GaussianMixture::new(
            self.weights.clone(),
            means,
            self.stds.clone(),
        )?)
    }

    /// Log density of the generator's distribution at fixed points, as a
    /// graph function of the means (population mode).
    pub fn log_density_node(&self, theta: &Node, x: &Tensor) -> Result<Node, ModelError> {
        check_params("ParametricMoGGenerator", theta, self.param_count())?;
        let (k, d) = (self.stds.rows(), self.stds.cols());
        let log_w = Node::constant(Tensor::vector(
            &self.weights.iter().map(|w| w.ln()).collect::<Vec<_>>(),
        ));
        let log_stds = Node::constant(self.stds.map(f64::ln));
        Ok(mog_log_density_node(
            &log_w,
            &theta.reshape([k, d]),
            &log_stds,
            &Node::constant(x.clone()),
        )?)
    }
}

impl Generator for ParametricMoGGenerator {
    fn output_dim(&self) -> usize {
        self.stds.cols()
    }

    fn param_count(&self) -> usize {
        self.stds.numel()
    }

    fn init_params(&self, rng: &mut Rng) -> Tensor {
        match &self.init {
            MoGInit::Fixed(t) => Tensor::from_vec(vec![t.numel()], t.data().to_vec())
                .expect("flat init"),
            MoGInit::UniformBox { lo, hi } => {
                let data: Vec<f64> = (0..self.param_count())
                    .map(|_| rng.uniform(*lo, *hi))
                    .collect();
                Tensor::from_vec(vec![data.len()], data).expect("init length")
            }
        }
    }

    fn generate(&self, theta: &Node, n: usize, rng: &mut Rng) -> Result<Node, ModelError> {
        check_params("ParametricMoGGenerator", theta, self.param_count())?;
        let (k, d) = (self.stds.rows(), self.stds.cols());
        // One-hot component selection keeps the whole draw inside matmul,
        // so the path to the chosen mean stays differentiable.
        let mut onehot = vec![0.0; n * k];
        let mut noise = vec![0.0; n * d];
        for i in 0..n {
            let comp = rng.categorical(&self.weights);
            onehot[i * k + comp] = 1.0;
            let sd = self.stds.row(comp);
            for j in 0..d {
                noise[i * d + j] = sd[j] * rng.normal();
            }
        }
        let onehot = Node::constant(Tensor::from_vec(vec![n, k], onehot).expect("onehot"));
        let noise = Node::constant(Tensor::from_vec(vec![n, d], noise).expect("noise"));
        let means = theta.reshape([k, d]);
        Ok(&onehot.try_matmul(&means)? + &noise)
    }
}

/// MLP generator mapping standard normal latents to samples.
///
/// Default architecture is two tanh hidden layers; the flat parameter
/// layout is [`MlpSpec`]'s.
#[derive(Debug, Clone)]
pub struct MlpGenerator {
    spec: MlpSpec,
    latent_dim: usize,
}

impl MlpGenerator {
    pub fn new(latent_dim: usize, hidden: &[usize], output_dim: usize) -> Self {
        Self {
            spec: MlpSpec::new(latent_dim, hidden, output_dim),
            latent_dim,
        }
    }

    pub fn latent_dim(&self) -> usize {
        self.latent_dim
    }

    pub fn spec(&self) -> &MlpSpec {
        &self.spec
    }

    /// Forward an explicit latent batch (tests freeze noise this way).
    pub fn generate_from(&self, theta: &Node, z: &Tensor) -> Result<Node, ModelError> {
        self.spec.forward(theta, &Node::constant(z.clone()))
    }
}

impl Generator for MlpGenerator {
    fn output_dim(&self) -> usize {
        self.spec.output_dim()
    }

    fn param_count(&self) -> usize {
        self.spec.param_count()
    }

    fn init_params(&self, rng: &mut Rng) -> Tensor {
        self.spec.init(rng)
    }

    fn generate(&self, theta: &Node, n: usize, rng: &mut Rng) -> Result<Node, ModelError> {
        let z = rng.standard_normal([n, self.latent_dim]);
        self.spec.forward(theta, &Node::constant(z))
    }
}
