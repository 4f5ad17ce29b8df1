use crate::diffcore::{Node, Rng, Tensor};

use super::{check_batch, check_params, Estimator, MlpSpec, ModelError};

const LN_2PI: f64 = 1.8378770664093453;
// Log-variances are squashed through a scaled tanh so the exp stays
// bounded along unrolled second-order chains; the map is close to the
// identity over the useful range.
const LOGVAR_BOUND: f64 = 10.0;

/// Small VAE used as an approximate density estimator.
///
/// Encoder maps `x` to the mean and log-variance of a diagonal Gaussian
/// over the latent; the decoder maps a reparameterized latent draw back to
/// a diagonal Gaussian over `x`. The per-sample "log-likelihood" is the
/// reparameterized ELBO with an analytic latent KL term (1 Monte Carlo
/// sample by default). Flat layout: `[encoder params | decoder params]`,
/// each per [`MlpSpec`].
#[derive(Debug, Clone)]
pub struct VaeEstimator {
    data_dim: usize,
    latent_dim: usize,
    encoder: MlpSpec,
    decoder: MlpSpec,
    elbo_samples: usize,
}

impl VaeEstimator {
    pub fn new(data_dim: usize, latent_dim: usize, hidden: &[usize]) -> Self {
        Self {
            data_dim,
            latent_dim,
            encoder: MlpSpec::new(data_dim, hidden, 2 * latent_dim),
            decoder: MlpSpec::new(latent_dim, hidden, 2 * data_dim),
            elbo_samples: 1,
        }
    }

    pub fn with_elbo_samples(mut self, samples: usize) -> Self {
        self.elbo_samples = samples.max(1);
        self
    }

    pub fn latent_dim(&self) -> usize {
        self.latent_dim
    }

    fn bounded_logvar(raw: &Node) -> Node {
        raw.scale(1.0 / LOGVAR_BOUND).tanh().scale(LOGVAR_BOUND)
    }
}

impl Estimator for VaeEstimator {
    fn data_dim(&self) -> usize {
        self.data_dim
    }

    fn param_count(&self) -> usize {
        self.encoder.param_count() + self.decoder.param_count()
    }

    fn init_params(&self, rng: &mut Rng) -> Tensor {
        let mut data = self.encoder.init(rng).into_data();
        data.extend(self.decoder.init(rng).into_data());
        Tensor::from_vec(vec![data.len()], data).expect("init length")
    }

    fn per_sample_ll(&self, phi: &Node, x: &Node, rng: &mut Rng) -> Result<Node, ModelError> {
        check_params("VaeEstimator", phi, self.param_count())?;
        let n = check_batch("VaeEstimator", x, self.data_dim)?;
        let (d, z_dim) = (self.data_dim, self.latent_dim);
        let enc = phi.slice(0, 0, self.encoder.param_count());
        let dec = phi.slice(0, self.encoder.param_count(), self.param_count());

        let enc_out = self.encoder.forward(&enc, x)?;
        let z_mean = enc_out.slice(1, 0, z_dim);
        let z_logvar = Self::bounded_logvar(&enc_out.slice(1, z_dim, 2 * z_dim));

        // Analytic KL(q(z|x) || N(0, I)) per sample.
        let kl = (&(&z_mean.square() + &z_logvar.exp()) - &z_logvar)
            .shift(-1.0)
            .sum_to([n, 1])
            .scale(0.5);

        let mut elbo_terms = Vec::with_capacity(self.elbo_samples);
        for _ in 0..self.elbo_samples {
            let eps = Node::constant(rng.standard_normal([n, z_dim]));
            let z = &z_mean + &(&z_logvar.scale(0.5).exp() * &eps);
            let dec_out = self.decoder.forward(&dec, &z)?;
            let x_mean = dec_out.slice(1, 0, d);
            let x_logvar = Self::bounded_logvar(&dec_out.slice(1, d, 2 * d));
            let sq = &x.try_sub(&x_mean)?.square() * &x_logvar.neg().exp();
            let recon = (&sq + &x_logvar)
                .shift(LN_2PI)
                .sum_to([n, 1])
                .scale(-0.5);
            elbo_terms.push(&recon - &kl);
        }
        let mut total = elbo_terms[0].clone();
        for t in &elbo_terms[1..] {
            total = &total + t;
        }
        Ok(total.scale(1.0 / self.elbo_samples as f64).reshape([n]))
    }
}
