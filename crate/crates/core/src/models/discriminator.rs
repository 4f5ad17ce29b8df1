use crate::diffcore::{Node, Rng, Tensor};

use super::{check_batch, MlpSpec, ModelError};

/// MLP discriminator with a scalar logit output.
#[derive(Debug, Clone)]
pub struct Discriminator {
    spec: MlpSpec,
    input_dim: usize,
}

impl Discriminator {
    pub fn new(input_dim: usize, hidden: &[usize]) -> Self {
        Self {
            spec: MlpSpec::new(input_dim, hidden, 1),
            input_dim,
        }
    }

    pub fn param_count(&self) -> usize {
        self.spec.param_count()
    }

    pub fn init_params(&self, rng: &mut Rng) -> Tensor {
        self.spec.init(rng)
    }

    /// Raw logits, `[n]`.
    pub fn logits(&self, psi: &Node, x: &Node) -> Result<Node, ModelError> {
        let n = check_batch("Discriminator", x, self.input_dim)?;
        Ok(self.spec.forward(psi, x)?.reshape([n]))
    }

    /// `D(x) = sigmoid(logit)`, in `(0, 1)`.
    pub fn prob(&self, psi: &Node, x: &Node) -> Result<Node, ModelError> {
        Ok(self.logits(psi, x)?.sigmoid())
    }
}

/// `ln(1 + e^t)`, computed as a log-sum-exp so large magnitudes cannot
/// overflow or produce `-inf`.
pub fn softplus(t: &Node) -> Node {
    let n = t.numel();
    let col = t.reshape([n, 1]);
    let zeros = Node::constant(Tensor::zeros([n, 1]));
    Node::concat(&[col, zeros], 1).logsumexp(1).reshape(t.shape().to_vec())
}

/// `ln D` for a logit `t`: `-softplus(-t)`.
pub fn log_sigmoid(t: &Node) -> Node {
    softplus(&t.neg()).neg()
}

/// `ln (1 - D)` for a logit `t`: `-softplus(t)`.
pub fn log_one_minus_sigmoid(t: &Node) -> Node {
    softplus(t).neg()
}

/// The minimax value
/// `E_data[ln D(x)] + E_gen[ln(1 - D(x_fake))]`, differentiable in the
/// discriminator parameters and in both batches.
pub fn gan_value(
    disc: &Discriminator,
    psi: &Node,
    x_real: &Node,
    x_fake: &Node,
) -> Result<Node, ModelError> {
    let real = log_sigmoid(&disc.logits(psi, x_real)?).mean();
    let fake = log_one_minus_sigmoid(&disc.logits(psi, x_fake)?).mean();
    Ok(&real + &fake)
}

/// Non-saturating generator reward `E_gen[ln D(x_fake)]`; ascending it has
/// the same fixed points as descending the saturating term.
pub fn non_saturating_gen_value(
    disc: &Discriminator,
    psi: &Node,
    x_fake: &Node,
) -> Result<Node, ModelError> {
    Ok(log_sigmoid(&disc.logits(psi, x_fake)?).mean())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffcore::finite_difference_check;

    #[test]
    fn zero_weights_discriminate_at_half() {
        let disc = Discriminator::new(2, &[8]);
        let psi = Node::constant(Tensor::zeros([disc.param_count()]));
        let x = Node::constant(Tensor::matrix(4, 2, vec![3.0; 8]).unwrap());
        let p = disc.prob(&psi, &x).unwrap();
        assert!(p.value().data().iter().all(|&v| v == 0.5));
    }

    #[test]
    fn log_terms_stay_finite_at_extreme_logits() {
        for sign in [-1.0, 1.0] {
            let t = Node::constant(Tensor::vector(&[50.0 * sign]));
            let a = log_sigmoid(&t).value().scalar_value();
            let b = log_one_minus_sigmoid(&t).value().scalar_value();
            assert!(a.is_finite() && b.is_finite(), "logit {sign}*50: {a}, {b}");
            assert!((a + b + 50.0).abs() < 1e-9, "identity lnD + ln(1-D)");
        }
    }

    #[test]
    fn gan_value_gradient_wrt_psi_passes_fd() {
        let disc = Discriminator::new(1, &[6]);
        let mut rng = Rng::from_seed(12);
        let psi = disc.init_params(&mut rng);
        let real = Tensor::matrix(4, 1, vec![0.5, -0.7, 1.2, 0.1]).unwrap();
        let fake = Tensor::matrix(4, 1, vec![-0.2, 0.9, -1.5, 0.4]).unwrap();
        let report = finite_difference_check(
            |p| {
                gan_value(
                    &disc,
                    p,
                    &Node::constant(real.clone()),
                    &Node::constant(fake.clone()),
                )
                .unwrap()
            },
            &psi,
            1e-5,
        )
        .unwrap();
        assert!(report.max_rel_err < 1e-6, "err {}", report.max_rel_err);
    }

    #[test]
    fn gan_value_gradient_wrt_fake_batch_passes_fd() {
        let disc = Discriminator::new(1, &[6]);
        let mut rng = Rng::from_seed(13);
        let psi = disc.init_params(&mut rng);
        let real = Tensor::matrix(3, 1, vec![0.5, -0.7, 1.2]).unwrap();
        let point = Tensor::vector(&[-0.2, 0.9, -1.5]);
        let report = finite_difference_check(
            |xf| {
                gan_value(
                    &disc,
                    &Node::constant(psi.clone()),
                    &Node::constant(real.clone()),
                    &xf.reshape([3, 1]),
                )
                .unwrap()
            },
            &point,
            1e-5,
        )
        .unwrap();
        assert!(report.max_rel_err < 1e-6, "err {}", report.max_rel_err);
    }
}
