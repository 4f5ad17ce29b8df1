use crate::diffcore::{gradient, Node, Rng, Tensor};
use crate::models::Estimator;
use crate::training::{AdamState, Direction};

use super::influence::solve_with_damping;
use super::{BilevelError, INFLUENCE_MAX_PARAMS};

/// Settings for driving an estimator to an inner optimum on a fixed batch.
#[derive(Debug, Clone, Copy)]
pub struct OptimizeSettings {
    pub adam_steps: usize,
    pub adam_lr: f64,
    /// Newton polish iterations (skipped for estimators too large for a
    /// dense Hessian).
    pub newton_steps: usize,
    pub grad_tol: f64,
}

impl Default for OptimizeSettings {
    fn default() -> Self {
        Self {
            adam_steps: 3000,
            adam_lr: 0.02,
            newton_steps: 60,
            grad_tol: 1e-9,
        }
    }
}

/// Maximize `f_E` on a fixed batch: Adam to get into a basin, then
/// safeguarded Newton to drive the gradient to machine precision.
///
/// Returns the parameters and the final gradient norm; callers that need a
/// certified optimum (the influence oracle) check the norm themselves.
pub fn ascend_to_optimum(
    est: &dyn Estimator,
    phi0: &Tensor,
    samples: &Tensor,
    settings: &OptimizeSettings,
    rng_noise: &mut Rng,
) -> Result<(Tensor, f64), BilevelError> {
    let x = Node::constant(samples.clone());
    let p = est.param_count();
    let mut phi = phi0.clone();
    let mut adam = AdamState::new(p);

    let value_grad = |phi: &Tensor, rng: &mut Rng| -> Result<(f64, Tensor), BilevelError> {
        let pn = Node::leaf(phi.clone());
        let ll = est.log_likelihood(&pn, &x, rng)?;
        let g = gradient(&ll, std::slice::from_ref(&pn))?.remove(0);
        Ok((ll.value().scalar_value(), g.value().clone()))
    };

    for step in 0..settings.adam_steps {
        let (v, g) = value_grad(&phi, rng_noise)?;
        if !v.is_finite() || !g.all_finite() {
            return Err(BilevelError::NonFinite {
                context: "inner optimization",
                step,
            });
        }
        if g.norm() < settings.grad_tol {
            return Ok((phi, g.norm()));
        }
        adam.step(&mut phi, &g, settings.adam_lr, Direction::Ascend);
    }

    if p > INFLUENCE_MAX_PARAMS {
        let (_, g) = value_grad(&phi, rng_noise)?;
        return Ok((phi, g.norm()));
    }

    let mut grad_norm = f64::INFINITY;
    for _ in 0..settings.newton_steps {
        let pn = Node::leaf(phi.clone());
        let ll = est.log_likelihood(&pn, &x, rng_noise)?;
        let g = gradient(&ll, std::slice::from_ref(&pn))?.remove(0);
        grad_norm = g.value().norm();
        if grad_norm < settings.grad_tol {
            break;
        }
        let mut hessian = vec![0.0; p * p];
        for i in 0..p {
            let gi = g.slice(0, i, i + 1);
            let row = gradient(&gi, std::slice::from_ref(&pn))?.remove(0);
            hessian[i * p..(i + 1) * p].copy_from_slice(row.value().data());
        }
        let Some((newton, _, _)) = solve_with_damping(&hessian, g.value().data(), p, 1) else {
            break;
        };
        // Backtrack until the gradient norm actually shrinks.
        let mut scale = 1.0;
        let mut accepted = false;
        for _ in 0..12 {
            let mut candidate = phi.clone();
            for (c, d) in candidate.data_mut().iter_mut().zip(&newton) {
                *c -= scale * d;
            }
            if let Ok((_, g2)) = value_grad(&candidate, &mut rng_noise.clone()) {
                if g2.all_finite() && g2.norm() < grad_norm {
                    phi = candidate;
                    accepted = true;
                    break;
                }
            }
            scale *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    let (_, g) = value_grad(&phi, rng_noise)?;
    Ok((phi, g.norm()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{GaussianEstimator, MoGEstimator};

    #[test]
    fn gaussian_optimum_is_the_batch_mean() {
        let est = GaussianEstimator::unit_variance(1);
        let samples = Tensor::matrix(4, 1, vec![1.0, 2.0, 4.0, 7.0]).unwrap();
        let (phi, norm) = ascend_to_optimum(
            &est,
            &Tensor::vector(&[0.0]),
            &samples,
            &OptimizeSettings::default(),
            &mut Rng::from_seed(0),
        )
        .unwrap();
        assert!(norm < 1e-9);
        assert!((phi.data()[0] - 3.5).abs() < 1e-9);
    }

    #[test]
    fn mog_optimum_has_tiny_gradient_despite_sharp_curvature() {
        let est = MoGEstimator::new(2, 1);
        let samples = Tensor::matrix(6, 1, vec![-1.2, -0.8, -1.0, 0.9, 1.1, 1.0]).unwrap();
        let phi0 = {
            let mut rng = Rng::from_seed(40);
            crate::models::Estimator::init_params(&est, &mut rng)
        };
        let (phi, norm) = ascend_to_optimum(
            &est,
            &phi0,
            &samples,
            &OptimizeSettings::default(),
            &mut Rng::from_seed(0),
        )
        .unwrap();
        assert!(norm < 1e-9, "grad norm {norm}");
        // The benign optimum puts the means at the cluster centers.
        let view = est.unpack(&phi).unwrap();
        let mut means = view.means.clone();
        means.sort_by(f64::total_cmp);
        assert!((means[0] + 1.0).abs() < 0.05 && (means[1] - 1.0).abs() < 0.05, "{means:?}");
    }
}
