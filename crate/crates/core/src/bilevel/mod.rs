//! Unrolled inner optimization and the hypergradient of the teaching
//! objective, plus the influence-function sensitivity oracle that
//! validates the unrolling approximation.
//!
//! The upper objective is the estimator's log-likelihood of real data
//! after the estimator has taken `K` explicit ascent steps on generated
//! samples. Because the ascent steps are ordinary graph nodes, one
//! `gradient` call differentiates through all of them; the path to the
//! generator parameters runs only through the generated samples, never
//! through the starting estimator parameters.

mod influence;
mod optimize;

pub use influence::{
    alignment_check, influence_sensitivity, InfluenceResult, SensitivityReport,
    INFLUENCE_MAX_PARAMS,
};
pub use optimize::{ascend_to_optimum, OptimizeSettings};

use crate::diffcore::{gradient, DiffError, Node, Rng, Tensor};
use crate::distributions::{GaussianMixture, QuadratureGrid};
use crate::models::{Estimator, Generator, ModelError, ParametricMoGGenerator};

use thiserror::Error;

#[derive(Debug, Clone, Error)]
pub enum BilevelError {
    #[error("{context}: non-finite value at inner step {step}")]
    NonFinite { context: &'static str, step: usize },
    #[error("estimator is not at an inner optimum: gradient norm {grad_norm:.3e} (tolerance {tol:.1e})")]
    NotAtOptimum { grad_norm: f64, tol: f64 },
    #[error("dense Hessian oracle limited to {max} parameters, estimator has {count}")]
    TooManyParams { count: usize, max: usize },
    #[error("unroll config: {reason}")]
    BadConfig { reason: String },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Diff(#[from] DiffError),
}

/// Inner optimizer unrolled through by the hypergradient.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InnerOptimizer {
    /// Plain gradient ascent `phi <- phi + eta * grad` (the default).
    PlainAscent,
    /// Adam with default moments, every state a graph node.
    AdamUnrolled,
}

/// Configuration of the unrolled inner problem.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct UnrollConfig {
    /// Number of unrolled ascent steps.
    pub k: usize,
    /// Inner learning rate.
    pub eta_phi: f64,
    #[serde(default = "default_inner_optimizer")]
    pub optimizer: InnerOptimizer,
    /// Replace sampled batches by quadrature expectations (1-D toys).
    #[serde(default)]
    pub population: bool,
}

fn default_inner_optimizer() -> InnerOptimizer {
    InnerOptimizer::PlainAscent
}

impl UnrollConfig {
    pub fn plain(k: usize, eta_phi: f64) -> Self {
        Self {
            k,
            eta_phi,
            optimizer: InnerOptimizer::PlainAscent,
            population: false,
        }
    }

    pub fn validate(&self) -> Result<(), BilevelError> {
        if self.k < 1 {
            return Err(BilevelError::BadConfig {
                reason: format!("k must be >= 1, got {}", self.k),
            });
        }
        if !(self.eta_phi > 0.0) {
            return Err(BilevelError::BadConfig {
                reason: format!("eta_phi must be > 0, got {}", self.eta_phi),
            });
        }
        Ok(())
    }
}

/// What the inner objective `f_E` is evaluated on.
#[derive(Clone, Copy)]
pub enum InnerObjective<'a> {
    /// Mean log-likelihood of a generated batch.
    Batch { samples: &'a Node },
    /// Weighted expectation over fixed points (population mode); the
    /// weights carry the generator's density and the quadrature cell
    /// volume.
    Weighted { points: &'a Node, weights: &'a Node },
}

fn inner_value(
    est: &dyn Estimator,
    phi: &Node,
    objective: InnerObjective<'_>,
    rng: &mut Rng,
) -> Result<Node, BilevelError> {
    let v = match objective {
        InnerObjective::Batch { samples } => est.log_likelihood(phi, samples, rng)?,
        InnerObjective::Weighted { points, weights } => {
            est.weighted_log_likelihood(phi, points, weights, rng)?
        }
    };
    Ok(v)
}

/// One inner ascent step `phi + eta * d f_E / d phi`, still differentiable
/// with respect to the generated samples and anything upstream of them.
pub fn inner_step(
    est: &dyn Estimator,
    phi: &Node,
    gen_samples: &Node,
    eta_phi: f64,
    rng: &mut Rng,
) -> Result<Node, BilevelError> {
    step_on(
        est,
        phi,
        InnerObjective::Batch {
            samples: gen_samples,
        },
        eta_phi,
        0,
        rng,
    )
}

fn step_on(
    est: &dyn Estimator,
    phi: &Node,
    objective: InnerObjective<'_>,
    eta_phi: f64,
    step: usize,
    rng: &mut Rng,
) -> Result<Node, BilevelError> {
    let f_e = inner_value(est, phi, objective, rng)?;
    let g = gradient(&f_e, std::slice::from_ref(phi))?.remove(0);
    if !g.value().all_finite() {
        return Err(BilevelError::NonFinite {
            context: "inner_step gradient",
            step,
        });
    }
    Ok(phi + &g.scale(eta_phi))
}

/// Outcome of an unroll: the final parameters and the per-step objective
/// values (values only, the graph lives in `phi_k`).
pub struct Unrolled {
    pub phi_k: Node,
    pub f_e_per_step: Vec<f64>,
}

/// Compose `K` inner steps from `phi0` on a fixed objective.
///
/// The generated batch (or weight node) is built once by the caller and
/// held fixed across the steps, so the surrogate is a deterministic
/// function of the generator parameters.
pub fn unroll(
    est: &dyn Estimator,
    phi0: &Node,
    objective: InnerObjective<'_>,
    cfg: &UnrollConfig,
    rng: &mut Rng,
) -> Result<Unrolled, BilevelError> {
    cfg.validate()?;
    let mut f_e_per_step = Vec::with_capacity(cfg.k);
    let mut phi = phi0.clone();
    match cfg.optimizer {
        InnerOptimizer::PlainAscent => {
            for step in 0..cfg.k {
                let f_e = inner_value(est, &phi, objective, rng)?;
                f_e_per_step.push(f_e.value().scalar_value());
                let g = gradient(&f_e, std::slice::from_ref(&phi))?.remove(0);
                if !g.value().all_finite() {
                    return Err(BilevelError::NonFinite {
                        context: "unroll gradient",
                        step,
                    });
                }
                phi = &phi + &g.scale(cfg.eta_phi);
            }
        }
        InnerOptimizer::AdamUnrolled => {
            let (b1, b2, eps) = (0.9, 0.999, 1e-8);
            let shape = phi0.shape().to_vec();
            let mut m = Node::constant(Tensor::zeros(shape.clone()));
            let mut v = Node::constant(Tensor::zeros(shape));
            for step in 0..cfg.k {
                let f_e = inner_value(est, &phi, objective, rng)?;
                f_e_per_step.push(f_e.value().scalar_value());
                let g = gradient(&f_e, std::slice::from_ref(&phi))?.remove(0);
                if !g.value().all_finite() {
                    return Err(BilevelError::NonFinite {
                        context: "unroll gradient",
                        step,
                    });
                }
                m = &m.scale(b1) + &g.scale(1.0 - b1);
                v = &v.scale(b2) + &g.square().scale(1.0 - b2);
                let t = (step + 1) as i32;
                let m_hat = m.scale(1.0 / (1.0 - b1.powi(t)));
                let v_hat = v.scale(1.0 / (1.0 - b2.powi(t)));
                // Differentiable sqrt: exp(0.5 ln(v + tiny)).
                let root = v_hat.shift(1e-24).log().scale(0.5).exp();
                let update = &m_hat / &root.shift(eps);
                phi = &phi + &update.scale(cfg.eta_phi);
            }
        }
    }
    if !phi.value().all_finite() {
        return Err(BilevelError::NonFinite {
            context: "unrolled parameters",
            step: cfg.k,
        });
    }
    Ok(Unrolled {
        phi_k: phi,
        f_e_per_step,
    })
}

/// Everything a hypergradient evaluation produces.
pub struct HypergradReport {
    /// `d f_G(phi^K(theta)) / d theta`, shaped like the flat generator
    /// parameters.
    pub grad: Tensor,
    /// Value of the surrogate objective `f_G(phi^K)`.
    pub f_g: f64,
    /// Inner objective value at the first unrolled step.
    pub f_e_first: f64,
    /// Value of the unrolled estimator parameters.
    pub phi_k: Tensor,
}

/// Exact gradient of the surrogate `f_G(phi^K(theta, phi0))` with respect
/// to the generator parameters, via second-order differentiation through
/// the unrolled steps (sampled batches).
pub fn hypergradient(
    gen: &dyn Generator,
    theta: &Tensor,
    est: &dyn Estimator,
    phi0: &Tensor,
    data_batch: &Tensor,
    gen_batch: usize,
    cfg: &UnrollConfig,
    rng_gen: &mut Rng,
    rng_noise: &mut Rng,
) -> Result<HypergradReport, BilevelError> {
    let theta_node = Node::leaf(theta.clone());
    let x_gen = gen.generate(&theta_node, gen_batch, rng_gen)?;
    let phi0_node = Node::leaf(phi0.clone());
    let unrolled = unroll(
        est,
        &phi0_node,
        InnerObjective::Batch { samples: &x_gen },
        cfg,
        rng_noise,
    )?;
    finish_hypergrad(
        est,
        &theta_node,
        unrolled,
        &Node::constant(data_batch.clone()),
        None,
        rng_noise,
    )
}

/// Population-mode hypergradient: expectations under the generator and the
/// data distribution are quadrature sums, so the report is a deterministic
/// function of `theta` (up to estimator noise drawn from `rng_noise`).
pub fn hypergradient_population(
    gen: &ParametricMoGGenerator,
    theta: &Tensor,
    est: &dyn Estimator,
    phi0: &Tensor,
    data: &GaussianMixture,
    grid: &QuadratureGrid,
    cfg: &UnrollConfig,
    rng_noise: &mut Rng,
) -> Result<HypergradReport, BilevelError> {
    let theta_node = Node::leaf(theta.clone());
    let points = Node::constant(grid.nodes().clone());
    let gen_weights = gen
        .log_density_node(&theta_node, grid.nodes())?
        .exp()
        .scale(grid.cell_weight());
    let phi0_node = Node::leaf(phi0.clone());
    let unrolled = unroll(
        est,
        &phi0_node,
        InnerObjective::Weighted {
            points: &points,
            weights: &gen_weights,
        },
        cfg,
        rng_noise,
    )?;
    let data_weights: Vec<f64> = data
        .log_density_batch(grid.nodes())
        .map_err(ModelError::from)?
        .iter()
        .map(|l| l.exp() * grid.cell_weight())
        .collect();
    finish_hypergrad(
        est,
        &theta_node,
        unrolled,
        &points,
        Some(Node::constant(Tensor::vector(&data_weights))),
        rng_noise,
    )
}

fn finish_hypergrad(
    est: &dyn Estimator,
    theta_node: &Node,
    unrolled: Unrolled,
    data_points: &Node,
    data_weights: Option<Node>,
    rng_noise: &mut Rng,
) -> Result<HypergradReport, BilevelError> {
    let f_g = match &data_weights {
        None => est.log_likelihood(&unrolled.phi_k, data_points, rng_noise)?,
        Some(w) => est.weighted_log_likelihood(&unrolled.phi_k, data_points, w, rng_noise)?,
    };
    if !f_g.value().scalar_value().is_finite() {
        return Err(BilevelError::NonFinite {
            context: "surrogate objective",
            step: unrolled.f_e_per_step.len(),
        });
    }
    let grad = gradient(&f_g, std::slice::from_ref(theta_node))?.remove(0);
    if !grad.value().all_finite() {
        return Err(BilevelError::NonFinite {
            context: "hypergradient",
            step: unrolled.f_e_per_step.len(),
        });
    }
    Ok(HypergradReport {
        grad: grad.value().clone(),
        f_g: f_g.value().scalar_value(),
        f_e_first: unrolled.f_e_per_step.first().copied().unwrap_or(f64::NAN),
        phi_k: unrolled.phi_k.value().clone(),
    })
}
