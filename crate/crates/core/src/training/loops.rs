use std::time::Instant;

use crate::bilevel::{hypergradient, hypergradient_population, BilevelError, HypergradReport};
use crate::diffcore::{gradient, Node, Rng, Tensor};
use crate::distributions::QuadratureGrid;
use crate::metrics::{evaluate_metrics, ModeSpec};
use crate::models::{
    gan_value, log_one_minus_sigmoid, non_saturating_gen_value, Discriminator, Estimator,
    Generator,
};

use super::{
    make_data, population_grid, AdamState, BuiltEstimator, BuiltGenerator, Direction, TrainConfig,
    TrainError, TrainMethod, Trajectory, TrajectoryRow,
};

/// How a run ended.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RunStatus {
    Completed,
    /// A non-finite loss or gradient appeared; the trajectory holds
    /// everything recorded up to that point.
    Aborted { iter: u64, reason: String },
}

pub struct RunOutput {
    pub trajectory: Trajectory,
    pub final_theta: Tensor,
    pub final_phi: Option<Tensor>,
    pub final_psi: Option<Tensor>,
    pub status: RunStatus,
}

impl RunOutput {
    pub fn completed(&self) -> bool {
        matches!(self.status, RunStatus::Completed)
    }
}

// Stream ids: one per consumer of randomness.
const STREAM_THETA_INIT: u64 = 1;
const STREAM_PHI_INIT: u64 = 2;
const STREAM_PSI_INIT: u64 = 3;
const STREAM_GEN: u64 = 4;
const STREAM_DATA: u64 = 5;
const STREAM_NOISE: u64 = 6;
const STREAM_DISC: u64 = 7;
const STREAM_METRICS: u64 = 8;

/// Teaching-only training (Alg.-style loop: M estimator ascent steps, one
/// unrolled hypergradient step on the generator).
pub fn train_lbt(
    cfg: &TrainConfig,
    seed: u64,
    sink: &mut dyn FnMut(&TrajectoryRow),
) -> Result<RunOutput, TrainError> {
    expect_method(cfg, TrainMethod::Lbt)?;
    run(cfg, seed, sink)
}

/// Teaching + GAN: the estimator loop as in LBT, discriminator ascent on
/// the minimax value, and a combined generator step on
/// `f_G(phi^K) - lambda_G * f_GAN`.
pub fn train_lbt_gan(
    cfg: &TrainConfig,
    seed: u64,
    sink: &mut dyn FnMut(&TrajectoryRow),
) -> Result<RunOutput, TrainError> {
    expect_method(cfg, TrainMethod::LbtGan)?;
    run(cfg, seed, sink)
}

/// Vanilla GAN baseline (saturating generator loss by default).
pub fn train_gan(
    cfg: &TrainConfig,
    seed: u64,
    sink: &mut dyn FnMut(&TrajectoryRow),
) -> Result<RunOutput, TrainError> {
    expect_method(cfg, TrainMethod::Gan)?;
    run(cfg, seed, sink)
}

/// Dispatch on the configured method.
pub fn train(
    cfg: &TrainConfig,
    seed: u64,
    sink: &mut dyn FnMut(&TrajectoryRow),
) -> Result<RunOutput, TrainError> {
    run(cfg, seed, sink)
}

fn expect_method(cfg: &TrainConfig, method: TrainMethod) -> Result<(), TrainError> {
    if cfg.method != method {
        return Err(TrainError::BadConfig {
            field: "method",
            reason: format!("expected {method:?}, config says {:?}", cfg.method),
        });
    }
    Ok(())
}

struct EstimatorState {
    est: BuiltEstimator,
    phi: Tensor,
    adam: AdamState,
}

struct DiscriminatorState {
    disc: Discriminator,
    psi: Tensor,
    adam: AdamState,
}

fn run(
    cfg: &TrainConfig,
    seed: u64,
    sink: &mut dyn FnMut(&TrajectoryRow),
) -> Result<RunOutput, TrainError> {
    cfg.validate()?;
    let data = make_data(cfg.dataset);
    let dim = data.dim();
    let gen = BuiltGenerator::build(&cfg.generator, dim)?;
    let use_est = matches!(cfg.method, TrainMethod::Lbt | TrainMethod::LbtGan);
    let use_disc = matches!(cfg.method, TrainMethod::LbtGan | TrainMethod::Gan);

    let mut rng_gen = Rng::from_seed_stream(seed, STREAM_GEN);
    let mut rng_data = Rng::from_seed_stream(seed, STREAM_DATA);
    let mut rng_noise = Rng::from_seed_stream(seed, STREAM_NOISE);
    let mut rng_disc = Rng::from_seed_stream(seed, STREAM_DISC);
    let mut rng_metrics = Rng::from_seed_stream(seed, STREAM_METRICS);

    let mut theta = gen.init_params(&mut Rng::from_seed_stream(seed, STREAM_THETA_INIT));
    let mut adam_theta = AdamState::new(theta.numel());

    let mut estimator = if use_est {
        let est = BuiltEstimator::build(cfg.estimator.as_ref().expect("validated"), dim);
        let phi = est.init_params(&mut Rng::from_seed_stream(seed, STREAM_PHI_INIT));
        let adam = AdamState::new(phi.numel());
        Some(EstimatorState { est, phi, adam })
    } else {
        None
    };
    let mut discriminator = if use_disc {
        let spec = cfg.discriminator.as_ref().expect("validated");
        let disc = Discriminator::new(dim, &spec.hidden);
        let psi = disc.init_params(&mut Rng::from_seed_stream(seed, STREAM_PSI_INIT));
        let adam = AdamState::new(psi.numel());
        Some(DiscriminatorState { disc, psi, adam })
    } else {
        None
    };

    let population = cfg.unroll.population.then(population_grid);
    let record_theta = cfg
        .record_theta
        .unwrap_or(matches!(gen, BuiltGenerator::MoG(_)));
    let theta_cols = if record_theta { theta.numel() } else { 0 };
    let modes = ModeSpec::from_mixture(&data);

    let started = Instant::now();
    let mut trajectory = Trajectory {
        rows: Vec::with_capacity(cfg.iters + 1),
        theta_cols,
    };
    let mut record = |trajectory: &mut Trajectory, row: TrajectoryRow| {
        sink(&row);
        trajectory.rows.push(row);
    };
    record(
        &mut trajectory,
        TrajectoryRow {
            iter: 0,
            f_e: None,
            f_g: None,
            gan_d: None,
            gan_g: None,
            theta_norm: theta.norm(),
            theta: record_theta.then(|| theta.data().to_vec()),
            modes_covered: None,
            hq_fraction: None,
            intra_kl: None,
            wall_time_s: started.elapsed().as_secs_f64(),
        },
    );

    let abort = |trajectory: Trajectory,
                 theta: Tensor,
                 estimator: Option<EstimatorState>,
                 discriminator: Option<DiscriminatorState>,
                 iter: u64,
                 reason: String| {
        Ok(RunOutput {
            trajectory,
            final_theta: theta,
            final_phi: estimator.map(|e| e.phi),
            final_psi: discriminator.map(|d| d.psi),
            status: RunStatus::Aborted { iter, reason },
        })
    };

    for t in 0..cfg.iters {
        let iter = (t + 1) as u64;

        // M estimator ascent steps on fresh generated batches (the
        // generator is frozen here, so batches are plain values).
        let mut f_e = None;
        if let Some(state) = estimator.as_mut() {
            let pop_weights = match (&population, &gen) {
                (Some(grid), BuiltGenerator::MoG(mog)) => {
                    Some(population_weights(mog, &theta, grid)?)
                }
                _ => None,
            };
            for _ in 0..cfg.m_steps {
                let (value, grad) = match (&population, &pop_weights) {
                    (Some(grid), Some(w)) => {
                        estimator_value_grad_population(&state.est, &state.phi, grid, w, &mut rng_noise)?
                    }
                    _ => {
                        let batch = gen
                            .generate(&Node::constant(theta.clone()), cfg.batch_gen, &mut rng_gen)?
                            .value()
                            .clone();
                        estimator_value_grad(&state.est, &state.phi, &batch, &mut rng_noise)?
                    }
                };
                if !value.is_finite() || !grad.all_finite() {
                    return abort(
                        trajectory,
                        theta,
                        estimator,
                        discriminator,
                        iter,
                        "non-finite estimator objective".into(),
                    );
                }
                state.adam.step(&mut state.phi, &grad, cfg.eta_phi, Direction::Ascend);
                f_e = Some(value);
            }
        }

        // Discriminator ascent.
        let mut gan_d = None;
        if let Some(state) = discriminator.as_mut() {
            for _ in 0..cfg.disc_steps {
                let real = data.sample(cfg.batch_disc, &mut rng_disc);
                let fake = gen
                    .generate(&Node::constant(theta.clone()), cfg.batch_disc, &mut rng_disc)?
                    .value()
                    .clone();
                let psi_node = Node::leaf(state.psi.clone());
                let value = gan_value(
                    &state.disc,
                    &psi_node,
                    &Node::constant(real),
                    &Node::constant(fake),
                )?;
                let grad = gradient(&value, std::slice::from_ref(&psi_node))
                    .map_err(crate::models::ModelError::from)?;
                let grad = grad[0].value().clone();
                let v = value.value().scalar_value();
                if !v.is_finite() || !grad.all_finite() {
                    return abort(
                        trajectory,
                        theta,
                        estimator,
                        discriminator,
                        iter,
                        "non-finite discriminator objective".into(),
                    );
                }
                state.adam.step(&mut state.psi, &grad, cfg.eta_psi, Direction::Ascend);
                gan_d = Some(v);
            }
        }

        // Generator step: hypergradient of the teaching surrogate plus the
        // (weighted) GAN term, one combined Adam ascent.
        let mut total_grad = Tensor::zeros([theta.numel()]);
        let mut f_g = None;
        if let Some(state) = estimator.as_mut() {
            let report = match &population {
                Some(grid) => hypergradient_population(
                    gen.as_mog().expect("validated"),
                    &theta,
                    &state.est,
                    &state.phi,
                    &data,
                    grid,
                    &cfg.unroll,
                    &mut rng_noise,
                ),
                None => {
                    let data_batch = data.sample(cfg.batch_data, &mut rng_data);
                    hypergradient(
                        &gen,
                        &theta,
                        &state.est,
                        &state.phi,
                        &data_batch,
                        cfg.batch_gen,
                        &cfg.unroll,
                        &mut rng_gen,
                        &mut rng_noise,
                    )
                }
            };
            let report = match report {
                Ok(r) => r,
                Err(BilevelError::NonFinite { context, step }) => {
                    return abort(
                        trajectory,
                        theta,
                        estimator,
                        discriminator,
                        iter,
                        format!("{context} at inner step {step}"),
                    );
                }
                Err(e) => return Err(e.into()),
            };
            let HypergradReport { grad, f_g: value, .. } = report;
            for (acc, g) in total_grad.data_mut().iter_mut().zip(grad.data()) {
                *acc += g;
            }
            f_g = Some(value);
        }

        let mut gan_g = None;
        if let Some(state) = discriminator.as_ref() {
            let weight = match cfg.method {
                TrainMethod::LbtGan => cfg.lambda_g,
                TrainMethod::Gan => 1.0,
                TrainMethod::Lbt => 0.0,
            };
            if weight > 0.0 {
                let theta_node = Node::leaf(theta.clone());
                let fake = gen.generate(&theta_node, cfg.batch_gen, &mut rng_gen)?;
                let psi_node = Node::constant(state.psi.clone());
                // The term the generator ascends: -E[ln(1 - D)] in the
                // minimax form, +E[ln D] in the non-saturating form.
                let term = if cfg.non_saturating {
                    non_saturating_gen_value(&state.disc, &psi_node, &fake)?
                } else {
                    log_one_minus_sigmoid(&state.disc.logits(&psi_node, &fake)?)
                        .mean()
                        .neg()
                };
                let grad = gradient(&term, std::slice::from_ref(&theta_node))
                    .map_err(crate::models::ModelError::from)?;
                let grad = grad[0].value().clone();
                let v = term.value().scalar_value();
                if !v.is_finite() || !grad.all_finite() {
                    return abort(
                        trajectory,
                        theta,
                        estimator,
                        discriminator,
                        iter,
                        "non-finite generator GAN term".into(),
                    );
                }
                for (acc, g) in total_grad.data_mut().iter_mut().zip(grad.data()) {
                    *acc += weight * g;
                }
                gan_g = Some(v);
            }
        }

        adam_theta.step(&mut theta, &total_grad, cfg.eta_theta, Direction::Ascend);
        if !theta.all_finite() {
            return abort(
                trajectory,
                theta,
                estimator,
                discriminator,
                iter,
                "non-finite generator parameters".into(),
            );
        }

        let metrics = if cfg.metric_every > 0 && iter % cfg.metric_every as u64 == 0 {
            let samples = gen.sample_values(&theta, cfg.metric_samples, &mut rng_metrics)?;
            Some(evaluate_metrics(&samples, &modes, cfg.hq_rule))
        } else {
            None
        };

        record(
            &mut trajectory,
            TrajectoryRow {
                iter,
                f_e,
                f_g,
                gan_d,
                gan_g,
                theta_norm: theta.norm(),
                theta: record_theta.then(|| theta.data().to_vec()),
                modes_covered: metrics.as_ref().map(|m| m.modes_covered),
                hq_fraction: metrics.as_ref().map(|m| m.high_quality_fraction),
                intra_kl: metrics.as_ref().map(|m| m.intra_mode_kl),
                wall_time_s: started.elapsed().as_secs_f64(),
            },
        );
    }

    Ok(RunOutput {
        trajectory,
        final_theta: theta,
        final_phi: estimator.map(|e| e.phi),
        final_psi: discriminator.map(|d| d.psi),
        status: RunStatus::Completed,
    })
}

fn population_weights(
    mog: &crate::models::ParametricMoGGenerator,
    theta: &Tensor,
    grid: &QuadratureGrid,
) -> Result<Tensor, TrainError> {
    let node = mog.log_density_node(&Node::constant(theta.clone()), grid.nodes())?;
    let w = grid.cell_weight();
    Ok(node.value().map(|l| l.exp() * w))
}

fn estimator_value_grad(
    est: &BuiltEstimator,
    phi: &Tensor,
    batch: &Tensor,
    rng_noise: &mut Rng,
) -> Result<(f64, Tensor), TrainError> {
    let phi_node = Node::leaf(phi.clone());
    let value = est.log_likelihood(&phi_node, &Node::constant(batch.clone()), rng_noise)?;
    let grad = gradient(&value, std::slice::from_ref(&phi_node))
        .map_err(crate::models::ModelError::from)?;
    Ok((value.value().scalar_value(), grad[0].value().clone()))
}

fn estimator_value_grad_population(
    est: &BuiltEstimator,
    phi: &Tensor,
    grid: &QuadratureGrid,
    weights: &Tensor,
    rng_noise: &mut Rng,
) -> Result<(f64, Tensor), TrainError> {
    let phi_node = Node::leaf(phi.clone());
    let value = est.weighted_log_likelihood(
        &phi_node,
        &Node::constant(grid.nodes().clone()),
        &Node::constant(weights.clone()),
        rng_noise,
    )?;
    let grad = gradient(&value, std::slice::from_ref(&phi_node))
        .map_err(crate::models::ModelError::from)?;
    Ok((value.value().scalar_value(), grad[0].value().clone()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distributions::DatasetKind;
    use crate::training::{
        trajectory_csv, DiscriminatorSpec, EstimatorSpec, GeneratorSpec, MoGInitSpec,
    };

    fn toy_lbt_config() -> TrainConfig {
        TrainConfig {
            dataset: DatasetKind::Bimodal1d,
            method: TrainMethod::Lbt,
            generator: GeneratorSpec::ParametricMog {
                k: 2,
                std: 1.0,
                init: MoGInitSpec::UniformBox { lo: -3.5, hi: -2.5 },
            },
            estimator: Some(EstimatorSpec::Gaussian { learn_std: false }),
            discriminator: None,
            unroll: crate::bilevel::UnrollConfig::plain(5, 0.5),
            m_steps: 3,
            disc_steps: 1,
            lambda_g: 0.0,
            eta_theta: 0.05,
            eta_phi: 0.05,
            eta_psi: 1e-3,
            batch_gen: 64,
            batch_data: 64,
            batch_disc: 64,
            iters: 20,
            metric_every: 0,
            metric_samples: 1000,
            hq_rule: crate::metrics::HqRule::Radial,
            non_saturating: false,
            record_theta: None,
        }
    }

    #[test]
    fn runs_are_bit_reproducible() {
        let cfg = toy_lbt_config();
        let a = train_lbt(&cfg, 7, &mut |_| {}).unwrap();
        let b = train_lbt(&cfg, 7, &mut |_| {}).unwrap();
        assert!(a.completed() && b.completed());
        assert_eq!(trajectory_csv(&a.trajectory), trajectory_csv(&b.trajectory));
        assert_eq!(a.final_theta, b.final_theta);
    }

    #[test]
    fn zero_iterations_record_only_the_initial_row() {
        let mut cfg = toy_lbt_config();
        cfg.iters = 0;
        let mut seen = 0;
        let out = train_lbt(&cfg, 1, &mut |_row| seen += 1).unwrap();
        assert_eq!(out.trajectory.rows.len(), 1);
        assert_eq!(seen, 1);
        assert_eq!(out.trajectory.rows[0].iter, 0);
    }

    #[test]
    fn lbt_gan_with_zero_lambda_matches_lbt_exactly() {
        let lbt_cfg = toy_lbt_config();
        let mut gan_cfg = toy_lbt_config();
        gan_cfg.method = TrainMethod::LbtGan;
        gan_cfg.lambda_g = 0.0;
        gan_cfg.discriminator = Some(DiscriminatorSpec { hidden: vec![16] });

        let a = train_lbt(&lbt_cfg, 3, &mut |_| {}).unwrap();
        let b = train_lbt_gan(&gan_cfg, 3, &mut |_| {}).unwrap();
        assert_eq!(a.final_theta, b.final_theta, "theta paths must coincide");
        for (ra, rb) in a.trajectory.rows.iter().zip(&b.trajectory.rows) {
            assert_eq!(ra.f_e.map(f64::to_bits), rb.f_e.map(f64::to_bits));
            assert_eq!(ra.f_g.map(f64::to_bits), rb.f_g.map(f64::to_bits));
            assert_eq!(ra.theta, rb.theta);
            assert!(rb.gan_g.is_none(), "no generator GAN term at lambda 0");
        }
    }

    #[test]
    fn constant_half_discriminator_gives_zero_generator_gradient() {
        let gen = BuiltGenerator::build(
            &GeneratorSpec::ParametricMog {
                k: 2,
                std: 1.0,
                init: MoGInitSpec::Fixed {
                    means: vec![-1.0, 1.0],
                },
            },
            1,
        )
        .unwrap();
        let disc = Discriminator::new(1, &[8, 8]);
        let psi = Node::constant(Tensor::zeros([disc.param_count()]));
        let theta_node = Node::leaf(Tensor::vector(&[-1.0, 1.0]));
        let fake = gen.generate(&theta_node, 32, &mut Rng::from_seed(2)).unwrap();
        let term = log_one_minus_sigmoid(&disc.logits(&psi, &fake).unwrap())
            .mean()
            .neg();
        let g = gradient(&term, std::slice::from_ref(&theta_node))
            .unwrap()
            .remove(0);
        assert!(g.value().data().iter().all(|&v| v == 0.0), "{:?}", g.value());
    }

    #[test]
    fn estimator_ascent_is_mostly_monotone_on_heldout_batch() {
        // Gaussian and mixture estimators tracking a frozen generator:
        // f_E on a fixed held-out batch is non-decreasing in at least 90%
        // of the ascent steps while the estimator approaches its optimum.
        let data = make_data(DatasetKind::Bimodal1d);
        for (name, est, mut phi) in [
            (
                "gaussian",
                BuiltEstimator::build(&EstimatorSpec::Gaussian { learn_std: false }, 1),
                Tensor::vector(&[-2.5]),
            ),
            (
                "mog",
                BuiltEstimator::build(
                    &EstimatorSpec::Mog {
                        k: 2,
                        init_mean_scale: 0.5,
                        init_log_std: 0.0,
                    },
                    1,
                ),
                Tensor::vector(&[0.0, 0.0, -1.0, 0.5, 0.0, 0.0]),
            ),
        ] {
            let mut adam = AdamState::new(phi.numel());
            let mut rng = Rng::from_seed(12);
            let held_out = data.sample(512, &mut rng);
            let mut held_out_values = Vec::new();
            for _ in 0..50 {
                let (held, _) =
                    estimator_value_grad(&est, &phi, &held_out, &mut Rng::from_seed(0)).unwrap();
                held_out_values.push(held);
                let batch = data.sample(128, &mut rng);
                let (_, grad) =
                    estimator_value_grad(&est, &phi, &batch, &mut Rng::from_seed(0)).unwrap();
                adam.step(&mut phi, &grad, 0.05, Direction::Ascend);
            }
            let increases = held_out_values
                .windows(2)
                .filter(|w| w[1] >= w[0])
                .count();
            let frac = increases as f64 / (held_out_values.len() - 1) as f64;
            assert!(frac >= 0.9, "monotone fraction {frac} for {name}");
        }
    }

    #[test]
    fn vae_elbo_improves_under_inner_training() {
        // Fixed batch, 200 Adam steps: final ELBO (frozen eval noise)
        // beats the initial one in at least 8 of 10 seeds.
        let data = make_data(DatasetKind::Ring8);
        let est = BuiltEstimator::build(
            &EstimatorSpec::Vae {
                latent_dim: 2,
                hidden: vec![16, 16],
                elbo_samples: 1,
            },
            2,
        );
        let mut improved = 0;
        for seed in 0..10 {
            let mut phi = est.init_params(&mut Rng::from_seed_stream(seed, 1));
            let mut adam = AdamState::new(phi.numel());
            let batch = data.sample(128, &mut Rng::from_seed_stream(seed, 2));
            let eval_noise = Rng::from_seed_stream(seed, 3);
            let mut train_noise = Rng::from_seed_stream(seed, 4);
            let (start, _) =
                estimator_value_grad(&est, &phi, &batch, &mut eval_noise.clone()).unwrap();
            for _ in 0..200 {
                let (v, grad) = estimator_value_grad(&est, &phi, &batch, &mut train_noise).unwrap();
                assert!(v.is_finite());
                adam.step(&mut phi, &grad, 1e-2, Direction::Ascend);
            }
            let (end, _) =
                estimator_value_grad(&est, &phi, &batch, &mut eval_noise.clone()).unwrap();
            if end > start {
                improved += 1;
            }
        }
        assert!(improved >= 8, "improved in {improved}/10 seeds");
    }

    #[test]
    fn gan_run_is_reproducible_and_records_gan_columns() {
        let cfg = TrainConfig {
            dataset: DatasetKind::Bimodal1d,
            method: TrainMethod::Gan,
            generator: GeneratorSpec::ParametricMog {
                k: 2,
                std: 1.0,
                init: MoGInitSpec::UniformBox { lo: -3.5, hi: -2.5 },
            },
            estimator: None,
            discriminator: Some(DiscriminatorSpec { hidden: vec![16] }),
            unroll: crate::bilevel::UnrollConfig::plain(1, 0.5),
            m_steps: 1,
            disc_steps: 2,
            lambda_g: 1.0,
            eta_theta: 0.01,
            eta_phi: 0.01,
            eta_psi: 0.01,
            batch_gen: 32,
            batch_data: 32,
            batch_disc: 32,
            iters: 10,
            metric_every: 0,
            metric_samples: 100,
            hq_rule: crate::metrics::HqRule::Radial,
            non_saturating: false,
            record_theta: None,
        };
        let a = train_gan(&cfg, 5, &mut |_| {}).unwrap();
        let b = train_gan(&cfg, 5, &mut |_| {}).unwrap();
        assert_eq!(trajectory_csv(&a.trajectory), trajectory_csv(&b.trajectory));
        let last = a.trajectory.last().unwrap();
        assert!(last.gan_d.is_some() && last.gan_g.is_some());
        assert!(last.f_e.is_none() && last.f_g.is_none());
    }

    #[test]
    fn trained_discriminator_approaches_the_density_ratio() {
        // Fixed generator; after enough ascent steps D is within 0.05 of
        // p_D / (p_D + p_G) sup-norm over the high-density region.
        let data = make_data(DatasetKind::Bimodal1d);
        let gen_mix = crate::distributions::two_mean_model(-1.0, 1.0);
        let disc = Discriminator::new(1, &[48]);
        let mut psi = disc.init_params(&mut Rng::from_seed(3));
        let mut adam = AdamState::new(psi.numel());
        let mut rng = Rng::from_seed(4);
        for _ in 0..2500 {
            let real = data.sample(256, &mut rng);
            let fake = gen_mix.sample(256, &mut rng);
            let psi_node = Node::leaf(psi.clone());
            let v = gan_value(
                &disc,
                &psi_node,
                &Node::constant(real),
                &Node::constant(fake),
            )
            .unwrap();
            let g = gradient(&v, std::slice::from_ref(&psi_node))
                .unwrap()
                .remove(0);
            adam.step(&mut psi, g.value(), 2e-3, Direction::Ascend);
        }
        let grid = QuadratureGrid::new_1d(-6.0, 6.0, 241).unwrap();
        let p: Vec<f64> = data
            .log_density_batch(grid.nodes())
            .unwrap()
            .iter()
            .map(|l| l.exp())
            .collect();
        let q: Vec<f64> = gen_mix
            .log_density_batch(grid.nodes())
            .unwrap()
            .iter()
            .map(|l| l.exp())
            .collect();
        let d = disc
            .prob(
                &Node::constant(psi),
                &Node::constant(grid.nodes().clone()),
            )
            .unwrap();
        let mut sup: f64 = 0.0;
        for i in 0..grid.len() {
            if p[i] + q[i] > 0.05 {
                let target = p[i] / (p[i] + q[i]);
                sup = sup.max((d.value().data()[i] - target).abs());
            }
        }
        assert!(sup < 0.05, "sup-norm {sup}");
    }
}
