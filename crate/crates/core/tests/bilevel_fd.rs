//! The hypergradient equals finite differences of the unrolled surrogate
//! across estimator kinds, with both sampled and population expectations.

use lbt_core::bilevel::{
    hypergradient, hypergradient_population, unroll, InnerObjective, UnrollConfig,
};
use lbt_core::diffcore::{Node, Rng, Tensor};
use lbt_core::distributions::{make_dataset, DatasetKind, QuadratureGrid};
use lbt_core::models::{
    Estimator, GaussianEstimator, Generator, MlpGenerator, MoGEstimator, MoGInit,
    ParametricMoGGenerator, VaeEstimator,
};

/// Value of `f_G(phi^K(theta))` with every random draw frozen by cloning
/// the RNG states the hypergradient call starts from.
fn surrogate_value(
    gen: &dyn Generator,
    theta: &Tensor,
    est: &dyn Estimator,
    phi0: &Tensor,
    data_batch: &Tensor,
    gen_batch: usize,
    cfg: &UnrollConfig,
    rng_gen: &Rng,
    rng_noise: &Rng,
) -> f64 {
    let mut rng_gen = rng_gen.clone();
    let mut rng_noise = rng_noise.clone();
    let x_gen = gen
        .generate(&Node::constant(theta.clone()), gen_batch, &mut rng_gen)
        .unwrap();
    let unrolled = unroll(
        est,
        &Node::leaf(phi0.clone()),
        InnerObjective::Batch { samples: &x_gen },
        cfg,
        &mut rng_noise,
    )
    .unwrap();
    est.log_likelihood(
        &unrolled.phi_k,
        &Node::constant(data_batch.clone()),
        &mut rng_noise,
    )
    .unwrap()
    .value()
    .scalar_value()
}

fn check_case(
    name: &str,
    gen: &dyn Generator,
    est: &dyn Estimator,
    cfg: &UnrollConfig,
    seed: u64,
) {
    let data = if est.data_dim() == 1 {
        make_dataset(DatasetKind::Bimodal1d)
    } else {
        make_dataset(DatasetKind::Ring8)
    };
    let mut init_rng = Rng::from_seed_stream(seed, 1);
    let theta = gen.init_params(&mut init_rng);
    let phi0 = est.init_params(&mut Rng::from_seed_stream(seed, 2));
    let data_batch = data.sample(24, &mut Rng::from_seed_stream(seed, 3));
    let gen_batch = 16;
    let rng_gen = Rng::from_seed_stream(seed, 4);
    let rng_noise = Rng::from_seed_stream(seed, 5);

    let report = hypergradient(
        gen,
        &theta,
        est,
        &phi0,
        &data_batch,
        gen_batch,
        cfg,
        &mut rng_gen.clone(),
        &mut rng_noise.clone(),
    )
    .unwrap();

    let eps = 1e-5;
    let mut worst = 0.0_f64;
    for i in 0..theta.numel() {
        let mut plus = theta.clone();
        plus.data_mut()[i] += eps;
        let mut minus = theta.clone();
        minus.data_mut()[i] -= eps;
        let fp = surrogate_value(
            gen, &plus, est, &phi0, &data_batch, gen_batch, cfg, &rng_gen, &rng_noise,
        );
        let fm = surrogate_value(
            gen, &minus, est, &phi0, &data_batch, gen_batch, cfg, &rng_gen, &rng_noise,
        );
        let fd = (fp - fm) / (2.0 * eps);
        let a = report.grad.data()[i];
        let rel = (a - fd).abs() / a.abs().max(fd.abs()).max(1.0);
        worst = worst.max(rel);
    }
    assert!(worst < 1e-4, "{name}: worst rel err {worst}");

    // The surrogate value itself must match the report.
    let direct = surrogate_value(
        gen, &theta, est, &phi0, &data_batch, gen_batch, cfg, &rng_gen, &rng_noise,
    );
    assert!((direct - report.f_g).abs() < 1e-12, "{name}: value mismatch");
}

#[test]
fn gaussian_estimator_hypergradient_matches_fd() {
    let gen = ParametricMoGGenerator::two_mean_1d(MoGInit::UniformBox { lo: -3.5, hi: -2.5 });
    let est = GaussianEstimator::unit_variance(1);
    check_case("gaussian", &gen, &est, &UnrollConfig::plain(3, 0.4), 11);
}

#[test]
fn learned_std_gaussian_hypergradient_matches_fd() {
    let gen = ParametricMoGGenerator::two_mean_1d(MoGInit::UniformBox { lo: -1.0, hi: 1.0 });
    let est = GaussianEstimator::with_learnable_std(1);
    check_case("full-gaussian", &gen, &est, &UnrollConfig::plain(2, 0.2), 12);
}

#[test]
fn mog_estimator_hypergradient_matches_fd() {
    let gen = MlpGenerator::new(2, &[4], 1);
    let est = MoGEstimator::new(2, 1);
    check_case("mog", &gen, &est, &UnrollConfig::plain(2, 0.2), 13);
}

#[test]
fn vae_estimator_hypergradient_matches_fd_with_frozen_noise() {
    let gen = MlpGenerator::new(2, &[5], 2);
    let est = VaeEstimator::new(2, 2, &[6]);
    check_case("vae", &gen, &est, &UnrollConfig::plain(2, 0.05), 14);
}

#[test]
fn adam_unrolled_hypergradient_matches_fd() {
    let gen = ParametricMoGGenerator::two_mean_1d(MoGInit::UniformBox { lo: -2.0, hi: 2.0 });
    let est = GaussianEstimator::unit_variance(1);
    let cfg = UnrollConfig {
        k: 3,
        eta_phi: 0.2,
        optimizer: lbt_core::bilevel::InnerOptimizer::AdamUnrolled,
        population: false,
    };
    check_case("adam-unrolled", &gen, &est, &cfg, 15);
}

#[test]
fn population_mode_hypergradient_matches_fd() {
    let gen = ParametricMoGGenerator::two_mean_1d(MoGInit::Fixed(
        Tensor::matrix(2, 1, vec![-2.5, -3.5]).unwrap(),
    ));
    let est = GaussianEstimator::unit_variance(1);
    let data = make_dataset(DatasetKind::Bimodal1d);
    let grid = QuadratureGrid::default_1d();
    let cfg = UnrollConfig::plain(4, 0.3);
    let theta = Tensor::vector(&[-2.5, -3.5]);
    let phi0 = Tensor::vector(&[0.2]);

    let report = hypergradient_population(
        &gen,
        &theta,
        &est,
        &phi0,
        &data,
        &grid,
        &cfg,
        &mut Rng::from_seed(0),
    )
    .unwrap();

    let value = |theta: &Tensor| {
        hypergradient_population(
            &gen,
            theta,
            &est,
            &phi0,
            &data,
            &grid,
            &cfg,
            &mut Rng::from_seed(0),
        )
        .unwrap()
        .f_g
    };
    let eps = 1e-6;
    for i in 0..2 {
        let mut plus = theta.clone();
        plus.data_mut()[i] += eps;
        let mut minus = theta.clone();
        minus.data_mut()[i] -= eps;
        let fd = (value(&plus) - value(&minus)) / (2.0 * eps);
        let a = report.grad.data()[i];
        let rel = (a - fd).abs() / a.abs().max(fd.abs()).max(1.0);
        assert!(rel < 1e-4, "coord {i}: {a} vs {fd}");
    }
}
