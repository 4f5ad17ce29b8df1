//! Mode-coverage metrics for mixture benchmarks.
//!
//! A sample is a high-quality sample of a mode when its Mahalanobis
//! distance under the mode's diagonal covariance is at most 3 (radial
//! reading of "within three standard deviations"; a per-axis variant is
//! available behind a flag). A mode counts as covered when its
//! high-quality count strictly exceeds 20% of `n / K`. The intra-mode KL
//! assigns every sample (high quality or not) to the Euclidean-nearest
//! mode mean, fits a diagonal Gaussian by maximum likelihood with a
//! variance floor, and reports `KL(true mode || fitted)` averaged over
//! modes with at least two assigned samples.

mod kde;

pub use kde::{kde_grid, scott_bandwidth};

use crate::diffcore::Tensor;
use crate::distributions::{gaussian_kl_closed_form, DiagGaussian, GaussianMixture};

/// Mode means and per-mode stds a metric evaluation compares against.
#[derive(Debug, Clone)]
pub struct ModeSpec {
    /// `K x D` mode means.
    pub means: Tensor,
    /// `K x D` per-mode standard deviations.
    pub stds: Tensor,
}

impl ModeSpec {
    pub fn from_mixture(mog: &GaussianMixture) -> Self {
        Self {
            means: mog.means().clone(),
            stds: mog.stds().clone(),
        }
    }

    pub fn k(&self) -> usize {
        self.means.rows()
    }

    pub fn dim(&self) -> usize {
        self.means.cols()
    }
}

/// How "within three standard deviations" is interpreted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HqRule {
    /// Mahalanobis radius `<= 3` (default).
    Radial,
    /// Every axis within 3 stds.
    PerAxis,
}

impl Default for HqRule {
    fn default() -> Self {
        HqRule::Radial
    }
}

const HQ_SIGMA: f64 = 3.0;
const VARIANCE_FLOOR: f64 = 1e-6;

/// Per-sample high-quality flag with the nearest qualifying mode.
///
/// `Some(k)` when the sample is within the three-sigma region of at least
/// one mode; `k` is the qualifying mode of smallest Mahalanobis distance.
pub fn high_quality_mask(samples: &Tensor, modes: &ModeSpec, rule: HqRule) -> Vec<Option<usize>> {
    let (n, d) = (samples.rows(), samples.cols());
    assert_eq!(d, modes.dim(), "sample dim {d} vs mode dim {}", modes.dim());
    let k = modes.k();
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let x = samples.row(i);
        let mut best: Option<(usize, f64)> = None;
        for m in 0..k {
            let mu = modes.means.row(m);
            let sd = modes.stds.row(m);
            let mut maha_sq = 0.0;
            let mut qualifies_axes = true;
            for j in 0..d {
                let z = (x[j] - mu[j]) / sd[j];
                maha_sq += z * z;
                if z.abs() > HQ_SIGMA {
                    qualifies_axes = false;
                }
            }
            let qualifies = match rule {
                HqRule::Radial => maha_sq <= HQ_SIGMA * HQ_SIGMA,
                HqRule::PerAxis => qualifies_axes,
            };
            if qualifies && best.map_or(true, |(_, b)| maha_sq < b) {
                best = Some((m, maha_sq));
            }
        }
        out.push(best.map(|(m, _)| m));
    }
    out
}

/// Modes covered: count of modes whose high-quality sample count strictly
/// exceeds `0.2 * n / K`, plus the per-mode counts.
pub fn modes_covered(samples: &Tensor, modes: &ModeSpec, rule: HqRule) -> (usize, Vec<usize>) {
    let mask = high_quality_mask(samples, modes, rule);
    let mut counts = vec![0usize; modes.k()];
    for assigned in mask.into_iter().flatten() {
        counts[assigned] += 1;
    }
    let threshold = 0.2 * samples.rows() as f64 / modes.k() as f64;
    let covered = counts.iter().filter(|&&c| c as f64 > threshold).count();
    (covered, counts)
}

/// Per-mode intra-mode KL divergences.
#[derive(Debug, Clone, serde::Serialize)]
pub struct IntraModeKl {
    /// Average over modes with at least two assigned samples; `NaN` when
    /// no mode qualifies.
    pub average: f64,
    /// `KL(true || fitted)` per mode; `None` for excluded modes.
    pub per_mode: Vec<Option<f64>>,
    /// Modes excluded for having fewer than two assigned samples.
    pub excluded: Vec<usize>,
}

/// Assign every sample to the Euclidean-nearest mode mean, fit a diagonal
/// Gaussian per mode by MLE (variance floored at `1e-6`), and report
/// `KL(true mode || fitted)`.
pub fn intra_mode_kl(samples: &Tensor, modes: &ModeSpec) -> IntraModeKl {
    let (n, d) = (samples.rows(), samples.cols());
    assert_eq!(d, modes.dim());
    let k = modes.k();
    let mut assigned: Vec<Vec<usize>> = vec![Vec::new(); k];
    for i in 0..n {
        let x = samples.row(i);
        let mut best = 0;
        let mut best_dist = f64::INFINITY;
        for m in 0..k {
            let mu = modes.means.row(m);
            let dist: f64 = x
                .iter()
                .zip(mu)
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            if dist < best_dist {
                best_dist = dist;
                best = m;
            }
        }
        assigned[best].push(i);
    }

    let mut per_mode = vec![None; k];
    let mut excluded = Vec::new();
    let mut total = 0.0;
    let mut counted = 0usize;
    for m in 0..k {
        if assigned[m].len() < 2 {
            excluded.push(m);
            continue;
        }
        let rows = &assigned[m];
        let cnt = rows.len() as f64;
        let mut mean = vec![0.0; d];
        for &i in rows {
            for (acc, v) in mean.iter_mut().zip(samples.row(i)) {
                *acc += v;
            }
        }
        for v in mean.iter_mut() {
            *v /= cnt;
        }
        let mut var = vec![0.0; d];
        for &i in rows {
            for j in 0..d {
                let c = samples.row(i)[j] - mean[j];
                var[j] += c * c;
            }
        }
        let std: Vec<f64> = var
            .iter()
            .map(|v| (v / cnt).max(VARIANCE_FLOOR).sqrt())
            .collect();
        let truth = DiagGaussian::new(modes.means.row(m).to_vec(), modes.stds.row(m).to_vec())
            .expect("mode spec stds positive");
        let fitted = DiagGaussian::new(mean, std).expect("floored stds positive");
        let kl = gaussian_kl_closed_form(&truth, &fitted).expect("dims agree");
        per_mode[m] = Some(kl);
        total += kl;
        counted += 1;
    }
    IntraModeKl {
        average: if counted > 0 {
            total / counted as f64
        } else {
            f64::NAN
        },
        per_mode,
        excluded,
    }
}

/// One full metric evaluation.
#[derive(Debug, Clone, serde::Serialize)]
pub struct MetricReport {
    pub sample_count: usize,
    pub high_quality_fraction: f64,
    pub modes_covered: usize,
    pub mode_count: usize,
    pub per_mode_hq_counts: Vec<usize>,
    pub intra_mode_kl: f64,
    pub intra_mode_excluded: Vec<usize>,
}

pub fn evaluate_metrics(samples: &Tensor, modes: &ModeSpec, rule: HqRule) -> MetricReport {
    let n = samples.rows();
    let mask = high_quality_mask(samples, modes, rule);
    let hq = mask.iter().filter(|m| m.is_some()).count();
    let (covered, counts) = modes_covered(samples, modes, rule);
    let intra = intra_mode_kl(samples, modes);
    MetricReport {
        sample_count: n,
        high_quality_fraction: hq as f64 / n.max(1) as f64,
        modes_covered: covered,
        mode_count: modes.k(),
        per_mode_hq_counts: counts,
        intra_mode_kl: intra.average,
        intra_mode_excluded: intra.excluded,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffcore::Rng;
    use crate::distributions::{make_dataset, ring_mixture, DatasetKind};

    fn ring_modes() -> ModeSpec {
        ModeSpec::from_mixture(&make_dataset(DatasetKind::Ring8))
    }

    #[test]
    fn sample_at_mode_mean_is_high_quality() {
        let modes = ring_modes();
        let samples = Tensor::matrix(1, 2, vec![1.0, 0.0]).unwrap();
        let mask = high_quality_mask(&samples, &modes, HqRule::Radial);
        assert_eq!(mask, vec![Some(0)]);
    }

    #[test]
    fn boundary_is_inclusive_and_beyond_is_not() {
        let modes = ModeSpec {
            means: Tensor::matrix(1, 2, vec![0.0, 0.0]).unwrap(),
            stds: Tensor::matrix(1, 2, vec![1.0, 1.0]).unwrap(),
        };
        let exactly = Tensor::matrix(1, 2, vec![3.0, 0.0]).unwrap();
        assert_eq!(
            high_quality_mask(&exactly, &modes, HqRule::Radial),
            vec![Some(0)]
        );
        let beyond = Tensor::matrix(1, 2, vec![3.01, 0.0]).unwrap();
        assert_eq!(high_quality_mask(&beyond, &modes, HqRule::Radial), vec![None]);
    }

    #[test]
    fn true_samples_hit_chi_square_fraction() {
        let data = make_dataset(DatasetKind::Ring8);
        let samples = data.sample(50_000, &mut Rng::from_seed(123));
        let mask = high_quality_mask(&samples, &ring_modes(), HqRule::Radial);
        let frac = mask.iter().filter(|m| m.is_some()).count() as f64 / 50_000.0;
        let expected = 1.0 - (-4.5f64).exp();
        assert!(
            (frac - expected).abs() < 0.003,
            "fraction {frac} vs {expected}"
        );
    }

    #[test]
    fn collapsed_samples_cover_one_mode() {
        let modes = ring_modes();
        let mut rng = Rng::from_seed(9);
        let single = ring_mixture(1, 1.0, 0.1); // just mode 0
        let samples = single.sample(8000, &mut rng);
        let (covered, counts) = modes_covered(&samples, &modes, HqRule::Radial);
        assert_eq!(covered, 1, "counts {counts:?}");
    }

    #[test]
    fn true_ring_samples_cover_all_modes() {
        let data = make_dataset(DatasetKind::Ring8);
        for seed in 0..20 {
            let samples = data.sample(8000, &mut Rng::from_seed(seed));
            let (covered, _) = modes_covered(&samples, &ring_modes(), HqRule::Radial);
            assert_eq!(covered, 8, "seed {seed}");
        }
    }

    #[test]
    fn empty_high_quality_set_covers_nothing() {
        let modes = ring_modes();
        let samples = Tensor::matrix(10, 2, vec![50.0; 20]).unwrap();
        let (covered, counts) = modes_covered(&samples, &modes, HqRule::Radial);
        assert_eq!(covered, 0);
        assert!(counts.iter().all(|&c| c == 0));
    }

    #[test]
    fn intra_mode_kl_of_true_samples_is_small() {
        let data = make_dataset(DatasetKind::Ring8);
        let samples = data.sample(50_000, &mut Rng::from_seed(77));
        let r = intra_mode_kl(&samples, &ring_modes());
        assert!(r.average < 0.01, "avg {}", r.average);
        assert!(r.excluded.is_empty());
    }

    #[test]
    fn samples_exactly_at_means_hit_the_variance_floor() {
        // All samples at the mode mean: fitted variance is the floor, so
        // KL(true || fitted) = sum_d [ln(sqrt(floor)/sigma) +
        // sigma^2/(2 floor)] - D/2, large but finite.
        let modes = ModeSpec {
            means: Tensor::matrix(1, 2, vec![0.5, -0.5]).unwrap(),
            stds: Tensor::matrix(1, 2, vec![0.1, 0.1]).unwrap(),
        };
        let samples = Tensor::matrix(3, 2, vec![0.5, -0.5, 0.5, -0.5, 0.5, -0.5]).unwrap();
        let r = intra_mode_kl(&samples, &modes);
        let floor = 1e-6f64;
        let per_dim = (floor.sqrt() / 0.1f64).ln() + 0.01 / (2.0 * floor) - 0.5;
        let expected = 2.0 * per_dim;
        let got = r.per_mode[0].unwrap();
        assert!(got.is_finite() && got > 1000.0);
        assert!((got - expected).abs() < 1e-6, "{got} vs {expected}");
    }

    #[test]
    fn perfect_fit_gives_zero_kl() {
        // Build samples whose MLE equals the true mode exactly: two points
        // at mu +- sigma give mean mu and variance sigma^2.
        let modes = ModeSpec {
            means: Tensor::matrix(1, 1, vec![2.0]).unwrap(),
            stds: Tensor::matrix(1, 1, vec![0.3]).unwrap(),
        };
        let samples = Tensor::matrix(2, 1, vec![2.3, 1.7]).unwrap();
        let r = intra_mode_kl(&samples, &modes);
        assert!(r.per_mode[0].unwrap().abs() < 1e-12);
    }

    #[test]
    fn modes_with_fewer_than_two_samples_are_excluded() {
        let modes = ModeSpec {
            means: Tensor::matrix(2, 1, vec![-5.0, 5.0]).unwrap(),
            stds: Tensor::matrix(2, 1, vec![1.0, 1.0]).unwrap(),
        };
        let samples = Tensor::matrix(3, 1, vec![-5.1, -4.9, 5.0]).unwrap();
        let r = intra_mode_kl(&samples, &modes);
        assert_eq!(r.excluded, vec![1]);
        assert!(r.per_mode[1].is_none());
        assert!(r.average.is_finite());
    }

    #[test]
    fn metrics_are_deterministic_and_permutation_invariant() {
        let data = make_dataset(DatasetKind::Ring8);
        let samples = data.sample(500, &mut Rng::from_seed(3));
        let modes = ring_modes();
        let a = evaluate_metrics(&samples, &modes, HqRule::Radial);
        let b = evaluate_metrics(&samples, &modes, HqRule::Radial);
        assert_eq!(a.high_quality_fraction, b.high_quality_fraction);
        assert_eq!(a.modes_covered, b.modes_covered);

        // Reverse the sample order.
        let (n, d) = (samples.rows(), samples.cols());
        let mut rev = Vec::with_capacity(n * d);
        for i in (0..n).rev() {
            rev.extend_from_slice(samples.row(i));
        }
        let rev = Tensor::from_vec(vec![n, d], rev).unwrap();
        let c = evaluate_metrics(&rev, &modes, HqRule::Radial);
        assert_eq!(a.modes_covered, c.modes_covered);
        assert_eq!(a.high_quality_fraction, c.high_quality_fraction);
        assert!((a.intra_mode_kl - c.intra_mode_kl).abs() < 1e-12);
    }
}
