use crate::diffcore::Tensor;

use super::GaussianMixture;

/// Synthetic benchmark datasets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetKind {
    /// 8 equal-weight modes on the unit circle, std 0.1 per dimension.
    Ring8,
    /// 10 x 10 lattice, spacing 0.2 centered at the origin, std 0.01.
    Grid100,
    /// Reduced 5 x 5 lattice with the same spacing and std as `Grid100`.
    Grid25,
    /// 0.5 N(-3, 1) + 0.5 N(3, 1).
    Bimodal1d,
}

impl DatasetKind {
    pub fn name(self) -> &'static str {
        match self {
            DatasetKind::Ring8 => "ring8",
            DatasetKind::Grid100 => "grid100",
            DatasetKind::Grid25 => "grid25",
            DatasetKind::Bimodal1d => "bimodal1d",
        }
    }
}

pub fn make_dataset(kind: DatasetKind) -> GaussianMixture {
    match kind {
        DatasetKind::Ring8 => ring_mixture(8, 1.0, 0.1),
        DatasetKind::Grid100 => grid_mixture(10, 0.2, 0.01),
        DatasetKind::Grid25 => grid_mixture(5, 0.2, 0.01),
        DatasetKind::Bimodal1d => GaussianMixture::new(
            vec![0.5, 0.5],
            Tensor::matrix(2, 1, vec![-3.0, 3.0]).expect("2x1"),
            Tensor::matrix(2, 1, vec![1.0, 1.0]).expect("2x1"),
        )
        .expect("valid bimodal mixture"),
    }
}

/// Equal-weight 2-D modes at angles `2 pi k / n` on a circle.
pub fn ring_mixture(n_modes: usize, radius: f64, std: f64) -> GaussianMixture {
    let mut means = Vec::with_capacity(n_modes * 2);
    for k in 0..n_modes {
        let angle = 2.0 * std::f64::consts::PI * k as f64 / n_modes as f64;
        means.push(radius * angle.cos());
        means.push(radius * angle.sin());
    }
    GaussianMixture::new(
        vec![1.0 / n_modes as f64; n_modes],
        Tensor::from_vec(vec![n_modes, 2], means).expect("ring means"),
        Tensor::full([n_modes, 2], std),
    )
    .expect("valid ring mixture")
}

/// Equal-weight `side x side` lattice of 2-D modes centered at the origin.
///
/// Modes are enumerated row-major: the first axis varies slowest.
pub fn grid_mixture(side: usize, spacing: f64, std: f64) -> GaussianMixture {
    let n = side * side;
    let offset = (side as f64 - 1.0) / 2.0;
    let mut means = Vec::with_capacity(n * 2);
    for i in 0..side {
        for j in 0..side {
            means.push((i as f64 - offset) * spacing);
            means.push((j as f64 - offset) * spacing);
        }
    }
    GaussianMixture::new(
        vec![1.0 / n as f64; n],
        Tensor::from_vec(vec![n, 2], means).expect("grid means"),
        Tensor::full([n, 2], std),
    )
    .expect("valid grid mixture")
}
