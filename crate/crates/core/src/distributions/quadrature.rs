use crate::diffcore::Tensor;

use super::{DistError, GaussianMixture};

/// Midpoint-rule quadrature grid over an axis-aligned box.
///
/// Nodes sit at cell centers; every node carries the same weight (the cell
/// volume), so the weights are positive and sum to the domain volume.
#[derive(Debug, Clone)]
pub struct QuadratureGrid {
    bounds: Vec<(f64, f64)>,
    counts: Vec<usize>,
    nodes: Tensor,
    cell_weight: f64,
}

impl QuadratureGrid {
    pub fn new(bounds: &[(f64, f64)], counts: &[usize]) -> Result<Self, DistError> {
        if bounds.is_empty() || bounds.len() != counts.len() {
            return Err(DistError::BadGrid {
                reason: format!(
                    "{} bounds vs {} counts",
                    bounds.len(),
                    counts.len()
                ),
            });
        }
        for (&(lo, hi), &m) in bounds.iter().zip(counts) {
            if !(lo < hi) || m == 0 {
                return Err(DistError::BadGrid {
                    reason: format!("interval [{lo}, {hi}] with {m} cells"),
                });
            }
        }
        let d = bounds.len();
        let steps: Vec<f64> = bounds
            .iter()
            .zip(counts)
            .map(|(&(lo, hi), &m)| (hi - lo) / m as f64)
            .collect();
        let cell_weight: f64 = steps.iter().product();
        let n: usize = counts.iter().product();
        let mut data = Vec::with_capacity(n * d);
        let mut idx = vec![0usize; d];
        for _ in 0..n {
            for j in 0..d {
                data.push(bounds[j].0 + (idx[j] as f64 + 0.5) * steps[j]);
            }
            for j in (0..d).rev() {
                idx[j] += 1;
                if idx[j] < counts[j] {
                    break;
                }
                idx[j] = 0;
            }
        }
        Ok(Self {
            bounds: bounds.to_vec(),
            counts: counts.to_vec(),
            nodes: Tensor::from_vec(vec![n, d], data).expect("grid length"),
            cell_weight,
        })
    }

    pub fn new_1d(lo: f64, hi: f64, points: usize) -> Result<Self, DistError> {
        Self::new(&[(lo, hi)], &[points])
    }

    /// The 1-D grid used for the deterministic divergence landscapes:
    /// `[-10, 10]` with 4001 midpoint cells.
    pub fn default_1d() -> Self {
        Self::new_1d(-10.0, 10.0, 4001).expect("valid default grid")
    }

    pub fn dim(&self) -> usize {
        self.bounds.len()
    }

    pub fn len(&self) -> usize {
        self.nodes.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn bounds(&self) -> &[(f64, f64)] {
        &self.bounds
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    /// `N x D` matrix of node coordinates.
    pub fn nodes(&self) -> &Tensor {
        &self.nodes
    }

    /// Weight shared by every node (midpoint cell volume).
    pub fn cell_weight(&self) -> f64 {
        self.cell_weight
    }

    /// Total volume covered by the grid.
    pub fn volume(&self) -> f64 {
        self.cell_weight * self.len() as f64
    }

    /// True when the box extends at least `n_sigma` standard deviations
    /// beyond every component mean of `mog`.
    pub fn covers(&self, mog: &GaussianMixture, n_sigma: f64) -> bool {
        if mog.dim() != self.dim() {
            return false;
        }
        for k in 0..mog.k() {
            let mu = mog.means().row(k);
            let sd = mog.stds().row(k);
            for j in 0..self.dim() {
                let (lo, hi) = self.bounds[j];
                if mu[j] - n_sigma * sd[j] < lo || mu[j] + n_sigma * sd[j] > hi {
                    return false;
                }
            }
        }
        true
    }

    /// Mixture mass outside the grid box.
    pub fn tail_mass_outside(&self, mog: &GaussianMixture) -> f64 {
        (1.0 - mog.mass_within(&self.bounds)).max(0.0)
    }
}
