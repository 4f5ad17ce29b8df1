use crate::diffcore::{Node, Tensor};

use super::{mog_log_density_node, DistError, GaussianMixture, QuadratureGrid};

/// Divergence between the data distribution and a model distribution.
///
/// The KL direction is fixed as `KL(p_D || p_G)` (data first): the
/// zero-avoiding direction that penalizes the model for missing data mass.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum DivergenceKind {
    Kl,
    Js,
}

impl DivergenceKind {
    pub fn name(self) -> &'static str {
        match self {
            DivergenceKind::Kl => "KL",
            DivergenceKind::Js => "JS",
        }
    }
}

/// Midpoint-rule divergence estimate.
#[derive(Debug, Clone, Copy)]
pub struct DivergenceEstimate {
    pub value: f64,
    /// Set when either distribution has more than `1e-10` mass outside the
    /// grid, so the quadrature cannot be trusted to full precision.
    pub coverage_warning: bool,
}

const TAIL_TOLERANCE: f64 = 1e-10;
const LN_HALF: f64 = -std::f64::consts::LN_2;

/// Numeric `KL(p||q)` or `JS(p, q)` on a quadrature grid (natural log; JS
/// uses the half-mixture definition, so it is bounded by `ln 2`).
pub fn numeric_divergence(
    p: &GaussianMixture,
    q: &GaussianMixture,
    grid: &QuadratureGrid,
    kind: DivergenceKind,
) -> Result<DivergenceEstimate, DistError> {
    if p.dim() != grid.dim() || q.dim() != grid.dim() {
        return Err(DistError::DimensionMismatch {
            context: "numeric_divergence",
            expected: grid.dim(),
            got: if p.dim() != grid.dim() { p.dim() } else { q.dim() },
        });
    }
    let lp = p.log_density_batch(grid.nodes())?;
    let lq = q.log_density_batch(grid.nodes())?;
    let w = grid.cell_weight();
    let value = match kind {
        DivergenceKind::Kl => kl_sum(&lp, &lq, w),
        DivergenceKind::Js => js_sum(&lp, &lq, w),
    };
    let coverage_warning =
        grid.tail_mass_outside(p) > TAIL_TOLERANCE || grid.tail_mass_outside(q) > TAIL_TOLERANCE;
    Ok(DivergenceEstimate {
        value,
        coverage_warning,
    })
}

fn kl_sum(lp: &[f64], lq: &[f64], w: f64) -> f64 {
    lp.iter()
        .zip(lq)
        .map(|(&a, &b)| w * a.exp() * (a - b))
        .sum()
}

fn js_sum(lp: &[f64], lq: &[f64], w: f64) -> f64 {
    let mut total = 0.0;
    for (&a, &b) in lp.iter().zip(lq) {
        let lm = LN_HALF + log_add_exp(a, b);
        total += 0.5 * w * (a.exp() * (a - lm) + b.exp() * (b - lm));
    }
    total
}

fn log_add_exp(a: f64, b: f64) -> f64 {
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

/// The two-mean model family of the divergence landscapes:
/// `0.5 N(theta1, 1) + 0.5 N(theta2, 1)`.
pub fn two_mean_model(theta1: f64, theta2: f64) -> GaussianMixture {
    GaussianMixture::new(
        vec![0.5, 0.5],
        Tensor::matrix(2, 1, vec![theta1, theta2]).expect("2x1"),
        Tensor::matrix(2, 1, vec![1.0, 1.0]).expect("2x1"),
    )
    .expect("valid two-mean model")
}

/// Uniform lattice of model parameters for a landscape scan.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ThetaLattice {
    pub lo: f64,
    pub hi: f64,
    pub step: f64,
}

impl ThetaLattice {
    /// Default landscape range: `[-5, 5]` at 0.1 spacing.
    pub fn default_landscape() -> Self {
        Self {
            lo: -5.0,
            hi: 5.0,
            step: 0.1,
        }
    }

    pub fn values(&self) -> Vec<f64> {
        let mut out = Vec::new();
        let mut i = 0u64;
        loop {
            let v = self.lo + i as f64 * self.step;
            if v > self.hi + self.step * 1e-9 {
                break;
            }
            out.push(v);
            i += 1;
        }
        out
    }
}

/// Divergence values over the two-mean family on a parameter lattice.
#[derive(Debug, Clone)]
pub struct Landscape {
    pub kind: DivergenceKind,
    /// Axis values shared by both parameters.
    pub theta: Vec<f64>,
    /// Row-major matrix: `values[i * theta.len() + j]` is the divergence at
    /// `(theta[i], theta[j])`.
    pub values: Vec<f64>,
    pub coverage_warning: bool,
}

impl Landscape {
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.theta.len() + j]
    }

    /// Index of the lattice value closest to `t`.
    pub fn index_of(&self, t: f64) -> usize {
        let mut best = 0;
        for (i, v) in self.theta.iter().enumerate() {
            if (v - t).abs() < (self.theta[best] - t).abs() {
                best = i;
            }
        }
        best
    }

    /// All lattice points strictly smaller than their 8 neighbors
    /// (boundary points excluded).
    pub fn strict_local_minima(&self) -> Vec<(usize, usize)> {
        let n = self.theta.len();
        let mut out = Vec::new();
        for i in 1..n.saturating_sub(1) {
            for j in 1..n - 1 {
                if self.is_strict_local_min(i, j) {
                    out.push((i, j));
                }
            }
        }
        out
    }

    /// True when `(i, j)` is strictly smaller than all 8 lattice neighbors.
    pub fn is_strict_local_min(&self, i: usize, j: usize) -> bool {
        let n = self.theta.len();
        let c = self.at(i, j);
        for di in -1i64..=1 {
            for dj in -1i64..=1 {
                if di == 0 && dj == 0 {
                    continue;
                }
                let (ni, nj) = (i as i64 + di, j as i64 + dj);
                if ni < 0 || nj < 0 || ni >= n as i64 || nj >= n as i64 {
                    return false;
                }
                if self.at(ni as usize, nj as usize) <= c {
                    return false;
                }
            }
        }
        true
    }
}

/// Scan `divergence(p_D || p_G(theta1, theta2))` over the lattice.
///
/// `data` must be one-dimensional; the model family is the two-mean
/// mixture of [`two_mean_model`].
pub fn divergence_landscape(
    data: &GaussianMixture,
    lattice: &ThetaLattice,
    grid: &QuadratureGrid,
    kind: DivergenceKind,
) -> Result<Landscape, DistError> {
    if data.dim() != 1 || grid.dim() != 1 {
        return Err(DistError::DimensionMismatch {
            context: "divergence_landscape",
            expected: 1,
            got: data.dim().max(grid.dim()),
        });
    }
    let theta = lattice.values();
    let xs: Vec<f64> = grid.nodes().data().to_vec();
    let lp = data.log_density_batch(grid.nodes())?;
    let w = grid.cell_weight();
    let mut values = Vec::with_capacity(theta.len() * theta.len());
    for &t1 in &theta {
        for &t2 in &theta {
            let lq = two_mean_log_density(t1, t2, &xs);
            let v = match kind {
                DivergenceKind::Kl => kl_sum(&lp, &lq, w),
                DivergenceKind::Js => js_sum(&lp, &lq, w),
            };
            values.push(v);
        }
    }
    // Coverage depends on the worst-case model over the lattice: check the
    // extreme corners, whose components sit closest to the grid edge.
    let corner = two_mean_model(lattice.lo, lattice.hi);
    let coverage_warning = grid.tail_mass_outside(data) > TAIL_TOLERANCE
        || grid.tail_mass_outside(&corner) > TAIL_TOLERANCE;
    Ok(Landscape {
        kind,
        theta,
        values,
        coverage_warning,
    })
}

const LN_SQRT_2PI: f64 = 0.9189385332046727;

fn two_mean_log_density(t1: f64, t2: f64, xs: &[f64]) -> Vec<f64> {
    xs.iter()
        .map(|&x| {
            let a = -0.5 * (x - t1) * (x - t1);
            let b = -0.5 * (x - t2) * (x - t2);
            LN_HALF - LN_SQRT_2PI + log_add_exp(a, b)
        })
        .collect()
}

/// Settings for gradient descent on a divergence landscape.
#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
pub struct DescentSettings {
    pub learning_rate: f64,
    pub max_steps: usize,
    /// Stop once the gradient norm falls below this.
    pub grad_tol: f64,
    /// Record one path point every this many steps (0 records only the
    /// endpoints).
    pub record_every: usize,
}

impl Default for DescentSettings {
    fn default() -> Self {
        Self {
            learning_rate: 0.2,
            max_steps: 50_000,
            grad_tol: 1e-7,
            record_every: 50,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct PathPoint {
    pub step: usize,
    pub theta: [f64; 2],
    pub value: f64,
}

#[derive(Debug, Clone)]
pub struct DescentResult {
    pub kind: DivergenceKind,
    pub start: [f64; 2],
    pub endpoint: [f64; 2],
    pub steps: usize,
    pub final_value: f64,
    pub final_grad_norm: f64,
    pub path: Vec<PathPoint>,
}

/// Gradient descent on the lattice-free divergence surface
/// `theta -> divergence(p_D || p_G(theta))`, using the exact derivative of
/// the quadrature sum.
pub fn landscape_descent(
    data: &GaussianMixture,
    grid: &QuadratureGrid,
    kind: DivergenceKind,
    start: [f64; 2],
    settings: &DescentSettings,
) -> Result<DescentResult, DistError> {
    if data.dim() != 1 || grid.dim() != 1 {
        return Err(DistError::DimensionMismatch {
            context: "landscape_descent",
            expected: 1,
            got: data.dim().max(grid.dim()),
        });
    }
    let xs: Vec<f64> = grid.nodes().data().to_vec();
    let lp = data.log_density_batch(grid.nodes())?;
    let w = grid.cell_weight();
    let p: Vec<f64> = lp.iter().map(|v| v.exp()).collect();

    let mut theta = start;
    let mut path = Vec::new();
    let mut steps = 0;
    let (mut value, mut grad) = value_and_grad(kind, &theta, &xs, &lp, &p, w);
    path.push(PathPoint {
        step: 0,
        theta,
        value,
    });
    while steps < settings.max_steps {
        let norm = (grad[0] * grad[0] + grad[1] * grad[1]).sqrt();
        if norm < settings.grad_tol {
            break;
        }
        theta[0] -= settings.learning_rate * grad[0];
        theta[1] -= settings.learning_rate * grad[1];
        steps += 1;
        let (v, g) = value_and_grad(kind, &theta, &xs, &lp, &p, w);
        value = v;
        grad = g;
        if settings.record_every > 0 && steps % settings.record_every == 0 {
            path.push(PathPoint {
                step: steps,
                theta,
                value,
            });
        }
    }
    let final_grad_norm = (grad[0] * grad[0] + grad[1] * grad[1]).sqrt();
    path.push(PathPoint {
        step: steps,
        theta,
        value,
    });
    Ok(DescentResult {
        kind,
        start,
        endpoint: theta,
        steps,
        final_value: value,
        final_grad_norm,
        path,
    })
}

/// Exact derivative of the discrete quadrature sum with respect to the two
/// model means.
///
/// With `dq_a = 0.5 N(x; theta_a, 1) (x - theta_a)`:
/// KL term per node: `-w p dq_a / q`; JS term: `0.5 w dq_a (lq - lm)`.
fn value_and_grad(
    kind: DivergenceKind,
    theta: &[f64; 2],
    xs: &[f64],
    lp: &[f64],
    p: &[f64],
    w: f64,
) -> (f64, [f64; 2]) {
    let mut value = 0.0;
    let mut grad = [0.0, 0.0];
    for i in 0..xs.len() {
        let x = xs[i];
        let a1 = -0.5 * (x - theta[0]) * (x - theta[0]);
        let a2 = -0.5 * (x - theta[1]) * (x - theta[1]);
        let lq = LN_HALF - LN_SQRT_2PI + log_add_exp(a1, a2);
        let q = lq.exp();
        let comp1 = (LN_HALF - LN_SQRT_2PI + a1).exp();
        let comp2 = (LN_HALF - LN_SQRT_2PI + a2).exp();
        let dq = [comp1 * (x - theta[0]), comp2 * (x - theta[1])];
        match kind {
            DivergenceKind::Kl => {
                value += w * p[i] * (lp[i] - lq);
                grad[0] -= w * p[i] * dq[0] / q;
                grad[1] -= w * p[i] * dq[1] / q;
            }
            DivergenceKind::Js => {
                let lm = LN_HALF + log_add_exp(lp[i], lq);
                value += 0.5 * w * (p[i] * (lp[i] - lm) + q * (lq - lm));
                grad[0] += 0.5 * w * dq[0] * (lq - lm);
                grad[1] += 0.5 * w * dq[1] * (lq - lm);
            }
        }
    }
    (value, grad)
}

/// Divergence of the two-mean family as a graph node of `theta` (`[2]`).
///
/// Slow path used to validate [`landscape_descent`]'s hand-derived
/// gradient: differentiates the identical quadrature sum with the graph
/// engine.
pub fn divergence_value_node(
    data: &GaussianMixture,
    grid: &QuadratureGrid,
    kind: DivergenceKind,
    theta: &Node,
) -> Result<Node, DistError> {
    let n = grid.len();
    let lp = data.log_density_batch(grid.nodes())?;
    let w = grid.cell_weight();
    let log_weights = Node::constant(Tensor::vector(&[LN_HALF, LN_HALF]));
    let log_stds = Node::constant(Tensor::zeros([2, 1]));
    let x = Node::constant(grid.nodes().clone());
    let lq = mog_log_density_node(&log_weights, &theta.reshape([2, 1]), &log_stds, &x)?;
    let lp_node = Node::constant(Tensor::vector(&lp));
    let wp = Node::constant(Tensor::vector(
        &lp.iter().map(|v| w * v.exp()).collect::<Vec<_>>(),
    ));
    let value = match kind {
        DivergenceKind::Kl => (&wp * &(&lp_node - &lq)).sum(),
        DivergenceKind::Js => {
            let stacked = Node::concat(&[lp_node.reshape([n, 1]), lq.reshape([n, 1])], 1);
            let lm = stacked.logsumexp(1).shift(LN_HALF);
            let data_half = (&wp * &(&lp_node - &lm)).sum().scale(0.5);
            let model_half = (&(&lq.exp() * &(&lq - &lm)).scale(w)).sum().scale(0.5);
            &data_half + &model_half
        }
    };
    Ok(value)
}
