use crate::diffcore::{gradient, Node, Rng, Tensor};
use crate::models::Estimator;

use super::BilevelError;

/// Dense-Hessian oracle cap; beyond this the solve is not worth doing.
pub const INFLUENCE_MAX_PARAMS: usize = 200;

const OPTIMUM_TOL: f64 = 1e-6;
const RIDGE: f64 = 1e-8;
const CONDITION_LIMIT: f64 = 1e12;

/// Exact sensitivity of the inner optimum to the generated samples.
#[derive(Debug, Clone)]
pub struct InfluenceResult {
    /// `d phi* / d x`, `P x (n*D)`: minus the Hessian inverse applied to
    /// the mixed derivative.
    pub sensitivity: Tensor,
    /// Mixed second derivative `grad_x (d f_E / d phi)`, `P x (n*D)`.
    pub mixed: Tensor,
    /// Hessian of `f_E` with respect to `phi`, `P x P`.
    pub hessian: Tensor,
    /// Ratio of extreme pivot magnitudes from the LU factorization; a
    /// cheap condition estimate.
    pub condition_estimate: f64,
    /// Set when the solve needed ridge damping (`H - 1e-8 I`).
    pub damped: bool,
    /// Set when the condition estimate exceeds `1e12`.
    pub ill_conditioned: bool,
}

/// Sensitivity of the inner optimum to each generated sample coordinate,
/// via the dense Hessian of `f_E` at `phi_star`.
///
/// Preconditions: the estimator parameter count is at most
/// [`INFLUENCE_MAX_PARAMS`], and `phi_star` is an inner optimum (gradient
/// norm below `1e-6`; otherwise an error). Near-singular Hessians are
/// re-solved with ridge damping `H - 1e-8 I` and flagged.
pub fn influence_sensitivity(
    est: &dyn Estimator,
    phi_star: &Tensor,
    samples: &Tensor,
    rng: &mut Rng,
) -> Result<InfluenceResult, BilevelError> {
    let p = est.param_count();
    if p > INFLUENCE_MAX_PARAMS {
        return Err(BilevelError::TooManyParams {
            count: p,
            max: INFLUENCE_MAX_PARAMS,
        });
    }
    let phi = Node::leaf(phi_star.clone());
    let x = Node::leaf(samples.clone());
    let f_e = est.log_likelihood(&phi, &x, rng)?;
    let g = gradient(&f_e, std::slice::from_ref(&phi))?.remove(0);
    let grad_norm = g.value().norm();
    if grad_norm > OPTIMUM_TOL {
        return Err(BilevelError::NotAtOptimum {
            grad_norm,
            tol: OPTIMUM_TOL,
        });
    }

    let nd = samples.numel();
    let mut hessian = vec![0.0; p * p];
    let mut mixed = vec![0.0; p * nd];
    for i in 0..p {
        let gi = g.slice(0, i, i + 1);
        let rows = gradient(&gi, &[phi.clone(), x.clone()])?;
        hessian[i * p..(i + 1) * p].copy_from_slice(rows[0].value().data());
        mixed[i * nd..(i + 1) * nd].copy_from_slice(rows[1].value().data());
    }

    // Solve H S = -mixed.
    let rhs: Vec<f64> = mixed.iter().map(|v| -v).collect();
    let (solution, condition_estimate, damped) = solve_with_damping(&hessian, &rhs, p, nd)
        .ok_or(BilevelError::NonFinite {
            context: "Hessian solve",
            step: 0,
        })?;

    Ok(InfluenceResult {
        sensitivity: Tensor::from_vec(vec![p, nd], solution).expect("solution shape"),
        mixed: Tensor::from_vec(vec![p, nd], mixed).expect("mixed shape"),
        hessian: Tensor::from_vec(vec![p, p], hessian).expect("hessian shape"),
        condition_estimate,
        damped,
        ill_conditioned: condition_estimate > CONDITION_LIMIT,
    })
}

/// Solve `A X = B`, retrying with ridge damping `A - 1e-8 I` when the
/// plain factorization is singular or past the condition limit. Returns
/// `(solution, condition_estimate, damped)`.
pub(crate) fn solve_with_damping(
    a: &[f64],
    b: &[f64],
    p: usize,
    m: usize,
) -> Option<(Vec<f64>, f64, bool)> {
    match lu_solve(a, b, p, m) {
        Some((sol, cond)) if cond <= CONDITION_LIMIT => Some((sol, cond, false)),
        other => {
            let cond = other.map(|(_, c)| c).unwrap_or(f64::INFINITY);
            let mut damped = a.to_vec();
            for i in 0..p {
                damped[i * p + i] -= RIDGE;
            }
            let (sol, _) = lu_solve(&damped, b, p, m)?;
            Some((sol, cond, true))
        }
    }
}

/// LU with partial pivoting; returns the solution of `A X = B` (with `B`
/// `P x M` row-major) and the pivot-ratio condition estimate, or `None`
/// when a pivot collapses to zero.
fn lu_solve(a: &[f64], b: &[f64], p: usize, m: usize) -> Option<(Vec<f64>, f64)> {
    let mut lu = a.to_vec();
    let mut x = b.to_vec();
    let mut max_pivot: f64 = 0.0;
    let mut min_pivot = f64::INFINITY;
    for col in 0..p {
        let mut pivot_row = col;
        let mut best = lu[col * p + col].abs();
        for r in col + 1..p {
            let v = lu[r * p + col].abs();
            if v > best {
                best = v;
                pivot_row = r;
            }
        }
        if best == 0.0 || !best.is_finite() {
            return None;
        }
        if pivot_row != col {
            for c in 0..p {
                lu.swap(col * p + c, pivot_row * p + c);
            }
            for c in 0..m {
                x.swap(col * m + c, pivot_row * m + c);
            }
        }
        let pivot = lu[col * p + col];
        max_pivot = max_pivot.max(pivot.abs());
        min_pivot = min_pivot.min(pivot.abs());
        for r in col + 1..p {
            let factor = lu[r * p + col] / pivot;
            if factor == 0.0 {
                continue;
            }
            lu[r * p + col] = 0.0;
            for c in col + 1..p {
                lu[r * p + c] -= factor * lu[col * p + c];
            }
            for c in 0..m {
                x[r * m + c] -= factor * x[col * m + c];
            }
        }
    }
    for col in (0..p).rev() {
        let pivot = lu[col * p + col];
        for c in 0..m {
            let mut v = x[col * m + c];
            for r in col + 1..p {
                v -= lu[col * p + r] * x[r * m + c];
            }
            x[col * m + c] = v / pivot;
        }
    }
    if x.iter().any(|v| !v.is_finite()) {
        return None;
    }
    Some((x, max_pivot / min_pivot))
}

/// Comparison of the one-step unrolled sensitivity against the exact
/// influence-function sensitivity at an inner optimum.
#[derive(Debug, Clone, serde::Serialize)]
pub struct SensitivityReport {
    pub param_count: usize,
    pub sample_count: usize,
    pub eta_phi: f64,
    /// `d phi^1 / d x` from one unrolled step at `phi0 = phi*`.
    pub unrolled: Tensor,
    /// `d phi* / d x` from the influence function.
    pub influence: Tensor,
    /// Frobenius inner product of the two sensitivities; positive whenever
    /// the Hessian is negative definite.
    pub inner_product: f64,
    pub hessian_condition: f64,
    pub damped: bool,
}

/// Compute both sensitivities and their inner product. Positivity is
/// reported, not enforced.
pub fn alignment_check(
    est: &dyn Estimator,
    phi_star: &Tensor,
    samples: &Tensor,
    eta_phi: f64,
    rng: &mut Rng,
) -> Result<SensitivityReport, BilevelError> {
    let influence = influence_sensitivity(est, phi_star, samples, &mut rng.clone())?;

    let p = est.param_count();
    let nd = samples.numel();
    let phi = Node::leaf(phi_star.clone());
    let x = Node::leaf(samples.clone());
    let phi1 = super::inner_step(est, &phi, &x, eta_phi, rng)?;
    let mut unrolled = vec![0.0; p * nd];
    for i in 0..p {
        let pi = phi1.slice(0, i, i + 1);
        let row = gradient(&pi, std::slice::from_ref(&x))?.remove(0);
        unrolled[i * nd..(i + 1) * nd].copy_from_slice(row.value().data());
    }

    let inner_product = unrolled
        .iter()
        .zip(influence.sensitivity.data())
        .map(|(a, b)| a * b)
        .sum();

    Ok(SensitivityReport {
        param_count: p,
        sample_count: samples.shape()[0],
        eta_phi,
        unrolled: Tensor::from_vec(vec![p, nd], unrolled).expect("unrolled shape"),
        influence: influence.sensitivity,
        inner_product,
        hessian_condition: influence.condition_estimate,
        damped: influence.damped,
    })
}
