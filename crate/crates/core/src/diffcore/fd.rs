use super::{gradient, DiffError, Node, Tensor};

/// Outcome of a finite-difference gradient check.
#[derive(Debug, Clone)]
pub struct FdReport {
    /// Max over coordinates of the relative error between the analytic
    /// gradient and central differences. Infinite when the function was
    /// non-finite at a perturbed point.
    pub max_rel_err: f64,
    /// Coordinate attaining `max_rel_err`.
    pub worst_coord: usize,
    pub analytic: Vec<f64>,
    pub numeric: Vec<f64>,
}

/// Compare the graph gradient of `f` against central finite differences at
/// `point`.
///
/// `f` must build a one-element output from the given input node and be
/// deterministic across calls (clone any RNG it captures). The relative
/// error per coordinate is `|a - n| / max(1, |a|, |n|)`, so near-zero
/// gradients are compared absolutely. Also usable for second-order checks
/// by passing an `f` that internally slices a `gradient` result.
pub fn finite_difference_check(
    f: impl Fn(&Node) -> Node,
    point: &Tensor,
    eps: f64,
) -> Result<FdReport, DiffError> {
    let x = Node::leaf(point.clone());
    let y = f(&x);
    if y.numel() != 1 {
        return Err(DiffError::NonScalarOutput {
            shape: y.shape().to_vec(),
        });
    }
    let analytic = gradient(&y, std::slice::from_ref(&x))?.remove(0);
    let analytic: Vec<f64> = analytic.value().data().to_vec();

    let mut numeric = vec![0.0; point.numel()];
    let mut max_rel_err = 0.0;
    let mut worst_coord = 0;
    for i in 0..point.numel() {
        let mut plus = point.clone();
        plus.data_mut()[i] += eps;
        let mut minus = point.clone();
        minus.data_mut()[i] -= eps;
        let fp = f(&Node::leaf(plus)).value().scalar_value();
        let fm = f(&Node::leaf(minus)).value().scalar_value();
        if !fp.is_finite() || !fm.is_finite() {
            return Ok(FdReport {
                max_rel_err: f64::INFINITY,
                worst_coord: i,
                analytic,
                numeric,
            });
        }
        let n = (fp - fm) / (2.0 * eps);
        numeric[i] = n;
        let a = analytic[i];
        let rel = if a.is_finite() {
            (a - n).abs() / a.abs().max(n.abs()).max(1.0)
        } else {
            f64::INFINITY
        };
        if rel > max_rel_err {
            max_rel_err = rel;
            worst_coord = i;
        }
    }
    Ok(FdReport {
        max_rel_err,
        worst_coord,
        analytic,
        numeric,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sum_of_squares_matches_two_x() {
        let report = finite_difference_check(
            |x| x.square().sum(),
            &Tensor::vector(&[1.0, -2.0]),
            1e-5,
        )
        .unwrap();
        assert!(report.max_rel_err < 1e-7, "err {}", report.max_rel_err);
        assert!((report.analytic[0] - 2.0).abs() < 1e-12);
        assert!((report.analytic[1] + 4.0).abs() < 1e-12);
    }

    #[test]
    fn isotropic_gaussian_loglik_in_mean() {
        // f(mu) = mean over batch of log N(x; mu, 1); gradient = mean(x) - mu.
        let batch = Tensor::vector(&[0.4, 1.2, -0.3, 2.0]);
        let report = finite_difference_check(
            |mu| {
                let x = Node::constant(batch.clone());
                let half_ln_2pi = 0.5 * (2.0 * std::f64::consts::PI).ln();
                let centered = &x - &mu.broadcast([4]);
                centered
                    .square()
                    .scale(-0.5)
                    .shift(-half_ln_2pi)
                    .mean()
            },
            &Tensor::vector(&[0.25]),
            1e-5,
        )
        .unwrap();
        assert!(report.max_rel_err < 1e-6, "err {}", report.max_rel_err);
        let mean_x = 0.825;
        assert!((report.analytic[0] - (mean_x - 0.25)).abs() < 1e-10);
    }

    #[test]
    fn constant_function_has_zero_error() {
        let report = finite_difference_check(
            |_x| Node::scalar(7.0),
            &Tensor::vector(&[1.0, 2.0, 3.0]),
            1e-5,
        )
        .unwrap();
        assert_eq!(report.max_rel_err, 0.0);
        assert!(report.analytic.iter().all(|&a| a == 0.0));
    }

    #[test]
    fn non_finite_perturbation_reports_infinite_error() {
        // The minus perturbation lands exactly on 0, where 1/x is infinite.
        let report = finite_difference_check(
            |x| (&Node::scalar(1.0) / x).sum(),
            &Tensor::vector(&[1e-5]),
            1e-5,
        )
        .unwrap();
        assert!(report.max_rel_err.is_infinite());
        assert_eq!(report.worst_coord, 0);
    }

    #[test]
    fn second_order_check_through_gradient_nodes() {
        // f(x) = sum(x^3) encoded as x * x * x; second derivative 6x.
        let point = Tensor::vector(&[0.7, -1.3]);
        for coord in 0..2 {
            let report = finite_difference_check(
                |x| {
                    let cube = &(&(x * x) * x).sum();
                    let g = gradient(cube, std::slice::from_ref(x)).unwrap().remove(0);
                    g.slice(0, coord, coord + 1)
                },
                &point,
                1e-5,
            )
            .unwrap();
            assert!(report.max_rel_err < 1e-8, "err {}", report.max_rel_err);
            let expected = 6.0 * point.data()[coord];
            assert!((report.analytic[coord] - expected).abs() < 1e-9);
        }
    }
}
