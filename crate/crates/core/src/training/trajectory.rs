/// One recorded training iteration.
///
/// `wall_time_s` is kept in memory and in the separate timing sidecar, not
/// in the trajectory CSV, so trajectory files are byte-reproducible from
/// `(config, seed)`.
#[derive(Debug, Clone, serde::Serialize)]
pub struct TrajectoryRow {
    pub iter: u64,
    pub f_e: Option<f64>,
    pub f_g: Option<f64>,
    /// Discriminator objective value at its last update.
    pub gan_d: Option<f64>,
    /// Generator-side GAN term value.
    pub gan_g: Option<f64>,
    pub theta_norm: f64,
    /// Full parameter snapshot for toy generators.
    pub theta: Option<Vec<f64>>,
    pub modes_covered: Option<usize>,
    pub hq_fraction: Option<f64>,
    pub intra_kl: Option<f64>,
    pub wall_time_s: f64,
}

/// Per-iteration record of a training run.
#[derive(Debug, Clone, Default)]
pub struct Trajectory {
    pub rows: Vec<TrajectoryRow>,
    /// Number of theta columns recorded in snapshots (0 when disabled).
    pub theta_cols: usize,
}

impl Trajectory {
    pub fn last(&self) -> Option<&TrajectoryRow> {
        self.rows.last()
    }
}

/// Fixed 17-significant-digit decimal formatting; byte-stable across runs.
pub fn fmt_f64(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else if v.is_nan() {
        "nan".to_string()
    } else if v > 0.0 {
        "inf".to_string()
    } else {
        "-inf".to_string()
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

/// Header + rows of the deterministic trajectory CSV.
///
/// Column layout: `iter, f_e, f_g, gan_d, gan_g, theta_norm,
/// theta_0..theta_{T-1}, modes_covered, hq_fraction, intra_kl`, with empty
/// cells for values not recorded at that iteration.
pub fn trajectory_csv(trajectory: &Trajectory) -> String {
    let mut out = String::new();
    out.push_str("iter,f_e,f_g,gan_d,gan_g,theta_norm");
    for i in 0..trajectory.theta_cols {
        out.push_str(&format!(",theta_{i}"));
    }
    out.push_str(",modes_covered,hq_fraction,intra_kl\n");
    for row in &trajectory.rows {
        out.push_str(&row.iter.to_string());
        out.push(',');
        out.push_str(&opt(row.f_e));
        out.push(',');
        out.push_str(&opt(row.f_g));
        out.push(',');
        out.push_str(&opt(row.gan_d));
        out.push(',');
        out.push_str(&opt(row.gan_g));
        out.push(',');
        out.push_str(&fmt_f64(row.theta_norm));
        for i in 0..trajectory.theta_cols {
            out.push(',');
            if let Some(theta) = &row.theta {
                out.push_str(&fmt_f64(theta[i]));
            }
        }
        out.push(',');
        if let Some(m) = row.modes_covered {
            out.push_str(&m.to_string());
        }
        out.push(',');
        out.push_str(&opt(row.hq_fraction));
        out.push(',');
        out.push_str(&opt(row.intra_kl));
        out.push('\n');
    }
    out
}

/// Timing sidecar (iteration, wall seconds); deliberately separate from
/// the deterministic trajectory.
pub fn timing_csv(trajectory: &Trajectory) -> String {
    let mut out = String::from("iter,wall_time_s\n");
    for row in &trajectory.rows {
        out.push_str(&format!("{},{}\n", row.iter, fmt_f64(row.wall_time_s)));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn float_formatting_has_17_significant_digits() {
        assert_eq!(fmt_f64(0.5), "5.0000000000000000e-1");
        assert_eq!(fmt_f64(1.0 / 3.0), "3.3333333333333331e-1");
        let v = std::f64::consts::PI * 1e-7;
        let parsed: f64 = fmt_f64(v).parse().unwrap();
        assert_eq!(parsed.to_bits(), v.to_bits(), "round-trips exactly");
    }

    #[test]
    fn csv_layout_is_stable() {
        let t = Trajectory {
            theta_cols: 2,
            rows: vec![TrajectoryRow {
                iter: 0,
                f_e: None,
                f_g: Some(-1.25),
                gan_d: None,
                gan_g: None,
                theta_norm: 5.0,
                theta: Some(vec![-3.0, 4.0]),
                modes_covered: Some(3),
                hq_fraction: Some(0.5),
                intra_kl: None,
                wall_time_s: 0.1,
            }],
        };
        let csv = trajectory_csv(&t);
        let mut lines = csv.lines();
        assert_eq!(
            lines.next().unwrap(),
            "iter,f_e,f_g,gan_d,gan_g,theta_norm,theta_0,theta_1,modes_covered,hq_fraction,intra_kl"
        );
        let row = lines.next().unwrap();
        assert!(row.starts_with("0,,-1.2500000000000000e0,,,"));
        assert!(row.contains(",3,"));
        assert!(!csv.contains("wall"), "wall time stays out of the CSV");
    }
}
