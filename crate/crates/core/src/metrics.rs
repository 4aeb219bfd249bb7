//! Evaluation metrics (RMSE / MAE / max error per pose variable) and the
//! comparison report across correction methods, emitted as Markdown, JSON,
//! and plot-data CSV.

use std::fs::File;
use std::io::{BufWriter, Write as _};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::chain::Pose2D;
use crate::error::{Error, Result};
use crate::real::{angle_difference, Real};

/// Error statistics of one variable.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VariableMetrics<T = f64> {
    pub rmse: T,
    pub mae: T,
    pub max_error: T,
}

/// Standard error statistics over aligned traces. With `angular` set, the
/// per-sample error is the wrapped difference, so adding full turns to both
/// traces changes nothing.
pub fn compute_metrics<T: Real>(est: &[T], gt: &[T], angular: bool) -> Result<VariableMetrics<T>> {
    if est.len() != gt.len() {
        return Err(Error::LengthMismatch {
            what: "metric traces",
            expected: gt.len(),
            got: est.len(),
        });
    }
    if est.is_empty() {
        return Err(Error::InvalidArgument("metrics need at least one sample".into()));
    }
    let mut sq = T::zero();
    let mut abs = T::zero();
    let mut max = T::zero();
    for (&e, &g) in est.iter().zip(gt) {
        let err = if angular {
            angle_difference(e, g)
        } else {
            e - g
        };
        let a = err.abs();
        sq += err * err;
        abs += a;
        if a > max {
            max = a;
        }
    }
    let n = T::from_usize(est.len()).expect("sample count");
    Ok(VariableMetrics {
        rmse: (sq / n).sqrt(),
        mae: abs / n,
        max_error: max,
    })
}

/// Metrics over all three pose variables.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoseMetrics<T = f64> {
    pub y: VariableMetrics<T>,
    pub z: VariableMetrics<T>,
    pub theta: VariableMetrics<T>,
}

pub fn pose_metrics<T: Real>(est: &[Pose2D<T>], gt: &[Pose2D<T>]) -> Result<PoseMetrics<T>> {
    if est.len() != gt.len() {
        return Err(Error::LengthMismatch {
            what: "pose traces",
            expected: gt.len(),
            got: est.len(),
        });
    }
    let col = |f: fn(&Pose2D<T>) -> T, xs: &[Pose2D<T>]| -> Vec<T> { xs.iter().map(f).collect() };
    Ok(PoseMetrics {
        y: compute_metrics(&col(|p| p.y, est), &col(|p| p.y, gt), false)?,
        z: compute_metrics(&col(|p| p.z, est), &col(|p| p.z, gt), false)?,
        theta: compute_metrics(&col(|p| p.theta, est), &col(|p| p.theta, gt), true)?,
    })
}

/// One row group of the comparison: a named method and its pose metrics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodMetrics<T = f64> {
    pub method: String,
    pub pose: PoseMetrics<T>,
}

/// Per-variable, per-method comparison across correction methods.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport<T = f64> {
    pub methods: Vec<MethodMetrics<T>>,
}

const IDENTITY_SLACK: f64 = 1e-12;

impl<T: Real> MetricsReport<T> {
    /// Rejects empty reports and any cell violating `rmse >= mae` or
    /// `max >= rmse` (up to rounding slack).
    pub fn validate(&self) -> Result<()> {
        if self.methods.is_empty() {
            return Err(Error::InvalidArgument(
                "report needs at least one method".into(),
            ));
        }
        let slack = T::of(1.0 - IDENTITY_SLACK);
        for m in &self.methods {
            for (name, v) in [("y", &m.pose.y), ("z", &m.pose.z), ("theta", &m.pose.theta)] {
                if v.rmse < v.mae * slack || v.max_error < v.rmse * slack {
                    return Err(Error::InvalidArgument(format!(
                        "method {} variable {name}: metric identities violated \
                         (rmse {}, mae {}, max {})",
                        m.method, v.rmse, v.mae, v.max_error
                    )));
                }
            }
        }
        Ok(())
    }

    /// Markdown table: metric groups by rows, methods within each group,
    /// variables as columns; cells with five decimals.
    pub fn to_markdown(&self) -> String {
        let mut out = String::new();
        out.push_str("| Metric | Method | y [m] | z [m] | theta [rad] |\n");
        out.push_str("|--------|--------|-------|-------|-------------|\n");
        let cell = |v: T| format!("{:.5}", v.as_f64());
        for (label, pick) in [
            ("RMSE", 0usize),
            ("MAE", 1),
            ("Max Error", 2),
        ] {
            for (i, m) in self.methods.iter().enumerate() {
                let get = |v: &VariableMetrics<T>| match pick {
                    0 => v.rmse,
                    1 => v.mae,
                    _ => v.max_error,
                };
                let metric_cell = if i == 0 { label } else { "" };
                out.push_str(&format!(
                    "| {} | {} | {} | {} | {} |\n",
                    metric_cell,
                    m.method,
                    cell(get(&m.pose.y)),
                    cell(get(&m.pose.z)),
                    cell(get(&m.pose.theta)),
                ));
            }
        }
        out
    }
}

/// Validates and writes `{base}.md` and `{base}.json` under `dir`.
pub fn emit_report<T: Real>(
    report: &MetricsReport<T>,
    dir: &Path,
    base: &str,
) -> Result<(PathBuf, PathBuf)> {
    report.validate()?;
    let md_path = dir.join(format!("{base}.md"));
    let json_path = dir.join(format!("{base}.json"));
    std::fs::write(&md_path, report.to_markdown()).map_err(|e| Error::io(&md_path, e))?;
    let file = File::create(&json_path).map_err(|e| Error::io(&json_path, e))?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, report)
        .map_err(|e| Error::io(&json_path, std::io::Error::new(std::io::ErrorKind::Other, e)))?;
    w.write_all(b"\n").map_err(|e| Error::io(&json_path, e))?;
    Ok((md_path, json_path))
}

/// Plot-data CSV `t,var,gt,raw,corrected`, one block of rows per variable.
pub fn write_plot_data<T: Real>(
    path: &Path,
    t: &[T],
    gt: &[Pose2D<T>],
    raw: &[Pose2D<T>],
    corrected: &[Pose2D<T>],
) -> Result<()> {
    if gt.len() != t.len() || raw.len() != t.len() || corrected.len() != t.len() {
        return Err(Error::LengthMismatch {
            what: "plot traces",
            expected: t.len(),
            got: gt.len().min(raw.len()).min(corrected.len()),
        });
    }
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    writeln!(w, "t,var,gt,raw,corrected").map_err(|e| Error::io(path, e))?;
    type Get<T> = fn(&Pose2D<T>) -> T;
    let vars: [(&str, Get<T>); 3] = [
        ("y", |p| p.y),
        ("z", |p| p.z),
        ("theta", |p| p.theta),
    ];
    for (name, get) in vars {
        for k in 0..t.len() {
            writeln!(
                w,
                "{},{},{},{},{}",
                t[k],
                name,
                get(&gt[k]),
                get(&raw[k]),
                get(&corrected[k])
            )
            .map_err(|e| Error::io(path, e))?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn perfect_estimates_give_zeros() {
        let gt = [0.1, 0.2, 0.3];
        let m = compute_metrics(&gt, &gt, false).unwrap();
        assert_eq!(m.rmse, 0.0);
        assert_eq!(m.mae, 0.0);
        assert_eq!(m.max_error, 0.0);
    }

    #[test]
    fn constant_error_collapses_all_three() {
        let gt = [1.0, 2.0, 3.0, 4.0];
        let est: Vec<f64> = gt.iter().map(|x| x + 0.01).collect();
        let m = compute_metrics(&est, &gt, false).unwrap();
        assert_abs_diff_eq!(m.rmse, 0.01, epsilon = 1e-15);
        assert_abs_diff_eq!(m.mae, 0.01, epsilon = 1e-15);
        assert_abs_diff_eq!(m.max_error, 0.01, epsilon = 1e-15);
    }

    #[test]
    fn hand_computed_two_sample_case() {
        let gt = [0.0, 0.0];
        let est = [0.03, 0.04];
        let m = compute_metrics(&est, &gt, false).unwrap();
        assert_abs_diff_eq!(m.mae, 0.035, epsilon = 1e-12);
        assert_abs_diff_eq!(m.rmse, 0.035355339059327376, epsilon = 1e-12);
        assert_abs_diff_eq!(m.max_error, 0.04, epsilon = 1e-15);
    }

    #[test]
    fn angular_metrics_ignore_full_turns() {
        let tau = core::f64::consts::TAU;
        let gt = [0.1, -0.2, 3.0];
        let est = [0.12, -0.25, 3.05];
        let a = compute_metrics(&est, &gt, true).unwrap();
        let shifted_est: Vec<f64> = est.iter().map(|x| x + tau).collect();
        let shifted_gt: Vec<f64> = gt.iter().map(|x| x + tau).collect();
        let b = compute_metrics(&shifted_est, &shifted_gt, true).unwrap();
        assert_abs_diff_eq!(a.rmse, b.rmse, epsilon = 1e-12);
        assert_abs_diff_eq!(a.max_error, b.max_error, epsilon = 1e-12);
    }

    fn vm(rmse: f64, mae: f64, max: f64) -> VariableMetrics<f64> {
        VariableMetrics {
            rmse,
            mae,
            max_error: max,
        }
    }

    /// Published comparison table used as a formatting fixture.
    pub(crate) fn published_report() -> MetricsReport<f64> {
        let row = |name: &str, cells: [[f64; 3]; 3]| MethodMetrics {
            method: name.to_string(),
            pose: PoseMetrics {
                y: vm(cells[0][0], cells[1][0], cells[2][0]),
                z: vm(cells[0][1], cells[1][1], cells[2][1]),
                theta: vm(cells[0][2], cells[1][2], cells[2][2]),
            },
        };
        MetricsReport {
            methods: vec![
                row(
                    "Raw",
                    [
                        [0.04406, 0.03863, 0.02162],
                        [0.04339, 0.03817, 0.02158],
                        [0.05556, 0.04517, 0.02393],
                    ],
                ),
                row(
                    "LR",
                    [
                        [0.00379, 0.00629, 0.00299],
                        [0.00283, 0.00502, 0.00223],
                        [0.01903, 0.02259, 0.01747],
                    ],
                ),
                row(
                    "RBFNN",
                    [
                        [0.00021, 0.00041, 0.00024],
                        [0.00016, 0.00033, 0.00018],
                        [0.00102, 0.00156, 0.00124],
                    ],
                ),
            ],
        }
    }

    #[test]
    fn markdown_reproduces_published_cells() {
        let report = published_report();
        report.validate().unwrap();
        let md = report.to_markdown();
        assert!(md.contains("| RMSE | Raw | 0.04406 | 0.03863 | 0.02162 |"));
        assert!(md.contains("|  | RBFNN | 0.00021 | 0.00041 | 0.00024 |"));
        assert!(md.contains("| Max Error | Raw | 0.05556 | 0.04517 | 0.02393 |"));
    }

    #[test]
    fn empty_report_is_rejected() {
        let report: MetricsReport<f64> = MetricsReport { methods: vec![] };
        assert!(report.validate().is_err());
        let dir = tempfile::tempdir().unwrap();
        assert!(emit_report(&report, dir.path(), "bad").is_err());
    }

    #[test]
    fn identity_violations_are_rejected() {
        let report = MetricsReport {
            methods: vec![MethodMetrics {
                method: "Broken".into(),
                pose: PoseMetrics {
                    y: vm(0.01, 0.02, 0.03), // mae > rmse
                    z: vm(0.01, 0.005, 0.02),
                    theta: vm(0.01, 0.005, 0.02),
                },
            }],
        };
        assert!(report.validate().is_err());
    }

    #[test]
    fn json_round_trip() {
        let report = published_report();
        let s = serde_json::to_string(&report).unwrap();
        let back: MetricsReport<f64> = serde_json::from_str(&s).unwrap();
        assert_eq!(report, back);
    }

    #[test]
    fn plot_data_layout() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("plot.csv");
        let t = [0.0, 0.001];
        let gt = [Pose2D::new(1.0, 2.0, 0.1), Pose2D::new(1.1, 2.1, 0.2)];
        write_plot_data(&path, &t, &gt, &gt, &gt).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "t,var,gt,raw,corrected");
        assert_eq!(lines.len(), 1 + 3 * 2);
        assert!(lines[1].starts_with("0,y,1,1,1"));
        assert!(lines[3].starts_with("0,z,2,2,2"));
    }
}
