use serde::Serialize;

use super::record::PathRecord;
use crate::stats::{linear_fit, std_error};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IncrementRow {
    pub window: f64,
    /// `E |X_t - X_{t(window)}|^2` averaged over particles and recorded times.
    pub mean_sq_increment: f64,
    /// Standard error across particles.
    pub std_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IncrementTable {
    pub rows: Vec<IncrementRow>,
    /// Least-squares slope of `ln value` against `ln window` over positive rows.
    pub log_log_slope: Option<f64>,
}

/// Block increments `|X_t - X_{floor(t / window) window}|^2` over the recorded grid.
pub fn path_increment_stats(record: &PathRecord, windows: &[f64]) -> Result<IncrementTable> {
    let times = &record.times;
    let t_end = *times.last().expect("nonempty record");
    let stride = times
        .windows(2)
        .map(|w| w[1] - w[0])
        .fold(f64::INFINITY, f64::min);
    let tol = 1e-9 * t_end;
    let n = record.n_particles();
    let mut rows = Vec::with_capacity(windows.len());
    for &w in windows {
        if !(w > 0.0) || w > t_end + tol || w < stride - tol {
            return Err(Error::InvalidWindow { window: w, t_end });
        }
        let anchors: Vec<usize> = times
            .iter()
            .map(|&t| {
                let start = (t / w + 1e-9).floor() * w;
                times.partition_point(|&s| s <= start + tol).saturating_sub(1)
            })
            .collect();
        let per_particle: Vec<f64> = (0..n)
            .map(|i| {
                let total: f64 = anchors
                    .iter()
                    .enumerate()
                    .map(|(k, &a)| {
                        let x = record.ensembles[k].slow_of(i);
                        let x0 = record.ensembles[a].slow_of(i);
                        x.iter().zip(x0).map(|(u, v)| (u - v) * (u - v)).sum::<f64>()
                    })
                    .sum();
                total / times.len() as f64
            })
            .collect();
        rows.push(IncrementRow {
            window: w,
            mean_sq_increment: crate::stats::mean(&per_particle),
            std_error: std_error(&per_particle),
        });
    }
    let (lx, ly): (Vec<f64>, Vec<f64>) = rows
        .iter()
        .filter(|r| r.mean_sq_increment > 0.0)
        .map(|r| (r.window.ln(), r.mean_sq_increment.ln()))
        .unzip();
    Ok(IncrementTable {
        log_log_slope: linear_fit(&lx, &ly).map(|(_, b)| b),
        rows,
    })
}
