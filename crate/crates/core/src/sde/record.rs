use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::model::{norm_sq, EmpiricalMeasure};
use crate::{Error, Result};

/// Particle states at one time, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleEnsemble {
    pub time: f64,
    pub dim_slow: usize,
    pub dim_fast: usize,
    pub slow: Vec<f64>,
    pub fast: Vec<f64>,
}

impl ParticleEnsemble {
    pub fn len(&self) -> usize {
        self.slow.len() / self.dim_slow
    }

    pub fn is_empty(&self) -> bool {
        self.slow.is_empty()
    }

    pub fn slow_of(&self, i: usize) -> &[f64] {
        &self.slow[i * self.dim_slow..(i + 1) * self.dim_slow]
    }

    pub fn fast_of(&self, i: usize) -> &[f64] {
        &self.fast[i * self.dim_fast..(i + 1) * self.dim_fast]
    }

    pub fn slow_marginal(&self) -> Result<EmpiricalMeasure> {
        EmpiricalMeasure::uniform(self.dim_slow, self.slow.clone())
    }

    pub fn mean_norm_slow(&self) -> f64 {
        self.slow.chunks_exact(self.dim_slow).map(|x| norm_sq(x).sqrt()).sum::<f64>() / self.len() as f64
    }

    pub fn mean_sq_slow(&self) -> f64 {
        self.slow.chunks_exact(self.dim_slow).map(norm_sq).sum::<f64>() / self.len() as f64
    }

    pub fn mean_sq_fast(&self) -> f64 {
        self.fast.chunks_exact(self.dim_fast).map(norm_sq).sum::<f64>() / self.len() as f64
    }
}

/// Per-particle diagnostics of the frozen-block auxiliary processes.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockDiagnostics {
    pub window: f64,
    /// `int_0^T |Y_t - Y^aux_t|^2 dt`.
    pub fast_gap_integral: Vec<f64>,
    /// `sup_t |X_t - X^aux_t|^2`.
    pub slow_gap_sup: Vec<f64>,
}

/// Result of one ensemble run: thinned snapshots plus per-particle path functionals.
#[derive(Debug, Clone, PartialEq)]
pub struct PathRecord {
    pub epsilon: f64,
    pub delta: f64,
    pub step: f64,
    pub seed: u64,
    pub times: Vec<f64>,
    pub ensembles: Vec<ParticleEnsemble>,
    /// Mean accepted jump count up to each recorded time.
    pub mean_jumps: Vec<f64>,
    /// `sup_t |X_t|^2` per particle.
    pub sup_sq: Vec<f64>,
    /// `sup_t |X_t - reference(t)|^2` per particle, when a reference path was given.
    pub reference_sup_sq: Option<Vec<f64>>,
    /// `int_0^T |Y_t|^2 dt` per particle.
    pub fast_energy: Vec<f64>,
    pub jump_counts: Vec<u32>,
    /// Log likelihood ratio of the original law against the controlled law, per particle.
    pub log_weights: Option<Vec<f64>>,
    pub block: Option<BlockDiagnostics>,
}

#[derive(Debug, Serialize, Deserialize)]
struct TrajectoryHeader {
    layout: String,
    n_particles: usize,
    dim_slow: usize,
    dim_fast: usize,
    grid_length: usize,
    times: Vec<f64>,
}

const LAYOUT: &str = "row-major f64 little-endian: for each time, N x dim_slow slow states then N x dim_fast fast states";

impl PathRecord {
    pub fn n_particles(&self) -> usize {
        self.sup_sq.len()
    }

    pub fn final_ensemble(&self) -> &ParticleEnsemble {
        self.ensembles.last().expect("record has at least two snapshots")
    }

    pub fn mean_sup_sq(&self) -> f64 {
        self.sup_sq.iter().sum::<f64>() / self.sup_sq.len() as f64
    }

    pub fn mean_fast_energy(&self) -> f64 {
        self.fast_energy.iter().sum::<f64>() / self.fast_energy.len() as f64
    }

    /// Summary table: time, mean |X|, E|X|^2, mean jump count.
    pub fn write_summary_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["time", "mean_abs_x", "mean_sq_x", "mean_jumps"])?;
        for (e, jumps) in self.ensembles.iter().zip(&self.mean_jumps) {
            w.write_record([
                e.time.to_string(),
                e.mean_norm_slow().to_string(),
                e.mean_sq_slow().to_string(),
                jumps.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Full snapshots to `bin` with a JSON header at `sidecar`.
    pub fn write_trajectories(&self, bin: &Path, sidecar: &Path) -> Result<()> {
        let first = &self.ensembles[0];
        let header = TrajectoryHeader {
            layout: LAYOUT.into(),
            n_particles: first.len(),
            dim_slow: first.dim_slow,
            dim_fast: first.dim_fast,
            grid_length: self.times.len(),
            times: self.times.clone(),
        };
        std::fs::write(sidecar, serde_json::to_string_pretty(&header)?)?;
        let mut out = BufWriter::new(File::create(bin)?);
        for e in &self.ensembles {
            for v in e.slow.iter().chain(&e.fast) {
                out.write_all(&v.to_le_bytes())?;
            }
        }
        out.flush()?;
        Ok(())
    }
}

/// Reads snapshots written by [`PathRecord::write_trajectories`].
pub fn read_trajectories(bin: &Path, sidecar: &Path) -> Result<Vec<ParticleEnsemble>> {
    let header: TrajectoryHeader = serde_json::from_str(&std::fs::read_to_string(sidecar)?)?;
    let mut bytes = Vec::new();
    File::open(bin)?.read_to_end(&mut bytes)?;
    let (n, ds, df) = (header.n_particles, header.dim_slow, header.dim_fast);
    let per_time = n * (ds + df);
    if bytes.len() != 8 * per_time * header.grid_length || header.times.len() != header.grid_length {
        return Err(Error::InvalidConfig(format!(
            "trajectory file holds {} bytes, header expects {}",
            bytes.len(),
            8 * per_time * header.grid_length
        )));
    }
    let values: Vec<f64> = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok(values
        .chunks_exact(per_time)
        .zip(&header.times)
        .map(|(chunk, &time)| ParticleEnsemble {
            time,
            dim_slow: ds,
            dim_fast: df,
            slow: chunk[..n * ds].to_vec(),
            fast: chunk[n * ds..].to_vec(),
        })
        .collect())
}
