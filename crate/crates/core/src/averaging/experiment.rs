use std::path::Path;

use serde::Serialize;

use super::ode::{averaged_ode_solve, DriftMode};
use crate::model::ModelSpec;
use crate::rng::{NoiseStream, Source};
use crate::sde::{simulate, Recording, SimConfig, SimOptions};
use crate::stats::{bootstrap_mean_ci, mean};
use crate::{Error, Result};

/// Settings of [`averaging_error_experiment`] beyond the base simulation config.
#[derive(Debug, Clone)]
pub struct AveragingOptions {
    pub drift_mode: DriftMode,
    /// Step of the averaged ODE solve.
    pub ode_dt: f64,
    /// Block window as a function of `delta`; `sqrt(delta)` when unset.
    pub window: Option<fn(f64) -> f64>,
    pub bootstrap_resamples: usize,
}

impl Default for AveragingOptions {
    fn default() -> Self {
        Self {
            drift_mode: DriftMode::Analytic,
            ode_dt: 1e-3,
            window: None,
            bootstrap_resamples: 1000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AveragingRow {
    pub epsilon: f64,
    pub delta: f64,
    /// Block window `Delta`.
    pub window: f64,
    /// Estimate of `E sup_t |X_t - Xbar_t|^2`.
    pub error: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub n_rep: usize,
    /// Per-replicate estimates.
    pub replicates: Vec<f64>,
    /// `E int |Y - Y^aux|^2 dt` for the frozen-block auxiliary pair.
    pub fast_block_gap: f64,
    /// `E sup |X - X^aux|^2`.
    pub slow_block_gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AveragingTable {
    pub model: String,
    pub base: SimConfig,
    pub rows: Vec<AveragingRow>,
}

impl AveragingTable {
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["epsilon", "delta", "Delta", "error", "ci_lo", "ci_hi", "n_rep"])?;
        for r in &self.rows {
            w.write_record([
                r.epsilon.to_string(),
                r.delta.to_string(),
                r.window.to_string(),
                r.error.to_string(),
                r.ci_lo.to_string(),
                r.ci_hi.to_string(),
                r.n_rep.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Full configuration, seeds and per-replicate values.
    pub fn write_manifest(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }
}

/// Strong averaging error along a decreasing list of `epsilon`, each replicate
/// an independent ensemble coupled against one averaged path.
pub fn averaging_error_experiment(
    spec: &ModelSpec,
    base: &SimConfig,
    eps_list: &[f64],
    delta_rule: &dyn Fn(f64) -> f64,
    n_rep: usize,
    opts: &AveragingOptions,
) -> Result<AveragingTable> {
    if eps_list.is_empty() || n_rep == 0 {
        return Err(Error::InvalidConfig("need at least one epsilon and one replicate".into()));
    }
    if eps_list.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(Error::InvalidConfig(format!("eps_list must be strictly decreasing, got {eps_list:?}")));
    }
    let xbar = averaged_ode_solve(spec, &base.x0, base.t_end, opts.ode_dt, &opts.drift_mode)?;
    let mut rows = Vec::with_capacity(eps_list.len());
    for &eps in eps_list {
        let delta = delta_rule(eps);
        if !(delta > 0.0 && delta <= eps * eps * (1.0 + 1e-12)) {
            return Err(Error::InvalidConfig(format!(
                "delta_rule({eps}) = {delta} must lie in (0, eps^2]"
            )));
        }
        let cfg = base.rescaled(eps, delta)?;
        let window = opts.window.map_or(delta.sqrt(), |f| f(delta)).min(cfg.t_end);
        let mut replicates = Vec::with_capacity(n_rep);
        let (mut fast_gap, mut slow_gap) = (0.0, 0.0);
        for r in 0..n_rep {
            let run_opts = SimOptions {
                recording: Recording::Endpoints,
                reference: Some(&xbar),
                block: Some(window),
                particle_offset: (r * cfg.n_particles) as u64,
                ..SimOptions::default()
            };
            let rec = simulate(spec, &cfg, None, &run_opts)?;
            replicates.push(mean(rec.reference_sup_sq.as_ref().expect("reference tracked")));
            let block = rec.block.as_ref().expect("block tracked");
            fast_gap += mean(&block.fast_gap_integral);
            slow_gap += mean(&block.slow_gap_sup);
        }
        let mut rng = NoiseStream::for_particle(base.seed, rows.len() as u64, Source::Auxiliary);
        let (ci_lo, ci_hi) = bootstrap_mean_ci(&replicates, opts.bootstrap_resamples, 0.95, &mut rng);
        rows.push(AveragingRow {
            epsilon: eps,
            delta,
            window,
            error: mean(&replicates),
            ci_lo,
            ci_hi,
            n_rep,
            replicates,
            fast_block_gap: fast_gap / n_rep as f64,
            slow_block_gap: slow_gap / n_rep as f64,
        });
    }
    Ok(AveragingTable {
        model: spec.name.clone(),
        base: base.clone(),
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::build_linear_model;

    fn base() -> SimConfig {
        SimConfig::new(0.2, 0.04, 1.0, 0.004, 200, 3, vec![1.0], vec![2.0]).unwrap()
    }

    #[test]
    fn rejects_bad_schedules() {
        let spec = build_linear_model(2.0, 1.0, 0.0, 1.0, 0.0).unwrap();
        let o = AveragingOptions::default();
        let sq = |e: f64| e * e;
        assert!(averaging_error_experiment(&spec, &base(), &[0.1, 0.2], &sq, 1, &o).is_err());
        assert!(averaging_error_experiment(&spec, &base(), &[0.2, 0.2], &sq, 1, &o).is_err());
        assert!(averaging_error_experiment(&spec, &base(), &[0.2], &|e| e, 1, &o).is_err());
    }

    #[test]
    fn table_shape_and_csv() {
        let spec = build_linear_model(2.0, 1.0, 0.0, 1.0, 0.0).unwrap();
        let t = averaging_error_experiment(&spec, &base(), &[0.2], &|e| e * e, 3, &AveragingOptions::default()).unwrap();
        let row = &t.rows[0];
        assert_eq!(row.replicates.len(), 3);
        assert!(row.ci_lo <= row.error && row.error <= row.ci_hi);
        assert!((row.window - 0.2).abs() < 1e-12);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("avg.csv");
        t.write_csv(&p).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert!(text.starts_with("epsilon,delta,Delta,error,ci_lo,ci_hi,n_rep"));
        t.write_manifest(&dir.path().join("avg.json")).unwrap();
    }
}
