use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::model::{EmpiricalMeasure, MeasureView, ModelSpec};
use crate::rng::{NoiseStream, Source};
use crate::stats;
use crate::{Error, Result};

/// Sampling plan for the frozen fast process `dY = b2(x, mu, Y) dt + sigma2(x, mu, Y) dW`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrozenFastConfig {
    pub burn_in: f64,
    pub n_samples: usize,
    /// Time between retained samples.
    pub thinning: f64,
    pub dt_fast: f64,
    pub seed: u64,
    /// Largest acceptable standard error of a Monte Carlo drift, if any.
    pub tolerance: Option<f64>,
}

impl FrozenFastConfig {
    /// Defaults scaled by the dissipativity constant: burn-in `10 / c4`, thinning `1 / c4`.
    pub fn for_model(spec: &ModelSpec, n_samples: usize, seed: u64) -> Self {
        let c4 = spec.constants.c4;
        Self {
            burn_in: 10.0 / c4,
            n_samples,
            thinning: 1.0 / c4,
            dt_fast: 0.01 * (1.0 / c4).min(1.0),
            seed,
            tolerance: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("burn_in", self.burn_in), ("thinning", self.thinning), ("dt_fast", self.dt_fast)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidConfig(format!("{name} must be positive, got {v}")));
            }
        }
        if self.n_samples < 2 {
            return Err(Error::InvalidConfig("n_samples must be at least 2".into()));
        }
        if let Some(t) = self.tolerance {
            if !(t > 0.0) {
                return Err(Error::InvalidConfig(format!("tolerance must be positive, got {t}")));
            }
        }
        Ok(())
    }

    /// Whether the burn-in covers five relaxation times `1 / c4`.
    pub fn burn_in_sufficient(&self, spec: &ModelSpec) -> bool {
        self.burn_in >= 5.0 / spec.constants.c4
    }
}

/// Monte Carlo averaged drift with per-component standard errors.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DriftEstimate {
    pub value: Vec<f64>,
    pub std_error: Vec<f64>,
}

impl DriftEstimate {
    pub fn max_std_error(&self) -> f64 {
        self.std_error.iter().copied().fold(0.0, f64::max)
    }
}

/// Retained fast states of one long frozen trajectory, row-major.
fn frozen_samples(spec: &ModelSpec, x: &[f64], mu: &MeasureView, cfg: &FrozenFastConfig) -> Result<Vec<f64>> {
    cfg.validate()?;
    if !cfg.burn_in_sufficient(spec) {
        log::warn!(
            "burn-in {} is shorter than 5 / c4 = {}",
            cfg.burn_in,
            5.0 / spec.constants.c4
        );
    }
    let (m, d) = (spec.dim_fast, spec.dim_noise);
    let mut rng = NoiseStream::for_particle(cfg.seed, 0, Source::Frozen);
    let mut y = vec![0.0; m];
    let mut b = vec![0.0; m];
    let mut s = vec![0.0; m * d];
    let mut dw = vec![0.0; d];
    let mut t = 0.0;
    let mut advance = |y: &mut Vec<f64>, span: f64, t: &mut f64| -> Result<()> {
        let steps = (span / cfg.dt_fast).ceil().max(1.0) as usize;
        let h = span / steps as f64;
        let root_h = h.sqrt();
        for _ in 0..steps {
            (spec.b2)(x, mu, y, &mut b);
            (spec.sigma2)(x, mu, y, &mut s);
            for w in dw.iter_mut() {
                let z: f64 = StandardNormal.sample(&mut rng);
                *w = root_h * z;
            }
            for (j, v) in y.iter_mut().enumerate() {
                let noise: f64 = (0..d).map(|k| s[j * d + k] * dw[k]).sum();
                *v += b[j] * h + noise;
            }
            *t += h;
            if y.iter().any(|v| !v.is_finite()) {
                return Err(Error::DissipativityViolation { time: *t });
            }
        }
        Ok(())
    };
    advance(&mut y, cfg.burn_in, &mut t)?;
    let mut samples = Vec::with_capacity(cfg.n_samples * m);
    samples.extend_from_slice(&y);
    for _ in 1..cfg.n_samples {
        advance(&mut y, cfg.thinning, &mut t)?;
        samples.extend_from_slice(&y);
    }
    Ok(samples)
}

/// Empirical approximation of the invariant law of the frozen fast process at `(x, mu)`.
pub fn invariant_measure_estimate(
    spec: &ModelSpec,
    x: &[f64],
    mu: &EmpiricalMeasure,
    cfg: &FrozenFastConfig,
) -> Result<EmpiricalMeasure> {
    check_slow_state(spec, x)?;
    let samples = frozen_samples(spec, x, &mu.view(), cfg)?;
    EmpiricalMeasure::uniform(spec.dim_fast, samples)
}

fn check_slow_state(spec: &ModelSpec, x: &[f64]) -> Result<()> {
    if x.len() != spec.dim_slow {
        return Err(Error::UnsupportedDimension {
            expected: spec.dim_slow,
            found: x.len(),
        });
    }
    Ok(())
}

/// `int b1(x, mu, y) mu_x(dy)` over the frozen invariant law.
pub fn averaged_drift(spec: &ModelSpec, x: &[f64], mu: &EmpiricalMeasure, cfg: &FrozenFastConfig) -> Result<DriftEstimate> {
    averaged_drift_view(spec, x, &mu.view(), cfg)
}

/// Batch count for batch-means standard errors.
const BATCHES: usize = 20;

pub(crate) fn averaged_drift_view(
    spec: &ModelSpec,
    x: &[f64],
    mu: &MeasureView,
    cfg: &FrozenFastConfig,
) -> Result<DriftEstimate> {
    check_slow_state(spec, x)?;
    let n = spec.dim_slow;
    if !spec.slow_drift_reads_fast {
        let mut value = vec![0.0; n];
        (spec.b1)(x, mu, &vec![0.0; spec.dim_fast], &mut value);
        return Ok(DriftEstimate {
            value,
            std_error: vec![0.0; n],
        });
    }
    let samples = frozen_samples(spec, x, mu, cfg)?;
    let mut buf = vec![0.0; n];
    let mut evaluations = Vec::with_capacity(cfg.n_samples * n);
    for y in samples.chunks_exact(spec.dim_fast) {
        (spec.b1)(x, mu, y, &mut buf);
        evaluations.extend_from_slice(&buf);
    }
    let count = cfg.n_samples;
    let batches = BATCHES.min(count);
    let per_batch = count / batches;
    let mut value = vec![0.0; n];
    let mut std_error = vec![0.0; n];
    for i in 0..n {
        let column: Vec<f64> = evaluations.iter().skip(i).step_by(n).copied().collect();
        value[i] = stats::mean(&column);
        let batch_means: Vec<f64> = column.chunks(per_batch).take(batches).map(stats::mean).collect();
        std_error[i] = stats::std_error(&batch_means);
    }
    let estimate = DriftEstimate { value, std_error };
    if let Some(tolerance) = cfg.tolerance {
        let se = estimate.max_std_error();
        if se > tolerance {
            return Err(Error::NoisyDrift { std_error: se, tolerance });
        }
    }
    Ok(estimate)
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::model::{build_linear_model, wasserstein2_1d};

    fn point() -> EmpiricalMeasure {
        EmpiricalMeasure::dirac(&[1.0])
    }

    #[test]
    fn ou_stationary_moments() {
        let spec = build_linear_model(2.0, 2f64.sqrt(), 0.0, 1.0, 0.0).unwrap();
        let n = 10_000;
        let cfg = FrozenFastConfig {
            thinning: 3.0,
            ..FrozenFastConfig::for_model(&spec, n, 4)
        };
        let m = invariant_measure_estimate(&spec, &[1.0], &point(), &cfg).unwrap();
        let band = 3.0 / (n as f64).sqrt();
        assert!((m.mean()[0] - 2.0).abs() < band, "mean {}", m.mean()[0]);
        // variance of the sample variance of N(0, 1) is 2/n
        assert!((m.variance()[0] - 1.0).abs() < band * 2f64.sqrt(), "var {}", m.variance()[0]);
    }

    #[test]
    fn deterministic_contraction_hits_fixed_point() {
        let mut spec = build_linear_model(2.0, 1.0, 0.0, 1.0, 0.0).unwrap();
        spec.sigma2 = Arc::new(|_: &[f64], _: &MeasureView, _: &[f64], out: &mut [f64]| out[0] = 0.0);
        let cfg = FrozenFastConfig {
            burn_in: 80.0 / spec.constants.c4,
            ..FrozenFastConfig::for_model(&spec, 50, 0)
        };
        let m = invariant_measure_estimate(&spec, &[1.0], &point(), &cfg).unwrap();
        assert!(m.points().iter().all(|y| (y - 2.0).abs() < 1e-12));
    }

    #[test]
    fn independent_runs_agree_in_w2() {
        let spec = build_linear_model(2.0, 1.0, 0.0, 1.0, 0.0).unwrap();
        let n = 4000;
        let base = FrozenFastConfig {
            thinning: 2.0,
            ..FrozenFastConfig::for_model(&spec, n, 1)
        };
        let a = invariant_measure_estimate(&spec, &[1.0], &point(), &base).unwrap();
        let b = invariant_measure_estimate(&spec, &[1.0], &point(), &FrozenFastConfig { seed: 2, ..base }).unwrap();
        let scale = (a.variance()[0] / n as f64).sqrt();
        let w2 = wasserstein2_1d(&a, &b).unwrap();
        assert!(w2 < 5.0 * scale, "w2 {w2} vs scale {scale}");
    }

    #[test]
    fn averaged_drift_cancels_at_unit_theta() {
        let spec = build_linear_model(1.0, 1.0, 0.0, 1.0, 0.0).unwrap();
        let cfg = FrozenFastConfig::for_model(&spec, 20_000, 9);
        for x in [-3.0, 0.5, 2.0] {
            let e = averaged_drift(&spec, &[x], &EmpiricalMeasure::dirac(&[x]), &cfg).unwrap();
            assert!(e.value[0].abs() < 3.0 * e.std_error[0] + 1e-3, "x {x}: {:?}", e);
        }
    }

    #[test]
    fn y_independent_drift_short_circuits() {
        let mut spec = build_linear_model(2.0, 1.0, 0.0, 1.0, 0.0).unwrap();
        spec.b1 = Arc::new(|x: &[f64], _: &MeasureView, _: &[f64], out: &mut [f64]| out[0] = x[0].cos());
        spec.slow_drift_reads_fast = false;
        let cfg = FrozenFastConfig::for_model(&spec, 10, 0);
        let e = averaged_drift(&spec, &[0.3], &point(), &cfg).unwrap();
        assert_eq!(e.value, vec![0.3f64.cos()]);
        assert_eq!(e.std_error, vec![0.0]);
    }

    #[test]
    fn divergence_is_a_dissipativity_violation() {
        let mut spec = build_linear_model(2.0, 1.0, 0.0, 1.0, 0.0).unwrap();
        spec.b2 = Arc::new(|_: &[f64], _: &MeasureView, y: &[f64], out: &mut [f64]| out[0] = 1.0 + y[0] * y[0]);
        let cfg = FrozenFastConfig::for_model(&spec, 10, 0);
        assert!(matches!(
            invariant_measure_estimate(&spec, &[1.0], &point(), &cfg),
            Err(Error::DissipativityViolation { .. })
        ));
    }

    #[test]
    fn tolerance_flags_noisy_drift() {
        let spec = build_linear_model(2.0, 1.0, 0.0, 1.0, 0.0).unwrap();
        let cfg = FrozenFastConfig {
            tolerance: Some(1e-6),
            ..FrozenFastConfig::for_model(&spec, 100, 0)
        };
        assert!(matches!(
            averaged_drift(&spec, &[1.0], &point(), &cfg),
            Err(Error::NoisyDrift { .. })
        ));
    }
}
