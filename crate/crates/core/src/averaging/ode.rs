use serde::Serialize;

use super::frozen::{averaged_drift_view, FrozenFastConfig};
use crate::model::{MeasureView, ModelSpec};
use crate::sde::ReferencePath;
use crate::{Error, Result};

/// How the averaged drift is evaluated along the ODE.
#[derive(Debug, Clone, PartialEq)]
pub enum DriftMode {
    /// The model's closed-form averaged drift.
    Analytic,
    /// Frozen-process Monte Carlo with common random numbers at every evaluation.
    MonteCarlo(FrozenFastConfig),
}

/// Solution of the averaged equation, whose law argument is the Dirac mass at the state.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AveragedPath {
    pub dim: usize,
    pub times: Vec<f64>,
    /// Row-major states, one row per time.
    pub states: Vec<f64>,
    /// Averaged drift at each state, used for Hermite interpolation.
    pub drifts: Vec<f64>,
    /// Marker: the law argument was `delta_{X(t)}` throughout.
    pub dirac_law: bool,
    /// Largest per-step Simpson defect `|X_{k+1} - X_k - int f| / h`.
    pub residual: f64,
    /// Accumulated Monte Carlo error bound at the endpoint (zero in analytic mode).
    pub propagated_std_error: f64,
}

impl AveragedPath {
    pub fn state(&self, k: usize) -> &[f64] {
        &self.states[k * self.dim..(k + 1) * self.dim]
    }

    pub fn drift(&self, k: usize) -> &[f64] {
        &self.drifts[k * self.dim..(k + 1) * self.dim]
    }

    pub fn endpoint(&self) -> &[f64] {
        self.state(self.times.len() - 1)
    }

    /// Cubic Hermite interpolation; constant extrapolation outside the grid.
    pub fn interpolate(&self, t: f64, out: &mut [f64]) {
        let last = self.times.len() - 1;
        if t <= self.times[0] {
            out.copy_from_slice(self.state(0));
            return;
        }
        if t >= self.times[last] {
            out.copy_from_slice(self.state(last));
            return;
        }
        let k = self.times.partition_point(|&s| s <= t) - 1;
        let h = self.times[k + 1] - self.times[k];
        let s = (t - self.times[k]) / h;
        let (s2, s3) = (s * s, s * s * s);
        let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
        let h10 = s3 - 2.0 * s2 + s;
        let h01 = -2.0 * s3 + 3.0 * s2;
        let h11 = s3 - s2;
        for (i, o) in out.iter_mut().enumerate().take(self.dim) {
            *o = h00 * self.state(k)[i]
                + h10 * h * self.drift(k)[i]
                + h01 * self.state(k + 1)[i]
                + h11 * h * self.drift(k + 1)[i];
        }
    }
}

impl ReferencePath for AveragedPath {
    fn state_at(&self, t: f64, out: &mut [f64]) {
        self.interpolate(t, out);
    }
}

struct Drift<'a> {
    spec: &'a ModelSpec,
    mode: &'a DriftMode,
}

impl Drift<'_> {
    /// Returns the largest standard error of this evaluation.
    fn eval(&self, x: &[f64], out: &mut [f64]) -> Result<f64> {
        let mu = MeasureView::dirac(x);
        match self.mode {
            DriftMode::Analytic => {
                let hook = self.spec.averaged_drift.as_ref().ok_or_else(|| {
                    Error::InvalidModel(format!("model `{}` has no closed-form averaged drift", self.spec.name))
                })?;
                hook(x, &mu, out);
                Ok(0.0)
            }
            DriftMode::MonteCarlo(cfg) => {
                let e = averaged_drift_view(self.spec, x, &mu, cfg)?;
                out.copy_from_slice(&e.value);
                Ok(e.max_std_error())
            }
        }
    }
}

/// Classical RK4 for `dX = bbar(X, delta_X) dt` on a uniform grid of step at most `dt`.
pub fn averaged_ode_solve(spec: &ModelSpec, x0: &[f64], t_end: f64, dt: f64, mode: &DriftMode) -> Result<AveragedPath> {
    let n = spec.dim_slow;
    if x0.len() != n {
        return Err(Error::UnsupportedDimension { expected: n, found: x0.len() });
    }
    if !(t_end > 0.0 && dt > 0.0 && t_end.is_finite()) {
        return Err(Error::InvalidConfig(format!("need t_end > 0 and dt > 0, got {t_end} and {dt}")));
    }
    let steps = ((t_end / dt) * (1.0 - 1e-12)).ceil().max(1.0) as usize;
    let h = t_end / steps as f64;
    let f = Drift { spec, mode };

    let mut times = Vec::with_capacity(steps + 1);
    let mut states = Vec::with_capacity((steps + 1) * n);
    let mut drifts = Vec::with_capacity((steps + 1) * n);
    let mut std_errors = Vec::with_capacity(steps);
    let mut lipschitz = Vec::with_capacity(steps);
    let (mut k1, mut k2, mut k3, mut k4) = (vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    let mut tmp = vec![0.0; n];
    let mut x = x0.to_vec();

    let mut se = f.eval(&x, &mut k1)?;
    times.push(0.0);
    states.extend_from_slice(&x);
    drifts.extend_from_slice(&k1);
    for k in 0..steps {
        for i in 0..n {
            tmp[i] = x[i] + 0.5 * h * k1[i];
        }
        se = se.max(f.eval(&tmp, &mut k2)?);
        for i in 0..n {
            tmp[i] = x[i] + 0.5 * h * k2[i];
        }
        se = se.max(f.eval(&tmp, &mut k3)?);
        for i in 0..n {
            tmp[i] = x[i] + h * k3[i];
        }
        se = se.max(f.eval(&tmp, &mut k4)?);
        // local Lipschitz estimate from the stage spread, used only for error propagation
        let spread: f64 = k1.iter().zip(&k4).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let moved: f64 = k3.iter().map(|v| (h * v).powi(2)).sum::<f64>().sqrt();
        lipschitz.push(if moved > 0.0 { spread / moved } else { 0.0 });
        std_errors.push(se);
        for i in 0..n {
            x[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::BlowUp { particle: 0, time: (k + 1) as f64 * h });
        }
        se = f.eval(&x, &mut k1)?;
        times.push(if k + 1 == steps { t_end } else { (k + 1) as f64 * h });
        states.extend_from_slice(&x);
        drifts.extend_from_slice(&k1);
    }

    let mut path = AveragedPath {
        dim: n,
        times,
        states,
        drifts,
        dirac_law: true,
        residual: 0.0,
        propagated_std_error: 0.0,
    };
    // Gronwall: sum_k h se_k exp(int_{t_k}^T L)
    let mut growth = 0.0f64;
    let mut propagated = 0.0;
    for k in (0..steps).rev() {
        propagated += h * std_errors[k] * growth.exp();
        growth += lipschitz[k] * h;
    }
    path.propagated_std_error = propagated;
    path.residual = simpson_defect(&path, &f)?;
    Ok(path)
}

fn simpson_defect(path: &AveragedPath, f: &Drift) -> Result<f64> {
    let n = path.dim;
    let mut mid = vec![0.0; n];
    let mut fm = vec![0.0; n];
    let mut worst: f64 = 0.0;
    for k in 0..path.times.len() - 1 {
        let (a, b) = (path.times[k], path.times[k + 1]);
        let h = b - a;
        path.interpolate(0.5 * (a + b), &mut mid);
        f.eval(&mid, &mut fm)?;
        let defect: f64 = (0..n)
            .map(|i| {
                let quad = h / 6.0 * (path.drift(k)[i] + 4.0 * fm[i] + path.drift(k + 1)[i]);
                (path.state(k + 1)[i] - path.state(k)[i] - quad).powi(2)
            })
            .sum::<f64>()
            .sqrt();
        worst = worst.max(defect / h);
    }
    Ok(worst)
}
