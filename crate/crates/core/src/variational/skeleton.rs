use serde::Serialize;

use super::control::ControlPair;
use crate::averaging::{AveragedPath, FrozenFastConfig};
use crate::model::{MeasureView, ModelSpec};
use crate::{Error, Result};

/// Frozen-process sample count used when the model has no closed-form averaged drift.
pub const FALLBACK_SAMPLES: usize = 2000;

/// Solution of the controlled averaged ODE.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SkeletonPath {
    pub dim: usize,
    pub times: Vec<f64>,
    /// Row-major states, one row per time.
    pub states: Vec<f64>,
    /// Largest per-step Simpson defect, divided by the step.
    pub residual_norm: f64,
    /// Largest Monte Carlo standard error of the averaged drift (zero with a closed form).
    pub drift_std_error: f64,
}

impl SkeletonPath {
    pub fn state(&self, k: usize) -> &[f64] {
        &self.states[k * self.dim..(k + 1) * self.dim]
    }

    pub fn endpoint(&self) -> &[f64] {
        self.state(self.times.len() - 1)
    }
}

/// Reusable evaluator of the skeleton right-hand side
/// `bbar(x, L) + sigma1(x, L) psi + (phi - 1) int g dnu` with `L = delta_{Xbar_t}`.
pub(crate) struct Skeleton<'a> {
    spec: &'a ModelSpec,
    averaged: &'a AveragedPath,
    stencil: Vec<f64>,
    fallback: Option<FrozenFastConfig>,
    dt: f64,
}

struct Buffers {
    law: Vec<f64>,
    s1: Vec<f64>,
    comp: Vec<f64>,
}

impl<'a> Skeleton<'a> {
    pub(crate) fn new(spec: &'a ModelSpec, averaged: &'a AveragedPath, dt: f64) -> Result<Self> {
        if averaged.dim != spec.dim_slow {
            return Err(Error::UnsupportedDimension {
                expected: spec.dim_slow,
                found: averaged.dim,
            });
        }
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::InvalidConfig(format!("skeleton step must be positive, got {dt}")));
        }
        let stencil = if spec.has_jumps() && spec.jump_mean.is_none() {
            spec.mark_stencil()
        } else {
            Vec::new()
        };
        let fallback = spec
            .averaged_drift
            .is_none()
            .then(|| FrozenFastConfig::for_model(spec, FALLBACK_SAMPLES, spec.stencil_seed));
        Ok(Self {
            spec,
            averaged,
            stencil,
            fallback,
            dt,
        })
    }

    pub(crate) fn t_end(&self) -> f64 {
        *self.averaged.times.last().unwrap()
    }

    /// Step grid: uniform nodes merged with the control breakpoints.
    fn grid(&self, control: &ControlPair) -> Vec<f64> {
        let t_end = self.t_end();
        let k = ((t_end / self.dt) * (1.0 - 1e-12)).ceil().max(1.0) as usize;
        let mut nodes: Vec<f64> = (0..=k).map(|i| t_end * i as f64 / k as f64).collect();
        nodes.extend(control.psi.edges().iter().chain(control.phi.edges()).filter(|&&e| e < t_end));
        nodes.sort_by(f64::total_cmp);
        nodes.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * t_end);
        *nodes.last_mut().unwrap() = t_end;
        nodes
    }

    /// Right-hand side at time `t` with the control values of the step containing `t_ctrl`.
    fn rhs(&self, t: f64, t_ctrl: f64, x: &[f64], control: &ControlPair, buf: &mut Buffers, out: &mut [f64]) -> Result<f64> {
        let spec = self.spec;
        let (n, d) = (spec.dim_slow, spec.dim_noise);
        self.averaged.interpolate(t, &mut buf.law);
        let mu = MeasureView::dirac(&buf.law);
        let se = match (&spec.averaged_drift, &self.fallback) {
            (Some(hook), _) => {
                hook(x, &mu, out);
                0.0
            }
            (None, Some(cfg)) => {
                let e = crate::averaging::averaged_drift_view(spec, x, &mu, cfg)?;
                out.copy_from_slice(&e.value);
                e.max_std_error()
            }
            (None, None) => unreachable!("fallback set when the hook is missing"),
        };
        let psi = control.psi.at(t_ctrl);
        if psi.iter().any(|v| *v != 0.0) {
            (spec.sigma1)(x, &mu, &mut buf.s1);
            for (o, row) in out.iter_mut().zip(buf.s1.chunks_exact(d)).take(n) {
                *o += row.iter().zip(psi).map(|(s, p)| s * p).sum::<f64>();
            }
        }
        let tilt = control.phi.at(t_ctrl)[0] - 1.0;
        if tilt != 0.0 && spec.has_jumps() {
            spec.compensator(t, x, &mu, &self.stencil, &mut buf.comp);
            for (o, c) in out.iter_mut().zip(&buf.comp).take(n) {
                *o += tilt * c;
            }
        }
        Ok(se)
    }

    /// RK4 over the merged grid; the defect is computed only when `residual` is set.
    pub(crate) fn solve(&self, x0: &[f64], control: &ControlPair, residual: bool) -> Result<SkeletonPath> {
        let n = self.spec.dim_slow;
        if control.psi.dim() != self.spec.dim_noise {
            return Err(Error::InvalidControl(format!(
                "psi has dimension {}, the model has {} noise components",
                control.psi.dim(),
                self.spec.dim_noise
            )));
        }
        if control.t_end() < self.t_end() * (1.0 - 1e-9) {
            return Err(Error::InvalidControl(format!(
                "control covers [0, {}] but the averaged path ends at {}",
                control.t_end(),
                self.t_end()
            )));
        }
        let grid = self.grid(control);
        let mut buf = Buffers {
            law: vec![0.0; n],
            s1: vec![0.0; n * self.spec.dim_noise],
            comp: vec![0.0; n],
        };
        let (mut k1, mut k2, mut k3, mut k4) = (vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]);
        let (mut tmp, mut fb, mut fm, mut mid) = (vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]);
        let mut x = x0.to_vec();
        let mut states = Vec::with_capacity(grid.len() * n);
        states.extend_from_slice(&x);
        let mut se: f64 = 0.0;
        let mut worst: f64 = 0.0;
        for w in grid.windows(2) {
            let (a, b) = (w[0], w[1]);
            let h = b - a;
            let c = 0.5 * (a + b);
            se = se.max(self.rhs(a, c, &x, control, &mut buf, &mut k1)?);
            for i in 0..n {
                tmp[i] = x[i] + 0.5 * h * k1[i];
            }
            se = se.max(self.rhs(c, c, &tmp, control, &mut buf, &mut k2)?);
            for i in 0..n {
                tmp[i] = x[i] + 0.5 * h * k2[i];
            }
            se = se.max(self.rhs(c, c, &tmp, control, &mut buf, &mut k3)?);
            for i in 0..n {
                tmp[i] = x[i] + h * k3[i];
            }
            se = se.max(self.rhs(b, c, &tmp, control, &mut buf, &mut k4)?);
            let x_prev = x.clone();
            for i in 0..n {
                x[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            }
            if x.iter().any(|v| !v.is_finite()) {
                return Err(Error::BlowUp { particle: 0, time: b });
            }
            if residual {
                self.rhs(b, c, &x, control, &mut buf, &mut fb)?;
                for i in 0..n {
                    mid[i] = 0.5 * (x_prev[i] + x[i]) + h / 8.0 * (k1[i] - fb[i]);
                }
                self.rhs(c, c, &mid, control, &mut buf, &mut fm)?;
                let defect = (0..n)
                    .map(|i| (x[i] - x_prev[i] - h / 6.0 * (k1[i] + 4.0 * fm[i] + fb[i])).powi(2))
                    .sum::<f64>()
                    .sqrt();
                worst = worst.max(defect / h);
            }
            states.extend_from_slice(&x);
        }
        Ok(SkeletonPath {
            dim: n,
            times: grid,
            states,
            residual_norm: worst,
            drift_std_error: se,
        })
    }
}

/// Integrates the skeleton equation from the averaged path's initial state,
/// with the law argument `delta_{Xbar_t}` taken from `averaged`.
pub fn skeleton_solve(spec: &ModelSpec, averaged: &AveragedPath, control: &ControlPair, dt: f64) -> Result<SkeletonPath> {
    let solver = Skeleton::new(spec, averaged, dt)?;
    solver.solve(averaged.state(0), control, true)
}
