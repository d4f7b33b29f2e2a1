use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::control::{ControlPair, PiecewiseConstant};
use super::costs::{cost_l1, cost_l2, cost_total};
use super::skeleton::Skeleton;
use crate::averaging::AveragedPath;
use crate::model::ModelSpec;
use crate::rng::{NoiseStream, Source};
use crate::{Error, Result};

/// Settings of the penalty-continuation optimizer behind [`rate_endpoint`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub seed: u64,
    /// Number of starts; start 0 is the null control.
    pub starts: usize,
    pub penalties: Vec<f64>,
    pub max_iter: usize,
    /// Stop when the gradient's sup-norm falls below `grad_tol * (1 + |J|)`.
    pub grad_tol: f64,
    /// Relative central-difference step.
    pub fd_step: f64,
    pub skeleton_dt: f64,
    /// Standard deviation of random start coefficients.
    pub start_scale: f64,
    /// Control-class bound, checked after optimization.
    pub budget: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            starts: 5,
            penalties: vec![1e1, 1e2, 1e3, 1e4],
            max_iter: 300,
            grad_tol: 1e-10,
            fd_step: 1e-5,
            skeleton_dt: 0.01,
            start_scale: 0.5,
            budget: f64::INFINITY,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.starts == 0 || self.max_iter == 0 {
            return Err(Error::InvalidConfig("starts and max_iter must be positive".into()));
        }
        if self.penalties.is_empty() || self.penalties.windows(2).any(|w| !(w[1] > w[0])) || !(self.penalties[0] > 0.0) {
            return Err(Error::InvalidConfig("penalties must be positive and increasing".into()));
        }
        for (name, v) in [("fd_step", self.fd_step), ("skeleton_dt", self.skeleton_dt), ("grad_tol", self.grad_tol)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidConfig(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.start_scale >= 0.0 && self.budget > 0.0) {
            return Err(Error::InvalidConfig("start_scale must be >= 0 and budget > 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceEntry {
    pub start: usize,
    pub penalty: f64,
    pub iterations: usize,
    pub objective: f64,
    pub cost: f64,
    pub gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateResult {
    /// Control cost of the selected control.
    pub value: f64,
    pub argmin: ControlPair,
    /// `|Xhat_T - target|` under `argmin`.
    pub endpoint_gap: f64,
    pub endpoint: Vec<f64>,
    pub best_start: usize,
    pub optimizer_trace: Vec<TraceEntry>,
    /// Either cost component exceeds the budget.
    pub budget_exceeded: bool,
}

struct Problem<'a> {
    solver: Skeleton<'a>,
    x0: &'a [f64],
    target: &'a [f64],
    t_end: f64,
    m1: usize,
    m2: usize,
    d: usize,
    tilt: bool,
    spec: &'a ModelSpec,
}

struct Evaluation {
    cost: f64,
    gap: f64,
    endpoint: Vec<f64>,
}

impl Problem<'_> {
    fn dim(&self) -> usize {
        self.m1 * self.d + if self.tilt { self.m2 } else { 0 }
    }

    fn control(&self, theta: &[f64], budget: f64) -> Result<ControlPair> {
        let split = self.m1 * self.d;
        let psi = PiecewiseConstant::uniform(self.t_end, self.m1, self.d, theta[..split].to_vec())?;
        let phi_values = if self.tilt {
            theta[split..].iter().map(|e| e.exp()).collect()
        } else {
            vec![1.0; self.m2]
        };
        let phi = PiecewiseConstant::uniform(self.t_end, self.m2, 1, phi_values)?;
        ControlPair::new(psi, phi, budget)
    }

    fn evaluate(&self, theta: &[f64]) -> Result<Evaluation> {
        let control = self.control(theta, f64::INFINITY)?;
        let path = self.solver.solve(self.x0, &control, false)?;
        let endpoint = path.endpoint().to_vec();
        let gap = endpoint
            .iter()
            .zip(self.target)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        Ok(Evaluation {
            cost: cost_total(&control, &self.spec.levy, self.t_end)?,
            gap,
            endpoint,
        })
    }

    /// Penalized objective; non-finite trial points map to `+inf` so line searches back off.
    fn objective(&self, theta: &[f64], penalty: f64) -> f64 {
        if theta.iter().any(|v| !v.is_finite() || v.abs() > 700.0) {
            return f64::INFINITY;
        }
        match self.evaluate(theta) {
            Ok(e) => e.cost + penalty * e.gap * e.gap,
            Err(_) => f64::INFINITY,
        }
    }

    fn gradient(&self, theta: &[f64], penalty: f64, rel_step: f64, grad: &mut [f64]) {
        let mut probe = theta.to_vec();
        for i in 0..theta.len() {
            let h = rel_step * theta[i].abs().max(1.0);
            probe[i] = theta[i] + h;
            let up = self.objective(&probe, penalty);
            probe[i] = theta[i] - h;
            let down = self.objective(&probe, penalty);
            probe[i] = theta[i];
            grad[i] = (up - down) / (2.0 * h);
        }
    }

    /// BFGS with Armijo backtracking; returns the iteration count.
    fn minimize(&self, theta: &mut [f64], penalty: f64, opt: &OptimizerConfig) -> usize {
        let n = theta.len();
        if n == 0 {
            return 0;
        }
        let mut f = self.objective(theta, penalty);
        let mut g = vec![0.0; n];
        self.gradient(theta, penalty, opt.fd_step, &mut g);
        let mut inv_h = identity(n);
        let mut g_new = vec![0.0; n];
        let mut trial = vec![0.0; n];
        for iter in 0..opt.max_iter {
            let gnorm = g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            if !gnorm.is_finite() || gnorm <= opt.grad_tol * (1.0 + f.abs()) {
                return iter;
            }
            let mut dir: Vec<f64> = (0..n).map(|i| -(0..n).map(|j| inv_h[i][j] * g[j]).sum::<f64>()).collect();
            let mut slope: f64 = dir.iter().zip(&g).map(|(a, b)| a * b).sum();
            if !(slope < 0.0) {
                inv_h = identity(n);
                dir = g.iter().map(|v| -v).collect();
                slope = -g.iter().map(|v| v * v).sum::<f64>();
            }
            let mut step = 1.0;
            let mut accepted = None;
            for _ in 0..60 {
                for i in 0..n {
                    trial[i] = theta[i] + step * dir[i];
                }
                let ft = self.objective(&trial, penalty);
                if ft <= f + 1e-4 * step * slope {
                    accepted = Some(ft);
                    break;
                }
                step *= 0.5;
            }
            let Some(f_new) = accepted else {
                if inv_h == identity(n) {
                    return iter;
                }
                inv_h = identity(n);
                continue;
            };
            self.gradient(&trial, penalty, opt.fd_step, &mut g_new);
            let s: Vec<f64> = (0..n).map(|i| trial[i] - theta[i]).collect();
            let y: Vec<f64> = (0..n).map(|i| g_new[i] - g[i]).collect();
            let sy: f64 = s.iter().zip(&y).map(|(a, b)| a * b).sum();
            theta.copy_from_slice(&trial);
            let decrease = f - f_new;
            f = f_new;
            g.copy_from_slice(&g_new);
            if sy > 1e-300 {
                bfgs_update(&mut inv_h, &s, &y, sy);
            }
            // finite-difference noise floors the gradient; stop once progress stalls
            if decrease.abs() <= 1e-14 * (1.0 + f.abs()) {
                return iter + 1;
            }
        }
        opt.max_iter
    }
}

fn identity(n: usize) -> Vec<Vec<f64>> {
    (0..n).map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect()
}

/// `H <- (I - rho s y^T) H (I - rho y s^T) + rho s s^T`.
fn bfgs_update(h: &mut [Vec<f64>], s: &[f64], y: &[f64], sy: f64) {
    let n = s.len();
    let rho = 1.0 / sy;
    let hy: Vec<f64> = (0..n).map(|i| (0..n).map(|j| h[i][j] * y[j]).sum()).collect();
    let yhy: f64 = y.iter().zip(&hy).map(|(a, b)| a * b).sum();
    for i in 0..n {
        for j in 0..n {
            h[i][j] += -rho * (hy[i] * s[j] + s[i] * hy[j]) + (rho * rho * yhy + rho) * s[i] * s[j];
        }
    }
}

struct StartOutcome {
    theta: Vec<f64>,
    cost: f64,
    gap: f64,
    trace: Vec<TraceEntry>,
}

/// Approximates `inf { L(psi, phi) : Xhat_T(psi, phi) = target }` over controls with
/// `m1` pieces for `psi` and `m2` for `phi = exp(eta)`, by BFGS on
/// `L + penalty |Xhat_T - target|^2` along an increasing penalty ladder.
pub fn rate_endpoint(
    spec: &ModelSpec,
    averaged: &AveragedPath,
    target: &[f64],
    tol_hit: f64,
    m1: usize,
    m2: usize,
    opt: &OptimizerConfig,
) -> Result<RateResult> {
    opt.validate()?;
    if target.len() != spec.dim_slow {
        return Err(Error::UnsupportedDimension {
            expected: spec.dim_slow,
            found: target.len(),
        });
    }
    if target.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidConfig("target must be finite".into()));
    }
    if m1 == 0 || m2 == 0 || !(tol_hit > 0.0) {
        return Err(Error::InvalidConfig("need m1, m2 >= 1 and tol_hit > 0".into()));
    }
    let solver = Skeleton::new(spec, averaged, opt.skeleton_dt)?;
    let t_end = solver.t_end();
    let problem = Problem {
        solver,
        x0: averaged.state(0),
        target,
        t_end,
        m1,
        m2,
        d: spec.dim_noise,
        tilt: spec.has_jumps(),
        spec,
    };
    let dim = problem.dim();

    let outcomes: Vec<Result<StartOutcome>> = (0..opt.starts)
        .into_par_iter()
        .map(|start| {
            let mut theta = vec![0.0; dim];
            if start > 0 {
                let mut rng = NoiseStream::for_particle(opt.seed, start as u64, Source::Auxiliary);
                for v in theta.iter_mut() {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    *v = opt.start_scale * z;
                }
            }
            let mut trace = Vec::new();
            let mut last = None;
            for &penalty in &opt.penalties {
                let iterations = problem.minimize(&mut theta, penalty, opt);
                let e = problem.evaluate(&theta)?;
                trace.push(TraceEntry {
                    start,
                    penalty,
                    iterations,
                    objective: e.cost + penalty * e.gap * e.gap,
                    cost: e.cost,
                    gap: e.gap,
                });
                last = Some((e.cost, e.gap));
                if e.gap <= tol_hit {
                    break;
                }
            }
            let (cost, gap) = last.expect("nonempty penalty ladder");
            Ok(StartOutcome { theta, cost, gap, trace })
        })
        .collect();

    let mut trace = Vec::new();
    let mut best: Option<(usize, StartOutcome)> = None;
    let mut closest_gap = f64::INFINITY;
    for (i, outcome) in outcomes.into_iter().enumerate() {
        let o = outcome?;
        trace.extend(o.trace.iter().cloned());
        closest_gap = closest_gap.min(o.gap);
        if o.gap <= tol_hit && best.as_ref().is_none_or(|(_, b)| o.cost < b.cost) {
            best = Some((i, o));
        }
    }
    let Some((best_start, winner)) = best else {
        return Err(Error::Infeasible {
            gap: closest_gap,
            penalty: *opt.penalties.last().unwrap(),
        });
    };

    let argmin = problem.control(&winner.theta, opt.budget)?;
    let value = cost_total(&argmin, &spec.levy, t_end)?;
    let e = problem.evaluate(&winner.theta)?;
    let budget_exceeded = cost_l1(&argmin.psi) > opt.budget || cost_l2(&argmin.phi, &spec.levy, t_end)? > opt.budget;
    if budget_exceeded {
        log::warn!("optimal control cost {value} exceeds the budget {}", opt.budget);
    }
    Ok(RateResult {
        value,
        argmin,
        endpoint_gap: e.gap,
        endpoint: e.endpoint,
        best_start,
        optimizer_trace: trace,
        budget_exceeded,
    })
}
