use std::path::Path;

use rand::Rng;
use rand_distr::{Binomial, Distribution};
use serde::Serialize;

use super::event::TailEvent;
use crate::averaging::{averaged_ode_solve, DriftMode};
use crate::model::ModelSpec;
use crate::rng::{NoiseStream, Source};
use crate::sde::{simulate, Recording, SimConfig, SimOptions};
use crate::stats::{quantile, wilson_interval, Z95};
use crate::variational::{rate_endpoint, ControlPair, OptimizerConfig};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Plain,
    Importance,
}

impl Method {
    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Plain => "plain",
            Method::Importance => "importance",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LdpRow {
    pub eps: f64,
    pub delta: f64,
    pub p_hat: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    /// `-eps ln p_hat`; infinite when no sample hit the event.
    pub neg_eps_log_p: f64,
    pub i_ref: Option<f64>,
    pub n_samples: usize,
    pub method: Method,
    pub hits: u64,
    /// No sample hit the event; consider importance sampling.
    pub underflow: bool,
    /// Weighted-sample variance exceeds the plain binomial variance by more than 1e3.
    pub degenerate_tilt: bool,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LdpTable {
    pub model: String,
    pub event: TailEvent,
    pub template: SimConfig,
    pub rows: Vec<LdpRow>,
}

pub(crate) const LDP_COLUMNS: [&str; 9] = [
    "eps",
    "delta",
    "p_hat",
    "ci_lo",
    "ci_hi",
    "neg_eps_log_p",
    "i_ref",
    "n_samples",
    "method",
];

impl LdpTable {
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(LDP_COLUMNS)?;
        for r in &self.rows {
            w.write_record([
                r.eps.to_string(),
                r.delta.to_string(),
                r.p_hat.to_string(),
                r.ci_lo.to_string(),
                r.ci_hi.to_string(),
                r.neg_eps_log_p.to_string(),
                r.i_ref.map_or(String::new(), |v| v.to_string()),
                r.n_samples.to_string(),
                r.method.as_str().to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// `-eps ln p`, with `+0.0` for a sure event.
pub fn neg_eps_log(eps: f64, p: f64) -> f64 {
    -eps * p.ln() + 0.0
}

/// Where the reference rate in each row comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum RateReference {
    None,
    Given(f64),
    /// Optimize the endpoint rate at the event point nearest the averaged endpoint.
    Optimize {
        tol_hit: f64,
        m1: usize,
        m2: usize,
        ode_dt: f64,
        optimizer: OptimizerConfig,
    },
}

impl RateReference {
    pub fn optimize() -> Self {
        RateReference::Optimize {
            tol_hit: 1e-3,
            m1: 4,
            m2: 4,
            ode_dt: 0.01,
            optimizer: OptimizerConfig::default(),
        }
    }

    pub fn resolve(&self, spec: &ModelSpec, template: &SimConfig, event: &TailEvent) -> Result<Option<f64>> {
        match self {
            RateReference::None => Ok(None),
            RateReference::Given(v) => Ok(Some(*v)),
            RateReference::Optimize { tol_hit, m1, m2, ode_dt, optimizer } => {
                let xbar = averaged_ode_solve(spec, &template.x0, template.t_end, *ode_dt, &DriftMode::Analytic)?;
                let target = event.nearest_point(xbar.endpoint());
                Ok(Some(rate_endpoint(spec, &xbar, &target, *tol_hit, *m1, *m2, optimizer)?.value))
            }
        }
    }
}

fn check_inputs(spec: &ModelSpec, event: &TailEvent, n_samples: usize) -> Result<()> {
    event.validate()?;
    if event.dim() != spec.dim_slow {
        return Err(Error::UnsupportedDimension {
            expected: spec.dim_slow,
            found: event.dim(),
        });
    }
    if n_samples < 1000 {
        return Err(Error::InvalidConfig(format!("n_samples must be at least 1000, got {n_samples}")));
    }
    Ok(())
}

/// Runs `n_samples` particles in independent ensembles of `template.n_particles`
/// and returns, per particle, whether the endpoint hit the event and its log weight.
fn sample_endpoints(
    spec: &ModelSpec,
    cfg: &SimConfig,
    event: &TailEvent,
    control: Option<&ControlPair>,
    n_samples: usize,
) -> Result<Vec<(bool, f64)>> {
    let batch = cfg.n_particles;
    let mut out = Vec::with_capacity(n_samples);
    let mut done = 0;
    while done < n_samples {
        let size = batch.min(n_samples - done);
        let run = SimConfig {
            n_particles: size,
            ..cfg.clone()
        };
        let opts = SimOptions {
            recording: Recording::Endpoints,
            particle_offset: done as u64,
            ..SimOptions::default()
        };
        let rec = simulate(spec, &run, control, &opts)?;
        let end = rec.final_ensemble();
        for i in 0..size {
            let w = rec.log_weights.as_ref().map_or(0.0, |lw| lw[i]);
            out.push((event.contains(end.slow_of(i)), w));
        }
        done += size;
    }
    Ok(out)
}

fn plain_row(eps: f64, delta: f64, hits: u64, n: usize, i_ref: Option<f64>, seed: u64) -> LdpRow {
    let p = hits as f64 / n as f64;
    let (ci_lo, ci_hi) = wilson_interval(hits, n as u64, Z95);
    LdpRow {
        eps,
        delta,
        p_hat: p,
        ci_lo,
        ci_hi,
        neg_eps_log_p: neg_eps_log(eps, p),
        i_ref,
        n_samples: n,
        method: Method::Plain,
        hits,
        underflow: hits == 0,
        degenerate_tilt: false,
        seed,
    }
}

/// Plain Monte Carlo estimates of `P(X_T in event)` along `eps_list`, with `delta = eps^2`.
pub fn ldp_tail_estimate(
    spec: &ModelSpec,
    template: &SimConfig,
    event: &TailEvent,
    eps_list: &[f64],
    n_samples: usize,
    reference: &RateReference,
) -> Result<LdpTable> {
    check_inputs(spec, event, n_samples)?;
    let i_ref = reference.resolve(spec, template, event)?;
    let mut rows = Vec::with_capacity(eps_list.len());
    for &eps in eps_list {
        let delta = eps * eps;
        let cfg = template.rescaled(eps, delta)?;
        let samples = sample_endpoints(spec, &cfg, event, None, n_samples)?;
        let hits = samples.iter().filter(|s| s.0).count() as u64;
        if hits == 0 {
            log::warn!("no hits at eps = {eps}; the row is flagged as underflow, try importance sampling");
        }
        rows.push(plain_row(eps, delta, hits, n_samples, i_ref, cfg.seed));
    }
    Ok(LdpTable {
        model: spec.name.clone(),
        event: event.clone(),
        template: template.clone(),
        rows,
    })
}

/// Resamples of the mean of `n` values of which only `nonzero` are nonzero: the
/// number of nonzero draws is binomial, then those draws are uniform over `nonzero`.
fn bootstrap_sparse_mean(nonzero: &[f64], n: usize, resamples: usize, rng: &mut NoiseStream) -> Result<Vec<f64>> {
    let mut means = Vec::with_capacity(resamples);
    if nonzero.is_empty() {
        return Ok(vec![0.0; resamples]);
    }
    let binomial = Binomial::new(n as u64, nonzero.len() as f64 / n as f64)
        .map_err(|e| Error::Domain(format!("bootstrap binomial: {e}")))?;
    for _ in 0..resamples {
        let k = binomial.sample(rng) as usize;
        let total: f64 = (0..k).map(|_| nonzero[rng.random_range(0..nonzero.len())]).sum();
        means.push(total / n as f64);
    }
    means.sort_by(f64::total_cmp);
    Ok(means)
}

pub const BOOTSTRAP_RESAMPLES: usize = 1000;

/// Importance-sampled estimate under the controlled dynamics, reweighted by the
/// likelihood ratio of the original law.
pub fn is_tail_estimate(
    spec: &ModelSpec,
    template: &SimConfig,
    event: &TailEvent,
    eps: f64,
    control: &ControlPair,
    n_samples: usize,
    i_ref: Option<f64>,
) -> Result<LdpRow> {
    check_inputs(spec, event, n_samples)?;
    control.validate()?;
    let delta = eps * eps;
    let cfg = template.rescaled(eps, delta)?;
    let samples = sample_endpoints(spec, &cfg, event, Some(control), n_samples)?;
    let values: Vec<f64> = samples.iter().map(|&(hit, lw)| if hit { lw.exp() } else { 0.0 }).collect();
    let hits = samples.iter().filter(|s| s.0).count() as u64;
    let n = n_samples as f64;
    let p = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - p) * (v - p)).sum::<f64>() / (n - 1.0);
    let nonzero: Vec<f64> = values.iter().copied().filter(|v| *v != 0.0).collect();
    let mut rng = NoiseStream::for_particle(cfg.seed, 0, Source::Auxiliary);
    let means = bootstrap_sparse_mean(&nonzero, n_samples, BOOTSTRAP_RESAMPLES, &mut rng)?;
    let (ci_lo, ci_hi) = (quantile(&means, 0.025).min(p), quantile(&means, 0.975).max(p));
    let binomial_var = p * (1.0 - p);
    let degenerate_tilt = binomial_var > 0.0 && var / binomial_var > 1e3;
    if degenerate_tilt {
        log::warn!("importance weights are degenerate at eps = {eps}: variance ratio {:.3e}", var / binomial_var);
    }
    Ok(LdpRow {
        eps,
        delta,
        p_hat: p,
        ci_lo,
        ci_hi,
        neg_eps_log_p: neg_eps_log(eps, p),
        i_ref,
        n_samples,
        method: Method::Importance,
        hits,
        underflow: hits == 0,
        degenerate_tilt,
        seed: cfg.seed,
    })
}
