//! Dispatch from a validated [`RunConfig`] to the library pipelines.

use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use mvldp::averaging::{
    averaged_ode_solve, averaging_error_experiment, AveragedPath, AveragingOptions, DriftMode,
};
use mvldp::experiments::{
    emit_report, is_tail_estimate, ldp_tail_estimate, LdpTable, Manifest, RateReference, ReportTable,
};
use mvldp::model::{check_assumptions, ModelSpec};
use mvldp::sde::{simulate, SimConfig, SimOptions};
use mvldp::variational::{cost_total, rate_endpoint, skeleton_solve, ControlPair};
use mvldp::ErrorKind;
use thiserror::Error;

use crate::config::{AverageMode, ConfigErrors, LdpMethod, RateRefChoice, RateSection, RunConfig, Subcommand};

/// Process exit codes.
pub mod exit {
    pub const OK: i32 = 0;
    pub const USAGE: i32 = 2;
    pub const CONFIG: i32 = 3;
    pub const MODEL: i32 = 4;
    pub const NUMERICS: i32 = 5;
    pub const IO: i32 = 6;
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(ConfigErrors),

    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: mvldp::Error,
    },

    #[error("model: assumption checks failed: {0}")]
    AssumptionsFailed(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(errs) => errs.0.first().map_or(exit::CONFIG, |e| code_of(e.kind())),
            CliError::Stage { source, .. } => code_of(source.kind()),
            CliError::AssumptionsFailed(_) => exit::MODEL,
        }
    }
}

pub fn code_of(kind: ErrorKind) -> i32 {
    match kind {
        ErrorKind::Config => exit::CONFIG,
        ErrorKind::Model => exit::MODEL,
        ErrorKind::Numerics => exit::NUMERICS,
        ErrorKind::Io => exit::IO,
    }
}

trait Staged<T> {
    fn stage(self, stage: &'static str) -> Result<T, CliError>;
}

impl<T> Staged<T> for mvldp::Result<T> {
    fn stage(self, stage: &'static str) -> Result<T, CliError> {
        self.map_err(|source| CliError::Stage { stage, source })
    }
}

impl<T> Staged<T> for std::io::Result<T> {
    fn stage(self, stage: &'static str) -> Result<T, CliError> {
        self.map_err(|e| CliError::Stage {
            stage,
            source: e.into(),
        })
    }
}

#[derive(Debug)]
pub struct RunOutcome {
    pub manifest: Manifest,
    /// Human-readable result lines.
    pub summary: String,
}

/// Runs `cfg` and writes its artifacts plus `manifest.json` into `cfg.out`.
pub fn run(cfg: &RunConfig) -> Result<RunOutcome, CliError> {
    let start = Instant::now();
    let out = cfg.out.as_path();
    std::fs::create_dir_all(out).stage("report")?;
    let spec = cfg.spec().stage("model")?;
    let mut summary = String::new();
    let mut tables = Vec::new();
    let mut failure = None;
    match cfg.subcommand {
        Subcommand::Simulate => run_simulate(cfg, &spec, out, &mut summary)?,
        Subcommand::Average => run_average(cfg, &spec, out, &mut summary, &mut tables)?,
        Subcommand::Skeleton => run_skeleton(cfg, &spec, out, &mut summary)?,
        Subcommand::Rate => run_rate(cfg, &spec, out, &mut summary)?,
        Subcommand::Ldp => run_ldp(cfg, &spec, &mut summary, &mut tables)?,
        Subcommand::Check => failure = run_check(cfg, &spec, out, &mut summary)?,
    }
    let config = serde_json::json!({
        "subcommand": cfg.subcommand.as_str(),
        "seed": cfg.seed,
        "config_text": cfg.to_config_text(),
    });
    let manifest = emit_report(&tables, out, config, start.elapsed().as_secs_f64()).stage("report")?;
    match failure {
        Some(msg) => Err(CliError::AssumptionsFailed(msg)),
        None => Ok(RunOutcome { manifest, summary }),
    }
}

/// Extracts the config text from either a config file or a previously written manifest.
pub fn config_text_from(contents: &str) -> Option<String> {
    if !contents.trim_start().starts_with('{') {
        return Some(contents.to_string());
    }
    let v: serde_json::Value = serde_json::from_str(contents).ok()?;
    v.get("config")?.get("config_text")?.as_str().map(str::to_string)
}

fn sim_config(cfg: &RunConfig, spec: &ModelSpec) -> Result<SimConfig, CliError> {
    let sim = cfg
        .sim
        .as_ref()
        .ok_or_else(|| CliError::Stage {
            stage: "config",
            source: mvldp::Error::InvalidConfig("missing required section [sim]".into()),
        })?;
    sim.build(spec, cfg.seed).stage("sde")
}

fn drift_mode(cfg: &RunConfig, spec: &ModelSpec) -> Result<DriftMode, CliError> {
    match cfg.average.as_ref().and_then(|a| a.mode) {
        Some(AverageMode::MonteCarlo) => {
            let frozen = cfg.frozen.clone().unwrap_or_default();
            Ok(DriftMode::MonteCarlo(frozen.build(spec, cfg.seed).stage("averaging")?))
        }
        _ => Ok(DriftMode::Analytic),
    }
}

fn averaged(cfg: &RunConfig, spec: &ModelSpec, sim: &SimConfig, dt: f64) -> Result<AveragedPath, CliError> {
    let mode = drift_mode(cfg, spec)?;
    averaged_ode_solve(spec, &sim.x0, sim.t_end, dt, &mode).stage("averaging")
}

fn control(cfg: &RunConfig, spec: &ModelSpec, t_end: f64) -> Result<Option<ControlPair>, CliError> {
    cfg.control
        .as_ref()
        .map(|c| c.build(spec, t_end).stage("variational"))
        .transpose()
}

fn fmt_vec(v: &[f64]) -> String {
    let items: Vec<String> = v.iter().map(|x| format!("{x:.6}")).collect();
    format!("[{}]", items.join(", "))
}

/// Writes a path as `time,x_0..x_{d-1}[,drift_0..]`.
fn write_path_csv(path: &Path, dim: usize, times: &[f64], states: &[f64], drifts: Option<&[f64]>) -> Result<(), CliError> {
    let mut text = String::from("time");
    for i in 0..dim {
        let _ = write!(text, ",x{i}");
    }
    if drifts.is_some() {
        for i in 0..dim {
            let _ = write!(text, ",drift{i}");
        }
    }
    text.push('\n');
    for (k, t) in times.iter().enumerate() {
        let _ = write!(text, "{t}");
        for v in &states[k * dim..(k + 1) * dim] {
            let _ = write!(text, ",{v}");
        }
        if let Some(d) = drifts {
            for v in &d[k * dim..(k + 1) * dim] {
                let _ = write!(text, ",{v}");
            }
        }
        text.push('\n');
    }
    std::fs::write(path, text).stage("report")
}

fn run_simulate(cfg: &RunConfig, spec: &ModelSpec, out: &Path, summary: &mut String) -> Result<(), CliError> {
    let sim = sim_config(cfg, spec)?;
    let section = cfg.sim.clone().unwrap_or_default();
    let control = control(cfg, spec, sim.t_end)?;
    let opts = SimOptions {
        recording: section.recording.unwrap_or_default(),
        fast_control: section.fast_control.unwrap_or(true),
        ..SimOptions::default()
    };
    let rec = simulate(spec, &sim, control.as_ref(), &opts).stage("sde")?;
    rec.write_summary_csv(&out.join("summary.csv")).stage("report")?;
    if section.trajectories.unwrap_or(false) {
        rec.write_trajectories(&out.join("trajectories.bin"), &out.join("trajectories.json"))
            .stage("report")?;
    }
    let end = rec.final_ensemble();
    let _ = writeln!(
        summary,
        "simulated {} particles of {} to t = {}: mean |X_T| = {:.6}, E sup|X|^2 = {:.6}, mean fast energy = {:.6}",
        rec.n_particles(),
        spec.name,
        end.time,
        end.mean_norm_slow(),
        rec.mean_sup_sq(),
        rec.mean_fast_energy()
    );
    if let Some(w) = &rec.log_weights {
        let mean_w = w.iter().map(|l| l.exp()).sum::<f64>() / w.len() as f64;
        let _ = writeln!(summary, "mean likelihood ratio = {mean_w:.6}");
    }
    Ok(())
}

fn run_average(
    cfg: &RunConfig,
    spec: &ModelSpec,
    out: &Path,
    summary: &mut String,
    tables: &mut Vec<ReportTable>,
) -> Result<(), CliError> {
    let sim = sim_config(cfg, spec)?;
    let section = cfg.average.clone().unwrap_or_default();
    let dt = section.dt.unwrap_or(1e-3);
    let path = averaged(cfg, spec, &sim, dt)?;
    write_path_csv(&out.join("averaged_path.csv"), path.dim, &path.times, &path.states, Some(&path.drifts))?;
    let _ = writeln!(
        summary,
        "averaged path of {}: Xbar(T) = {}, residual = {:.3e}, propagated standard error = {:.3e}",
        spec.name,
        fmt_vec(path.endpoint()),
        path.residual,
        path.propagated_std_error
    );
    if let Some(eps_list) = &section.eps_list {
        let opts = AveragingOptions {
            drift_mode: drift_mode(cfg, spec)?,
            ode_dt: dt,
            bootstrap_resamples: section.bootstrap.unwrap_or(1000),
            ..AveragingOptions::default()
        };
        let table = averaging_error_experiment(spec, &sim, eps_list, &|e| e * e, section.n_rep.unwrap_or(8), &opts)
            .stage("averaging")?;
        for r in &table.rows {
            let _ = writeln!(
                summary,
                "eps = {}: E sup|X - Xbar|^2 = {:.4e} [{:.4e}, {:.4e}]",
                r.epsilon, r.error, r.ci_lo, r.ci_hi
            );
        }
        tables.push(ReportTable::Averaging(table));
    }
    Ok(())
}

fn rate_section(cfg: &RunConfig) -> RateSection {
    cfg.rate.clone().unwrap_or_default()
}

fn run_skeleton(cfg: &RunConfig, spec: &ModelSpec, out: &Path, summary: &mut String) -> Result<(), CliError> {
    let sim = sim_config(cfg, spec)?;
    let rate = rate_section(cfg);
    let avg = averaged(cfg, spec, &sim, rate.ode_dt())?;
    let control = control(cfg, spec, sim.t_end)?.ok_or_else(|| CliError::Stage {
        stage: "config",
        source: mvldp::Error::InvalidConfig("missing required section [control]".into()),
    })?;
    let path = skeleton_solve(spec, &avg, &control, rate.skeleton_dt.unwrap_or(0.01)).stage("variational")?;
    let cost = cost_total(&control, &spec.levy, sim.t_end).stage("variational")?;
    write_path_csv(&out.join("skeleton_path.csv"), path.dim, &path.times, &path.states, None)?;
    std::fs::write(out.join("control.json"), control.to_json().stage("report")?).stage("report")?;
    let _ = writeln!(
        summary,
        "skeleton endpoint = {}, control cost = {cost:.6}, averaged endpoint = {}",
        fmt_vec(path.endpoint()),
        fmt_vec(avg.endpoint())
    );
    Ok(())
}

fn run_rate(cfg: &RunConfig, spec: &ModelSpec, out: &Path, summary: &mut String) -> Result<(), CliError> {
    let sim = sim_config(cfg, spec)?;
    let rate = rate_section(cfg);
    let avg = averaged(cfg, spec, &sim, rate.ode_dt())?;
    let target = rate.target.clone().unwrap_or_else(|| avg.endpoint().to_vec());
    let (m1, m2) = rate.grid();
    let opt = rate.optimizer(cfg.seed).stage("variational")?;
    let result = rate_endpoint(spec, &avg, &target, rate.tol_hit(), m1, m2, &opt).stage("variational")?;
    let json = serde_json::to_string_pretty(&result).map_err(mvldp::Error::from).stage("report")?;
    std::fs::write(out.join("rate.json"), &json).stage("report")?;
    std::fs::write(out.join("control.json"), result.argmin.to_json().stage("report")?).stage("report")?;
    summary.push_str(&json);
    summary.push('\n');
    Ok(())
}

fn run_ldp(cfg: &RunConfig, spec: &ModelSpec, summary: &mut String, tables: &mut Vec<ReportTable>) -> Result<(), CliError> {
    let sim = sim_config(cfg, spec)?;
    let section = cfg.ldp.clone().unwrap_or_default();
    let event = section.event().stage("experiments")?;
    let eps_list = section.eps_list.clone().unwrap_or_else(|| vec![sim.epsilon]);
    let n = section.n_samples();
    let rate = rate_section(cfg);
    let reference = match section.i_ref.unwrap_or(RateRefChoice::None) {
        RateRefChoice::None => RateReference::None,
        RateRefChoice::Given(v) => RateReference::Given(v),
        RateRefChoice::Optimize => rate.reference(cfg.seed).stage("variational")?,
    };
    let method = section.method();
    if matches!(method, LdpMethod::Plain | LdpMethod::Both) {
        let table = ldp_tail_estimate(spec, &sim, &event, &eps_list, n, &reference).stage("experiments")?;
        tables.push(ReportTable::Ldp(table));
    }
    if matches!(method, LdpMethod::Importance | LdpMethod::Both) {
        let control = match control(cfg, spec, sim.t_end)? {
            Some(c) => c,
            None => {
                let avg = averaged(cfg, spec, &sim, rate.ode_dt())?;
                let target = event.nearest_point(avg.endpoint());
                let (m1, m2) = rate.grid();
                let opt = rate.optimizer(cfg.seed).stage("variational")?;
                rate_endpoint(spec, &avg, &target, rate.tol_hit(), m1, m2, &opt)
                    .stage("variational")?
                    .argmin
            }
        };
        let i_ref = reference.resolve(spec, &sim, &event).stage("variational")?;
        let rows = eps_list
            .iter()
            .map(|&eps| is_tail_estimate(spec, &sim, &event, eps, &control, n, i_ref))
            .collect::<mvldp::Result<Vec<_>>>()
            .stage("experiments")?;
        tables.push(ReportTable::Ldp(LdpTable {
            model: spec.name.clone(),
            event: event.clone(),
            template: sim.clone(),
            rows,
        }));
    }
    for table in tables.iter() {
        if let ReportTable::Ldp(t) = table {
            for r in &t.rows {
                let _ = writeln!(
                    summary,
                    "{} eps = {}: p = {:.4e} [{:.4e}, {:.4e}], -eps log p = {:.4}{}{}",
                    r.method.as_str(),
                    r.eps,
                    r.p_hat,
                    r.ci_lo,
                    r.ci_hi,
                    r.neg_eps_log_p,
                    r.i_ref.map_or(String::new(), |i| format!(", I = {i:.4}")),
                    if r.underflow {
                        " (no hits; try importance sampling)"
                    } else if r.degenerate_tilt {
                        " (degenerate tilt)"
                    } else {
                        ""
                    }
                );
            }
        }
    }
    Ok(())
}

/// Returns a failure message if any check failed; the report is written either way.
fn run_check(cfg: &RunConfig, spec: &ModelSpec, out: &Path, summary: &mut String) -> Result<Option<String>, CliError> {
    let section = cfg.check.clone().unwrap_or_default();
    let report = check_assumptions(spec, section.n_probes.unwrap_or(200), section.radius.unwrap_or(5.0), cfg.seed)
        .stage("model")?;
    let json = serde_json::to_string_pretty(&report).map_err(mvldp::Error::from).stage("report")?;
    std::fs::write(out.join("assumptions.json"), json).stage("report")?;
    let _ = writeln!(summary, "assumption checks for {} over {} probes:", report.model, report.n_probes);
    for c in &report.checks {
        let _ = writeln!(
            summary,
            "  {:<5} {:<28} observed {:.4e}, bound {:.4e}",
            if c.passed { "ok" } else { "FAIL" },
            c.name,
            c.observed,
            c.bound
        );
    }
    if report.passed {
        Ok(None)
    } else {
        let failed: Vec<&str> = report.checks.iter().filter(|c| !c.passed).map(|c| c.name).collect();
        Ok(Some(failed.join(", ")))
    }
}
