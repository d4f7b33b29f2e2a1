//! Run configuration: the sectioned key-value format read by every subcommand.
//!
//! Fields left unset in the file stay `None` here and take their defaults
//! when the run is built, so [`RunConfig::to_config_text`] reproduces exactly
//! what was written.

use std::fmt::{self, Write as _};
use std::path::PathBuf;
use std::str::FromStr;

use mvldp::config::{Document, Section};
use mvldp::experiments::{RateReference, TailEvent};
use mvldp::model::ModelSpec;
use mvldp::sde::{Recording, SimConfig};
use mvldp::variational::{ControlPair, OptimizerConfig, PiecewiseConstant};
use mvldp::averaging::FrozenFastConfig;
use mvldp::{Error, Result};

pub const DEFAULT_OUT: &str = "mvldp-out";

/// Known sections and their keys.
pub const SCHEMA: &[(&str, &[&str])] = &[
    ("run", &["subcommand", "seed", "out"]),
    ("model", &["builtin"]),
    ("levy", &["rate", "marks"]),
    ("constants", &["c1", "c2", "c3", "c4", "c5", "c6", "rho"]),
    (
        "sim",
        &["epsilon", "delta", "t_end", "dt", "n_particles", "x0", "y0", "recording", "trajectories", "fast_control"],
    ),
    ("control", &["file", "intervals", "psi", "phi", "budget"]),
    ("frozen", &["burn_in", "n_samples", "thinning", "dt_fast", "tolerance"]),
    ("average", &["mode", "dt", "eps_list", "n_rep", "bootstrap"]),
    (
        "rate",
        &["target", "tol_hit", "m1", "m2", "starts", "max_iter", "penalties", "budget", "skeleton_dt", "ode_dt", "fd_step"],
    ),
    ("ldp", &["event", "level", "center", "radius", "eps_list", "n_samples", "method", "i_ref"]),
    ("check", &["n_probes", "radius"]),
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Subcommand {
    Simulate,
    Average,
    Skeleton,
    Rate,
    Ldp,
    Check,
}

impl Subcommand {
    pub const ALL: [Subcommand; 6] = [
        Subcommand::Simulate,
        Subcommand::Average,
        Subcommand::Skeleton,
        Subcommand::Rate,
        Subcommand::Ldp,
        Subcommand::Check,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Subcommand::Simulate => "simulate",
            Subcommand::Average => "average",
            Subcommand::Skeleton => "skeleton",
            Subcommand::Rate => "rate",
            Subcommand::Ldp => "ldp",
            Subcommand::Check => "check",
        }
    }

    /// Sections that must be present for this subcommand.
    pub fn required_sections(self) -> &'static [&'static str] {
        match self {
            Subcommand::Simulate | Subcommand::Average => &["model", "sim"],
            Subcommand::Skeleton => &["model", "sim", "control"],
            Subcommand::Rate => &["model", "sim", "rate"],
            Subcommand::Ldp => &["model", "sim", "ldp"],
            Subcommand::Check => &["model"],
        }
    }
}

impl FromStr for Subcommand {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Subcommand::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| format!("unknown subcommand `{s}`"))
    }
}

impl fmt::Display for Subcommand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A closed set of spellings for a string-valued key.
pub trait Choice: Sized + Copy + PartialEq + 'static {
    const OPTIONS: &'static [(&'static str, Self)];

    fn as_str(self) -> &'static str {
        Self::OPTIONS.iter().find(|(_, v)| *v == self).map(|(s, _)| *s).unwrap_or("")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AverageMode {
    Analytic,
    MonteCarlo,
}

impl Choice for AverageMode {
    const OPTIONS: &'static [(&'static str, Self)] =
        &[("analytic", AverageMode::Analytic), ("monte_carlo", AverageMode::MonteCarlo)];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventKind {
    Geq,
    Ball,
}

impl Choice for EventKind {
    const OPTIONS: &'static [(&'static str, Self)] = &[("geq", EventKind::Geq), ("ball", EventKind::Ball)];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LdpMethod {
    Plain,
    Importance,
    Both,
}

impl Choice for LdpMethod {
    const OPTIONS: &'static [(&'static str, Self)] = &[
        ("plain", LdpMethod::Plain),
        ("importance", LdpMethod::Importance),
        ("both", LdpMethod::Both),
    ];
}

/// `none`, `optimize` or a number.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RateRefChoice {
    None,
    Optimize,
    Given(f64),
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ModelSection {
    pub builtin: String,
    pub levy_rate: Option<f64>,
    pub marks: Option<String>,
    pub constants: Vec<(String, f64)>,
}

impl ModelSection {
    pub fn build(&self) -> Result<ModelSpec> {
        let mut sections = vec![section("model", vec![("builtin", self.builtin.clone())])];
        let mut levy = Vec::new();
        if let Some(r) = self.levy_rate {
            levy.push(("rate", r.to_string()));
        }
        if let Some(m) = &self.marks {
            levy.push(("marks", m.clone()));
        }
        if !levy.is_empty() {
            sections.push(section("levy", levy));
        }
        if !self.constants.is_empty() {
            let entries = self.constants.iter().map(|(k, v)| (k.as_str(), v.to_string())).collect();
            sections.push(section("constants", entries));
        }
        ModelSpec::from_document(&Document { sections })
    }
}

fn section(name: &str, entries: Vec<(&str, String)>) -> Section {
    Section {
        name: name.to_string(),
        line: 0,
        entries: entries
            .into_iter()
            .map(|(key, value)| mvldp::config::Entry {
                key: key.to_string(),
                value,
                line: 0,
            })
            .collect(),
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SimSection {
    pub epsilon: Option<f64>,
    pub delta: Option<f64>,
    pub t_end: Option<f64>,
    pub dt: Option<f64>,
    pub n_particles: Option<usize>,
    pub x0: Option<Vec<f64>>,
    pub y0: Option<Vec<f64>>,
    pub recording: Option<Recording>,
    pub trajectories: Option<bool>,
    pub fast_control: Option<bool>,
}

impl SimSection {
    pub fn t_end(&self) -> f64 {
        self.t_end.unwrap_or(1.0)
    }

    /// Defaults: `delta = eps^2`, `dt = delta / 10`, `T = 1`, 1000 particles, zero initial data.
    pub fn build(&self, spec: &ModelSpec, seed: u64) -> Result<SimConfig> {
        let eps = self
            .epsilon
            .ok_or_else(|| Error::InvalidConfig("[sim] needs `epsilon`".into()))?;
        let delta = self.delta.unwrap_or(eps * eps);
        SimConfig::new(
            eps,
            delta,
            self.t_end(),
            self.dt.unwrap_or(delta / 10.0),
            self.n_particles.unwrap_or(1000),
            seed,
            self.x0.clone().unwrap_or_else(|| vec![0.0; spec.dim_slow]),
            self.y0.clone().unwrap_or_else(|| vec![0.0; spec.dim_fast]),
        )
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ControlSection {
    pub file: Option<PathBuf>,
    pub intervals: Option<usize>,
    pub psi: Option<Vec<f64>>,
    pub phi: Option<Vec<f64>>,
    pub budget: Option<f64>,
}

impl ControlSection {
    /// Reads `file`, or builds a uniform-grid control from the inline values
    /// (`psi` defaults to zero and `phi` to one).
    pub fn build(&self, spec: &ModelSpec, t_end: f64) -> Result<ControlPair> {
        if let Some(path) = &self.file {
            let pair = ControlPair::from_json(&std::fs::read_to_string(path)?)?;
            if (pair.t_end() - t_end).abs() > 1e-12 * t_end.max(1.0) {
                return Err(Error::InvalidControl(format!(
                    "control file covers [0, {}] but the horizon is {t_end}",
                    pair.t_end()
                )));
            }
            return Ok(pair);
        }
        let m = self.intervals.unwrap_or(1);
        let d = spec.dim_noise;
        let psi = self.psi.clone().unwrap_or_else(|| vec![0.0; m * d]);
        let phi = self.phi.clone().unwrap_or_else(|| vec![1.0; m]);
        ControlPair::new(
            PiecewiseConstant::uniform(t_end, m, d, psi)?,
            PiecewiseConstant::uniform(t_end, m, 1, phi)?,
            self.budget.unwrap_or(f64::INFINITY),
        )
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct FrozenSection {
    pub burn_in: Option<f64>,
    pub n_samples: Option<usize>,
    pub thinning: Option<f64>,
    pub dt_fast: Option<f64>,
    pub tolerance: Option<f64>,
}

impl FrozenSection {
    pub fn build(&self, spec: &ModelSpec, seed: u64) -> Result<FrozenFastConfig> {
        let mut cfg = FrozenFastConfig::for_model(spec, self.n_samples.unwrap_or(10_000), seed);
        if let Some(v) = self.burn_in {
            cfg.burn_in = v;
        }
        if let Some(v) = self.thinning {
            cfg.thinning = v;
        }
        if let Some(v) = self.dt_fast {
            cfg.dt_fast = v;
        }
        cfg.tolerance = self.tolerance;
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct AverageSection {
    pub mode: Option<AverageMode>,
    pub dt: Option<f64>,
    pub eps_list: Option<Vec<f64>>,
    pub n_rep: Option<usize>,
    pub bootstrap: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RateSection {
    pub target: Option<Vec<f64>>,
    pub tol_hit: Option<f64>,
    pub m1: Option<usize>,
    pub m2: Option<usize>,
    pub starts: Option<usize>,
    pub max_iter: Option<usize>,
    pub penalties: Option<Vec<f64>>,
    pub budget: Option<f64>,
    pub skeleton_dt: Option<f64>,
    pub ode_dt: Option<f64>,
    pub fd_step: Option<f64>,
}

impl RateSection {
    pub fn tol_hit(&self) -> f64 {
        self.tol_hit.unwrap_or(1e-3)
    }

    pub fn grid(&self) -> (usize, usize) {
        (self.m1.unwrap_or(4), self.m2.unwrap_or(4))
    }

    pub fn ode_dt(&self) -> f64 {
        self.ode_dt.unwrap_or(0.01)
    }

    pub fn optimizer(&self, seed: u64) -> Result<OptimizerConfig> {
        let mut opt = OptimizerConfig {
            seed,
            ..OptimizerConfig::default()
        };
        if let Some(v) = self.starts {
            opt.starts = v;
        }
        if let Some(v) = self.max_iter {
            opt.max_iter = v;
        }
        if let Some(v) = &self.penalties {
            opt.penalties = v.clone();
        }
        if let Some(v) = self.budget {
            opt.budget = v;
        }
        if let Some(v) = self.skeleton_dt {
            opt.skeleton_dt = v;
        }
        if let Some(v) = self.fd_step {
            opt.fd_step = v;
        }
        opt.validate()?;
        Ok(opt)
    }

    pub fn reference(&self, seed: u64) -> Result<RateReference> {
        let (m1, m2) = self.grid();
        Ok(RateReference::Optimize {
            tol_hit: self.tol_hit(),
            m1,
            m2,
            ode_dt: self.ode_dt(),
            optimizer: self.optimizer(seed)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct LdpSection {
    pub event: Option<EventKind>,
    pub level: Option<f64>,
    pub center: Option<Vec<f64>>,
    pub radius: Option<f64>,
    pub eps_list: Option<Vec<f64>>,
    pub n_samples: Option<usize>,
    pub method: Option<LdpMethod>,
    pub i_ref: Option<RateRefChoice>,
}

impl LdpSection {
    pub fn event(&self) -> Result<TailEvent> {
        let event = match self.event.unwrap_or(EventKind::Geq) {
            EventKind::Geq => TailEvent::geq(
                self.level
                    .ok_or_else(|| Error::InvalidConfig("[ldp] event = geq needs `level`".into()))?,
            ),
            EventKind::Ball => TailEvent::EndpointInBall {
                center: self
                    .center
                    .clone()
                    .ok_or_else(|| Error::InvalidConfig("[ldp] event = ball needs `center`".into()))?,
                radius: self
                    .radius
                    .ok_or_else(|| Error::InvalidConfig("[ldp] event = ball needs `radius`".into()))?,
            },
        };
        event.validate()?;
        Ok(event)
    }

    pub fn n_samples(&self) -> usize {
        self.n_samples.unwrap_or(10_000)
    }

    pub fn method(&self) -> LdpMethod {
        self.method.unwrap_or(LdpMethod::Plain)
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct CheckSection {
    pub n_probes: Option<usize>,
    pub radius: Option<f64>,
}

/// Everything a run depends on. Together with the seed it determines every output.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub subcommand: Subcommand,
    pub seed: u64,
    pub out: PathBuf,
    pub model: ModelSection,
    pub sim: Option<SimSection>,
    pub control: Option<ControlSection>,
    pub frozen: Option<FrozenSection>,
    pub average: Option<AverageSection>,
    pub rate: Option<RateSection>,
    pub ldp: Option<LdpSection>,
    pub check: Option<CheckSection>,
}

/// All problems found in a config file.
#[derive(Debug)]
pub struct ConfigErrors(pub Vec<Error>);

impl fmt::Display for ConfigErrors {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, e) in self.0.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            write!(f, "{e}")?;
        }
        Ok(())
    }
}

impl std::error::Error for ConfigErrors {}

/// Parses a config whose `[run]` section names the subcommand.
pub fn parse_config(text: &str) -> std::result::Result<RunConfig, ConfigErrors> {
    parse_config_for(text, None)
}

/// Parses a config for `subcommand`, which may also be given by `[run] subcommand`.
/// Reports every problem found, not just the first.
pub fn parse_config_for(text: &str, subcommand: Option<Subcommand>) -> std::result::Result<RunConfig, ConfigErrors> {
    let doc = Document::parse(text).map_err(ConfigErrors)?;
    let mut errs = Vec::new();
    check_names(&doc, &mut errs);

    let run = doc.section("run");
    let declared = run.and_then(|s| s.get("subcommand")).and_then(|e| match e.value.parse::<Subcommand>() {
        Ok(c) => Some(c),
        Err(msg) => {
            errs.push(e.error(&msg));
            None
        }
    });
    let sub = match (subcommand, declared) {
        (Some(a), Some(b)) if a != b => {
            errs.push(Error::InvalidConfig(format!("config is for `{b}` but `{a}` was requested")));
            Some(a)
        }
        (Some(a), _) => Some(a),
        (None, Some(b)) => Some(b),
        (None, None) => {
            if run.and_then(|s| s.get("subcommand")).is_none() {
                errs.push(Error::InvalidConfig("missing `[run] subcommand`".into()));
            }
            None
        }
    };
    let required: &[&str] = sub.map_or(&["model"], Subcommand::required_sections);
    for name in required {
        if doc.section(name).is_none() {
            errs.push(Error::InvalidConfig(format!("missing required section [{name}]")));
        }
    }

    let mut r = Reader { errs: &mut errs };
    let seed = run.and_then(|s| r.u64(s, "seed")).unwrap_or(0);
    let out = run.and_then(|s| s.str("out")).map_or_else(|| PathBuf::from(DEFAULT_OUT), PathBuf::from);
    let model = doc.section("model").map(|s| r.model(s, &doc)).unwrap_or_default();
    let sim = doc.section("sim").map(|s| SimSection {
        epsilon: r.f64(s, "epsilon"),
        delta: r.f64(s, "delta"),
        t_end: r.f64(s, "t_end"),
        dt: r.f64(s, "dt"),
        n_particles: r.usize(s, "n_particles"),
        x0: r.list(s, "x0"),
        y0: r.list(s, "y0"),
        recording: r.recording(s),
        trajectories: r.bool(s, "trajectories"),
        fast_control: r.bool(s, "fast_control"),
    });
    let control = doc.section("control").map(|s| ControlSection {
        file: s.str("file").map(PathBuf::from),
        intervals: r.usize(s, "intervals"),
        psi: r.list(s, "psi"),
        phi: r.list(s, "phi"),
        budget: r.f64(s, "budget"),
    });
    let frozen = doc.section("frozen").map(|s| FrozenSection {
        burn_in: r.f64(s, "burn_in"),
        n_samples: r.usize(s, "n_samples"),
        thinning: r.f64(s, "thinning"),
        dt_fast: r.f64(s, "dt_fast"),
        tolerance: r.f64(s, "tolerance"),
    });
    let average = doc.section("average").map(|s| AverageSection {
        mode: r.choice(s, "mode"),
        dt: r.f64(s, "dt"),
        eps_list: r.list(s, "eps_list"),
        n_rep: r.usize(s, "n_rep"),
        bootstrap: r.usize(s, "bootstrap"),
    });
    let rate = doc.section("rate").map(|s| RateSection {
        target: r.list(s, "target"),
        tol_hit: r.f64(s, "tol_hit"),
        m1: r.usize(s, "m1"),
        m2: r.usize(s, "m2"),
        starts: r.usize(s, "starts"),
        max_iter: r.usize(s, "max_iter"),
        penalties: r.list(s, "penalties"),
        budget: r.f64(s, "budget"),
        skeleton_dt: r.f64(s, "skeleton_dt"),
        ode_dt: r.f64(s, "ode_dt"),
        fd_step: r.f64(s, "fd_step"),
    });
    let ldp = doc.section("ldp").map(|s| LdpSection {
        event: r.choice(s, "event"),
        level: r.f64(s, "level"),
        center: r.list(s, "center"),
        radius: r.f64(s, "radius"),
        eps_list: r.list(s, "eps_list"),
        n_samples: r.usize(s, "n_samples"),
        method: r.choice(s, "method"),
        i_ref: r.rate_ref(s),
    });
    let check = doc.section("check").map(|s| CheckSection {
        n_probes: r.usize(s, "n_probes"),
        radius: r.f64(s, "radius"),
    });

    let Some(subcommand) = sub else {
        return Err(ConfigErrors(errs));
    };
    let cfg = RunConfig {
        subcommand,
        seed,
        out,
        model,
        sim,
        control,
        frozen,
        average,
        rate,
        ldp,
        check,
    };
    if errs.is_empty() {
        cfg.validate(&mut errs);
    }
    if errs.is_empty() {
        Ok(cfg)
    } else {
        Err(ConfigErrors(errs))
    }
}

/// Flags unknown sections and keys, naming the closest known one.
fn check_names(doc: &Document, errs: &mut Vec<Error>) {
    for s in &doc.sections {
        let Some((_, keys)) = SCHEMA.iter().find(|(name, _)| *name == s.name) else {
            let names: Vec<&str> = SCHEMA.iter().map(|(n, _)| *n).collect();
            errs.push(Error::Syntax {
                line: s.line,
                message: format!("unknown section [{}]; did you mean [{}]?", s.name, nearest(&s.name, &names)),
            });
            continue;
        };
        for e in &s.entries {
            if !keys.contains(&e.key.as_str()) {
                errs.push(Error::Syntax {
                    line: e.line,
                    message: format!(
                        "unknown key `{}` in [{}]; did you mean `{}`?",
                        e.key,
                        s.name,
                        nearest(&e.key, keys)
                    ),
                });
            }
        }
    }
}

fn nearest<'a>(word: &str, candidates: &[&'a str]) -> &'a str {
    candidates
        .iter()
        .copied()
        .max_by(|a, b| strsim::jaro_winkler(word, a).total_cmp(&strsim::jaro_winkler(word, b)))
        .unwrap_or("")
}

/// Typed lookups that record failures and keep going.
struct Reader<'a> {
    errs: &'a mut Vec<Error>,
}

impl Reader<'_> {
    fn keep<T>(&mut self, r: Result<Option<T>>) -> Option<T> {
        r.unwrap_or_else(|e| {
            self.errs.push(e);
            None
        })
    }

    fn f64(&mut self, s: &Section, key: &str) -> Option<f64> {
        self.keep(s.f64(key))
    }

    fn u64(&mut self, s: &Section, key: &str) -> Option<u64> {
        self.keep(s.u64(key))
    }

    fn usize(&mut self, s: &Section, key: &str) -> Option<usize> {
        self.u64(s, key).map(|v| v as usize)
    }

    fn bool(&mut self, s: &Section, key: &str) -> Option<bool> {
        self.keep(s.bool(key))
    }

    fn list(&mut self, s: &Section, key: &str) -> Option<Vec<f64>> {
        self.keep(s.f64_list(key))
    }

    fn choice<T: Choice>(&mut self, s: &Section, key: &str) -> Option<T> {
        let e = s.get(key)?;
        let found = T::OPTIONS.iter().find(|(name, _)| *name == e.value).map(|(_, v)| *v);
        if found.is_none() {
            let names: Vec<&str> = T::OPTIONS.iter().map(|(n, _)| *n).collect();
            self.errs.push(e.error(&format!("expected one of {}", names.join(", "))));
        }
        found
    }

    fn recording(&mut self, s: &Section) -> Option<Recording> {
        let e = s.get("recording")?;
        match e.value.as_str() {
            "auto" => Some(Recording::Auto),
            "endpoints" => Some(Recording::Endpoints),
            v => match v.parse::<usize>() {
                Ok(k) if k > 0 => Some(Recording::Every(k)),
                _ => {
                    self.errs.push(e.error("expected auto, endpoints or a positive step stride"));
                    None
                }
            },
        }
    }

    fn rate_ref(&mut self, s: &Section) -> Option<RateRefChoice> {
        let e = s.get("i_ref")?;
        match e.value.as_str() {
            "none" => Some(RateRefChoice::None),
            "optimize" => Some(RateRefChoice::Optimize),
            _ => match e.parse_f64() {
                Ok(v) => Some(RateRefChoice::Given(v)),
                Err(_) => {
                    self.errs.push(e.error("expected none, optimize or a number"));
                    None
                }
            },
        }
    }

    fn model(&mut self, s: &Section, doc: &Document) -> ModelSection {
        let builtin = s.str("builtin").map(str::to_string).unwrap_or_else(|| {
            self.errs
                .push(Error::InvalidConfig("[model] needs `builtin = name(...)`".into()));
            String::new()
        });
        let levy = doc.section("levy");
        let levy_rate = levy.and_then(|l| self.f64(l, "rate"));
        let marks = levy.and_then(|l| l.str("marks")).map(str::to_string);
        let constants = doc
            .section("constants")
            .map(|c| {
                c.entries
                    .iter()
                    .filter_map(|e| match e.parse_f64() {
                        Ok(v) => Some((e.key.clone(), v)),
                        Err(err) => {
                            self.errs.push(err);
                            None
                        }
                    })
                    .collect()
            })
            .unwrap_or_default();
        ModelSection {
            builtin,
            levy_rate,
            marks,
            constants,
        }
    }
}

impl RunConfig {
    /// Cross-field checks, run once the file parsed cleanly. Builds every
    /// component the subcommand will use so that bad values surface before any compute.
    fn validate(&self, errs: &mut Vec<Error>) {
        let spec = match self.model.build() {
            Ok(spec) => spec,
            Err(e) => {
                errs.push(e);
                return;
            }
        };
        let mut keep = |r: Result<()>| {
            if let Err(e) = r {
                errs.push(e);
            }
        };
        let sim = self.sim.as_ref();
        if let Some(sim) = sim {
            keep(sim.build(&spec, self.seed).map(|_| ()));
        }
        let t_end = sim.map_or(1.0, SimSection::t_end);
        if let Some(c) = &self.control {
            if c.file.is_some() && (c.intervals.is_some() || c.psi.is_some() || c.phi.is_some()) {
                keep(Err(Error::InvalidConfig(
                    "[control] takes either `file` or inline `intervals`/`psi`/`phi`, not both".into(),
                )));
            } else if c.file.is_none() {
                keep(c.build(&spec, t_end).map(|_| ()));
            }
        }
        if let Some(f) = &self.frozen {
            keep(f.build(&spec, self.seed).map(|_| ()));
        }
        if let Some(a) = &self.average {
            if a.eps_list.as_ref().is_some_and(|l| l.is_empty()) {
                keep(Err(Error::InvalidConfig("[average] eps_list is empty".into())));
            }
            if a.n_rep == Some(0) {
                keep(Err(Error::InvalidConfig("[average] n_rep must be positive".into())));
            }
        }
        if let Some(r) = &self.rate {
            keep(r.optimizer(self.seed).map(|_| ()));
            if let Some(t) = &r.target {
                if t.len() != spec.dim_slow {
                    keep(Err(Error::UnsupportedDimension {
                        expected: spec.dim_slow,
                        found: t.len(),
                    }));
                }
            } else if self.subcommand == Subcommand::Rate {
                keep(Err(Error::InvalidConfig("[rate] needs `target`".into())));
            }
        }
        if let Some(l) = &self.ldp {
            match l.event() {
                Ok(ev) if ev.dim() != spec.dim_slow => keep(Err(Error::UnsupportedDimension {
                    expected: spec.dim_slow,
                    found: ev.dim(),
                })),
                Ok(_) => {}
                Err(e) => keep(Err(e)),
            }
            if l.n_samples() < 1000 {
                keep(Err(Error::InvalidConfig(format!(
                    "[ldp] n_samples must be at least 1000, got {}",
                    l.n_samples()
                ))));
            }
            if l.eps_list.as_ref().is_some_and(|v| v.is_empty()) {
                keep(Err(Error::InvalidConfig("[ldp] eps_list is empty".into())));
            }
        }
    }

    pub fn spec(&self) -> Result<ModelSpec> {
        self.model.build()
    }

    /// Renders the config in the file format; parsing the result gives back `self`.
    pub fn to_config_text(&self) -> String {
        let mut out = String::new();
        let mut w = Writer { out: &mut out };
        w.header("run");
        w.line("subcommand", self.subcommand.as_str());
        w.line("seed", self.seed);
        w.quoted("out", &self.out.to_string_lossy());

        w.header("model");
        w.quoted("builtin", &self.model.builtin);
        if self.model.levy_rate.is_some() || self.model.marks.is_some() {
            w.header("levy");
            w.opt("rate", self.model.levy_rate);
            if let Some(m) = &self.model.marks {
                w.quoted("marks", m);
            }
        }
        if !self.model.constants.is_empty() {
            w.header("constants");
            for (k, v) in &self.model.constants {
                w.line(k, v);
            }
        }
        if let Some(s) = &self.sim {
            w.header("sim");
            w.opt("epsilon", s.epsilon);
            w.opt("delta", s.delta);
            w.opt("t_end", s.t_end);
            w.opt("dt", s.dt);
            w.opt("n_particles", s.n_particles);
            w.list("x0", &s.x0);
            w.list("y0", &s.y0);
            if let Some(r) = s.recording {
                match r {
                    Recording::Auto => w.line("recording", "auto"),
                    Recording::Endpoints => w.line("recording", "endpoints"),
                    Recording::Every(k) => w.line("recording", k),
                }
            }
            w.opt("trajectories", s.trajectories);
            w.opt("fast_control", s.fast_control);
        }
        if let Some(c) = &self.control {
            w.header("control");
            if let Some(f) = &c.file {
                w.quoted("file", &f.to_string_lossy());
            }
            w.opt("intervals", c.intervals);
            w.list("psi", &c.psi);
            w.list("phi", &c.phi);
            w.opt("budget", c.budget);
        }
        if let Some(f) = &self.frozen {
            w.header("frozen");
            w.opt("burn_in", f.burn_in);
            w.opt("n_samples", f.n_samples);
            w.opt("thinning", f.thinning);
            w.opt("dt_fast", f.dt_fast);
            w.opt("tolerance", f.tolerance);
        }
        if let Some(a) = &self.average {
            w.header("average");
            w.opt("mode", a.mode.map(Choice::as_str));
            w.opt("dt", a.dt);
            w.list("eps_list", &a.eps_list);
            w.opt("n_rep", a.n_rep);
            w.opt("bootstrap", a.bootstrap);
        }
        if let Some(r) = &self.rate {
            w.header("rate");
            w.list("target", &r.target);
            w.opt("tol_hit", r.tol_hit);
            w.opt("m1", r.m1);
            w.opt("m2", r.m2);
            w.opt("starts", r.starts);
            w.opt("max_iter", r.max_iter);
            w.list("penalties", &r.penalties);
            w.opt("budget", r.budget);
            w.opt("skeleton_dt", r.skeleton_dt);
            w.opt("ode_dt", r.ode_dt);
            w.opt("fd_step", r.fd_step);
        }
        if let Some(l) = &self.ldp {
            w.header("ldp");
            w.opt("event", l.event.map(Choice::as_str));
            w.opt("level", l.level);
            w.list("center", &l.center);
            w.opt("radius", l.radius);
            w.list("eps_list", &l.eps_list);
            w.opt("n_samples", l.n_samples);
            w.opt("method", l.method.map(Choice::as_str));
            match l.i_ref {
                Some(RateRefChoice::None) => w.line("i_ref", "none"),
                Some(RateRefChoice::Optimize) => w.line("i_ref", "optimize"),
                Some(RateRefChoice::Given(v)) => w.line("i_ref", v),
                None => {}
            }
        }
        if let Some(c) = &self.check {
            w.header("check");
            w.opt("n_probes", c.n_probes);
            w.opt("radius", c.radius);
        }
        out
    }
}

struct Writer<'a> {
    out: &'a mut String,
}

impl Writer<'_> {
    fn header(&mut self, name: &str) {
        if !self.out.is_empty() {
            self.out.push('\n');
        }
        let _ = writeln!(self.out, "[{name}]");
    }

    fn line(&mut self, key: &str, value: impl fmt::Display) {
        let _ = writeln!(self.out, "{key} = {value}");
    }

    fn quoted(&mut self, key: &str, value: &str) {
        let _ = writeln!(self.out, "{key} = \"{value}\"");
    }

    fn opt(&mut self, key: &str, value: Option<impl fmt::Display>) {
        if let Some(v) = value {
            self.line(key, v);
        }
    }

    fn list(&mut self, key: &str, value: &Option<Vec<f64>>) {
        if let Some(v) = value {
            let items: Vec<String> = v.iter().map(f64::to_string).collect();
            self.line(key, items.join(", "));
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "[run]\nsubcommand = simulate\n[model]\nbuiltin = linear1d(theta=2)\n[sim]\nepsilon = 0.1\n";

    #[test]
    fn minimal_simulate_config() {
        let cfg = parse_config(MINIMAL).unwrap();
        assert_eq!(cfg.subcommand, Subcommand::Simulate);
        assert_eq!(cfg.seed, 0);
        assert_eq!(cfg.out, PathBuf::from(DEFAULT_OUT));
        let spec = cfg.spec().unwrap();
        let sim = cfg.sim.as_ref().unwrap().build(&spec, 0).unwrap();
        assert_eq!((sim.delta, sim.dt), (0.1 * 0.1, 0.1 * 0.1 / 10.0));
    }

    #[test]
    fn typo_names_the_nearest_key() {
        let text = MINIMAL.replace("epsilon = 0.1", "epsilonn = 0.1");
        let errs = parse_config(&text).unwrap_err();
        let msg = errs.to_string();
        assert!(msg.contains("`epsilonn`") && msg.contains("did you mean `epsilon`"), "{msg}");
    }

    #[test]
    fn empty_file_lists_missing_sections() {
        let errs = parse_config("").unwrap_err();
        let msg = errs.to_string();
        assert!(msg.contains("[run] subcommand") && msg.contains("[model]"), "{msg}");

        let errs = parse_config_for("", Some(Subcommand::Ldp)).unwrap_err();
        assert_eq!(errs.0.len(), 3, "{errs}");
        for s in ["[model]", "[sim]", "[ldp]"] {
            assert!(errs.to_string().contains(s));
        }
    }

    #[test]
    fn collects_errors_across_sections() {
        let text = "[run]\nsubcommand = rate\nseed = -1\n[model]\nbuiltin = gaussian1d\n[sim]\nepsilon = x\n[rate]\ntarget = 1\nm1 = 2.5\n[ldpp]\n";
        let errs = parse_config(text).unwrap_err();
        assert_eq!(errs.0.len(), 4, "{errs}");
    }

    #[test]
    fn dt_guard_is_a_config_error() {
        let text = format!("{MINIMAL}dt = 0.01\n");
        let errs = parse_config(&text).unwrap_err();
        assert!(errs.0.iter().all(|e| e.kind() == mvldp::ErrorKind::Config), "{errs}");
    }

    #[test]
    fn subcommand_mismatch() {
        assert!(parse_config_for(MINIMAL, Some(Subcommand::Check)).is_err());
        assert!(parse_config_for(MINIMAL, Some(Subcommand::Simulate)).is_ok());
    }

    #[test]
    fn full_config_round_trips() {
        let text = "[run]\nsubcommand = ldp\nseed = 7\nout = \"some dir\"\n\
            [model]\nbuiltin = \"linear1d(theta=2, lambda=0.5)\"\n[levy]\nrate = 2\nmarks = exponential(1)\n[constants]\nc4 = 0.5\n\
            [sim]\nepsilon = 0.2\ndelta = 0.04\nt_end = 1\ndt = 0.001\nn_particles = 500\nx0 = 1\ny0 = 0.5\nrecording = 3\ntrajectories = true\nfast_control = false\n\
            [control]\nintervals = 2\npsi = 0.1, 0.2\nphi = 1, 1.5\nbudget = inf\n\
            [frozen]\nburn_in = 5\nn_samples = 2000\nthinning = 0.5\ndt_fast = 0.01\ntolerance = 0.1\n\
            [average]\nmode = monte_carlo\ndt = 0.001\neps_list = 0.2, 0.1\nn_rep = 3\nbootstrap = 200\n\
            [rate]\ntarget = 2\ntol_hit = 0.001\nm1 = 4\nm2 = 2\nstarts = 3\nmax_iter = 100\npenalties = 10, 100\nbudget = 5\nskeleton_dt = 0.01\node_dt = 0.01\nfd_step = 0.00001\n\
            [ldp]\nevent = ball\ncenter = 2\nradius = 0.5\neps_list = 0.2, 0.1\nn_samples = 2000\nmethod = both\ni_ref = optimize\n\
            [check]\nn_probes = 50\nradius = 3\n";
        let cfg = parse_config(text).unwrap();
        let again = parse_config(&cfg.to_config_text()).unwrap();
        assert_eq!(cfg, again);
        assert_eq!(again.to_config_text(), cfg.to_config_text());
    }
}
