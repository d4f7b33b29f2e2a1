//! System definitions: coefficients, Lévy measure, assumption constants,
//! builtin analytically solvable models and measure utilities.

mod assumptions;
mod builtin;
mod measure;

use std::fmt;
use std::sync::Arc;

use rand::RngCore;
use rand_distr::{Distribution, Exp1, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::config::Document;
use crate::rng::{NoiseStream, Source};
use crate::{Error, Result};

pub use assumptions::{check_assumptions, check_assumptions_on, AssumptionCheck, AssumptionReport, Probe, ProbePair};
pub use builtin::{
    build_gaussian_model, build_linear_model, build_meanfield_model, build_poisson_model,
    parse_builtin, BuiltinModel,
};
pub use measure::{second_moment, wasserstein2_1d, EmpiricalMeasure, MeasureView};
pub(crate) use measure::norm_sq;

/// Drift-like coefficient `(x, mu, y) -> out` (used for b1, b2 and sigma2).
pub type StateFn = Arc<dyn Fn(&[f64], &MeasureView, &[f64], &mut [f64]) + Send + Sync>;
/// Slow diffusion `(x, mu) -> out`, an `n x d` row-major matrix; never sees `y`.
pub type SlowDiffusionFn = Arc<dyn Fn(&[f64], &MeasureView, &mut [f64]) + Send + Sync>;
/// Jump coefficient `(t, x, mu, z) -> out`.
pub type JumpFn = Arc<dyn Fn(f64, &[f64], &MeasureView, f64, &mut [f64]) + Send + Sync>;
/// `(t, x, mu) -> int g(t, x, mu, z) nu(dz)`.
pub type JumpMeanFn = Arc<dyn Fn(f64, &[f64], &MeasureView, &mut [f64]) + Send + Sync>;
/// `(t, x, mu) -> int |g(t, x, mu, z)|^2 nu(dz)`.
pub type JumpSecondMomentFn = Arc<dyn Fn(f64, &[f64], &MeasureView) -> f64 + Send + Sync>;
/// Closed-form averaged slow drift `(x, mu) -> out`.
pub type AveragedDriftFn = Arc<dyn Fn(&[f64], &MeasureView, &mut [f64]) + Send + Sync>;
/// Draws one mark from the normalized Lévy measure `nu / lambda`.
pub type MarkSampler = Arc<dyn Fn(&mut dyn RngCore) -> f64 + Send + Sync>;

/// Number of marks in the fixed quadrature stencil used when a model has no
/// closed-form jump moments.
pub const MARK_STENCIL_SIZE: usize = 256;

/// Distribution of the (scalar) jump marks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "snake_case")]
pub enum MarkLaw {
    /// Every mark equals one.
    Unit,
    Exponential { mean: f64 },
    Normal { mean: f64, std: f64 },
}

impl MarkLaw {
    pub fn mean(&self) -> f64 {
        match *self {
            MarkLaw::Unit => 1.0,
            MarkLaw::Exponential { mean } => mean,
            MarkLaw::Normal { mean, .. } => mean,
        }
    }

    pub fn second_moment(&self) -> f64 {
        match *self {
            MarkLaw::Unit => 1.0,
            MarkLaw::Exponential { mean } => 2.0 * mean * mean,
            MarkLaw::Normal { mean, std } => mean * mean + std * std,
        }
    }

    pub fn sampler(&self) -> MarkSampler {
        match *self {
            MarkLaw::Unit => Arc::new(|_rng: &mut dyn RngCore| 1.0),
            MarkLaw::Exponential { mean } => Arc::new(move |rng: &mut dyn RngCore| {
                let e: f64 = Exp1.sample(rng);
                mean * e
            }),
            MarkLaw::Normal { mean, std } => Arc::new(move |rng: &mut dyn RngCore| {
                let z: f64 = StandardNormal.sample(rng);
                mean + std * z
            }),
        }
    }

    /// Parses `unit`, `exponential(mean)` or `normal(mean, std)`.
    pub fn parse(s: &str) -> Result<Self> {
        let s = s.trim();
        let bad = || Error::InvalidModel(format!("unknown mark law `{s}`"));
        if s == "unit" {
            return Ok(MarkLaw::Unit);
        }
        let (name, args) = s
            .strip_suffix(')')
            .and_then(|r| r.split_once('('))
            .ok_or_else(bad)?;
        let args: Vec<f64> = args
            .split(',')
            .map(|a| crate::config::parse_number(a).ok_or_else(bad))
            .collect::<Result<_>>()?;
        match (name.trim(), args.as_slice()) {
            ("exponential", [mean]) if *mean > 0.0 => Ok(MarkLaw::Exponential { mean: *mean }),
            ("normal", [mean, std]) if *std >= 0.0 => Ok(MarkLaw::Normal {
                mean: *mean,
                std: *std,
            }),
            _ => Err(bad()),
        }
    }
}

impl fmt::Display for MarkLaw {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MarkLaw::Unit => write!(f, "unit"),
            MarkLaw::Exponential { mean } => write!(f, "exponential({mean})"),
            MarkLaw::Normal { mean, std } => write!(f, "normal({mean}, {std})"),
        }
    }
}

/// Finite-activity Lévy measure `nu = lambda * (mark law)`.
#[derive(Clone)]
pub struct LevyMeasureSpec {
    /// `lambda = nu(X)`; zero disables jumps.
    pub total_rate: f64,
    pub mark_sampler: MarkSampler,
    /// Human-readable description of the mark law.
    pub mark_label: String,
    /// Closed-form `int |g|^2 nu(dz)`, used by assumption checks and oracles.
    pub g_second_moment: Option<JumpSecondMomentFn>,
}

impl LevyMeasureSpec {
    pub fn new(total_rate: f64, law: MarkLaw) -> Self {
        Self {
            total_rate,
            mark_sampler: law.sampler(),
            mark_label: law.to_string(),
            g_second_moment: None,
        }
    }

    pub fn none() -> Self {
        Self::new(0.0, MarkLaw::Unit)
    }

    pub fn sample_mark(&self, rng: &mut dyn RngCore) -> f64 {
        (self.mark_sampler)(rng)
    }

    /// Fixed, seeded set of marks used for quadrature of `int f(z) nu(dz)`.
    pub fn mark_stencil(&self, seed: u64) -> Vec<f64> {
        let mut stream = NoiseStream::for_particle(seed, 0, Source::Stencil);
        (0..MARK_STENCIL_SIZE)
            .map(|_| self.sample_mark(&mut stream))
            .collect()
    }
}

impl fmt::Debug for LevyMeasureSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LevyMeasureSpec")
            .field("total_rate", &self.total_rate)
            .field("marks", &self.mark_label)
            .field("g_second_moment", &self.g_second_moment.is_some())
            .finish()
    }
}

/// Constants of the Lipschitz, growth and dissipativity conditions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AssumptionParams {
    /// Joint Lipschitz constant of all coefficients.
    pub c1: f64,
    /// Linear growth constant.
    pub c2: f64,
    /// Bound on `sup_y |sigma2|^2 / (1 + |x|^2 + mu(|.|^2))`.
    pub c3: f64,
    /// Contraction rate of the fast drift.
    pub c4: f64,
    pub c5: f64,
    pub c6: f64,
    /// Exponential integrability of the jump coefficient.
    pub rho: f64,
}

impl AssumptionParams {
    pub fn validate(&self) -> Result<()> {
        let all = [self.c1, self.c2, self.c3, self.c4, self.c5, self.c6, self.rho];
        if all.iter().any(|c| !(c.is_finite() && *c > 0.0)) {
            return Err(Error::InvalidModel(format!(
                "assumption constants must be positive and finite: {self:?}"
            )));
        }
        Ok(())
    }
}

/// A two-time-scale McKean-Vlasov system with jumps.
#[derive(Clone)]
pub struct ModelSpec {
    pub name: String,
    /// `n`, dimension of the slow state.
    pub dim_slow: usize,
    pub dim_fast: usize,
    /// `d`, dimension of the Brownian motion shared by both components.
    pub dim_noise: usize,
    pub b1: StateFn,
    pub b2: StateFn,
    pub sigma1: SlowDiffusionFn,
    pub sigma2: StateFn,
    pub g: JumpFn,
    pub levy: LevyMeasureSpec,
    pub constants: AssumptionParams,
    /// Closed-form averaged drift, if known.
    pub averaged_drift: Option<AveragedDriftFn>,
    /// Closed-form compensator `int g nu(dz)`, if known.
    pub jump_mean: Option<JumpMeanFn>,
    /// False when `b1` ignores its `y` argument.
    pub slow_drift_reads_fast: bool,
    /// False when no coefficient reads its measure argument.
    pub law_dependent: bool,
    /// Seed of the compensator quadrature stencil.
    pub stencil_seed: u64,
}

impl fmt::Debug for ModelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ModelSpec")
            .field("name", &self.name)
            .field("dim_slow", &self.dim_slow)
            .field("dim_fast", &self.dim_fast)
            .field("dim_noise", &self.dim_noise)
            .field("levy", &self.levy)
            .field("constants", &self.constants)
            .field("averaged_drift", &self.averaged_drift.is_some())
            .field("jump_mean", &self.jump_mean.is_some())
            .finish_non_exhaustive()
    }
}

impl ModelSpec {
    pub fn validate(&self) -> Result<()> {
        if self.dim_slow == 0 || self.dim_fast == 0 || self.dim_noise == 0 {
            return Err(Error::InvalidModel("dimensions must be positive".into()));
        }
        let rate = self.levy.total_rate;
        if !(rate.is_finite() && rate >= 0.0) {
            return Err(Error::InvalidModel(format!(
                "Lévy total rate must be finite and nonnegative, got {rate}"
            )));
        }
        self.constants.validate()
    }

    pub fn has_jumps(&self) -> bool {
        self.levy.total_rate > 0.0
    }

    /// `int g(t, x, mu, z) nu(dz)`, closed form if available, otherwise by
    /// the fixed mark stencil. `out` must hold `dim_slow` entries.
    pub fn compensator(&self, t: f64, x: &[f64], mu: &MeasureView, stencil: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        if !self.has_jumps() {
            return;
        }
        if let Some(hook) = &self.jump_mean {
            hook(t, x, mu, out);
            return;
        }
        let mut buf = vec![0.0; self.dim_slow];
        for &z in stencil {
            (self.g)(t, x, mu, z, &mut buf);
            for (o, b) in out.iter_mut().zip(&buf) {
                *o += b;
            }
        }
        let scale = self.levy.total_rate / stencil.len() as f64;
        out.iter_mut().for_each(|v| *v *= scale);
    }

    /// `int |g(t, x, mu, z)|^2 nu(dz)`.
    pub fn jump_second_moment(&self, t: f64, x: &[f64], mu: &MeasureView, stencil: &[f64]) -> f64 {
        if !self.has_jumps() {
            return 0.0;
        }
        if let Some(hook) = &self.levy.g_second_moment {
            return hook(t, x, mu);
        }
        let mut buf = vec![0.0; self.dim_slow];
        let total: f64 = stencil
            .iter()
            .map(|&z| {
                (self.g)(t, x, mu, z, &mut buf);
                norm_sq(&buf)
            })
            .sum();
        self.levy.total_rate * total / stencil.len() as f64
    }

    pub fn mark_stencil(&self) -> Vec<f64> {
        self.levy.mark_stencil(self.stencil_seed)
    }

    /// Builds a model from the `[model]`, `[levy]` and `[constants]` sections.
    ///
    /// `[model] builtin = name(k=v, ...)` selects the system; `[levy]` may
    /// override `rate` and `marks`; `[constants]` may override `c1..c6`, `rho`.
    pub fn from_document(doc: &Document) -> Result<Self> {
        let model = doc
            .section("model")
            .ok_or_else(|| Error::InvalidConfig("missing [model] section".into()))?;
        let name = model
            .str("builtin")
            .ok_or_else(|| Error::InvalidConfig("[model] needs `builtin = name(...)`".into()))?;
        let mut builtin = BuiltinModel::parse(name)?;
        if let Some(levy) = doc.section("levy") {
            if let Some(rate) = levy.f64("rate")? {
                builtin.set_param("lambda", rate)?;
            }
            if let Some(marks) = levy.str("marks") {
                builtin.marks = MarkLaw::parse(marks)?;
            }
        }
        let mut spec = builtin.build()?;
        if let Some(c) = doc.section("constants") {
            let k = &mut spec.constants;
            for (key, slot) in [
                ("c1", &mut k.c1),
                ("c2", &mut k.c2),
                ("c3", &mut k.c3),
                ("c4", &mut k.c4),
                ("c5", &mut k.c5),
                ("c6", &mut k.c6),
                ("rho", &mut k.rho),
            ] {
                if let Some(v) = c.f64(key)? {
                    *slot = v;
                }
            }
            spec.constants.validate()?;
        }
        Ok(spec)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn model_from_document_with_overrides() {
        let doc = Document::parse(
            "[model]\nbuiltin = linear1d(theta=2, sigma_slow=0.5)\n[levy]\nrate = 3\nmarks = exponential(2)\n[constants]\nc4 = 1.5\n",
        )
        .unwrap();
        let spec = ModelSpec::from_document(&doc).unwrap();
        assert_eq!(spec.levy.total_rate, 3.0);
        assert_eq!(spec.constants.c4, 1.5);
        let mu = MeasureView::dirac(&[0.0]);
        let mut out = [0.0];
        spec.compensator(0.0, &[0.0], &mu, &[], &mut out);
        // jump_scale defaults to 1: g = z, exponential(2) marks at rate 3.
        assert!((out[0] - 6.0).abs() < 1e-12);
    }

    #[test]
    fn stencil_compensator_matches_closed_form() {
        let mut spec = build_linear_model(2.0, 1.0, 0.0, 1.5, 2.0).unwrap();
        let mu = MeasureView::dirac(&[0.0]);
        let mut exact = [0.0];
        spec.compensator(0.0, &[0.3], &mu, &[], &mut exact);
        spec.jump_mean = None;
        let stencil = spec.mark_stencil();
        let mut approx = [0.0];
        spec.compensator(0.0, &[0.3], &mu, &stencil, &mut approx);
        assert!((exact[0] - 3.0).abs() < 1e-12);
        assert!((approx[0] - 3.0).abs() < 1e-12, "unit marks make the stencil exact");
    }

    #[test]
    fn mark_law_parsing() {
        assert_eq!(MarkLaw::parse("unit").unwrap(), MarkLaw::Unit);
        assert_eq!(
            MarkLaw::parse("normal(0, 0.5)").unwrap(),
            MarkLaw::Normal { mean: 0.0, std: 0.5 }
        );
        assert!(MarkLaw::parse("cauchy(1)").is_err());
        assert!(MarkLaw::parse("exponential(-1)").is_err());
    }

    #[test]
    fn rejects_bad_constants() {
        let mut spec = build_linear_model(2.0, 1.0, 0.0, 0.0, 0.0).unwrap();
        spec.constants.c4 = 0.0;
        assert!(matches!(spec.validate(), Err(Error::InvalidModel(_))));
    }
}
