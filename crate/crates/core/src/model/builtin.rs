//! Builtin scalar models with closed-form averaged dynamics.
//!
//! All builtins share the fast equation `dY = -(Y - theta X) dt / delta +
//! sigma_fast dW / sqrt(delta)`, whose frozen invariant law is
//! `N(theta x, sigma_fast^2 / 2)`.

use std::fmt;
use std::sync::Arc;

use super::{AssumptionParams, LevyMeasureSpec, MarkLaw, MeasureView, ModelSpec};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BuiltinKind {
    /// `b1 = -x + y`.
    Linear,
    /// `b1 = 0`, slow noise only.
    Gaussian,
    /// `b1 = 0`, jumps only.
    Poisson,
    /// `b1 = -x + y + kappa (mean(mu) - x)`.
    MeanField,
}

impl BuiltinKind {
    pub const ALL: [BuiltinKind; 4] = [
        BuiltinKind::Linear,
        BuiltinKind::Gaussian,
        BuiltinKind::Poisson,
        BuiltinKind::MeanField,
    ];

    pub fn name(self) -> &'static str {
        match self {
            BuiltinKind::Linear => "linear1d",
            BuiltinKind::Gaussian => "gaussian1d",
            BuiltinKind::Poisson => "poisson1d",
            BuiltinKind::MeanField => "meanfield1d",
        }
    }

    fn defaults(self) -> Vec<(&'static str, f64)> {
        match self {
            BuiltinKind::Linear => vec![
                ("theta", 2.0),
                ("sigma_fast", 1.0),
                ("sigma_slow", 0.0),
                ("jump_scale", 1.0),
                ("lambda", 0.0),
            ],
            BuiltinKind::Gaussian => vec![("sigma_slow", 1.0), ("sigma_fast", 1.0)],
            BuiltinKind::Poisson => vec![("lambda", 1.0), ("jump_scale", 1.0), ("sigma_fast", 1.0)],
            BuiltinKind::MeanField => vec![
                ("theta", 2.0),
                ("kappa", 1.0),
                ("sigma_fast", 1.0),
                ("sigma_slow", 0.0),
                ("jump_scale", 1.0),
                ("lambda", 0.0),
            ],
        }
    }
}

/// A builtin model name with its parameters, e.g. `linear1d(theta=2, lambda=1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct BuiltinModel {
    pub kind: BuiltinKind,
    params: Vec<(&'static str, f64)>,
    pub marks: MarkLaw,
}

impl BuiltinModel {
    pub fn new(kind: BuiltinKind) -> Self {
        Self {
            kind,
            params: kind.defaults(),
            marks: MarkLaw::Unit,
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        let text = text.trim();
        let (name, args) = match text.split_once('(') {
            Some((name, rest)) => {
                let args = rest.strip_suffix(')').ok_or_else(|| {
                    Error::InvalidModel(format!("missing `)` in builtin `{text}`"))
                })?;
                (name.trim(), args)
            }
            None => (text, ""),
        };
        let kind = BuiltinKind::ALL
            .into_iter()
            .find(|k| k.name() == name)
            .ok_or_else(|| {
                let known: Vec<&str> = BuiltinKind::ALL.iter().map(|k| k.name()).collect();
                Error::InvalidModel(format!(
                    "unknown builtin model `{name}` (known: {})",
                    known.join(", ")
                ))
            })?;
        let mut model = Self::new(kind);
        for arg in args.split(',').map(str::trim).filter(|a| !a.is_empty()) {
            let (key, value) = arg.split_once('=').ok_or_else(|| {
                Error::InvalidModel(format!("expected `key=value` in `{arg}`"))
            })?;
            let value = crate::config::parse_number(value).ok_or_else(|| {
                Error::InvalidModel(format!("`{}` is not a number", value.trim()))
            })?;
            model.set_param(key.trim(), value)?;
        }
        Ok(model)
    }

    pub fn set_param(&mut self, key: &str, value: f64) -> Result<()> {
        let name = self.kind.name();
        let known: Vec<&str> = self.params.iter().map(|(k, _)| *k).collect();
        let slot = self
            .params
            .iter_mut()
            .find(|(k, _)| *k == key)
            .ok_or_else(|| {
                Error::InvalidModel(format!(
                    "{name} has no parameter `{key}` (parameters: {})",
                    known.join(", ")
                ))
            })?;
        slot.1 = value;
        Ok(())
    }

    pub fn param(&self, key: &str) -> f64 {
        self.params
            .iter()
            .find(|(k, _)| *k == key)
            .map(|(_, v)| *v)
            .unwrap_or(0.0)
    }

    pub fn build(&self) -> Result<ModelSpec> {
        let p = |k| self.param(k);
        let mut spec = match self.kind {
            BuiltinKind::Linear => scalar_model(ScalarParams {
                slow: SlowDrift::Relaxing { kappa: 0.0 },
                theta: p("theta"),
                sigma_fast: p("sigma_fast"),
                sigma_slow: p("sigma_slow"),
                jump_scale: p("jump_scale"),
                lambda: p("lambda"),
                marks: self.marks,
            }),
            BuiltinKind::Gaussian => scalar_model(ScalarParams {
                slow: SlowDrift::Zero,
                theta: 1.0,
                sigma_fast: p("sigma_fast"),
                sigma_slow: p("sigma_slow"),
                jump_scale: 0.0,
                lambda: 0.0,
                marks: self.marks,
            }),
            BuiltinKind::Poisson => scalar_model(ScalarParams {
                slow: SlowDrift::Zero,
                theta: 1.0,
                sigma_fast: p("sigma_fast"),
                sigma_slow: 0.0,
                jump_scale: p("jump_scale"),
                lambda: p("lambda"),
                marks: self.marks,
            }),
            BuiltinKind::MeanField => scalar_model(ScalarParams {
                slow: SlowDrift::Relaxing { kappa: p("kappa") },
                theta: p("theta"),
                sigma_fast: p("sigma_fast"),
                sigma_slow: p("sigma_slow"),
                jump_scale: p("jump_scale"),
                lambda: p("lambda"),
                marks: self.marks,
            }),
        }?;
        spec.name = self.to_string();
        Ok(spec)
    }
}

impl fmt::Display for BuiltinModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let args: Vec<String> = self.params.iter().map(|(k, v)| format!("{k}={v}")).collect();
        write!(f, "{}({})", self.kind.name(), args.join(", "))
    }
}

/// Parses and builds a builtin model from its name string.
pub fn parse_builtin(text: &str) -> Result<ModelSpec> {
    BuiltinModel::parse(text)?.build()
}

/// `b1 = -x + y`, `b2 = -(y - theta x)`, constant diffusions, `g = jump_scale * z`
/// with unit marks at rate `lambda`. Averaged drift: `(theta - 1) x`.
pub fn build_linear_model(
    theta: f64,
    sigma_fast: f64,
    sigma_slow: f64,
    jump_scale: f64,
    lambda: f64,
) -> Result<ModelSpec> {
    let mut m = BuiltinModel::new(BuiltinKind::Linear);
    m.set_param("theta", theta)?;
    m.set_param("sigma_fast", sigma_fast)?;
    m.set_param("sigma_slow", sigma_slow)?;
    m.set_param("jump_scale", jump_scale)?;
    m.set_param("lambda", lambda)?;
    m.build()
}

/// `b1 = 0`, `sigma1 = sigma_slow`, no jumps: `X_T - X_0 = sqrt(eps) sigma_slow W_T`.
pub fn build_gaussian_model(sigma_slow: f64, sigma_fast: f64) -> Result<ModelSpec> {
    let mut m = BuiltinModel::new(BuiltinKind::Gaussian);
    m.set_param("sigma_slow", sigma_slow)?;
    m.set_param("sigma_fast", sigma_fast)?;
    m.build()
}

/// `b1 = 0`, `sigma1 = 0`, `g = jump_scale * z` with unit marks at rate `lambda`.
pub fn build_poisson_model(lambda: f64, jump_scale: f64, sigma_fast: f64) -> Result<ModelSpec> {
    let mut m = BuiltinModel::new(BuiltinKind::Poisson);
    m.set_param("lambda", lambda)?;
    m.set_param("jump_scale", jump_scale)?;
    m.set_param("sigma_fast", sigma_fast)?;
    m.build()
}

/// Linear model with a mean-field pull `kappa (mean(mu) - x)` in the slow drift.
pub fn build_meanfield_model(
    theta: f64,
    kappa: f64,
    sigma_fast: f64,
    sigma_slow: f64,
) -> Result<ModelSpec> {
    let mut m = BuiltinModel::new(BuiltinKind::MeanField);
    m.set_param("theta", theta)?;
    m.set_param("kappa", kappa)?;
    m.set_param("sigma_fast", sigma_fast)?;
    m.set_param("sigma_slow", sigma_slow)?;
    m.build()
}

#[derive(Debug, Clone, Copy)]
enum SlowDrift {
    Zero,
    Relaxing { kappa: f64 },
}

#[derive(Debug, Clone, Copy)]
struct ScalarParams {
    slow: SlowDrift,
    theta: f64,
    sigma_fast: f64,
    sigma_slow: f64,
    jump_scale: f64,
    lambda: f64,
    marks: MarkLaw,
}

fn scalar_model(p: ScalarParams) -> Result<ModelSpec> {
    if !(p.sigma_fast.is_finite() && p.sigma_fast > 0.0) {
        return Err(Error::InvalidModel(format!(
            "sigma_fast must be positive, got {}",
            p.sigma_fast
        )));
    }
    for (name, v) in [
        ("sigma_slow", p.sigma_slow),
        ("jump_scale", p.jump_scale),
        ("lambda", p.lambda),
    ] {
        if !(v.is_finite() && v >= 0.0) {
            return Err(Error::InvalidModel(format!("{name} must be nonnegative, got {v}")));
        }
    }
    if !p.theta.is_finite() {
        return Err(Error::InvalidModel("theta must be finite".into()));
    }

    let ScalarParams {
        theta,
        sigma_fast,
        sigma_slow,
        jump_scale,
        lambda,
        marks,
        ..
    } = p;
    let jump_mean = lambda * jump_scale * marks.mean();
    let jump_m2 = lambda * jump_scale * jump_scale * marks.second_moment();
    let big = theta.abs().max(1.0).powi(2);

    let (b1, averaged, reads_fast, law_dependent, c1, growth): (
        super::StateFn,
        super::AveragedDriftFn,
        bool,
        bool,
        f64,
        f64,
    ) = match p.slow {
        SlowDrift::Zero => (
            Arc::new(|_x: &[f64], _mu: &MeasureView, _y: &[f64], out: &mut [f64]| out[0] = 0.0),
            Arc::new(|_x: &[f64], _mu: &MeasureView, out: &mut [f64]| out[0] = 0.0),
            false,
            false,
            2.0 * big,
            2.0 * big,
        ),
        SlowDrift::Relaxing { kappa: 0.0 } => (
            Arc::new(|x: &[f64], _mu: &MeasureView, y: &[f64], out: &mut [f64]| {
                out[0] = -x[0] + y[0]
            }),
            Arc::new(move |x: &[f64], _mu: &MeasureView, out: &mut [f64]| {
                out[0] = (theta - 1.0) * x[0]
            }),
            true,
            false,
            4.0 * big,
            4.0 * big,
        ),
        SlowDrift::Relaxing { kappa } => {
            let bound = (3.0 * (1.0 + kappa).powi(2) + 2.0 * theta * theta)
                .max(5.0)
                .max(3.0 * kappa * kappa);
            (
                Arc::new(move |x: &[f64], mu: &MeasureView, y: &[f64], out: &mut [f64]| {
                    out[0] = -x[0] + y[0] + kappa * (mu.mean()[0] - x[0])
                }),
                Arc::new(move |x: &[f64], mu: &MeasureView, out: &mut [f64]| {
                    out[0] = (theta - 1.0) * x[0] + kappa * (mu.mean()[0] - x[0])
                }),
                true,
                true,
                bound,
                bound,
            )
        }
    };

    let mut levy = LevyMeasureSpec::new(lambda, marks);
    levy.g_second_moment = Some(Arc::new(move |_t: f64, _x: &[f64], _mu: &MeasureView| jump_m2));

    Ok(ModelSpec {
        name: String::new(),
        dim_slow: 1,
        dim_fast: 1,
        dim_noise: 1,
        b1,
        b2: Arc::new(move |x: &[f64], _mu: &MeasureView, y: &[f64], out: &mut [f64]| {
            out[0] = -(y[0] - theta * x[0])
        }),
        sigma1: Arc::new(move |_x: &[f64], _mu: &MeasureView, out: &mut [f64]| out[0] = sigma_slow),
        sigma2: Arc::new(move |_x: &[f64], _mu: &MeasureView, _y: &[f64], out: &mut [f64]| {
            out[0] = sigma_fast
        }),
        g: Arc::new(move |_t: f64, _x: &[f64], _mu: &MeasureView, z: f64, out: &mut [f64]| {
            out[0] = jump_scale * z
        }),
        levy,
        constants: AssumptionParams {
            c1,
            c2: growth + sigma_slow * sigma_slow + jump_m2,
            c3: (sigma_fast * sigma_fast).max(1e-12),
            c4: 2.0,
            c5: 0.5,
            c6: (0.5 * theta * theta).max(sigma_fast * sigma_fast).max(1e-12),
            rho: 1.0,
        },
        averaged_drift: Some(averaged),
        jump_mean: Some(Arc::new(move |_t: f64, _x: &[f64], _mu: &MeasureView, out: &mut [f64]| {
            out[0] = jump_mean
        })),
        slow_drift_reads_fast: reads_fast,
        law_dependent,
        stencil_seed: 0x5EED,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn averaged(spec: &ModelSpec, x: f64) -> f64 {
        let mut out = [0.0];
        (spec.averaged_drift.as_ref().unwrap())(&[x], &MeasureView::dirac(&[x]), &mut out);
        out[0]
    }

    #[test]
    fn theta_one_cancels_averaged_drift() {
        let spec = build_linear_model(1.0, 0.7, 0.3, 0.0, 0.0).unwrap();
        for x in [-3.0, 0.0, 1.0, 10.0] {
            assert_eq!(averaged(&spec, x), 0.0);
        }
    }

    #[test]
    fn theta_two_averaged_drift_at_one() {
        // Stationary fast mean theta * x = 2 substituted into b1 = -x + y.
        let spec = build_linear_model(2.0, 1.0, 0.0, 0.0, 0.0).unwrap();
        assert_eq!(averaged(&spec, 1.0), 1.0);
    }

    #[test]
    fn rejects_nonpositive_fast_noise() {
        assert!(matches!(
            build_linear_model(2.0, 0.0, 0.0, 0.0, 0.0),
            Err(Error::InvalidModel(_))
        ));
        assert!(matches!(
            build_linear_model(2.0, -1.0, 0.0, 0.0, 0.0),
            Err(Error::InvalidModel(_))
        ));
    }

    #[test]
    fn parse_builtin_names() {
        let spec = parse_builtin("linear1d(theta=3, sigma_fast=sqrt(2))").unwrap();
        assert_eq!(averaged(&spec, 1.0), 2.0);
        assert!(spec.name.starts_with("linear1d(theta=3"));
        let spec = parse_builtin("gaussian1d").unwrap();
        assert!(!spec.slow_drift_reads_fast);
        assert!(parse_builtin("gaussian1d(lambda=1)").is_err());
        assert!(parse_builtin("cubic1d").is_err());
        let spec = parse_builtin("meanfield1d(kappa=0.5)").unwrap();
        assert!(spec.law_dependent);
    }

    #[test]
    fn display_round_trips() {
        let m = BuiltinModel::parse("poisson1d(lambda=2.5)").unwrap();
        assert_eq!(BuiltinModel::parse(&m.to_string()).unwrap(), m);
    }
}
