//! Randomized probing of the Lipschitz, growth, dissipativity and jump
//! integrability conditions. Coefficients are opaque callbacks, so the
//! checks are empirical: a failed check is conclusive, a passed one is not.

use rand::Rng;
use serde::Serialize;

use super::{norm_sq, wasserstein2_1d, EmpiricalMeasure, ModelSpec};
use crate::rng::{NoiseStream, Source};
use crate::{Error, Result};

const PASS_TOL: f64 = 1e-9;

/// One evaluation point `(t, x, mu, y)`.
#[derive(Debug, Clone)]
pub struct Probe {
    pub t: f64,
    pub x: Vec<f64>,
    pub mu: EmpiricalMeasure,
    pub y: Vec<f64>,
}

/// Two probes plus `W2(mu_a, mu_b)`.
#[derive(Debug, Clone)]
pub struct ProbePair {
    pub a: Probe,
    pub b: Probe,
    pub w2: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct AssumptionCheck {
    pub name: &'static str,
    pub description: &'static str,
    /// Worst value seen over the probes.
    pub observed: f64,
    pub bound: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct AssumptionReport {
    pub model: String,
    pub n_probes: usize,
    /// Pairs whose difference quotients were skipped because the pair was degenerate.
    pub skipped_pairs: usize,
    pub lipschitz_ratio_max: f64,
    pub growth_ratio_max: f64,
    pub fast_diffusion_ratio_max: f64,
    pub dissipativity_quotient_max: f64,
    pub dissipativity_residual_max: f64,
    pub jump_exponential_moment: f64,
    pub checks: Vec<AssumptionCheck>,
    pub passed: bool,
}

impl AssumptionReport {
    pub fn check(&self, name: &str) -> Option<&AssumptionCheck> {
        self.checks.iter().find(|c| c.name == name)
    }
}

/// Probes `n_probes` random pairs with states inside a ball of `radius`.
pub fn check_assumptions(
    spec: &ModelSpec,
    n_probes: usize,
    radius: f64,
    seed: u64,
) -> Result<AssumptionReport> {
    if n_probes == 0 {
        return Err(Error::InvalidConfig("n_probes must be at least 1".into()));
    }
    if !(radius.is_finite() && radius > 0.0) {
        return Err(Error::InvalidConfig(format!("probe radius must be positive, got {radius}")));
    }
    let mut rng = NoiseStream::for_particle(seed, 0, Source::Auxiliary);
    let pairs: Vec<ProbePair> = (0..n_probes)
        .map(|_| random_pair(spec, radius, &mut rng))
        .collect::<Result<_>>()?;
    check_assumptions_on(spec, &pairs)
}

fn random_point(dim: usize, radius: f64, rng: &mut NoiseStream) -> Vec<f64> {
    let half = radius / (dim as f64).sqrt();
    (0..dim).map(|_| rng.random_range(-half..half)).collect()
}

fn random_pair(spec: &ModelSpec, radius: f64, rng: &mut NoiseStream) -> Result<ProbePair> {
    let n = spec.dim_slow;
    let atoms_a = rng.random_range(1..=4usize);
    let mu_a: Vec<f64> = (0..atoms_a).flat_map(|_| random_point(n, radius, rng)).collect();
    let mu_a = EmpiricalMeasure::uniform(n, mu_a)?;
    // In one dimension W2 is exact for arbitrary pairs; otherwise probe with
    // translates, for which W2 equals the shift length.
    let (mu_b, w2) = if n == 1 {
        let atoms_b = rng.random_range(1..=4usize);
        let pts: Vec<f64> = (0..atoms_b).map(|_| rng.random_range(-radius..radius)).collect();
        let mu_b = EmpiricalMeasure::uniform(1, pts)?;
        let w2 = wasserstein2_1d(&mu_a, &mu_b)?;
        (mu_b, w2)
    } else {
        let shift = random_point(n, radius, rng);
        let pts: Vec<f64> = mu_a
            .points()
            .chunks_exact(n)
            .flat_map(|p| p.iter().zip(&shift).map(|(a, s)| a + s).collect::<Vec<_>>())
            .collect();
        (EmpiricalMeasure::uniform(n, pts)?, norm_sq(&shift).sqrt())
    };
    let t = rng.random_range(0.0..1.0);
    Ok(ProbePair {
        a: Probe {
            t,
            x: random_point(n, radius, rng),
            mu: mu_a,
            y: random_point(spec.dim_fast, radius, rng),
        },
        b: Probe {
            t,
            x: random_point(n, radius, rng),
            mu: mu_b,
            y: random_point(spec.dim_fast, radius, rng),
        },
        w2,
    })
}

struct Evaluated {
    b1: Vec<f64>,
    b2: Vec<f64>,
    s1: Vec<f64>,
    s2: Vec<f64>,
}

fn finite(name: &'static str, probe: usize, v: &[f64]) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::ProbeFailure {
            coefficient: name,
            probe,
        })
    }
}

fn evaluate(spec: &ModelSpec, p: &Probe, idx: usize) -> Result<Evaluated> {
    let (n, m, d) = (spec.dim_slow, spec.dim_fast, spec.dim_noise);
    let mu = p.mu.view();
    let mut e = Evaluated {
        b1: vec![0.0; n],
        b2: vec![0.0; m],
        s1: vec![0.0; n * d],
        s2: vec![0.0; m * d],
    };
    (spec.b1)(&p.x, &mu, &p.y, &mut e.b1);
    finite("b1", idx, &e.b1)?;
    (spec.b2)(&p.x, &mu, &p.y, &mut e.b2);
    finite("b2", idx, &e.b2)?;
    (spec.sigma1)(&p.x, &mu, &mut e.s1);
    finite("sigma1", idx, &e.s1)?;
    (spec.sigma2)(&p.x, &mu, &p.y, &mut e.s2);
    finite("sigma2", idx, &e.s2)?;
    Ok(e)
}

fn dist_sq(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Runs every check on explicitly given probe pairs.
pub fn check_assumptions_on(spec: &ModelSpec, pairs: &[ProbePair]) -> Result<AssumptionReport> {
    spec.validate()?;
    let k = spec.constants;
    let stencil = spec.mark_stencil();
    let lambda = spec.levy.total_rate;
    let n = spec.dim_slow;
    let mut g_a = vec![0.0; n];
    let mut g_b = vec![0.0; n];

    let mut lipschitz: f64 = 0.0;
    let mut growth: f64 = 0.0;
    let mut fast_diff: f64 = 0.0;
    let mut quotient = f64::NEG_INFINITY;
    let mut residual = f64::NEG_INFINITY;
    let mut skipped = 0usize;
    // Per stencil mark: sup over probes of |g|^2 / (1 + |x|^2 + mu(|.|^2)).
    let mut g_norm = vec![0.0f64; stencil.len()];

    for (idx, pair) in pairs.iter().enumerate() {
        let (pa, pb) = (&pair.a, &pair.b);
        let ea = evaluate(spec, pa, idx)?;
        let eb = evaluate(spec, pb, idx)?;
        let (mu_a, mu_b) = (pa.mu.view(), pb.mu.view());

        let mut dg = 0.0;
        let mut g_sq = 0.0;
        if lambda > 0.0 {
            for (j, &z) in stencil.iter().enumerate() {
                (spec.g)(pa.t, &pa.x, &mu_a, z, &mut g_a);
                finite("g", idx, &g_a)?;
                (spec.g)(pb.t, &pb.x, &mu_b, z, &mut g_b);
                finite("g", idx, &g_b)?;
                dg += dist_sq(&g_a, &g_b);
                let a_sq = norm_sq(&g_a);
                g_sq += a_sq;
                let scale = 1.0 + norm_sq(&pa.x) + mu_a.second_moment();
                g_norm[j] = g_norm[j].max(a_sq / scale);
            }
            dg *= lambda / stencil.len() as f64;
            g_sq *= lambda / stencil.len() as f64;
        }

        // Joint Lipschitz condition.
        let num = dist_sq(&ea.b1, &eb.b1)
            + dist_sq(&ea.b2, &eb.b2)
            + dist_sq(&ea.s1, &eb.s1)
            + dist_sq(&ea.s2, &eb.s2)
            + dg;
        let den = dist_sq(&pa.x, &pb.x) + dist_sq(&pa.y, &pb.y) + pair.w2 * pair.w2;
        if den > 0.0 {
            lipschitz = lipschitz.max(num / den);
        } else if num > 0.0 {
            lipschitz = f64::INFINITY;
        } else {
            skipped += 1;
        }

        // Linear growth, at the first probe of the pair.
        let scale = 1.0 + norm_sq(&pa.x) + norm_sq(&pa.y) + mu_a.second_moment();
        let size = norm_sq(&ea.b1) + norm_sq(&ea.b2) + norm_sq(&ea.s1) + g_sq;
        growth = growth.max(size / scale);

        // Fast diffusion bound, at both probes.
        for (p, e, mu) in [(pa, &ea, &mu_a), (pb, &eb, &mu_b)] {
            let s = norm_sq(&e.s2) / (1.0 + norm_sq(&p.x) + mu.second_moment());
            fast_diff = fast_diff.max(s);
        }

        // Dissipativity: same (x, mu), two fast states.
        let dy_sq = dist_sq(&pa.y, &pb.y);
        if dy_sq > 0.0 {
            let mut b2_other = vec![0.0; spec.dim_fast];
            let mut s2_other = vec![0.0; spec.dim_fast * spec.dim_noise];
            (spec.b2)(&pa.x, &mu_a, &pb.y, &mut b2_other);
            finite("b2", idx, &b2_other)?;
            (spec.sigma2)(&pa.x, &mu_a, &pb.y, &mut s2_other);
            finite("sigma2", idx, &s2_other)?;
            let inner: f64 = pa
                .y
                .iter()
                .zip(&pb.y)
                .zip(ea.b2.iter().zip(&b2_other))
                .map(|((y1, y2), (f1, f2))| (y1 - y2) * (f1 - f2))
                .sum();
            let q = (2.0 * inner + dist_sq(&ea.s2, &s2_other)) / dy_sq;
            quotient = quotient.max(q);
        } else {
            skipped += usize::from(den > 0.0);
        }
        for (p, e, mu) in [(pa, &ea, &mu_a), (pb, &eb, &mu_b)] {
            let inner: f64 = p.y.iter().zip(&e.b2).map(|(y, b)| y * b).sum();
            let r = inner + norm_sq(&e.s2) + k.c5 * norm_sq(&p.y)
                - k.c6 * (1.0 + norm_sq(&p.x) + mu.second_moment());
            residual = residual.max(r);
        }
    }

    let exp_moment = if lambda > 0.0 {
        lambda * g_norm.iter().map(|v| (k.rho * v).exp()).sum::<f64>() / g_norm.len() as f64
    } else {
        0.0
    };
    let le = |v: f64, bound: f64| v <= bound + PASS_TOL * (1.0 + bound.abs());
    let checks = vec![
        AssumptionCheck {
            name: "lipschitz",
            description: "sum of squared coefficient differences / (|dx|^2 + |dy|^2 + W2^2) <= c1",
            observed: lipschitz,
            bound: k.c1,
            passed: le(lipschitz, k.c1),
        },
        AssumptionCheck {
            name: "growth",
            description: "|b1|^2 + |b2|^2 + |sigma1|^2 + int |g|^2 dnu <= c2 (1 + |x|^2 + |y|^2 + mu(|.|^2))",
            observed: growth,
            bound: k.c2,
            passed: le(growth, k.c2),
        },
        AssumptionCheck {
            name: "fast_diffusion",
            description: "|sigma2|^2 <= c3 (1 + |x|^2 + mu(|.|^2))",
            observed: fast_diff,
            bound: k.c3,
            passed: le(fast_diff, k.c3),
        },
        AssumptionCheck {
            name: "dissipativity",
            description: "(2 <dy, db2> + |dsigma2|^2) / |dy|^2 <= -c4",
            observed: quotient,
            bound: -k.c4,
            passed: le(quotient, -k.c4),
        },
        AssumptionCheck {
            name: "dissipativity_growth",
            description: "<y, b2> + |sigma2|^2 + c5 |y|^2 - c6 (1 + |x|^2 + mu(|.|^2)) <= 0",
            observed: residual,
            bound: 0.0,
            passed: le(residual, 0.0),
        },
        AssumptionCheck {
            name: "jump_integrability",
            description: "int exp(rho ||g||) dnu finite",
            observed: exp_moment,
            bound: f64::INFINITY,
            passed: exp_moment.is_finite(),
        },
    ];
    let passed = checks.iter().all(|c| c.passed);
    Ok(AssumptionReport {
        model: spec.name.clone(),
        n_probes: pairs.len(),
        skipped_pairs: skipped,
        lipschitz_ratio_max: lipschitz,
        growth_ratio_max: growth,
        fast_diffusion_ratio_max: fast_diff,
        dissipativity_quotient_max: quotient,
        dissipativity_residual_max: residual,
        jump_exponential_moment: exp_moment,
        checks,
        passed,
    })
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::model::{build_linear_model, build_meanfield_model, build_poisson_model, MeasureView};

    #[test]
    fn linear_model_passes_with_exact_contraction() {
        let spec = build_linear_model(2.0, 1.0, 0.5, 1.0, 2.0).unwrap();
        let report = check_assumptions(&spec, 10_000, 10.0, 1).unwrap();
        assert!(report.passed, "{:#?}", report.checks);
        // b2 = -(y - theta x) with constant sigma2 has quotient exactly -2;
        // only the rounding of the differences remains.
        assert!((report.dissipativity_quotient_max + 2.0).abs() < 1e-9);
        assert_eq!(spec.constants.c4, 2.0);
        assert_eq!(spec.constants.c1, 16.0);
        assert!(report.lipschitz_ratio_max <= 16.0);
    }

    #[test]
    fn builtins_pass() {
        for spec in [
            build_linear_model(1.0, 2.0, 0.0, 0.0, 0.0).unwrap(),
            build_linear_model(-3.0, 0.5, 1.0, 2.0, 0.5).unwrap(),
            build_poisson_model(1.0, 1.0, 1.0).unwrap(),
            build_meanfield_model(2.0, 0.5, 1.0, 0.3).unwrap(),
        ] {
            let report = check_assumptions(&spec, 2_000, 10.0, 9).unwrap();
            assert!(report.passed, "{}: {:#?}", spec.name, report.checks);
        }
    }

    #[test]
    fn identical_pair_is_skipped() {
        let spec = build_linear_model(2.0, 1.0, 0.0, 0.0, 0.0).unwrap();
        let probe = Probe {
            t: 0.0,
            x: vec![1.0],
            mu: EmpiricalMeasure::from_scalars(&[0.5, 1.5]).unwrap(),
            y: vec![-2.0],
        };
        let pair = ProbePair {
            a: probe.clone(),
            b: probe,
            w2: 0.0,
        };
        let report = check_assumptions_on(&spec, &[pair]).unwrap();
        assert_eq!(report.skipped_pairs, 1);
        assert_eq!(report.lipschitz_ratio_max, 0.0);
        assert_eq!(report.dissipativity_quotient_max, f64::NEG_INFINITY);
        assert!(report.lipschitz_ratio_max.is_finite());
    }

    #[test]
    fn anti_dissipative_fast_drift_fails() {
        let mut spec = build_linear_model(2.0, 1.0, 0.0, 0.0, 0.0).unwrap();
        spec.b2 = Arc::new(|_x: &[f64], _mu: &MeasureView, y: &[f64], out: &mut [f64]| out[0] = y[0]);
        let report = check_assumptions(&spec, 100, 10.0, 3).unwrap();
        assert!(!report.passed);
        assert!(report.dissipativity_quotient_max > 0.0);
        assert!(!report.check("dissipativity").unwrap().passed);
    }

    #[test]
    fn non_finite_coefficient_is_named() {
        let mut spec = build_linear_model(2.0, 1.0, 0.0, 0.0, 0.0).unwrap();
        spec.sigma1 = Arc::new(|_x: &[f64], _mu: &MeasureView, out: &mut [f64]| out[0] = f64::NAN);
        let err = check_assumptions(&spec, 5, 1.0, 0).unwrap_err();
        assert!(matches!(err, Error::ProbeFailure { coefficient: "sigma1", probe: 0 }));
    }

    #[test]
    fn zero_probes_rejected() {
        let spec = build_linear_model(2.0, 1.0, 0.0, 0.0, 0.0).unwrap();
        assert!(check_assumptions(&spec, 0, 1.0, 0).is_err());
    }
}
