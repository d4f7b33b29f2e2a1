//! Acceptance gate: one line per criterion, nonzero exit if any fails.

use std::time::{Duration, Instant};

use itertools::Itertools;
use mvldp::averaging::{
    averaged_drift, averaged_ode_solve, averaging_error_experiment, AveragedPath, AveragingOptions, DriftMode,
    FrozenFastConfig,
};
use mvldp::experiments::{is_tail_estimate, ldp_tail_estimate, RateReference, TailEvent};
use mvldp::model::{
    build_gaussian_model, build_linear_model, build_meanfield_model, build_poisson_model, wasserstein2_1d,
    EmpiricalMeasure, LevyMeasureSpec, MarkLaw, ModelSpec,
};
use mvldp::rng::NoiseStream;
use mvldp::sde::{path_increment_stats, simulate, simulate_controlled, simulate_coupled, Recording, SimConfig, SimOptions};
use mvldp::variational::{
    cost_l1, cost_l2, cost_total, entropy_ell, rate_endpoint, skeleton_solve, ControlPair, OptimizerConfig,
    PiecewiseConstant,
};
use rand::Rng;
use statrs::distribution::{ContinuousCDF, Normal};

type Outcome = mvldp::Result<(bool, String)>;
type Criterion = (&'static str, Duration, fn() -> Outcome);

fn xbar(spec: &ModelSpec, x0: f64) -> mvldp::Result<AveragedPath> {
    averaged_ode_solve(spec, &[x0], 1.0, 0.01, &DriftMode::Analytic)
}

fn c1_averaged_drift() -> Outcome {
    let spec = build_linear_model(2.0, 1.0, 0.0, 1.0, 0.0)?;
    let cfg = FrozenFastConfig::for_model(&spec, 100_000, 1);
    let e = averaged_drift(&spec, &[1.0], &EmpiricalMeasure::dirac(&[1.0]), &cfg)?;
    let ok = (e.value[0] - 1.0).abs() <= 3.0 * e.std_error[0];
    Ok((ok, format!("bbar(1) = {:.5} (se {:.2e}), oracle 1.0", e.value[0], e.std_error[0])))
}

fn c2_averaged_ode() -> Outcome {
    let spec = build_linear_model(2.0, 1.0, 0.0, 1.0, 0.0)?;
    let path = averaged_ode_solve(&spec, &[1.0], 1.0, 0.01, &DriftMode::Analytic)?;
    let err = (path.endpoint()[0] - std::f64::consts::E).abs();
    Ok((err < 1e-6, format!("Xbar_1 = {:.10}, |Xbar_1 - e| = {err:.2e}", path.endpoint()[0])))
}

fn c3_averaging_trend() -> Outcome {
    let spec = build_linear_model(2.0, 1.0, 0.0, 1.0, 0.0)?;
    let x0 = 1.0;
    let base = SimConfig::new(0.2, 0.04, 1.0, 0.004, 2000, 2024, vec![x0], vec![2.0])?;
    let t = averaging_error_experiment(&spec, &base, &[0.2, 0.1, 0.05], &|e| e * e, 8, &AveragingOptions::default())?;
    let trend = t.rows.windows(2).all(|w| w[1].error < w[0].error || w[1].ci_lo <= w[0].ci_hi);
    let last = t.rows[2].error;
    let bound = 0.05 * (1.0 + x0 * x0);
    let detail = t
        .rows
        .iter()
        .map(|r| format!("eps {}: {:.3e} [{:.3e}, {:.3e}]", r.epsilon, r.error, r.ci_lo, r.ci_hi))
        .join("; ");
    Ok((trend && last < bound, format!("{detail}; bound {bound}")))
}

fn c4_increment_scaling() -> Outcome {
    let spec = build_linear_model(1.0, 1.0, 1.0, 1.0, 1.0)?;
    let eps: f64 = 0.1;
    let delta = eps * eps;
    let cfg = SimConfig::new(eps, delta, 1.0, delta / 10.0, 2000, 77, vec![1.0], vec![1.0])?;
    let rec = simulate(&spec, &cfg, None, &SimOptions { recording: Recording::Every(1), ..Default::default() })?;
    let table = path_increment_stats(&rec, &[0.01, 0.02, 0.05, 0.1])?;
    let slope = table.log_log_slope.unwrap_or(f64::NAN);
    Ok(((0.8..=1.2).contains(&slope), format!("log-log slope {slope:.3}")))
}

/// Cost of the constant control that drives the skeleton to `target`, by bisection.
fn constant_scan(spec: &ModelSpec, avg: &AveragedPath, target: f64, lo: f64, hi: f64, make: &dyn Fn(f64) -> ControlPair) -> mvldp::Result<f64> {
    let end = |s: f64| -> mvldp::Result<f64> { Ok(skeleton_solve(spec, avg, &make(s), 0.01)?.endpoint()[0] - target) };
    let (mut a, mut b) = (lo, hi);
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        if end(a)? * end(m)? <= 0.0 {
            b = m;
        } else {
            a = m;
        }
    }
    cost_total(&make(0.5 * (a + b)), &spec.levy, 1.0)
}

fn c5_gaussian_rate() -> Outcome {
    let spec = build_gaussian_model(1.0, 1.0)?;
    let avg = xbar(&spec, 0.0)?;
    let oracle = constant_scan(&spec, &avg, 1.0, 0.0, 3.0, &|a| ControlPair::constant(1.0, &[a], 1.0).unwrap())?;
    let r = rate_endpoint(&spec, &avg, &[1.0], 1e-3, 4, 4, &OptimizerConfig::default())?;
    let zero = rate_endpoint(&spec, &avg, avg.endpoint(), 1e-6, 4, 4, &OptimizerConfig::default())?;
    let ok = (r.value - 0.5).abs() <= 0.05 * 0.5 && (oracle - 0.5).abs() < 1e-9 && zero.value < 1e-6;
    Ok((ok, format!("I(1) = {:.6} (scan {:.6}), I(Xbar_T) = {:.2e}", r.value, oracle, zero.value)))
}

fn c6_poisson_rate() -> Outcome {
    let spec = build_poisson_model(1.0, 1.0, 1.0)?;
    let avg = xbar(&spec, 0.0)?;
    let exact = 2.0 * 2f64.ln() - 1.0;
    let oracle = constant_scan(&spec, &avg, 1.0, 1.0, 5.0, &|p| ControlPair::constant(1.0, &[0.0], p).unwrap())?;
    let r = rate_endpoint(&spec, &avg, &[1.0], 1e-3, 4, 4, &OptimizerConfig::default())?;
    let ok = (r.value - exact).abs() <= 0.05 * exact && (oracle - exact).abs() < 1e-9;
    Ok((ok, format!("I(1) = {:.6} (scan {:.6}), 2ln2 - 1 = {exact:.6}", r.value, oracle)))
}

fn gaussian_tail(eps: f64) -> f64 {
    Normal::new(0.0, 1.0).unwrap().sf(1.0 / eps.sqrt())
}

fn c7_ldp_decay() -> Outcome {
    let spec = build_gaussian_model(1.0, 1.0)?;
    let template = SimConfig::new(0.4, 0.16, 1.0, 0.016, 50_000, 7, vec![0.0], vec![0.0])?;
    let t = ldp_tail_estimate(&spec, &template, &TailEvent::geq(1.0), &[0.4, 0.2, 0.1], 1_000_000, &RateReference::Given(0.5))?;
    let gaps: Vec<f64> = t.rows.iter().map(|r| (r.neg_eps_log_p - 0.5).abs()).collect();
    let decreasing = gaps.windows(2).all(|w| w[1] < w[0]);
    let last = t.rows[2].neg_eps_log_p;
    let within = (last - 0.5).abs() <= 0.25 * 0.5;
    let detail = t
        .rows
        .iter()
        .map(|r| format!("eps {}: {:.4} (exact {:.4})", r.eps, r.neg_eps_log_p, -r.eps * gaussian_tail(r.eps).ln()))
        .join("; ");
    Ok((decreasing && within, format!("{detail}; gap decreasing: {decreasing}, within 25% at 0.1: {within}")))
}

fn c8_importance_sampling() -> Outcome {
    let spec = build_gaussian_model(1.0, 1.0)?;
    let avg = xbar(&spec, 0.0)?;
    let control = rate_endpoint(&spec, &avg, &[1.0], 1e-3, 4, 4, &OptimizerConfig::default())?.argmin;
    let event = TailEvent::geq(1.0);
    let n = 100_000;
    let template = |seed| SimConfig::new(0.4, 0.16, 1.0, 0.016, 20_000, seed, vec![0.0], vec![0.0]);
    let plain = ldp_tail_estimate(&spec, &template(8)?, &event, &[0.1], n, &RateReference::None)?.rows.remove(0);
    let tilted = is_tail_estimate(&spec, &template(9)?, &event, 0.1, &control, n, None)?;
    let (wp, wi) = (plain.ci_hi - plain.ci_lo, tilted.ci_hi - tilted.ci_lo);
    let overlap = plain.ci_lo <= tilted.ci_hi && tilted.ci_lo <= plain.ci_hi;
    Ok((
        wi <= wp / 3.0 && overlap,
        format!(
            "plain {:.3e} [{:.3e}, {:.3e}], tilted {:.3e} [{:.3e}, {:.3e}], width ratio {:.3}",
            plain.p_hat,
            plain.ci_lo,
            plain.ci_hi,
            tilted.p_hat,
            tilted.ci_lo,
            tilted.ci_hi,
            wi / wp
        ),
    ))
}

fn c9_null_control() -> Outcome {
    let mut specs = vec![
        build_linear_model(2.0, 1.0, 0.5, 1.0, 1.0)?,
        build_poisson_model(2.0, 1.0, 1.0)?,
        build_meanfield_model(2.0, 1.0, 1.0, 0.5)?,
    ];
    specs[2].levy = LevyMeasureSpec::new(1.0, MarkLaw::Exponential { mean: 1.0 });
    let cfg = SimConfig::new(0.1, 0.01, 1.0, 0.001, 500, 99, vec![0.5], vec![0.0])?;
    let mut ok = true;
    for spec in &specs {
        let mut runs = Vec::new();
        for threads in [1, 2, 4] {
            let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
            let (a, b) = pool.install(|| {
                (
                    simulate_coupled(spec, &cfg),
                    simulate_controlled(spec, &cfg, &ControlPair::null(1.0, spec.dim_noise)),
                )
            });
            let (a, mut b) = (a?, b?);
            b.log_weights = None;
            ok &= a == b;
            runs.push(a);
        }
        ok &= runs.windows(2).all(|w| w[0] == w[1]);
    }
    Ok((ok, format!("{} models x threads {{1, 2, 4}}", specs.len())))
}

fn c10_wasserstein() -> Outcome {
    let mut rng = NoiseStream::new(10, 0);
    let mut worst: f64 = 0.0;
    for _ in 0..200 {
        let k = rng.random_range(1..=5);
        let a: Vec<f64> = (0..k).map(|_| rng.random_range(-5.0..5.0)).collect();
        let b: Vec<f64> = (0..k).map(|_| rng.random_range(-5.0..5.0)).collect();
        let brute = (0..k)
            .permutations(k)
            .map(|p| a.iter().zip(&p).map(|(x, &j)| (x - b[j]).powi(2)).sum::<f64>() / k as f64)
            .fold(f64::INFINITY, f64::min)
            .sqrt();
        let w = wasserstein2_1d(&EmpiricalMeasure::from_scalars(&a)?, &EmpiricalMeasure::from_scalars(&b)?)?;
        worst = worst.max((w - brute).abs());
    }
    Ok((worst <= 1e-12, format!("max |W2 - brute force| = {worst:.2e} over 200 instances")))
}

fn c11_cost_identities() -> Outcome {
    let levy = LevyMeasureSpec::new(1.0, MarkLaw::Unit);
    let zero = PiecewiseConstant::constant(1.0, &[0.0])?;
    let one = PiecewiseConstant::constant(1.0, &[1.0])?;
    let mut ok = entropy_ell(1.0)? == 0.0 && cost_l1(&zero) == 0.0 && cost_l2(&one, &levy, 1.0)? == 0.0;
    let pair = ControlPair::constant(1.0, &[1.0], 2.0)?;
    ok &= (cost_total(&pair, &levy, 1.0)? - (cost_l1(&pair.psi) + cost_l2(&pair.phi, &levy, 1.0)?)).abs() < 1e-15;
    let mut worst_excess = f64::NEG_INFINITY;
    for (spec, x0, target) in [
        (build_gaussian_model(1.0, 1.0)?, 0.0, 1.0),
        (build_poisson_model(1.0, 1.0, 1.0)?, 0.0, 1.0),
        (build_linear_model(2.0, 1.0, 1.0, 1.0, 1.0)?, 1.0, 2.0),
        (build_meanfield_model(2.0, 1.0, 1.0, 1.0)?, 1.0, 2.0),
    ] {
        let avg = xbar(&spec, x0)?;
        let opt = OptimizerConfig::default();
        let coarse = rate_endpoint(&spec, &avg, &[target], 1e-3, 4, 4, &opt)?;
        let fine = rate_endpoint(&spec, &avg, &[target], 1e-3, 8, 8, &opt)?;
        worst_excess = worst_excess.max(fine.value - coarse.value);
    }
    ok &= worst_excess <= 1e-6;
    Ok((ok, format!("identities hold; max I(8,8) - I(4,4) = {worst_excess:.2e}")))
}

fn main() {
    let criteria: [Criterion; 11] = [
        ("1 averaged-drift oracle", Duration::from_secs(5), c1_averaged_drift),
        ("2 averaged ODE", Duration::from_secs(1), c2_averaged_ode),
        ("3 averaging convergence trend", Duration::from_secs(300), c3_averaging_trend),
        ("4 block increment scaling", Duration::from_secs(120), c4_increment_scaling),
        ("5 Gaussian rate", Duration::from_secs(60), c5_gaussian_rate),
        ("6 Poisson rate", Duration::from_secs(60), c6_poisson_rate),
        ("7 LDP decay cross-check", Duration::from_secs(600), c7_ldp_decay),
        ("8 importance sampling", Duration::from_secs(300), c8_importance_sampling),
        ("9 null-control equivalence", Duration::from_secs(30), c9_null_control),
        ("10 W2 correctness", Duration::from_secs(10), c10_wasserstein),
        ("11 cost identities and refinement", Duration::from_secs(60), c11_cost_identities),
    ];
    let mut failed = 0;
    for (name, budget, run) in criteria {
        let start = Instant::now();
        let result = run();
        let elapsed = start.elapsed();
        let (ok, detail) = match result {
            Ok((ok, detail)) => (ok && elapsed <= budget, detail),
            Err(e) => (false, format!("error: {e}")),
        };
        if !ok {
            failed += 1;
        }
        println!(
            "[{}] criterion {name}: {detail} ({:.2}s, budget {}s)",
            if ok { "PASS" } else { "FAIL" },
            elapsed.as_secs_f64(),
            budget.as_secs()
        );
    }
    println!("acceptance: {} of 11 criteria passed", 11 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
