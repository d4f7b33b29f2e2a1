use mvldp::averaging::{averaged_ode_solve, AveragedPath, DriftMode};
use mvldp::model::{build_gaussian_model, build_linear_model, build_meanfield_model, build_poisson_model, ModelSpec};
use mvldp::variational::{cost_total, entropy_ell, rate_endpoint, skeleton_solve, ControlPair, OptimizerConfig};
use mvldp::Error;

fn xbar(spec: &ModelSpec, x0: f64) -> AveragedPath {
    averaged_ode_solve(spec, &[x0], 1.0, 0.01, &DriftMode::Analytic).unwrap()
}

/// Scans constant controls `c(s)` for the one whose skeleton hits `target`, by bisection
/// on `s in [lo, hi]`, and returns its cost.
fn constant_scan(spec: &ModelSpec, avg: &AveragedPath, target: f64, lo: f64, hi: f64, make: &dyn Fn(f64) -> ControlPair) -> f64 {
    let end = |s: f64| skeleton_solve(spec, avg, &make(s), 0.01).unwrap().endpoint()[0] - target;
    let (mut a, mut b) = (lo, hi);
    assert!(end(a) * end(b) < 0.0);
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        if end(a) * end(m) <= 0.0 {
            b = m;
        } else {
            a = m;
        }
    }
    cost_total(&make(0.5 * (a + b)), &spec.levy, 1.0).unwrap()
}

#[test]
fn gaussian_rate_is_one_half() {
    let spec = build_gaussian_model(1.0, 1.0).unwrap();
    let avg = xbar(&spec, 0.0);
    let oracle = constant_scan(&spec, &avg, 1.0, 0.0, 3.0, &|a| ControlPair::constant(1.0, &[a], 1.0).unwrap());
    assert!((oracle - 0.5).abs() < 1e-9);
    let r = rate_endpoint(&spec, &avg, &[1.0], 1e-3, 4, 4, &OptimizerConfig::default()).unwrap();
    assert!((r.value - oracle).abs() <= 0.05 * oracle, "I = {}", r.value);
    assert!(r.endpoint_gap <= 1e-3);
    let recomputed = cost_total(&r.argmin, &spec.levy, 1.0).unwrap();
    assert!((recomputed - r.value).abs() <= 1e-10);
}

#[test]
fn poisson_rate_is_entropy_of_two() {
    let spec = build_poisson_model(1.0, 1.0, 1.0).unwrap();
    let avg = xbar(&spec, 0.0);
    let oracle = constant_scan(&spec, &avg, 1.0, 1.0, 5.0, &|p| ControlPair::constant(1.0, &[0.0], p).unwrap());
    let exact = entropy_ell(2.0).unwrap();
    assert!((oracle - exact).abs() < 1e-9);
    let r = rate_endpoint(&spec, &avg, &[1.0], 1e-3, 4, 4, &OptimizerConfig::default()).unwrap();
    assert!((r.value - exact).abs() <= 0.05 * exact, "I = {}", r.value);
    assert!(r.argmin.phi.values().iter().all(|p| (p - 2.0).abs() < 0.05));
}

#[test]
fn averaged_endpoint_costs_nothing() {
    for spec in [
        build_linear_model(2.0, 1.0, 1.0, 1.0, 1.0).unwrap(),
        build_gaussian_model(1.0, 1.0).unwrap(),
        build_poisson_model(1.0, 1.0, 1.0).unwrap(),
    ] {
        let avg = xbar(&spec, 0.5);
        let target = avg.endpoint().to_vec();
        let r = rate_endpoint(&spec, &avg, &target, 1e-6, 4, 4, &OptimizerConfig::default()).unwrap();
        assert!(r.value < 1e-6, "{}: I = {}", spec.name, r.value);
        assert!(r.argmin.psi.values().iter().all(|v| v.abs() < 1e-3));
        assert!(r.argmin.phi.values().iter().all(|v| (v - 1.0).abs() < 1e-3));
    }
}

#[test]
fn unreachable_endpoint_is_infeasible() {
    // sigma_slow = 0 and no jumps: no control moves the skeleton
    let spec = build_linear_model(2.0, 1.0, 0.0, 1.0, 0.0).unwrap();
    let avg = xbar(&spec, 1.0);
    let opt = OptimizerConfig {
        starts: 2,
        ..OptimizerConfig::default()
    };
    assert!(matches!(
        rate_endpoint(&spec, &avg, &[0.0], 1e-3, 2, 2, &opt),
        Err(Error::Infeasible { .. })
    ));
}

#[test]
fn rate_grows_with_target_distance() {
    let spec = build_gaussian_model(1.0, 1.0).unwrap();
    let avg = xbar(&spec, 0.0);
    let values: Vec<f64> = [0.5, 1.0, 2.0]
        .iter()
        .map(|&a| rate_endpoint(&spec, &avg, &[a], 1e-3, 4, 4, &OptimizerConfig::default()).unwrap().value)
        .collect();
    assert!(values.windows(2).all(|w| w[0] <= w[1]), "{values:?}");
}

#[test]
fn refining_control_grids_never_hurts() {
    let cases: Vec<(ModelSpec, f64, f64)> = vec![
        (build_gaussian_model(1.0, 1.0).unwrap(), 0.0, 1.0),
        (build_poisson_model(1.0, 1.0, 1.0).unwrap(), 0.0, 1.0),
        (build_linear_model(2.0, 1.0, 1.0, 1.0, 1.0).unwrap(), 1.0, 2.0),
        (build_meanfield_model(2.0, 1.0, 1.0, 1.0).unwrap(), 1.0, 2.0),
    ];
    for (spec, x0, target) in cases {
        let avg = xbar(&spec, x0);
        let opt = OptimizerConfig::default();
        let coarse = rate_endpoint(&spec, &avg, &[target], 1e-3, 4, 4, &opt).unwrap();
        let fine = rate_endpoint(&spec, &avg, &[target], 1e-3, 8, 8, &opt).unwrap();
        assert!(fine.value <= coarse.value + 1e-6, "{}: {} vs {}", spec.name, fine.value, coarse.value);
    }
}

#[test]
fn optimizer_is_deterministic() {
    let spec = build_linear_model(2.0, 1.0, 1.0, 1.0, 1.0).unwrap();
    let avg = xbar(&spec, 1.0);
    let opt = OptimizerConfig { seed: 99, ..OptimizerConfig::default() };
    let a = rate_endpoint(&spec, &avg, &[2.0], 1e-3, 3, 3, &opt).unwrap();
    let b = rate_endpoint(&spec, &avg, &[2.0], 1e-3, 3, 3, &opt).unwrap();
    assert_eq!(a, b);
    assert_eq!(ControlPair::from_json(&a.argmin.to_json().unwrap()).unwrap(), a.argmin);
}
