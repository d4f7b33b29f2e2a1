use mvldp::averaging::{
    averaged_drift, averaged_ode_solve, averaging_error_experiment, invariant_measure_estimate, AveragingOptions,
    DriftMode, FrozenFastConfig,
};
use mvldp::model::{build_linear_model, EmpiricalMeasure};
use mvldp::sde::SimConfig;
use mvldp::stats::linear_fit;

#[test]
fn averaged_drift_matches_ou_mean() {
    let spec = build_linear_model(2.0, 1.0, 0.0, 1.0, 0.0).unwrap();
    let cfg = FrozenFastConfig::for_model(&spec, 100_000, 77);
    let e = averaged_drift(&spec, &[1.0], &EmpiricalMeasure::dirac(&[1.0]), &cfg).unwrap();
    assert!((e.value[0] - 1.0).abs() < 3.0 * e.std_error[0], "{e:?}");
}

#[test]
fn invariant_moments_converge_at_root_n() {
    let spec = build_linear_model(2.0, 2f64.sqrt(), 0.0, 1.0, 0.0).unwrap();
    let base = FrozenFastConfig::for_model(&spec, 10, 0);
    let h = base.dt_fast;
    // stationary law of the Euler chain y' = y + h (2 - y) + sqrt(2 h) Z
    let (mean_exact, var_exact) = (2.0, 2.0 / (2.0 - h));
    let reps = 16;
    let ns = [1_000usize, 10_000, 100_000];
    let mut log_mean_err = Vec::new();
    let mut log_var_err = Vec::new();
    for &n in &ns {
        let (mut sm, mut sv) = (0.0, 0.0);
        for r in 0..reps {
            let cfg = FrozenFastConfig {
                n_samples: n,
                seed: 1000 + r,
                ..base.clone()
            };
            let m = invariant_measure_estimate(&spec, &[1.0], &EmpiricalMeasure::dirac(&[1.0]), &cfg).unwrap();
            sm += (m.mean()[0] - mean_exact).powi(2);
            sv += (m.variance()[0] - var_exact).powi(2);
        }
        log_mean_err.push((sm / reps as f64).sqrt().ln());
        log_var_err.push((sv / reps as f64).sqrt().ln());
    }
    let log_n: Vec<f64> = ns.iter().map(|&n| (n as f64).ln()).collect();
    for errs in [&log_mean_err, &log_var_err] {
        let (_, slope) = linear_fit(&log_n, errs).unwrap();
        assert!((slope + 0.5).abs() <= 0.15, "slope {slope}");
    }
}

#[test]
fn averaging_error_shrinks_with_delta() {
    let spec = build_linear_model(2.0, 1.0, 0.0, 1.0, 0.0).unwrap();
    let base = SimConfig::new(0.1, 0.01, 1.0, 0.001, 400, 8, vec![1.0], vec![2.0]).unwrap();
    let o = AveragingOptions::default();
    let coarse = averaging_error_experiment(&spec, &base, &[0.1], &|e| e * e, 2, &o).unwrap();
    let fine = averaging_error_experiment(&spec, &base, &[0.1], &|e| e * e * e, 2, &o).unwrap();
    let (a, b) = (&coarse.rows[0], &fine.rows[0]);
    assert!(b.error < a.error, "{} vs {}", b.error, a.error);
    assert!(b.fast_block_gap < a.fast_block_gap);
}

#[test]
fn averaging_error_decreases_along_eps() {
    let spec = build_linear_model(2.0, 1.0, 0.0, 1.0, 0.0).unwrap();
    let base = SimConfig::new(0.2, 0.04, 1.0, 0.004, 300, 5, vec![1.0], vec![2.0]).unwrap();
    let t = averaging_error_experiment(&spec, &base, &[0.2, 0.1, 0.05], &|e| e * e, 3, &AveragingOptions::default())
        .unwrap();
    for w in t.rows.windows(2) {
        assert!(w[1].error < w[0].error || w[1].ci_lo <= w[0].ci_hi);
    }
    assert!(t.rows[2].error < 0.05 * 2.0);
}

#[test]
fn experiment_insensitive_to_drift_mode() {
    let spec = build_linear_model(2.0, 1.0, 0.0, 1.0, 0.0).unwrap();
    let base = SimConfig::new(0.2, 0.04, 1.0, 0.004, 200, 6, vec![1.0], vec![2.0]).unwrap();
    let frozen = FrozenFastConfig::for_model(&spec, 4000, 3);
    let mc_path = averaged_ode_solve(&spec, &[1.0], 1.0, 0.01, &DriftMode::MonteCarlo(frozen.clone())).unwrap();
    let d = 3.0 * mc_path.propagated_std_error;
    let run = |mode: DriftMode| {
        let o = AveragingOptions {
            drift_mode: mode,
            ode_dt: 0.01,
            ..AveragingOptions::default()
        };
        averaging_error_experiment(&spec, &base, &[0.2], &|e| e * e, 2, &o).unwrap().rows[0].error
    };
    let (a, b) = (run(DriftMode::Analytic), run(DriftMode::MonteCarlo(frozen)));
    // sup-norm error moves by at most the path shift: |a - b| <= 2 sqrt(a) d + d^2
    assert!((a - b).abs() <= 2.0 * a.sqrt() * d + d * d, "{a} vs {b}, d = {d}");
}
