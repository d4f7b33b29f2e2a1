//! Pilot run of the averaging error experiment on the noise-free-slow linear model.
use mvldp::averaging::{averaging_error_experiment, AveragingOptions};
use mvldp::model::build_linear_model;
use mvldp::sde::SimConfig;

fn main() -> mvldp::Result<()> {
    let spec = build_linear_model(2.0, 1.0, 0.0, 1.0, 0.0)?;
    let base = SimConfig::new(0.2, 0.04, 1.0, 0.004, 2000, 2024, vec![1.0], vec![2.0])?;
    let start = std::time::Instant::now();
    let table = averaging_error_experiment(&spec, &base, &[0.2, 0.1, 0.05], &|e| e * e, 8, &AveragingOptions::default())?;
    for r in &table.rows {
        println!(
            "eps={} delta={} Delta={:.4} error={:.6e} ci=[{:.6e}, {:.6e}] fast_gap={:.3e} slow_gap={:.3e}",
            r.epsilon, r.delta, r.window, r.error, r.ci_lo, r.ci_hi, r.fast_block_gap, r.slow_block_gap
        );
    }
    println!("elapsed {:.1?}", start.elapsed());
    Ok(())
}
