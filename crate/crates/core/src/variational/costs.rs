use super::control::{ControlPair, PiecewiseConstant};
use crate::model::LevyMeasureSpec;
use crate::{Error, Result};

/// `l(r) = r ln r - r + 1`, with `l(0) = 1`.
pub fn entropy_ell(r: f64) -> Result<f64> {
    if !(r >= 0.0) || r.is_infinite() {
        return Err(Error::Domain(format!("entropy cost needs a finite r >= 0, got {r}")));
    }
    if r == 0.0 {
        return Ok(1.0);
    }
    Ok(r * r.ln() - r + 1.0)
}

/// `1/2 int_0^T |psi|^2 dt`, exact for piecewise-constant `psi`.
pub fn cost_l1(psi: &PiecewiseConstant) -> f64 {
    0.5 * (0..psi.intervals())
        .map(|i| psi.value(i).iter().map(|v| v * v).sum::<f64>() * psi.duration(i))
        .sum::<f64>()
}

/// `lambda int_0^T l(phi) dt` for a mark-independent `phi`, over `[0, t_end]`.
pub fn cost_l2(phi: &PiecewiseConstant, levy: &LevyMeasureSpec, t_end: f64) -> Result<f64> {
    if let Some(bad) = phi.values().iter().find(|v| !(**v > 0.0)) {
        return Err(Error::Domain(format!("phi must be positive, got {bad}")));
    }
    if levy.total_rate == 0.0 {
        return Ok(0.0);
    }
    let mut total = 0.0;
    for i in 0..phi.intervals() {
        let a = phi.edges()[i].min(t_end);
        let b = phi.edges()[i + 1].min(t_end);
        total += entropy_ell(phi.value(i)[0])? * (b - a);
    }
    Ok(levy.total_rate * total)
}

pub fn cost_total(control: &ControlPair, levy: &LevyMeasureSpec, t_end: f64) -> Result<f64> {
    Ok(cost_l1(&control.psi) + cost_l2(&control.phi, levy, t_end)?)
}
