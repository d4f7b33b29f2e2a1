use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Scale parameters, horizon, grid and initial data for one ensemble run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub epsilon: f64,
    pub delta: f64,
    pub t_end: f64,
    /// Base step; the grid uses `ceil(t_end / dt)` equal steps.
    pub dt: f64,
    pub n_particles: usize,
    pub seed: u64,
    pub x0: Vec<f64>,
    pub y0: Vec<f64>,
}

impl SimConfig {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        epsilon: f64,
        delta: f64,
        t_end: f64,
        dt: f64,
        n_particles: usize,
        seed: u64,
        x0: Vec<f64>,
        y0: Vec<f64>,
    ) -> Result<Self> {
        let cfg = Self {
            epsilon,
            delta,
            t_end,
            dt,
            n_particles,
            seed,
            x0,
            y0,
        };
        cfg.validate()?;
        if cfg.delta > cfg.epsilon * cfg.epsilon {
            log::warn!(
                "delta = {} exceeds epsilon^2 = {}; the fast process may not be fast enough",
                cfg.delta,
                cfg.epsilon * cfg.epsilon
            );
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::InvalidConfig(format!("{name} must be positive and finite, got {v}")))
            }
        };
        positive("epsilon", self.epsilon)?;
        positive("delta", self.delta)?;
        positive("t_end", self.t_end)?;
        positive("dt", self.dt)?;
        if self.delta > self.epsilon {
            return Err(Error::InvalidConfig(format!(
                "delta = {} must not exceed epsilon = {}",
                self.delta, self.epsilon
            )));
        }
        if self.dt > self.delta / 10.0 * (1.0 + 1e-12) {
            return Err(Error::InvalidConfig(format!(
                "dt = {} must be at most delta / 10 = {}",
                self.dt,
                self.delta / 10.0
            )));
        }
        if self.n_particles == 0 {
            return Err(Error::InvalidConfig("n_particles must be at least 1".into()));
        }
        if self.x0.is_empty() || self.y0.is_empty() {
            return Err(Error::InvalidConfig("x0 and y0 must be nonempty".into()));
        }
        if self.x0.iter().chain(&self.y0).any(|v| !v.is_finite()) {
            return Err(Error::InvalidConfig("initial data must be finite".into()));
        }
        Ok(())
    }

    pub fn n_steps(&self) -> usize {
        ((self.t_end / self.dt) * (1.0 - 1e-12)).ceil().max(1.0) as usize
    }

    /// Actual step `t_end / n_steps`, never larger than `dt`.
    pub fn step(&self) -> f64 {
        self.t_end / self.n_steps() as f64
    }

    /// Copy at new scales; `dt` is shrunk if needed to keep `dt <= delta / 10`.
    pub fn rescaled(&self, epsilon: f64, delta: f64) -> Result<Self> {
        Self::new(
            epsilon,
            delta,
            self.t_end,
            self.dt.min(delta / 10.0),
            self.n_particles,
            self.seed,
            self.x0.clone(),
            self.y0.clone(),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(eps: f64, delta: f64, dt: f64) -> Result<SimConfig> {
        SimConfig::new(eps, delta, 1.0, dt, 10, 1, vec![0.0], vec![0.0])
    }

    #[test]
    fn resolution_guard() {
        assert!(cfg(0.1, 0.01, 0.001).is_ok());
        assert!(cfg(0.1, 0.01, 0.0011).is_err());
        assert!(cfg(0.1, 0.2, 0.001).is_err());
        assert!(cfg(0.0, 0.0, 0.001).is_err());
        // delta > eps^2 only warns
        assert!(cfg(0.1, 0.05, 0.001).is_ok());
    }

    #[test]
    fn grid_covers_horizon() {
        let c = cfg(0.1, 0.01, 0.001).unwrap();
        assert_eq!(c.n_steps(), 1000);
        let c = SimConfig::new(0.1, 0.01, 1.0, 0.0007, 1, 0, vec![0.0], vec![0.0]).unwrap();
        assert_eq!(c.n_steps(), 1429);
        assert!(c.step() <= c.dt);
    }

    #[test]
    fn rescaling_tightens_step() {
        let c = cfg(0.1, 0.01, 0.001).unwrap();
        let r = c.rescaled(0.05, 0.0025).unwrap();
        assert!((r.dt - 0.00025).abs() < 1e-18);
    }
}
