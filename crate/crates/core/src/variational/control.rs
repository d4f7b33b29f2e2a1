use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Right-continuous piecewise-constant map `[0, T] -> R^dim`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PiecewiseConstant {
    /// Interval edges `0 = e_0 < e_1 < ... < e_m = T`.
    edges: Vec<f64>,
    dim: usize,
    /// Row-major `m x dim` values; row `i` holds on `[e_i, e_{i+1})`.
    values: Vec<f64>,
}

impl PiecewiseConstant {
    pub fn new(edges: Vec<f64>, dim: usize, values: Vec<f64>) -> Result<Self> {
        if edges.len() < 2 || edges[0] != 0.0 {
            return Err(Error::InvalidControl(
                "edges must start at 0 and contain at least one interval".into(),
            ));
        }
        if edges.windows(2).any(|w| !(w[1] > w[0]) || !w[1].is_finite()) {
            return Err(Error::InvalidControl("edges must be finite and strictly increasing".into()));
        }
        if dim == 0 || values.len() != (edges.len() - 1) * dim {
            return Err(Error::InvalidControl(format!(
                "{} values do not fill {} intervals of dimension {dim}",
                values.len(),
                edges.len() - 1
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidControl("control values must be finite".into()));
        }
        Ok(Self { edges, dim, values })
    }

    /// `intervals` equal pieces on `[0, t_end]`.
    pub fn uniform(t_end: f64, intervals: usize, dim: usize, values: Vec<f64>) -> Result<Self> {
        if intervals == 0 || !(t_end > 0.0) {
            return Err(Error::InvalidControl("need at least one interval on a positive horizon".into()));
        }
        let edges = (0..=intervals)
            .map(|i| {
                if i == intervals {
                    t_end
                } else {
                    t_end * i as f64 / intervals as f64
                }
            })
            .collect();
        Self::new(edges, dim, values)
    }

    pub fn constant(t_end: f64, value: &[f64]) -> Result<Self> {
        Self::uniform(t_end, 1, value.len(), value.to_vec())
    }

    pub fn intervals(&self) -> usize {
        self.edges.len() - 1
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn t_end(&self) -> f64 {
        *self.edges.last().unwrap()
    }

    pub fn edges(&self) -> &[f64] {
        &self.edges
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn value(&self, interval: usize) -> &[f64] {
        &self.values[interval * self.dim..(interval + 1) * self.dim]
    }

    pub fn duration(&self, interval: usize) -> f64 {
        self.edges[interval + 1] - self.edges[interval]
    }

    /// Index of the interval containing `t`; times past the horizon map to the last one.
    pub fn index_at(&self, t: f64) -> usize {
        let m = self.intervals();
        self.edges[1..m].partition_point(|&e| e <= t)
    }

    pub fn at(&self, t: f64) -> &[f64] {
        self.value(self.index_at(t))
    }

    pub fn max_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Splits every interval into `factor` equal pieces with the same value.
    pub fn refine(&self, factor: usize) -> Self {
        let mut edges = vec![0.0];
        let mut values = Vec::with_capacity(self.values.len() * factor);
        for i in 0..self.intervals() {
            let (a, b) = (self.edges[i], self.edges[i + 1]);
            for k in 1..=factor {
                edges.push(if k == factor { b } else { a + (b - a) * k as f64 / factor as f64 });
                values.extend_from_slice(self.value(i));
            }
        }
        Self {
            edges,
            dim: self.dim,
            values,
        }
    }
}

/// Discretized control pair `(psi, phi)`: a Brownian drift shift and a
/// positive, mark-independent tilt of the jump intensity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlPair {
    pub psi: PiecewiseConstant,
    pub phi: PiecewiseConstant,
    /// Cost budget `m`; enforced only as a post-hoc check. Unbounded is stored as `null`.
    #[serde(with = "unbounded_as_null")]
    pub budget: f64,
}

mod unbounded_as_null {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        v.is_finite().then_some(*v).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
    }
}

impl ControlPair {
    pub fn new(psi: PiecewiseConstant, phi: PiecewiseConstant, budget: f64) -> Result<Self> {
        let pair = Self { psi, phi, budget };
        pair.validate()?;
        Ok(pair)
    }

    /// `psi = 0`, `phi = 1` on `[0, t_end]`.
    pub fn null(t_end: f64, dim_noise: usize) -> Self {
        Self {
            psi: PiecewiseConstant::constant(t_end, &vec![0.0; dim_noise]).expect("valid null control"),
            phi: PiecewiseConstant::constant(t_end, &[1.0]).expect("valid null control"),
            budget: f64::INFINITY,
        }
    }

    pub fn constant(t_end: f64, psi: &[f64], phi: f64) -> Result<Self> {
        Self::new(
            PiecewiseConstant::constant(t_end, psi)?,
            PiecewiseConstant::constant(t_end, &[phi])?,
            f64::INFINITY,
        )
    }

    pub fn validate(&self) -> Result<()> {
        if self.phi.dim() != 1 {
            return Err(Error::InvalidControl("phi must be scalar".into()));
        }
        if self.phi.values().iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::InvalidControl("phi must be positive and finite everywhere".into()));
        }
        if self.psi.values().iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidControl("psi must be finite".into()));
        }
        let (a, b) = (self.psi.t_end(), self.phi.t_end());
        if (a - b).abs() > 1e-12 * a.max(b) {
            return Err(Error::InvalidControl(format!(
                "psi covers [0, {a}] but phi covers [0, {b}]"
            )));
        }
        Ok(())
    }

    pub fn t_end(&self) -> f64 {
        self.psi.t_end()
    }

    pub fn is_null(&self) -> bool {
        self.psi.values().iter().all(|v| *v == 0.0) && self.phi.values().iter().all(|v| *v == 1.0)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let pair: Self = serde_json::from_str(text)?;
        pair.validate()?;
        Ok(pair)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lookup_is_right_continuous() {
        let f = PiecewiseConstant::uniform(1.0, 4, 1, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(f.at(0.0), &[1.0]);
        assert_eq!(f.at(0.2499), &[1.0]);
        assert_eq!(f.at(0.25), &[2.0]);
        assert_eq!(f.at(0.99), &[4.0]);
        assert_eq!(f.at(1.0), &[4.0]);
        assert_eq!(f.at(7.0), &[4.0]);
    }

    #[test]
    fn refinement_preserves_values() {
        let f = PiecewiseConstant::uniform(2.0, 2, 2, vec![1.0, -1.0, 3.0, 0.5]).unwrap();
        let g = f.refine(3);
        assert_eq!(g.intervals(), 6);
        for t in [0.0, 0.3, 0.9, 1.0, 1.5, 1.99] {
            assert_eq!(f.at(t), g.at(t));
        }
    }

    #[test]
    fn rejects_bad_controls() {
        assert!(ControlPair::constant(1.0, &[0.0], 0.0).is_err());
        assert!(ControlPair::constant(1.0, &[0.0], -1.0).is_err());
        assert!(ControlPair::constant(1.0, &[f64::NAN], 1.0).is_err());
        assert!(ControlPair::constant(1.0, &[0.0], f64::INFINITY).is_err());
        assert!(PiecewiseConstant::new(vec![0.0, 0.5, 0.5, 1.0], 1, vec![1.0; 3]).is_err());
        let psi = PiecewiseConstant::constant(1.0, &[0.0]).unwrap();
        let phi = PiecewiseConstant::constant(2.0, &[1.0]).unwrap();
        assert!(ControlPair::new(psi, phi, 1.0).is_err());
    }

    #[test]
    fn json_round_trip() {
        let pair = ControlPair::new(
            PiecewiseConstant::uniform(1.0, 2, 1, vec![0.5, -0.25]).unwrap(),
            PiecewiseConstant::uniform(1.0, 3, 1, vec![1.0, 2.0, 0.5]).unwrap(),
            3.0,
        )
        .unwrap();
        let back = ControlPair::from_json(&pair.to_json().unwrap()).unwrap();
        assert_eq!(back, pair);
        let open = ControlPair::null(1.0, 1);
        assert_eq!(ControlPair::from_json(&open.to_json().unwrap()).unwrap(), open);
        assert!(!pair.is_null());
        assert!(ControlPair::null(1.0, 2).is_null());
    }
}
