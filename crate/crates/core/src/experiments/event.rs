use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Rare event observed on the endpoint `X_T`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TailEvent {
    /// Every component at or above `level`.
    EndpointGeq { level: Vec<f64> },
    /// Within `radius` of `center`; an infinite radius is the sure event.
    EndpointInBall { center: Vec<f64>, radius: f64 },
}

impl TailEvent {
    pub fn geq(level: f64) -> Self {
        TailEvent::EndpointGeq { level: vec![level] }
    }

    pub fn dim(&self) -> usize {
        match self {
            TailEvent::EndpointGeq { level } => level.len(),
            TailEvent::EndpointInBall { center, .. } => center.len(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            TailEvent::EndpointGeq { level } if level.iter().any(|v| v.is_nan()) => {
                Err(Error::InvalidConfig("event level must not be NaN".into()))
            }
            TailEvent::EndpointInBall { center, radius } if center.iter().any(|v| !v.is_finite()) || !(*radius >= 0.0) => {
                Err(Error::InvalidConfig("ball needs a finite center and a radius >= 0".into()))
            }
            _ => Ok(()),
        }
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        match self {
            TailEvent::EndpointGeq { level } => x.iter().zip(level).all(|(a, b)| a >= b),
            TailEvent::EndpointInBall { center, radius } => {
                radius.is_infinite()
                    || x.iter().zip(center).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() <= radius * radius
            }
        }
    }

    /// Point of the event closest to `from`, used as the rate-function target.
    pub fn nearest_point(&self, from: &[f64]) -> Vec<f64> {
        if self.contains(from) {
            return from.to_vec();
        }
        match self {
            TailEvent::EndpointGeq { level } => from.iter().zip(level).map(|(a, b)| a.max(*b)).collect(),
            TailEvent::EndpointInBall { center, radius } => {
                let dist = from.iter().zip(center).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
                center
                    .iter()
                    .zip(from)
                    .map(|(c, x)| c + radius * (x - c) / dist)
                    .collect()
            }
        }
    }
}
