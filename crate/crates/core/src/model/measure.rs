//! Empirical probability measures on R^n, their second moments and the exact
//! one-dimensional Wasserstein-2 distance.

use std::borrow::Cow;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

const WEIGHT_SUM_TOL: f64 = 1e-12;

/// Weighted point cloud with weights summing to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalMeasure {
    dim: usize,
    /// Row-major, `len * dim` entries.
    points: Vec<f64>,
    weights: Vec<f64>,
}

impl EmpiricalMeasure {
    /// Uniform weights over `points.len() / dim` atoms.
    pub fn uniform(dim: usize, points: Vec<f64>) -> Result<Self> {
        if dim == 0 || points.is_empty() || !points.len().is_multiple_of(dim) {
            return Err(Error::InvalidMeasure(format!(
                "{} coordinates do not form a non-empty cloud of dimension {dim}",
                points.len()
            )));
        }
        let len = points.len() / dim;
        Ok(Self {
            dim,
            points,
            weights: vec![1.0 / len as f64; len],
        })
    }

    pub fn weighted(dim: usize, points: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        let mut m = Self::uniform(dim, points)?;
        if weights.len() != m.len() {
            return Err(Error::InvalidMeasure(format!(
                "{} weights for {} atoms",
                weights.len(),
                m.len()
            )));
        }
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::InvalidMeasure("weights must be finite and nonnegative".into()));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(Error::InvalidMeasure(format!("weights sum to {total}, not 1")));
        }
        m.weights = weights;
        Ok(m)
    }

    /// Point mass at `x`.
    pub fn dirac(x: &[f64]) -> Self {
        Self {
            dim: x.len(),
            points: x.to_vec(),
            weights: vec![1.0],
        }
    }

    /// Uniform measure on one-dimensional atoms.
    pub fn from_scalars(values: &[f64]) -> Result<Self> {
        Self::uniform(1, values.to_vec())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn mean(&self) -> Vec<f64> {
        let mut mean = vec![0.0; self.dim];
        for (i, w) in self.weights.iter().enumerate() {
            for (m, x) in mean.iter_mut().zip(self.point(i)) {
                *m += w * x;
            }
        }
        mean
    }

    /// Per-coordinate variance.
    pub fn variance(&self) -> Vec<f64> {
        let mean = self.mean();
        let mut var = vec![0.0; self.dim];
        for (i, w) in self.weights.iter().enumerate() {
            for ((v, x), m) in var.iter_mut().zip(self.point(i)).zip(&mean) {
                *v += w * (x - m) * (x - m);
            }
        }
        var
    }

    pub fn view(&self) -> MeasureView<'_> {
        MeasureView::weighted(self.dim, &self.points, &self.weights)
    }
}

/// `mu(|.|^2)`: the weighted second moment of a measure.
pub fn second_moment(mu: &EmpiricalMeasure) -> f64 {
    mu.weights
        .iter()
        .enumerate()
        .map(|(i, w)| w * norm_sq(mu.point(i)))
        .sum()
}

/// Exact W2 between two measures on the real line.
///
/// Uses the monotone (quantile) coupling, which is optimal in one dimension;
/// unequal atom counts and arbitrary weights are handled by merging the two
/// cumulative distribution functions.
pub fn wasserstein2_1d(mu1: &EmpiricalMeasure, mu2: &EmpiricalMeasure) -> Result<f64> {
    for mu in [mu1, mu2] {
        if mu.dim != 1 {
            return Err(Error::UnsupportedDimension {
                expected: 1,
                found: mu.dim,
            });
        }
    }
    let a = sorted_atoms(mu1);
    let b = sorted_atoms(mu2);
    let (mut i, mut j) = (0, 0);
    let (mut ra, mut rb) = (a[0].1, b[0].1);
    let mut cost = 0.0;
    loop {
        let mass = ra.min(rb);
        let d = a[i].0 - b[j].0;
        cost += mass * d * d;
        ra -= mass;
        rb -= mass;
        // Exhausted atoms are advanced; round-off in the residual masses is
        // absorbed by the final atom on each side.
        if ra <= WEIGHT_SUM_TOL && i + 1 < a.len() {
            i += 1;
            ra += a[i].1;
        }
        if rb <= WEIGHT_SUM_TOL && j + 1 < b.len() {
            j += 1;
            rb += b[j].1;
        }
        let a_done = i + 1 == a.len() && ra <= WEIGHT_SUM_TOL;
        let b_done = j + 1 == b.len() && rb <= WEIGHT_SUM_TOL;
        if a_done || b_done {
            break;
        }
    }
    Ok(cost.max(0.0).sqrt())
}

fn sorted_atoms(mu: &EmpiricalMeasure) -> Vec<(f64, f64)> {
    let mut atoms: Vec<(f64, f64)> = mu
        .points
        .iter()
        .copied()
        .zip(mu.weights.iter().copied())
        .filter(|(_, w)| *w > 0.0)
        .collect();
    atoms.sort_by(|x, y| x.0.total_cmp(&y.0));
    atoms
}

pub(crate) fn norm_sq(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum()
}

/// Borrowed view of a measure handed to model coefficients.
///
/// Mean and second moment are computed once at construction so that
/// coefficients depending only on low moments cost O(1) per evaluation.
#[derive(Debug, Clone)]
pub struct MeasureView<'a> {
    dim: usize,
    points: Cow<'a, [f64]>,
    weights: Option<Cow<'a, [f64]>>,
    mean: Vec<f64>,
    second_moment: f64,
}

impl<'a> MeasureView<'a> {
    /// Uniform measure over the rows of `points`.
    pub fn uniform(dim: usize, points: &'a [f64]) -> Self {
        assert!(dim > 0 && !points.is_empty() && points.len().is_multiple_of(dim));
        let len = points.len() / dim;
        let mut mean = vec![0.0; dim];
        let mut m2 = 0.0;
        for row in points.chunks_exact(dim) {
            for (m, x) in mean.iter_mut().zip(row) {
                *m += x;
                m2 += x * x;
            }
        }
        let inv = 1.0 / len as f64;
        mean.iter_mut().for_each(|m| *m *= inv);
        Self {
            dim,
            points: Cow::Borrowed(points),
            weights: None,
            mean,
            second_moment: m2 * inv,
        }
    }

    pub fn weighted(dim: usize, points: &'a [f64], weights: &'a [f64]) -> Self {
        assert_eq!(points.len(), dim * weights.len());
        let mut mean = vec![0.0; dim];
        let mut m2 = 0.0;
        for (row, w) in points.chunks_exact(dim).zip(weights) {
            for (m, x) in mean.iter_mut().zip(row) {
                *m += w * x;
                m2 += w * x * x;
            }
        }
        Self {
            dim,
            points: Cow::Borrowed(points),
            weights: Some(Cow::Borrowed(weights)),
            mean,
            second_moment: m2,
        }
    }

    /// Dirac mass at `x`.
    pub fn dirac(x: &[f64]) -> MeasureView<'static> {
        MeasureView {
            dim: x.len(),
            points: Cow::Owned(x.to_vec()),
            weights: None,
            mean: x.to_vec(),
            second_moment: norm_sq(x),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.points.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn second_moment(&self) -> f64 {
        self.second_moment
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }

    pub fn weight(&self, i: usize) -> f64 {
        match &self.weights {
            Some(w) => w[i],
            None => 1.0 / self.len() as f64,
        }
    }

    pub fn into_owned(self) -> MeasureView<'static> {
        MeasureView {
            dim: self.dim,
            points: Cow::Owned(self.points.into_owned()),
            weights: self.weights.map(|w| Cow::Owned(w.into_owned())),
            mean: self.mean,
            second_moment: self.second_moment,
        }
    }

    pub fn to_measure(&self) -> EmpiricalMeasure {
        let weights = (0..self.len()).map(|i| self.weight(i)).collect();
        EmpiricalMeasure {
            dim: self.dim,
            points: self.points.to_vec(),
            weights,
        }
    }
}
