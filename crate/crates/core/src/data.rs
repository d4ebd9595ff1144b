//! Observations, datasets and per-observation nuisance evaluations.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A single data point `(Y, A, X)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub y: f64,
    pub a: bool,
    pub x: Vec<f64>,
}

/// Boundedness constants assumed for outcomes and nuisance values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    /// Upper bound on the inverse propensity `omega`.
    pub omega_max: f64,
    /// Bound on `|mu|`.
    pub mu_max: f64,
    /// Bound on `|y|`.
    pub y_max: f64,
}

impl Default for Bounds {
    fn default() -> Self {
        Bounds {
            omega_max: 100.0,
            mu_max: 100.0,
            y_max: 100.0,
        }
    }
}

/// Column-major storage of `n` observations with `d` covariates each.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    y: Vec<f64>,
    a: Vec<bool>,
    x: Vec<f64>,
    d: usize,
}

impl Dataset {
    /// Builds a dataset from observations, checking dimensions, finiteness,
    /// the outcome bound and the `n >= 2`, at-least-one-treated requirements.
    pub fn new(observations: Vec<Observation>, bounds: &Bounds) -> Result<Self> {
        let n = observations.len();
        let d = observations.first().map_or(0, |o| o.x.len());
        let mut y = Vec::with_capacity(n);
        let mut a = Vec::with_capacity(n);
        let mut x = Vec::with_capacity(n * d);
        for (row, obs) in observations.into_iter().enumerate() {
            if obs.x.len() != d {
                return Err(Error::DimensionMismatch {
                    row,
                    expected: d,
                    found: obs.x.len(),
                });
            }
            y.push(obs.y);
            a.push(obs.a);
            x.extend_from_slice(&obs.x);
        }
        Self::from_columns(y, a, x, d, bounds)
    }

    /// Builds a dataset from flat columns; `x` is row-major with `d` entries
    /// per observation.
    pub fn from_columns(
        y: Vec<f64>,
        a: Vec<bool>,
        x: Vec<f64>,
        d: usize,
        bounds: &Bounds,
    ) -> Result<Self> {
        let n = y.len();
        if a.len() != n {
            return Err(Error::MismatchedLength {
                what: "a",
                expected: n,
                found: a.len(),
            });
        }
        if x.len() != n * d {
            return Err(Error::MismatchedLength {
                what: "x",
                expected: n * d,
                found: x.len(),
            });
        }
        if n < 2 {
            return Err(Error::TooFewObservations { needed: 2, found: n });
        }
        for (row, &v) in y.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::NonfiniteValue { row, field: "y" });
            }
            if v.abs() > bounds.y_max {
                return Err(Error::OutOfBounds {
                    row,
                    field: "y",
                    value: v,
                    bound: bounds.y_max,
                });
            }
        }
        if d > 0 {
            for (row, chunk) in x.chunks(d).enumerate() {
                if chunk.iter().any(|v| !v.is_finite()) {
                    return Err(Error::NonfiniteValue { row, field: "x" });
                }
            }
        }
        if !a.iter().any(|&t| t) {
            return Err(Error::NoTreated);
        }
        Ok(Dataset { y, a, x, d })
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    /// Covariate dimension.
    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn treated(&self) -> &[bool] {
        &self.a
    }

    /// Treatment indicator of observation `i` as 0.0 / 1.0.
    #[inline]
    pub fn a(&self, i: usize) -> f64 {
        if self.a[i] {
            1.0
        } else {
            0.0
        }
    }

    pub fn x(&self, i: usize) -> &[f64] {
        &self.x[i * self.d..(i + 1) * self.d]
    }

    pub fn n_treated(&self) -> usize {
        self.a.iter().filter(|&&t| t).count()
    }

    pub fn observation(&self, i: usize) -> Observation {
        Observation {
            y: self.y[i],
            a: self.a[i],
            x: self.x(i).to_vec(),
        }
    }

    /// Returns the dataset with observations reordered so that new position
    /// `k` holds old observation `perm[k]`.
    pub fn permuted(&self, perm: &[usize]) -> Dataset {
        let mut x = Vec::with_capacity(self.x.len());
        for &i in perm {
            x.extend_from_slice(self.x(i));
        }
        Dataset {
            y: perm.iter().map(|&i| self.y[i]).collect(),
            a: perm.iter().map(|&i| self.a[i]).collect(),
            x,
            d: self.d,
        }
    }

    /// True when every outcome is 0 or 1.
    pub fn has_binary_outcome(&self) -> bool {
        self.y.iter().all(|&v| v == 0.0 || v == 1.0)
    }
}

/// Per-observation evaluations of the fitted inverse propensity and outcome
/// regression.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NuisanceValues {
    pub omega_hat: Vec<f64>,
    pub mu_hat: Vec<f64>,
}

impl NuisanceValues {
    pub fn new(omega_hat: Vec<f64>, mu_hat: Vec<f64>) -> Self {
        NuisanceValues { omega_hat, mu_hat }
    }

    pub fn len(&self) -> usize {
        self.omega_hat.len()
    }

    pub fn is_empty(&self) -> bool {
        self.omega_hat.is_empty()
    }

    pub fn permuted(&self, perm: &[usize]) -> NuisanceValues {
        NuisanceValues {
            omega_hat: perm.iter().map(|&i| self.omega_hat[i]).collect(),
            mu_hat: perm.iter().map(|&i| self.mu_hat[i]).collect(),
        }
    }
}

/// Checks that `nuisance` matches `dataset` and satisfies the boundedness
/// assumptions, returning the pair unchanged on success.
pub fn validate<'a>(
    dataset: &'a Dataset,
    nuisance: &'a NuisanceValues,
    bounds: &Bounds,
) -> Result<(&'a Dataset, &'a NuisanceValues)> {
    let n = dataset.len();
    if nuisance.omega_hat.len() != n {
        return Err(Error::MismatchedLength {
            what: "omega_hat",
            expected: n,
            found: nuisance.omega_hat.len(),
        });
    }
    if nuisance.mu_hat.len() != n {
        return Err(Error::MismatchedLength {
            what: "mu_hat",
            expected: n,
            found: nuisance.mu_hat.len(),
        });
    }
    if dataset.n_treated() == 0 {
        return Err(Error::NoTreated);
    }
    for row in 0..n {
        let w = nuisance.omega_hat[row];
        let m = nuisance.mu_hat[row];
        if !w.is_finite() {
            return Err(Error::NonfiniteValue {
                row,
                field: "omega_hat",
            });
        }
        if !m.is_finite() {
            return Err(Error::NonfiniteValue {
                row,
                field: "mu_hat",
            });
        }
        if w < 1.0 {
            return Err(Error::OmegaBelowOne { row, value: w });
        }
        if w > bounds.omega_max {
            return Err(Error::OutOfBounds {
                row,
                field: "omega_hat",
                value: w,
                bound: bounds.omega_max,
            });
        }
        if m.abs() > bounds.mu_max {
            return Err(Error::OutOfBounds {
                row,
                field: "mu_hat",
                value: m,
                bound: bounds.mu_max,
            });
        }
    }
    Ok((dataset, nuisance))
}
