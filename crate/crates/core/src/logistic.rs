//! Parametric nuisance learners: logistic regression fitted by IRLS and
//! ordinary least squares, both on the design `[1, x]`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const MAX_ITER: usize = 100;
const GRAD_TOL: f64 = 1e-8;
/// Mean log-likelihood above which the labels are treated as separated.
const SEPARATION_LOGLIK: f64 = -1e-6;
const MAX_HALVINGS: usize = 40;

/// Logistic function `1 / (1 + exp(-t))`, evaluated without overflow.
#[inline]
pub fn expit(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

#[inline]
pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// `log(1 + exp(t))` without overflow.
#[inline]
fn softplus(t: f64) -> f64 {
    t.max(0.0) + (-t.abs()).exp().ln_1p()
}

/// Fitted logistic regression; `beta[0]` is the intercept.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticModel {
    pub beta: Vec<f64>,
}

impl LogisticModel {
    pub fn new(beta: Vec<f64>) -> Self {
        LogisticModel { beta }
    }

    /// Linear index `[1 x]^T beta`.
    pub fn linear_index(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len() + 1, self.beta.len());
        self.beta[0]
            + x.iter()
                .zip(&self.beta[1..])
                .map(|(xi, b)| xi * b)
                .sum::<f64>()
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        expit(self.linear_index(x))
    }
}

/// Fitted linear regression; `beta[0]` is the intercept.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub beta: Vec<f64>,
}

impl LinearModel {
    pub fn predict(&self, x: &[f64]) -> f64 {
        self.beta[0]
            + x.iter()
                .zip(&self.beta[1..])
                .map(|(xi, b)| xi * b)
                .sum::<f64>()
    }
}

struct Design {
    rows: usize,
    /// Columns of `[1, x]` that are not identically zero.
    active: Vec<usize>,
    values: Vec<f64>,
    width: usize,
}

impl Design {
    fn new(covariates: &[&[f64]]) -> Result<Self> {
        let rows = covariates.len();
        let d = covariates.first().map_or(0, |r| r.len());
        let width = d + 1;
        let mut values = Vec::with_capacity(rows * width);
        for (row, x) in covariates.iter().enumerate() {
            if x.len() != d {
                return Err(Error::DimensionMismatch {
                    row,
                    expected: d,
                    found: x.len(),
                });
            }
            if x.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonfiniteValue { row, field: "x" });
            }
            values.push(1.0);
            values.extend_from_slice(x);
        }
        let active = (0..width)
            .filter(|&c| c == 0 || (0..rows).any(|r| values[r * width + c] != 0.0))
            .collect();
        Ok(Design {
            rows,
            active,
            values,
            width,
        })
    }

    #[inline]
    fn row(&self, r: usize) -> &[f64] {
        &self.values[r * self.width..(r + 1) * self.width]
    }

    /// Gram-matrix condition check on the active columns.
    fn is_rank_deficient(&self) -> bool {
        let p = self.active.len();
        let mut gram = DMatrix::<f64>::zeros(p, p);
        for r in 0..self.rows {
            let row = self.row(r);
            for (a, &ca) in self.active.iter().enumerate() {
                for (b, &cb) in self.active.iter().enumerate() {
                    gram[(a, b)] += row[ca] * row[cb];
                }
            }
        }
        let eig = gram.symmetric_eigenvalues();
        let max = eig.max();
        let min = eig.min();
        !(max > 0.0) || min <= max * 1e-12
    }

    #[inline]
    fn index(&self, r: usize, beta: &[f64]) -> f64 {
        let row = self.row(r);
        self.active.iter().map(|&c| row[c] * beta[c]).sum()
    }
}

/// Mean log-likelihood, gradient and negative Hessian of the weighted
/// logistic likelihood, all normalized by the total weight.
struct LogisticState {
    loglik: f64,
    grad: Vec<f64>,
    info: DMatrix<f64>,
}

fn logistic_state(
    design: &Design,
    labels: &[bool],
    weights: Option<&[f64]>,
    beta: &[f64],
    with_info: bool,
) -> LogisticState {
    let p = design.active.len();
    let mut loglik = 0.0;
    let mut grad = vec![0.0; design.width];
    let mut info = DMatrix::zeros(p, p);
    let mut total = 0.0;
    for r in 0..design.rows {
        let w = weights.map_or(1.0, |w| w[r]);
        if w == 0.0 {
            continue;
        }
        total += w;
        let eta = design.index(r, beta);
        let y = if labels[r] { 1.0 } else { 0.0 };
        loglik += w * (y * eta - softplus(eta));
        let prob = expit(eta);
        let row = design.row(r);
        for &c in &design.active {
            grad[c] += w * row[c] * (y - prob);
        }
        if with_info {
            let v = w * prob * (1.0 - prob);
            for (a, &ca) in design.active.iter().enumerate() {
                for (b, &cb) in design.active.iter().enumerate().take(a + 1) {
                    info[(a, b)] += v * row[ca] * row[cb];
                }
            }
        }
    }
    for g in grad.iter_mut() {
        *g /= total;
    }
    if with_info {
        for a in 0..p {
            for b in 0..=a {
                let v = info[(a, b)] / total;
                info[(a, b)] = v;
                info[(b, a)] = v;
            }
        }
    }
    LogisticState {
        loglik: loglik / total,
        grad,
        info,
    }
}

fn check_weights(weights: Option<&[f64]>, n: usize) -> Result<()> {
    if let Some(w) = weights {
        if w.len() != n {
            return Err(Error::MismatchedLength {
                what: "weights",
                expected: n,
                found: w.len(),
            });
        }
        if let Some(row) = w.iter().position(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::NonfiniteValue {
                row,
                field: "weights",
            });
        }
    }
    Ok(())
}

/// Gradient of the weight-normalized log-likelihood at `model`.
pub fn logistic_gradient(
    covariates: &[&[f64]],
    labels: &[bool],
    weights: Option<&[f64]>,
    model: &LogisticModel,
) -> Result<Vec<f64>> {
    let design = Design::new(covariates)?;
    Ok(logistic_state(&design, labels, weights, &model.beta, false).grad)
}

/// Maximum-likelihood logistic regression of `labels` on `[1, x]`.
///
/// Newton/IRLS iterations with step halving whenever the likelihood would
/// decrease; converged once the largest gradient component of the mean
/// log-likelihood is at most `1e-8`. Covariate columns that are identically
/// zero receive a zero coefficient.
pub fn fit_logistic(
    covariates: &[&[f64]],
    labels: &[bool],
    weights: Option<&[f64]>,
) -> Result<LogisticModel> {
    let n = covariates.len();
    if labels.len() != n {
        return Err(Error::MismatchedLength {
            what: "labels",
            expected: n,
            found: labels.len(),
        });
    }
    check_weights(weights, n)?;
    let mut mass = [0.0f64; 2];
    for r in 0..n {
        mass[labels[r] as usize] += weights.map_or(1.0, |w| w[r]);
    }
    if mass[0] <= 0.0 || mass[1] <= 0.0 {
        return Err(Error::OneClass);
    }
    let design = Design::new(covariates)?;
    if design.is_rank_deficient() {
        return Err(Error::SeparationOrSingular("design matrix is rank deficient".into()));
    }
    let mut beta = vec![0.0; design.width];
    for _ in 0..MAX_ITER {
        let state = logistic_state(&design, labels, weights, &beta, true);
        let max_grad = state.grad.iter().fold(0.0f64, |m, g| m.max(g.abs()));
        if max_grad <= GRAD_TOL {
            if state.loglik > SEPARATION_LOGLIK {
                return Err(Error::SeparationOrSingular(
                    "labels are perfectly separated".into(),
                ));
            }
            return Ok(LogisticModel { beta });
        }
        let rhs = DVector::from_iterator(
            design.active.len(),
            design.active.iter().map(|&c| state.grad[c]),
        );
        let step = state
            .info
            .clone()
            .cholesky()
            .map(|ch| ch.solve(&rhs))
            .ok_or_else(|| Error::SeparationOrSingular("singular Hessian".into()))?;
        if step.iter().any(|v| !v.is_finite()) {
            return Err(Error::SeparationOrSingular("singular Hessian".into()));
        }
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..MAX_HALVINGS {
            let mut trial = beta.clone();
            for (a, &c) in design.active.iter().enumerate() {
                trial[c] += t * step[a];
            }
            let ll = logistic_state(&design, labels, weights, &trial, false).loglik;
            if ll >= state.loglik - 1e-15 * state.loglik.abs() {
                beta = trial;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            // Newton direction no longer improves; accept if already tight.
            if max_grad <= 1e3 * GRAD_TOL {
                return Ok(LogisticModel { beta });
            }
            return Err(Error::SeparationOrSingular(
                "step halving failed to increase the likelihood".into(),
            ));
        }
    }
    Err(Error::SeparationOrSingular(format!(
        "no convergence after {MAX_ITER} iterations"
    )))
}

/// Ordinary least squares of `targets` on `[1, x]`.
pub fn fit_least_squares(covariates: &[&[f64]], targets: &[f64]) -> Result<LinearModel> {
    let n = covariates.len();
    if targets.len() != n {
        return Err(Error::MismatchedLength {
            what: "targets",
            expected: n,
            found: targets.len(),
        });
    }
    if let Some(row) = targets.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonfiniteValue {
            row,
            field: "targets",
        });
    }
    let design = Design::new(covariates)?;
    let p = design.active.len();
    if n < p {
        return Err(Error::SingularDesign);
    }
    let x = DMatrix::from_fn(n, p, |r, a| design.row(r)[design.active[a]]);
    let y = DVector::from_column_slice(targets);
    let svd = x.svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if smax == 0.0 || smin <= smax * 1e-12 {
        return Err(Error::SingularDesign);
    }
    let coef = svd
        .solve(&y, smax * 1e-12)
        .map_err(|_| Error::SingularDesign)?;
    let mut beta = vec![0.0; design.width];
    for (a, &c) in design.active.iter().enumerate() {
        beta[c] = coef[a];
    }
    Ok(LinearModel { beta })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn as_rows(x: &[Vec<f64>]) -> Vec<&[f64]> {
        x.iter().map(|r| r.as_slice()).collect()
    }

    #[test]
    fn one_class_is_rejected() {
        let x = vec![vec![0.1], vec![0.2], vec![0.3]];
        let err = fit_logistic(&as_rows(&x), &[true, true, true], None).unwrap_err();
        assert_eq!(err.code(), "ONE_CLASS");
    }

    #[test]
    fn zero_covariate_gives_intercept_only_fit() {
        let x = vec![vec![0.0]; 10];
        let labels: Vec<bool> = (0..10).map(|i| i < 3).collect();
        let model = fit_logistic(&as_rows(&x), &labels, None).unwrap();
        assert!((model.beta[0] - logit(0.3)).abs() < 1e-7);
        assert_eq!(model.beta[1], 0.0);
        let balanced: Vec<bool> = (0..10).map(|i| i % 2 == 0).collect();
        let model = fit_logistic(&as_rows(&x), &balanced, None).unwrap();
        assert!(model.beta[0].abs() < 1e-7);
    }

    #[test]
    fn separated_labels_are_reported() {
        let x: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64]).collect();
        let labels: Vec<bool> = (0..20).map(|i| i >= 10).collect();
        let err = fit_logistic(&as_rows(&x), &labels, None).unwrap_err();
        assert_eq!(err.code(), "SEPARATION_OR_SINGULAR");
    }

    #[test]
    fn collinear_columns_are_singular() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x: Vec<Vec<f64>> = (0..50)
            .map(|_| {
                let v: f64 = rng.random_range(-1.0..1.0);
                vec![v, 2.0 * v]
            })
            .collect();
        let labels: Vec<bool> = (0..50).map(|_| rng.random_bool(0.5)).collect();
        let err = fit_logistic(&as_rows(&x), &labels, None).unwrap_err();
        assert_eq!(err.code(), "SEPARATION_OR_SINGULAR");
    }

    #[test]
    fn recovers_coefficients_on_large_sample() {
        let truth = [-0.5, 2.0, 0.5];
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 100_000;
        let x: Vec<Vec<f64>> = (0..n)
            .map(|_| vec![rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)])
            .collect();
        let model = LogisticModel::new(truth.to_vec());
        let labels: Vec<bool> = x.iter().map(|r| rng.random_bool(model.predict(r))).collect();
        let fit = fit_logistic(&as_rows(&x), &labels, None).unwrap();
        for (b, t) in fit.beta.iter().zip(truth) {
            assert!((b - t).abs() < 0.05, "{b} vs {t}");
        }
        let grad = logistic_gradient(&as_rows(&x), &labels, None, &fit).unwrap();
        assert!(grad.iter().all(|g| g.abs() <= 1e-8));
    }

    #[test]
    fn weights_act_as_replication() {
        let x = vec![vec![-1.0], vec![0.0], vec![1.0], vec![0.5]];
        let labels = [false, true, true, false];
        let w = [2.0, 1.0, 3.0, 1.0];
        let weighted = fit_logistic(&as_rows(&x), &labels, Some(&w)).unwrap();
        let mut xr = Vec::new();
        let mut lr = Vec::new();
        for i in 0..4 {
            for _ in 0..w[i] as usize {
                xr.push(x[i].clone());
                lr.push(labels[i]);
            }
        }
        let replicated = fit_logistic(&as_rows(&xr), &lr, None).unwrap();
        for (a, b) in weighted.beta.iter().zip(&replicated.beta) {
            assert!((a - b).abs() < 1e-7);
        }
    }

    #[test]
    fn least_squares_recovers_exact_line() {
        let x: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64, (i * i) as f64]).collect();
        let y: Vec<f64> = x.iter().map(|r| 1.0 + 2.0 * r[0] - 0.5 * r[1]).collect();
        let fit = fit_least_squares(&as_rows(&x), &y).unwrap();
        for (b, t) in fit.beta.iter().zip([1.0, 2.0, -0.5]) {
            assert!((b - t).abs() < 1e-9);
        }
        let flat = vec![vec![1.0, 1.0]; 5];
        assert_eq!(
            fit_least_squares(&as_rows(&flat), &[1.0; 5]).unwrap_err().code(),
            "SINGULAR_DESIGN"
        );
    }

    #[test]
    fn expit_is_stable() {
        assert_eq!(expit(0.0), 0.5);
        assert!(expit(800.0) == 1.0 && expit(-800.0) == 0.0);
        assert!((expit(-0.5) - 0.377_540_668_798_145_4).abs() < 1e-15);
    }
}
