//! Doubly-robust estimation of `theta` in the partially linear logistic
//! model `logit P(Y = 1 | A, X) = theta A + m(X)`.
//!
//! The corrected empirical moment is
//! `psi(theta) = P_n[(A - v)(Y e^{-theta A - m} - (1 - Y))] - T_n(theta)`
//! where `T_n` is a product-kernel U-statistic over `(v_hat, m_hat)` with
//! its normalizer taken over `Y = 0` units. Both terms are linear in
//! `L_i(theta) = Y_i e^{-theta A_i - m_i} - (1 - Y_i)`, so
//! `psi(theta) = sum_i b_i L_i(theta)` with `b_i` fixed once the kernel is.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::bandwidth::{cv_search, robust_scale};
use crate::crossfit::Predictor;
use crate::error::{Error, Result};
use crate::estimators::QHAT_FLOOR;
use crate::folds::FoldAssignment;
use crate::kernels::{KernelFamily, KernelSpec};
use crate::logistic::{expit, fit_least_squares, fit_logistic};
use crate::pairwise::{Centers, PairIndex, Strategy};

/// Initial root bracket; widened to each of [`BRACKET_STEPS`] in turn.
pub const INITIAL_BRACKET: (f64, f64) = (-5.0, 5.0);
pub const BRACKET_STEPS: [f64; 4] = [10.0, 20.0, 40.0, 50.0];
/// Root tolerance on `|psi(theta)|`.
pub const MOMENT_TOL: f64 = 1e-10;
const MAX_BRENT_ITER: usize = 200;

/// Observations with per-unit nuisance values `v_hat ~ E(A | Y = 0, X)` and
/// `m_hat ~ m(X)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PlmData {
    y: Vec<bool>,
    a: Vec<f64>,
    v_hat: Vec<f64>,
    m_hat: Vec<f64>,
}

impl PlmData {
    pub fn new(y: Vec<f64>, a: Vec<f64>, v_hat: Vec<f64>, m_hat: Vec<f64>) -> Result<Self> {
        let n = y.len();
        for (what, len) in [("a", a.len()), ("v_hat", v_hat.len()), ("m_hat", m_hat.len())] {
            if len != n {
                return Err(Error::MismatchedLength {
                    what,
                    expected: n,
                    found: len,
                });
            }
        }
        if n < 2 {
            return Err(Error::TooFewObservations { needed: 2, found: n });
        }
        for row in 0..n {
            for (field, v) in [("y", y[row]), ("a", a[row]), ("v_hat", v_hat[row]), ("m_hat", m_hat[row])] {
                if !v.is_finite() {
                    return Err(Error::NonfiniteValue { row, field });
                }
            }
            if y[row] != 0.0 && y[row] != 1.0 {
                return Err(Error::InvalidArgument(format!(
                    "row {row}: outcome must be 0 or 1, got {}",
                    y[row]
                )));
            }
        }
        Ok(PlmData {
            y: y.into_iter().map(|v| v == 1.0).collect(),
            a,
            v_hat,
            m_hat,
        })
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    fn yf(&self, i: usize) -> f64 {
        if self.y[i] {
            1.0
        } else {
            0.0
        }
    }

    /// `L_i(theta)`.
    fn left(&self, i: usize, theta: f64) -> f64 {
        if self.y[i] {
            (-theta * self.a[i] - self.m_hat[i]).exp()
        } else {
            -1.0
        }
    }

    /// `(1 - Y_j)(A_j - v_j)`.
    fn right(&self, j: usize) -> f64 {
        (1.0 - self.yf(j)) * (self.a[j] - self.v_hat[j])
    }
}

/// Kernel quantities that do not depend on `theta`.
struct PlmKernel {
    /// `s_i / max(Q_i, tau)` with `s_i = sum_{j != i} W_ij R_j`.
    ratio: Vec<f64>,
    /// `1 / max(Q_i, tau)`.
    inv_q: Vec<f64>,
    min_qhat: f64,
    clamp_count: usize,
}

fn plm_kernel(data: &PlmData, index: &PairIndex<'_>) -> Result<PlmKernel> {
    let n = data.len();
    let scale = (n - 1) as f64;
    let untreated: Vec<f64> = (0..n).map(|i| 1.0 - data.yf(i)).collect();
    let q: Vec<f64> = index
        .neighbor_sums(&untreated)
        .into_iter()
        .map(|s| s / scale)
        .collect();
    if q.iter().all(|&v| v == 0.0) {
        return Err(Error::AllQhatZero {
            h: index.spec().h(),
        });
    }
    let right: Vec<f64> = (0..n).map(|j| data.right(j)).collect();
    let s = index.neighbor_sums(&right);
    let inv_q: Vec<f64> = q.iter().map(|v| 1.0 / v.max(QHAT_FLOOR)).collect();
    Ok(PlmKernel {
        ratio: s.iter().zip(&inv_q).map(|(s, iq)| s * iq).collect(),
        inv_q,
        min_qhat: q.iter().copied().fold(f64::INFINITY, f64::min),
        clamp_count: q.iter().filter(|&&v| v < QHAT_FLOOR).count(),
    })
}

fn plm_index(data: &PlmData, spec: KernelSpec, strategy: Strategy) -> Result<PairIndex<'_>> {
    PairIndex::new(Centers::Plane(&data.v_hat, &data.m_hat), spec, strategy)
}

/// The correction `T_n(theta)`.
pub fn plm_correction(theta: f64, data: &PlmData, spec: KernelSpec, strategy: Strategy) -> Result<f64> {
    let index = plm_index(data, spec, strategy)?;
    let kernel = plm_kernel(data, &index)?;
    let n = data.len() as f64;
    let total: f64 = (0..data.len())
        .map(|i| data.left(i, theta) * kernel.ratio[i])
        .sum();
    Ok(total / (n * (n - 1.0)) + 0.0)
}

/// The corrected moment `psi(theta)`.
pub fn plm_moment(theta: f64, data: &PlmData, spec: KernelSpec) -> Result<f64> {
    let index = plm_index(data, spec, Strategy::Auto)?;
    let kernel = plm_kernel(data, &index)?;
    Ok(Moment::new(data, &kernel, true).value(theta))
}

/// The uncorrected part `P_n[(A - v)(Y e^{-theta A - m} - (1 - Y))]`.
pub fn plm_moment_uncorrected(theta: f64, data: &PlmData) -> f64 {
    let n = data.len() as f64;
    (0..data.len())
        .map(|i| (data.a[i] - data.v_hat[i]) * data.left(i, theta))
        .sum::<f64>()
        / n
}

/// Derivative in `theta` of [`plm_moment_uncorrected`]:
/// `-P_n[A (A - v) Y e^{-theta A - m}]`.
pub fn plm_moment_uncorrected_derivative(theta: f64, data: &PlmData) -> f64 {
    let n = data.len() as f64;
    -(0..data.len())
        .filter(|&i| data.y[i])
        .map(|i| data.a[i] * (data.a[i] - data.v_hat[i]) * data.left(i, theta))
        .sum::<f64>()
        / n
}

/// `psi(theta) = sum_i b_i L_i(theta)`.
struct Moment<'a> {
    data: &'a PlmData,
    b: Vec<f64>,
}

impl<'a> Moment<'a> {
    fn new(data: &'a PlmData, kernel: &PlmKernel, corrected: bool) -> Self {
        let n = data.len() as f64;
        let b = (0..data.len())
            .map(|i| {
                let direct = (data.a[i] - data.v_hat[i]) / n;
                if corrected {
                    direct - kernel.ratio[i] / (n * (n - 1.0))
                } else {
                    direct
                }
            })
            .collect();
        Moment { data, b }
    }

    fn value(&self, theta: f64) -> f64 {
        (0..self.b.len())
            .map(|i| self.b[i] * self.data.left(i, theta))
            .sum()
    }

    fn derivative(&self, theta: f64) -> f64 {
        (0..self.b.len())
            .filter(|&i| self.data.y[i])
            .map(|i| -self.b[i] * self.data.a[i] * self.data.left(i, theta))
            .sum()
    }

    fn is_degenerate(&self) -> bool {
        (0..self.b.len()).all(|i| !self.data.y[i] || self.b[i] * self.data.a[i] == 0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RootResult {
    pub root: f64,
    pub value: f64,
    pub iterations: usize,
}

/// Brent's method on a bracket with `f(lo) f(hi) <= 0`; stops once
/// `|f| <= ftol`.
pub fn brent<F: Fn(f64) -> f64>(f: F, lo: f64, hi: f64, ftol: f64) -> Result<RootResult> {
    let (mut a, mut b) = (lo, hi);
    let (mut fa, mut fb) = (f(a), f(b));
    if fa.abs() <= ftol {
        return Ok(RootResult { root: a, value: fa, iterations: 0 });
    }
    if fb.abs() <= ftol {
        return Ok(RootResult { root: b, value: fb, iterations: 0 });
    }
    if fa * fb > 0.0 || !(fa.is_finite() && fb.is_finite()) {
        return Err(Error::NoSignChange { lo, hi });
    }
    let (mut c, mut fc) = (a, fa);
    let mut d = b - a;
    let mut e = d;
    for iter in 1..=MAX_BRENT_ITER {
        if fb.signum() == fc.signum() {
            c = a;
            fc = fa;
            d = b - a;
            e = d;
        }
        if fc.abs() < fb.abs() {
            a = b;
            b = c;
            c = a;
            fa = fb;
            fb = fc;
            fc = fa;
        }
        let tol = 2.0 * f64::EPSILON * b.abs() + 1e-300;
        let m = 0.5 * (c - b);
        if fb.abs() <= ftol {
            return Ok(RootResult { root: b, value: fb, iterations: iter });
        }
        if m.abs() <= tol {
            break;
        }
        if e.abs() >= tol && fa.abs() > fb.abs() {
            let s = fb / fa;
            let (mut p, mut q);
            if a == c {
                p = 2.0 * m * s;
                q = 1.0 - s;
            } else {
                let qa = fa / fc;
                let r = fb / fc;
                p = s * (2.0 * m * qa * (qa - r) - (b - a) * (r - 1.0));
                q = (qa - 1.0) * (r - 1.0) * (s - 1.0);
            }
            if p > 0.0 {
                q = -q;
            } else {
                p = -p;
            }
            if 2.0 * p < (3.0 * m * q - (tol * q).abs()).min((e * q).abs()) {
                e = d;
                d = p / q;
            } else {
                d = m;
                e = m;
            }
        } else {
            d = m;
            e = m;
        }
        a = b;
        fa = fb;
        b += if d.abs() > tol { d } else { tol.copysign(m) };
        fb = f(b);
    }
    if fb.abs() <= ftol {
        return Ok(RootResult { root: b, value: fb, iterations: MAX_BRENT_ITER });
    }
    Err(Error::NoConvergence {
        iterations: MAX_BRENT_ITER,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlmReport {
    pub theta_hat: f64,
    pub se: f64,
    pub ci: (f64, f64),
    pub alpha: f64,
    pub bracket: (f64, f64),
    pub iterations: usize,
    /// `T_n` at the solution.
    pub correction: f64,
    pub moment_at_solution: f64,
    pub h_used: f64,
    pub min_qhat: f64,
    pub clamp_count: usize,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlmOptions {
    /// Fixed bandwidth; `None` selects one by cross-validation.
    pub h: Option<f64>,
    pub kernel: KernelFamily,
    /// Fixed bracket; `None` widens from [`INITIAL_BRACKET`].
    pub bracket: Option<(f64, f64)>,
    pub alpha: f64,
    /// Drop the kernel correction (plain doubly-robust moment).
    pub uncorrected: bool,
}

impl Default for PlmOptions {
    fn default() -> Self {
        PlmOptions {
            h: None,
            kernel: KernelFamily::Box,
            bracket: None,
            alpha: 0.05,
            uncorrected: false,
        }
    }
}

/// Cross-validated bandwidth for the regression of `A - v_hat` on
/// `(v_hat, m_hat)` among `Y = 0` units, over the default grid.
pub fn plm_bandwidth_cv(data: &PlmData, family: KernelFamily) -> Result<f64> {
    let zero: Vec<usize> = (0..data.len()).filter(|&i| !data.y[i]).collect();
    let u: Vec<f64> = zero.iter().map(|&i| data.v_hat[i]).collect();
    let v: Vec<f64> = zero.iter().map(|&i| data.m_hat[i]).collect();
    let e: Vec<f64> = zero.iter().map(|&i| data.a[i] - data.v_hat[i]).collect();
    let grid = crate::bandwidth::geometric_grid(
        0.1 * plm_rate_bandwidth(data),
        2.0 * plm_rate_bandwidth(data),
        crate::bandwidth::CV_GRID_SIZE,
    );
    Ok(cv_search(&u, &v, &e, &grid, family)?.h)
}

/// `n^{-1/4} sqrt(IQR(v_hat) IQR(m_hat))`.
pub fn plm_rate_bandwidth(data: &PlmData) -> f64 {
    (data.len() as f64).powf(-0.25) * (robust_scale(&data.v_hat) * robust_scale(&data.m_hat)).sqrt()
}

/// Solves `psi(theta) = 0` and reports a sandwich standard error
/// `sd(zeta) / (sqrt(n) |psi'(theta_hat)|)`.
pub fn solve_theta(data: &PlmData, options: &PlmOptions) -> Result<PlmReport> {
    if !(options.alpha > 0.0 && options.alpha < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "alpha must lie in (0, 1), got {}",
            options.alpha
        )));
    }
    let h = match options.h {
        Some(h) => h,
        None => plm_bandwidth_cv(data, options.kernel)?,
    };
    let spec = KernelSpec::new(options.kernel, h)?;
    let index = plm_index(data, spec, Strategy::Auto)?;
    let kernel = plm_kernel(data, &index)?;
    let moment = Moment::new(data, &kernel, !options.uncorrected);
    if moment.is_degenerate() {
        return Err(Error::DegenerateMoment);
    }
    let f = |t: f64| moment.value(t);
    let (bracket, root) = match options.bracket {
        Some((lo, hi)) => ((lo, hi), brent(f, lo, hi, MOMENT_TOL)?),
        None => {
            let mut found = None;
            let mut last = INITIAL_BRACKET;
            for half in std::iter::once(INITIAL_BRACKET.1).chain(BRACKET_STEPS) {
                last = (-half, half);
                match brent(f, -half, half, MOMENT_TOL) {
                    Ok(r) => {
                        found = Some(r);
                        break;
                    }
                    Err(Error::NoSignChange { .. }) => continue,
                    Err(e) => return Err(e),
                }
            }
            match found {
                Some(r) => (last, r),
                None => return Err(Error::NoSignChange { lo: last.0, hi: last.1 }),
            }
        }
    };
    let theta = root.root;
    let n = data.len();
    let nf = n as f64;
    let left: Vec<f64> = (0..n).map(|i| data.left(i, theta)).collect();
    let direct: Vec<f64> = (0..n).map(|i| (data.a[i] - data.v_hat[i]) * left[i]).collect();
    let (zeta, correction) = if options.uncorrected {
        (direct, 0.0)
    } else {
        let t = (0..n).map(|i| left[i] * kernel.ratio[i]).sum::<f64>() / (nf * (nf - 1.0));
        let scaled: Vec<f64> = (0..n).map(|i| left[i] * kernel.inv_q[i]).collect();
        let cols = index.neighbor_sums(&scaled);
        let zeta = (0..n)
            .map(|i| {
                let row = left[i] * kernel.ratio[i];
                let col = data.right(i) * cols[i];
                direct[i] - ((row + col) / (nf - 1.0) - t)
            })
            .collect();
        (zeta, t)
    };
    let mean = zeta.iter().sum::<f64>() / nf;
    let sd = (zeta.iter().map(|z| (z - mean).powi(2)).sum::<f64>() / (nf - 1.0)).sqrt();
    let slope = moment.derivative(theta);
    let se = sd / (nf.sqrt() * slope.abs());
    let z = Normal::standard().inverse_cdf(1.0 - options.alpha / 2.0);
    Ok(PlmReport {
        theta_hat: theta,
        se,
        ci: (theta - z * se, theta + z * se),
        alpha: options.alpha,
        bracket,
        iterations: root.iterations,
        correction,
        moment_at_solution: root.value,
        h_used: h,
        min_qhat: kernel.min_qhat,
        clamp_count: kernel.clamp_count,
        n,
    })
}

/// Cross-fitted `(v_hat, m_hat)` from parametric learners: `v_hat` regresses
/// `A` on `X` among `Y = 0` units (logistic for binary `A`, least squares
/// otherwise); `m_hat` is a logit-scale fit of `Y` on `X`.
pub fn fit_plm_nuisances(
    y: &[f64],
    a: &[f64],
    x: &[&[f64]],
    folds: &FoldAssignment,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = y.len();
    let binary_a = a.iter().all(|&v| v == 0.0 || v == 1.0);
    let per_fold = (0..folds.k())
        .into_par_iter()
        .map(|k| {
            let train: Vec<usize> = (0..n).filter(|&i| folds.fold_of(i) != k).collect();
            let zero: Vec<usize> = train.iter().copied().filter(|&i| y[i] == 0.0).collect();
            let xz: Vec<&[f64]> = zero.iter().map(|&i| x[i]).collect();
            let v_model: Predictor = if binary_a {
                let labels: Vec<bool> = zero.iter().map(|&i| a[i] == 1.0).collect();
                let model = fit_logistic(&xz, &labels, None)?;
                Box::new(move |x| model.predict(x))
            } else {
                let targets: Vec<f64> = zero.iter().map(|&i| a[i]).collect();
                let model = fit_least_squares(&xz, &targets)?;
                Box::new(move |x| model.predict(x))
            };
            // Binary A: logistic fit of Y on X among A = 0. Otherwise the X part
            // of the linear index of a logistic fit of Y on (A, X).
            let m_model: Predictor = if binary_a {
                let control: Vec<usize> = train.iter().copied().filter(|&i| a[i] == 0.0).collect();
                let xc: Vec<&[f64]> = control.iter().map(|&i| x[i]).collect();
                let labels: Vec<bool> = control.iter().map(|&i| y[i] == 1.0).collect();
                let model = fit_logistic(&xc, &labels, None)?;
                Box::new(move |x| model.linear_index(x))
            } else {
                let ax: Vec<Vec<f64>> = train
                    .iter()
                    .map(|&i| std::iter::once(a[i]).chain(x[i].iter().copied()).collect())
                    .collect();
                let ax_rows: Vec<&[f64]> = ax.iter().map(|r| r.as_slice()).collect();
                let labels: Vec<bool> = train.iter().map(|&i| y[i] == 1.0).collect();
                let beta = fit_logistic(&ax_rows, &labels, None)?.beta;
                Box::new(move |x| beta[0] + x.iter().zip(&beta[2..]).map(|(xi, bi)| xi * bi).sum::<f64>())
            };
            let held: Vec<(usize, f64, f64)> = folds
                .members(k)
                .into_iter()
                .map(|i| (i, v_model(x[i]), m_model(x[i])))
                .collect();
            Ok(held)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut v_hat = vec![0.0; n];
    let mut m_hat = vec![0.0; n];
    for (i, v, m) in per_fold.into_iter().flatten() {
        v_hat[i] = v;
        m_hat[i] = m;
    }
    Ok((v_hat, m_hat))
}

/// Test design: `X ~ U(-1, 1)^2`, `A ~ Bern(expit([1 x] beta_a))`,
/// `logit P(Y = 1 | A, X) = theta A + [1 x] beta_m`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlmDgp {
    pub theta: f64,
    pub beta_a: [f64; 3],
    pub beta_m: [f64; 3],
}

impl Default for PlmDgp {
    fn default() -> Self {
        PlmDgp {
            theta: 1.0,
            beta_a: [0.3, 0.8, 0.0],
            beta_m: [-0.5, 0.5, -0.5],
        }
    }
}

/// A simulated sample with covariates and true nuisances.
#[derive(Debug, Clone)]
pub struct PlmSample {
    pub y: Vec<f64>,
    pub a: Vec<f64>,
    pub x: Vec<[f64; 2]>,
    pub v: Vec<f64>,
    pub m: Vec<f64>,
}

impl PlmSample {
    /// Dataset with the true nuisances attached.
    pub fn with_truth(&self) -> Result<PlmData> {
        PlmData::new(self.y.clone(), self.a.clone(), self.v.clone(), self.m.clone())
    }
}

impl PlmDgp {
    pub fn m(&self, x: &[f64; 2]) -> f64 {
        self.beta_m[0] + self.beta_m[1] * x[0] + self.beta_m[2] * x[1]
    }

    pub fn propensity(&self, x: &[f64; 2]) -> f64 {
        expit(self.beta_a[0] + self.beta_a[1] * x[0] + self.beta_a[2] * x[1])
    }

    /// `v(x) = P(A = 1 | Y = 0, X = x)` by Bayes' rule.
    pub fn v(&self, x: &[f64; 2]) -> f64 {
        let p = self.propensity(x);
        let m = self.m(x);
        let y0_given_a1 = 1.0 - expit(self.theta + m);
        let y0_given_a0 = 1.0 - expit(m);
        p * y0_given_a1 / (p * y0_given_a1 + (1.0 - p) * y0_given_a0)
    }

    pub fn sample(&self, n: usize, seed: u64) -> PlmSample {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut s = PlmSample {
            y: Vec::with_capacity(n),
            a: Vec::with_capacity(n),
            x: Vec::with_capacity(n),
            v: Vec::with_capacity(n),
            m: Vec::with_capacity(n),
        };
        for _ in 0..n {
            let x = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
            let a = (rng.random::<f64>() < self.propensity(&x)) as u8 as f64;
            let y = (rng.random::<f64>() < expit(self.theta * a + self.m(&x))) as u8 as f64;
            s.v.push(self.v(&x));
            s.m.push(self.m(&x));
            s.y.push(y);
            s.a.push(a);
            s.x.push(x);
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn brent_finds_cubic_root() {
        let r = brent(|x| x * x * x - 2.0, 0.0, 3.0, 1e-14).unwrap();
        assert!((r.root - 2f64.cbrt()).abs() < 1e-12);
        assert_eq!(brent(|x| x * x + 1.0, -1.0, 1.0, 1e-10).unwrap_err().code(), "NO_SIGN_CHANGE");
    }

    #[test]
    fn all_zero_outcomes_are_degenerate() {
        let data = PlmData::new(vec![0.0; 4], vec![1.0, 0.0, 1.0, 0.0], vec![0.4, 0.5, 0.6, 0.3], vec![0.1, 0.2, 0.3, 0.4]).unwrap();
        let spec = KernelSpec::boxcar(1.0).unwrap();
        let m1 = plm_moment(-3.0, &data, spec).unwrap();
        let m2 = plm_moment(3.0, &data, spec).unwrap();
        assert_eq!(m1, m2);
        let want = -(0.6 - 0.5 + 0.4 - 0.3) / 4.0 - plm_correction(0.0, &data, spec, Strategy::Naive).unwrap();
        assert!((m1 - want).abs() < 1e-15);
        let options = PlmOptions {
            h: Some(1.0),
            ..PlmOptions::default()
        };
        assert_eq!(solve_theta(&data, &options).unwrap_err().code(), "DEGENERATE_MOMENT");
    }

    #[test]
    fn exact_treatment_fit_is_degenerate() {
        let data = PlmData::new(vec![1.0, 0.0, 1.0], vec![0.5, 0.2, 0.7], vec![0.5, 0.2, 0.7], vec![0.0; 3]).unwrap();
        let options = PlmOptions {
            h: Some(0.5),
            ..PlmOptions::default()
        };
        for t in [-2.0, 0.0, 2.0] {
            assert_eq!(plm_moment(t, &data, KernelSpec::boxcar(0.5).unwrap()).unwrap(), 0.0);
        }
        assert_eq!(solve_theta(&data, &options).unwrap_err().code(), "DEGENERATE_MOMENT");
    }

    #[test]
    fn rejects_non_binary_outcome() {
        assert!(PlmData::new(vec![0.5, 1.0], vec![0.0; 2], vec![0.0; 2], vec![0.0; 2]).is_err());
    }

    #[test]
    fn true_nuisances_recover_theta() {
        let sample = PlmDgp::default().sample(5000, 11);
        let data = sample.with_truth().unwrap();
        let report = solve_theta(&data, &PlmOptions::default()).unwrap();
        assert!(report.moment_at_solution.abs() <= MOMENT_TOL);
        assert!((report.theta_hat - 1.0).abs() < 4.0 * report.se, "{report:?}");
        let plain = solve_theta(
            &data,
            &PlmOptions {
                uncorrected: true,
                ..PlmOptions::default()
            },
        )
        .unwrap();
        assert!((plain.theta_hat - report.theta_hat).abs() < 2.0 * report.se);
    }

    #[test]
    fn closed_form_v_matches_simulation() {
        let dgp = PlmDgp::default();
        let x = [0.3, -0.2];
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let (mut zeros, mut treated_zeros) = (0.0, 0.0);
        for _ in 0..400_000 {
            let a = rng.random::<f64>() < dgp.propensity(&x);
            let af = a as u8 as f64;
            let y = rng.random::<f64>() < expit(dgp.theta * af + dgp.m(&x));
            if !y {
                zeros += 1.0;
                treated_zeros += af;
            }
        }
        let est = treated_zeros / zeros;
        let se = (est * (1.0 - est) / zeros).sqrt();
        assert!((est - dgp.v(&x)).abs() < 4.0 * se);
    }
}
