//! The AIPW estimator and its three kernel U-statistic corrections, with
//! projection-based standard errors and Wald intervals.
//!
//! Every correction has the form
//! `T = [n(n-1)]^{-1} sum_{i != j} L_i W_ij / Q_ij R_j` with left residual
//! `L_i = A_i omega_i - 1`, right residual `R_j = A_j (Y_j - mu_j)`, a kernel
//! weight `W_ij` and a normalizer `Q_ij`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::bandwidth::{rate_bandwidth, select_bandwidth_cv};
use crate::data::{validate, Bounds, Dataset, NuisanceValues};
use crate::error::{Error, Result};
use crate::kernels::{KernelFamily, KernelSpec};
use crate::pairwise::{loo_full_sums, Centers, PairIndex, Strategy};

/// Floor applied to kernel normalizers.
pub const QHAT_FLOOR: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    /// Plain augmented IPW, no correction.
    Aipw,
    /// Kernel in `omega_hat`.
    Omega,
    /// Kernel in `mu_hat` with a leave-one-out normalizer.
    Mu,
    /// Product kernel in `(omega_hat, mu_hat)`.
    Main,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Aipw, Method::Omega, Method::Mu, Method::Main];

    pub fn name(self) -> &'static str {
        match self {
            Method::Aipw => "aipw",
            Method::Omega => "omega",
            Method::Mu => "mu",
            Method::Main => "main",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "aipw" | "dr" => Ok(Method::Aipw),
            "omega" => Ok(Method::Omega),
            "mu" => Ok(Method::Mu),
            "main" => Ok(Method::Main),
            other => Err(Error::InvalidArgument(format!("unknown method '{other}'"))),
        }
    }
}

/// Value of a correction together with normalizer diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Correction {
    pub value: f64,
    pub min_qhat: f64,
    pub clamp_count: usize,
}

/// Per-observation influence contributions; their mean is the estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct InfluenceVector {
    pub zeta: Vec<f64>,
}

impl InfluenceVector {
    pub fn mean(&self) -> f64 {
        self.zeta.iter().sum::<f64>() / self.zeta.len() as f64
    }

    /// `sd(zeta) / sqrt(n)` with the `n - 1` denominator.
    pub fn standard_error(&self) -> f64 {
        let n = self.zeta.len() as f64;
        let m = self.mean();
        let ss: f64 = self.zeta.iter().map(|z| (z - m).powi(2)).sum();
        (ss / (n - 1.0)).sqrt() / n.sqrt()
    }
}

/// Full U-statistic evaluation: `rows[i] = sum_j k_ij`, `cols[i] = sum_j k_ji`.
struct UStat {
    value: f64,
    rows: Vec<f64>,
    cols: Vec<f64>,
    min_qhat: f64,
    clamp_count: usize,
}

fn residuals(data: &Dataset, nuis: &NuisanceValues) -> (Vec<f64>, Vec<f64>) {
    let n = data.len();
    let left = (0..n).map(|i| data.a(i) * nuis.omega_hat[i] - 1.0).collect();
    let right = (0..n)
        .map(|j| data.a(j) * (data.y()[j] - nuis.mu_hat[j]))
        .collect();
    (left, right)
}

/// `phi_i = A_i omega_i (Y_i - mu_i) + mu_i`.
pub fn aipw_terms(data: &Dataset, nuis: &NuisanceValues) -> Vec<f64> {
    (0..data.len())
        .map(|i| data.a(i) * nuis.omega_hat[i] * (data.y()[i] - nuis.mu_hat[i]) + nuis.mu_hat[i])
        .collect()
}

/// The AIPW (doubly-robust) estimate, the sample mean of [`aipw_terms`].
pub fn aipw(data: &Dataset, nuis: &NuisanceValues) -> f64 {
    let phi = aipw_terms(data, nuis);
    phi.iter().sum::<f64>() / phi.len() as f64
}

/// Corrections whose normalizer depends only on the row index `i`.
fn separable_ustat(
    index: &PairIndex<'_>,
    data: &Dataset,
    left: &[f64],
    right: &[f64],
) -> Result<UStat> {
    let n = data.len();
    let scale = (n - 1) as f64;
    let a: Vec<f64> = (0..n).map(|i| data.a(i)).collect();
    let q: Vec<f64> = index
        .neighbor_sums(&a)
        .into_iter()
        .map(|s| s / scale)
        .collect();
    if q.iter().all(|&v| v == 0.0) {
        return Err(Error::AllQhatZero {
            h: index.spec().h(),
        });
    }
    let clamp_count = q.iter().filter(|&&v| v < QHAT_FLOOR).count();
    let min_qhat = q.iter().copied().fold(f64::INFINITY, f64::min);
    let scaled: Vec<f64> = left
        .iter()
        .zip(&q)
        .map(|(l, qi)| l / qi.max(QHAT_FLOOR))
        .collect();
    let rows: Vec<f64> = index
        .neighbor_sums(right)
        .iter()
        .zip(&scaled)
        .map(|(s, l)| l * s)
        .collect();
    let cols: Vec<f64> = index
        .neighbor_sums(&scaled)
        .iter()
        .zip(right)
        .map(|(s, r)| r * s)
        .collect();
    // `+ 0.0` maps a signed zero to +0.
    let value = rows.iter().sum::<f64>() / (n as f64 * scale) + 0.0;
    Ok(UStat {
        value,
        rows,
        cols,
        min_qhat,
        clamp_count,
    })
}

/// Correction with the leave-`i`-out normalizer centered at `j`.
fn leave_one_out_ustat(
    index: &PairIndex<'_>,
    data: &Dataset,
    left: &[f64],
    right: &[f64],
) -> Result<UStat> {
    let n = data.len();
    let scale = (n - 1) as f64;
    let a: Vec<f64> = (0..n).map(|i| data.a(i)).collect();
    let full = loo_full_sums(index, &a);
    if (0..n).all(|j| a[j] == 0.0 || full[j] == 0.0) {
        return Err(Error::AllQhatZero {
            h: index.spec().h(),
        });
    }
    let q = |i: usize, j: usize, w: f64| (full[j] - a[i] * w) / scale;
    let rows = index.map_rows(|i| {
        let mut acc = 0.0;
        index.for_each_neighbor(i, |j, w| {
            if w != 0.0 && right[j] != 0.0 {
                acc += w / q(i, j, w).max(QHAT_FLOOR) * right[j];
            }
        });
        left[i] * acc
    });
    let cols = index.map_rows(|j| {
        if right[j] == 0.0 {
            return 0.0;
        }
        let mut acc = 0.0;
        index.for_each_neighbor(j, |i, w| {
            if w != 0.0 {
                acc += left[i] * w / q(i, j, w).max(QHAT_FLOOR);
            }
        });
        acc * right[j]
    });
    let clamps = index.map_rows(|j| {
        if a[j] == 0.0 {
            return 0.0;
        }
        let mut count = 0.0;
        index.for_each_neighbor(j, |i, w| {
            if w != 0.0 && q(i, j, w) < QHAT_FLOOR {
                count += 1.0;
            }
        });
        count
    });
    let min_q = index.map_rows(|j| {
        if a[j] == 0.0 {
            return f64::INFINITY;
        }
        let mut largest = 0.0f64;
        index.for_each_neighbor(j, |i, w| largest = largest.max(a[i] * w));
        (full[j] - largest) / scale
    });
    let value = rows.iter().sum::<f64>() / (n as f64 * scale) + 0.0;
    Ok(UStat {
        value,
        rows,
        cols,
        min_qhat: min_q.into_iter().fold(f64::INFINITY, f64::min),
        clamp_count: clamps.iter().sum::<f64>() as usize,
    })
}

fn ustat(
    method: Method,
    data: &Dataset,
    nuis: &NuisanceValues,
    spec: KernelSpec,
    strategy: Strategy,
) -> Result<Option<UStat>> {
    let (left, right) = residuals(data, nuis);
    let stat = match method {
        Method::Aipw => return Ok(None),
        Method::Omega => {
            let index = PairIndex::new(Centers::Line(&nuis.omega_hat), spec, strategy)?;
            separable_ustat(&index, data, &left, &right)?
        }
        Method::Main => {
            let index = PairIndex::new(
                Centers::Plane(&nuis.omega_hat, &nuis.mu_hat),
                spec,
                strategy,
            )?;
            separable_ustat(&index, data, &left, &right)?
        }
        Method::Mu => {
            let index = PairIndex::new(Centers::Line(&nuis.mu_hat), spec, strategy)?;
            leave_one_out_ustat(&index, data, &left, &right)?
        }
    };
    Ok(Some(stat))
}

/// The correction `T` for `method` (zero for AIPW), evaluated with the
/// given pairwise strategy.
pub fn correction(
    method: Method,
    data: &Dataset,
    nuis: &NuisanceValues,
    spec: KernelSpec,
    strategy: Strategy,
) -> Result<Correction> {
    Ok(match ustat(method, data, nuis, spec, strategy)? {
        Some(u) => Correction {
            value: u.value,
            min_qhat: u.min_qhat,
            clamp_count: u.clamp_count,
        },
        None => Correction {
            value: 0.0,
            min_qhat: f64::NAN,
            clamp_count: 0,
        },
    })
}

pub fn correction_omega(data: &Dataset, nuis: &NuisanceValues, spec: KernelSpec) -> Result<Correction> {
    correction(Method::Omega, data, nuis, spec, Strategy::Auto)
}

pub fn correction_mu(data: &Dataset, nuis: &NuisanceValues, spec: KernelSpec) -> Result<Correction> {
    correction(Method::Mu, data, nuis, spec, Strategy::Auto)
}

pub fn correction_main(data: &Dataset, nuis: &NuisanceValues, spec: KernelSpec) -> Result<Correction> {
    correction(Method::Main, data, nuis, spec, Strategy::Auto)
}

/// Influence contributions `zeta_i = phi_i - u_i` where
/// `u_i = (n-1)^{-1} sum_{j != i} (k_ij + k_ji) - T`.
pub fn influence_values(
    method: Method,
    data: &Dataset,
    nuis: &NuisanceValues,
    spec: KernelSpec,
) -> Result<InfluenceVector> {
    influence_with_correction(method, data, nuis, spec, Strategy::Auto).map(|(z, _)| z)
}

fn influence_with_correction(
    method: Method,
    data: &Dataset,
    nuis: &NuisanceValues,
    spec: KernelSpec,
    strategy: Strategy,
) -> Result<(InfluenceVector, Correction)> {
    let phi = aipw_terms(data, nuis);
    let Some(u) = ustat(method, data, nuis, spec, strategy)? else {
        let corr = Correction {
            value: 0.0,
            min_qhat: f64::NAN,
            clamp_count: 0,
        };
        return Ok((InfluenceVector { zeta: phi }, corr));
    };
    let scale = (data.len() - 1) as f64;
    let zeta = phi
        .iter()
        .zip(u.rows.iter().zip(&u.cols))
        .map(|(p, (r, c))| p - ((r + c) / scale - u.value))
        .collect();
    let corr = Correction {
        value: u.value,
        min_qhat: u.min_qhat,
        clamp_count: u.clamp_count,
    };
    Ok((InfluenceVector { zeta }, corr))
}

/// Two-sided Wald interval `psi -/+ z_{1 - alpha/2} se`.
pub fn wald_interval(psi: f64, se: f64, alpha: f64) -> Result<(f64, f64)> {
    check_alpha(alpha)?;
    let z = Normal::standard().inverse_cdf(1.0 - alpha / 2.0);
    Ok((psi - z * se, psi + z * se))
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("alpha must lie in (0, 1), got {alpha}")))
    }
}

/// How the kernel bandwidth is chosen.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub enum Bandwidth {
    Fixed(f64),
    /// Rate-based default for the method.
    Rate,
    /// Leave-one-out cross-validation on the default grid.
    #[default]
    Cv,
    CvGrid(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimateOptions {
    pub bandwidth: Bandwidth,
    pub alpha: f64,
    pub kernel: KernelFamily,
    pub bounds: Bounds,
    pub strategy: Strategy,
}

impl Default for EstimateOptions {
    fn default() -> Self {
        EstimateOptions {
            bandwidth: Bandwidth::Cv,
            alpha: 0.05,
            kernel: KernelFamily::Box,
            bounds: Bounds::default(),
            strategy: Strategy::Auto,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub method: Method,
    pub psi_hat: f64,
    pub se: f64,
    pub ci: (f64, f64),
    pub alpha: f64,
    pub h_used: Option<f64>,
    pub correction: f64,
    pub min_qhat: Option<f64>,
    pub clamp_count: usize,
    pub psi_dr: f64,
    pub n: usize,
}

/// Resolves the bandwidth option to a kernel (or `None` for AIPW).
pub fn resolve_bandwidth(
    method: Method,
    data: &Dataset,
    nuis: &NuisanceValues,
    options: &EstimateOptions,
) -> Result<Option<KernelSpec>> {
    if method == Method::Aipw {
        return Ok(None);
    }
    let h = match &options.bandwidth {
        Bandwidth::Fixed(h) => *h,
        Bandwidth::Rate => rate_bandwidth(method, nuis),
        Bandwidth::Cv => select_bandwidth_cv(data, nuis, None, options.kernel)?.h,
        Bandwidth::CvGrid(grid) => select_bandwidth_cv(data, nuis, Some(grid), options.kernel)?.h,
    };
    KernelSpec::new(options.kernel, h).map(Some)
}

/// Point estimate `psi_DR - T`, standard error and Wald interval.
pub fn estimate(
    method: Method,
    data: &Dataset,
    nuis: &NuisanceValues,
    options: &EstimateOptions,
) -> Result<EstimateReport> {
    check_alpha(options.alpha)?;
    validate(data, nuis, &options.bounds)?;
    let spec = resolve_bandwidth(method, data, nuis, options)?;
    estimate_with_spec(method, data, nuis, spec, options.alpha, options.strategy)
}

/// [`estimate`] with an already resolved kernel; inputs are assumed
/// validated.
pub fn estimate_with_spec(
    method: Method,
    data: &Dataset,
    nuis: &NuisanceValues,
    spec: Option<KernelSpec>,
    alpha: f64,
    strategy: Strategy,
) -> Result<EstimateReport> {
    let psi_dr = aipw(data, nuis);
    let (zeta, corr) = match spec {
        Some(spec) => influence_with_correction(method, data, nuis, spec, strategy)?,
        None if method == Method::Aipw => {
            influence_with_correction(method, data, nuis, KernelSpec::boxcar(1.0)?, strategy)?
        }
        None => return Err(Error::InvalidArgument(format!("method {method} needs a bandwidth"))),
    };
    let psi_hat = psi_dr - corr.value;
    let se = zeta.standard_error();
    let ci = wald_interval(psi_hat, se, alpha)?;
    Ok(EstimateReport {
        method,
        psi_hat,
        se,
        ci,
        alpha,
        h_used: spec.filter(|_| method != Method::Aipw).map(|s| s.h()),
        correction: corr.value,
        min_qhat: (method != Method::Aipw).then_some(corr.min_qhat),
        clamp_count: corr.clamp_count,
        psi_dr,
        n: data.len(),
    })
}
