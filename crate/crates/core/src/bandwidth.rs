//! Bandwidth choice: rate-based defaults and leave-one-out cross-validation
//! of a Nadaraya-Watson regression on the fitted nuisance values.

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, NuisanceValues};
use crate::error::{Error, Result};
use crate::estimators::Method;
use crate::kernels::{KernelFamily, KernelSpec};
use crate::pairwise::{Centers, PairIndex, Strategy};

/// Number of grid points in the default cross-validation grid.
pub const CV_GRID_SIZE: usize = 16;
/// Default grid spans `[0.1, 2] x` the rate-based bandwidth.
pub const CV_GRID_SPAN: (f64, f64) = (0.1, 2.0);

/// Sample quantile with linear interpolation between order statistics.
pub fn quantile(values: &[f64], p: f64) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    quantile_sorted(&sorted, p)
}

fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 0 {
        return f64::NAN;
    }
    let pos = p * (n - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Interquartile range, falling back to the full range and then to 1 when
/// the values are (nearly) constant.
pub fn robust_scale(values: &[f64]) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let iqr = quantile_sorted(&sorted, 0.75) - quantile_sorted(&sorted, 0.25);
    if iqr > 0.0 {
        return iqr;
    }
    let range = sorted.last().copied().unwrap_or(0.0) - sorted.first().copied().unwrap_or(0.0);
    if range > 0.0 {
        range
    } else {
        1.0
    }
}

/// Rate-based default bandwidth for `method`:
/// `n^{-1/2} IQR(omega)` for the omega correction, `n^{-1/2} IQR(mu)` for the
/// mu correction, and `n^{-1/4} sqrt(IQR(omega) IQR(mu))` for the product
/// kernel.
pub fn rate_bandwidth(method: Method, nuis: &NuisanceValues) -> f64 {
    let n = nuis.len() as f64;
    match method {
        Method::Omega => n.powf(-0.5) * robust_scale(&nuis.omega_hat),
        Method::Mu => n.powf(-0.5) * robust_scale(&nuis.mu_hat),
        Method::Main | Method::Aipw => {
            n.powf(-0.25) * (robust_scale(&nuis.omega_hat) * robust_scale(&nuis.mu_hat)).sqrt()
        }
    }
}

/// `size` geometrically spaced points from `lo` to `hi`.
pub fn geometric_grid(lo: f64, hi: f64, size: usize) -> Vec<f64> {
    if size == 1 {
        return vec![lo];
    }
    let ratio = (hi / lo).ln() / (size - 1) as f64;
    (0..size).map(|k| lo * (ratio * k as f64).exp()).collect()
}

/// Default cross-validation grid around the product-kernel rate bandwidth
/// of the centers `(u, v)`.
pub fn default_grid(u: &[f64], v: &[f64]) -> Vec<f64> {
    let n = u.len() as f64;
    let h0 = n.powf(-0.25) * (robust_scale(u) * robust_scale(v)).sqrt();
    geometric_grid(CV_GRID_SPAN.0 * h0, CV_GRID_SPAN.1 * h0, CV_GRID_SIZE)
}

/// Outcome of a cross-validation search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvCurve {
    pub h: f64,
    pub grid: Vec<f64>,
    pub scores: Vec<f64>,
}

/// Mean squared leave-one-out error of the product-kernel Nadaraya-Watson
/// regression of `target` on `(u, v)` at bandwidth `spec.h()`. Points with no
/// neighbor in the window are predicted by the global mean of `target`.
pub fn loo_cv_score(u: &[f64], v: &[f64], target: &[f64], spec: KernelSpec) -> Result<f64> {
    let n = target.len();
    let index = PairIndex::new(Centers::Plane(u, v), spec, Strategy::Auto)?;
    let num = index.neighbor_sums(target);
    let den = index.neighbor_sums(&vec![1.0; n]);
    let mean = target.iter().sum::<f64>() / n as f64;
    let sse: f64 = (0..n)
        .map(|i| {
            let pred = if den[i] > 0.0 { num[i] / den[i] } else { mean };
            (target[i] - pred).powi(2)
        })
        .sum();
    Ok(sse / n as f64)
}

/// Grid search of [`loo_cv_score`]; ties (within `1e-12` of the score
/// scale) go to the smallest bandwidth.
pub fn cv_search(
    u: &[f64],
    v: &[f64],
    target: &[f64],
    grid: &[f64],
    family: KernelFamily,
) -> Result<CvCurve> {
    if target.len() < 2 {
        return Err(Error::TooFewTreated {
            found: target.len(),
        });
    }
    if grid.is_empty() {
        return Err(Error::InvalidArgument("empty bandwidth grid".into()));
    }
    let mut order: Vec<usize> = (0..grid.len()).collect();
    order.sort_by(|&a, &b| grid[a].total_cmp(&grid[b]));
    let sorted: Vec<f64> = order.iter().map(|&k| grid[k]).collect();
    let scores = sorted
        .iter()
        .map(|&h| loo_cv_score(u, v, target, KernelSpec::new(family, h)?))
        .collect::<Result<Vec<f64>>>()?;
    let scale = target.iter().map(|t| t * t).sum::<f64>() / target.len() as f64;
    let mut best = 0;
    for k in 1..scores.len() {
        let tol = 1e-12 * scores[best].max(scale);
        if scores[k] < scores[best] - tol {
            best = k;
        }
    }
    Ok(CvCurve {
        h: sorted[best],
        grid: sorted,
        scores,
    })
}

/// Cross-validated bandwidth for the regression of `Y - mu_hat` on
/// `(omega_hat, mu_hat)` among treated units.
pub fn select_bandwidth_cv(
    data: &Dataset,
    nuis: &NuisanceValues,
    grid: Option<&[f64]>,
    family: KernelFamily,
) -> Result<CvCurve> {
    let treated: Vec<usize> = (0..data.len()).filter(|&i| data.treated()[i]).collect();
    if treated.len() < 2 {
        return Err(Error::TooFewTreated {
            found: treated.len(),
        });
    }
    let u: Vec<f64> = treated.iter().map(|&i| nuis.omega_hat[i]).collect();
    let v: Vec<f64> = treated.iter().map(|&i| nuis.mu_hat[i]).collect();
    let e: Vec<f64> = treated
        .iter()
        .map(|&i| data.y()[i] - nuis.mu_hat[i])
        .collect();
    let default;
    let grid = match grid {
        Some(g) => g,
        None => {
            default = default_grid(&nuis.omega_hat, &nuis.mu_hat);
            &default
        }
    };
    cv_search(&u, &v, &e, grid, family)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{Bounds, Observation};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn build(rows: &[(f64, bool, f64, f64)]) -> (Dataset, NuisanceValues) {
        let obs = rows
            .iter()
            .map(|&(y, a, _, _)| Observation { y, a, x: vec![] })
            .collect();
        let data = Dataset::new(obs, &Bounds::default()).unwrap();
        let nuis = NuisanceValues::new(
            rows.iter().map(|r| r.2).collect(),
            rows.iter().map(|r| r.3).collect(),
        );
        (data, nuis)
    }

    #[test]
    fn quantiles_interpolate() {
        let v = [4.0, 1.0, 3.0, 2.0];
        assert_eq!(quantile(&v, 0.0), 1.0);
        assert_eq!(quantile(&v, 1.0), 4.0);
        assert_eq!(quantile(&v, 0.5), 2.5);
        assert_eq!(robust_scale(&v), 1.5);
        assert_eq!(robust_scale(&[2.0, 2.0, 2.0]), 1.0);
    }

    #[test]
    fn geometric_grid_endpoints() {
        let g = geometric_grid(0.1, 2.0, 16);
        assert_eq!(g.len(), 16);
        assert!((g[0] - 0.1).abs() < 1e-15 && (g[15] - 2.0).abs() < 1e-12);
        for w in g.windows(2) {
            assert!((w[1] / w[0] - g[1] / g[0]).abs() < 1e-12);
        }
    }

    #[test]
    fn constant_residual_ties_to_smallest() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let rows: Vec<_> = (0..40)
            .map(|_| {
                let mu: f64 = rng.random_range(0.1..0.9);
                (mu + 0.25, true, rng.random_range(1.0..3.0), mu)
            })
            .collect();
        let (data, nuis) = build(&rows);
        let grid = [0.3, 0.05, 0.8, 0.1];
        let cv = select_bandwidth_cv(&data, &nuis, Some(&grid), KernelFamily::Box).unwrap();
        assert_eq!(cv.h, 0.05);
    }

    #[test]
    fn single_point_grid() {
        let rows = [(1.0, true, 1.5, 0.5), (0.0, true, 2.0, 0.4), (1.0, false, 3.0, 0.2)];
        let (data, nuis) = build(&rows);
        let cv = select_bandwidth_cv(&data, &nuis, Some(&[0.7]), KernelFamily::Box).unwrap();
        assert_eq!(cv.h, 0.7);
    }

    #[test]
    fn too_few_treated() {
        let rows = [(1.0, true, 1.5, 0.5), (0.0, false, 2.0, 0.4)];
        let (data, nuis) = build(&rows);
        let err = select_bandwidth_cv(&data, &nuis, None, KernelFamily::Box).unwrap_err();
        assert_eq!(err.code(), "TOO_FEW_TREATED");
    }

    /// Direct LOO computation, independent of `PairIndex`.
    fn loo_direct(u: &[f64], v: &[f64], e: &[f64], h: f64) -> f64 {
        let k = |t: f64| if (t / h).abs() <= 1.0 { 0.5 / h } else { 0.0 };
        let n = e.len();
        let mean = e.iter().sum::<f64>() / n as f64;
        let mut sse = 0.0;
        for i in 0..n {
            let (mut num, mut den) = (0.0, 0.0);
            for j in 0..n {
                if j != i {
                    let w = k(u[j] - u[i]) * k(v[j] - v[i]);
                    num += w * e[j];
                    den += w;
                }
            }
            let pred = if den > 0.0 { num / den } else { mean };
            sse += (e[i] - pred).powi(2);
        }
        sse / n as f64
    }

    #[test]
    fn two_clusters_prefer_small_bandwidth() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let mut rows = Vec::new();
        for c in 0..2 {
            let (w0, m0, r) = if c == 0 { (2.0, 0.2, 1.0) } else { (2.6, 0.8, -1.0) };
            for _ in 0..30 {
                let mu = m0 + rng.random_range(-0.02..0.02);
                let w = w0 + rng.random_range(-0.02..0.02);
                rows.push((mu + r + rng.random_range(-0.01..0.01), true, w, mu));
            }
        }
        let (data, nuis) = build(&rows);
        let grid = [0.1, 1.0];
        let cv = select_bandwidth_cv(&data, &nuis, Some(&grid), KernelFamily::Box).unwrap();
        let e: Vec<f64> = rows.iter().map(|r| r.0 - r.3).collect();
        let u: Vec<f64> = rows.iter().map(|r| r.2).collect();
        let v: Vec<f64> = rows.iter().map(|r| r.3).collect();
        let small = loo_direct(&u, &v, &e, 0.1);
        let large = loo_direct(&u, &v, &e, 1.0);
        assert!(small < large);
        assert_eq!(cv.h, 0.1);
        assert!((cv.scores[0] - small).abs() < 1e-12);
        assert!((cv.scores[1] - large).abs() < 1e-12);
    }
}
