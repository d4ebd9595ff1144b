//! Kernel density normalizers `Q-hat` of the fitted nuisance values among
//! treated units.
//!
//! These single-point versions are direct O(n) sums; the estimators compute
//! all normalizers at once through [`crate::pairwise::PairIndex`].

use crate::data::{Dataset, NuisanceValues};
use crate::kernels::KernelSpec;

/// `Q(omega_i) = (n-1)^{-1} sum_{j != i} A_j K_h(omega_j - omega_i)`.
pub fn qhat_omega(i: usize, data: &Dataset, nuis: &NuisanceValues, spec: &KernelSpec) -> f64 {
    let n = data.len();
    let w = &nuis.omega_hat;
    let total: f64 = (0..n)
        .filter(|&j| j != i)
        .map(|j| data.a(j) * spec.kh(w[j] - w[i]))
        .sum();
    total / (n - 1) as f64
}

/// Leave-`i`-out normalizer centered at `mu_j`:
/// `(n-1)^{-1} sum_{s != i} A_s K_h(mu_s - mu_j)`. The term `s = j` is kept.
pub fn qhat_mu_loo(
    i: usize,
    j: usize,
    data: &Dataset,
    nuis: &NuisanceValues,
    spec: &KernelSpec,
) -> f64 {
    debug_assert_ne!(i, j);
    let n = data.len();
    let m = &nuis.mu_hat;
    let total: f64 = (0..n)
        .filter(|&s| s != i)
        .map(|s| data.a(s) * spec.kh(m[s] - m[j]))
        .sum();
    total / (n - 1) as f64
}

/// Product-kernel normalizer localized at `(omega_i, mu_i)`.
pub fn qhat_2d(i: usize, data: &Dataset, nuis: &NuisanceValues, spec: &KernelSpec) -> f64 {
    let n = data.len();
    let (w, m) = (&nuis.omega_hat, &nuis.mu_hat);
    let total: f64 = (0..n)
        .filter(|&j| j != i)
        .map(|j| data.a(j) * spec.kh(w[j] - w[i]) * spec.kh(m[j] - m[i]))
        .sum();
    total / (n - 1) as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{Bounds, Observation};

    fn dataset(a: &[bool]) -> Dataset {
        let rows = a
            .iter()
            .map(|&a| Observation {
                y: 0.0,
                a,
                x: vec![],
            })
            .collect();
        Dataset::new(rows, &Bounds::default()).unwrap()
    }

    #[test]
    fn omega_hand_sum() {
        let data = dataset(&[true, true, false]);
        let nuis = NuisanceValues::new(vec![1.0, 1.1, 2.0], vec![0.0; 3]);
        let spec = KernelSpec::boxcar(0.2).unwrap();
        assert!((qhat_omega(0, &data, &nuis, &spec) - 1.25).abs() < 1e-15);
    }

    #[test]
    fn untreated_neighbors_give_zero() {
        let data = dataset(&[true, false, false]);
        let nuis = NuisanceValues::new(vec![1.0, 1.0, 1.0], vec![0.5; 3]);
        let spec = KernelSpec::boxcar(0.2).unwrap();
        assert_eq!(qhat_omega(0, &data, &nuis, &spec), 0.0);
        assert_eq!(qhat_2d(0, &data, &nuis, &spec), 0.0);
        assert_eq!(qhat_mu_loo(0, 1, &data, &nuis, &spec), 0.0);
    }

    #[test]
    fn mu_loo_keeps_center_term() {
        let data = dataset(&[false, true]);
        let nuis = NuisanceValues::new(vec![1.0, 1.0], vec![0.3, 0.9]);
        let spec = KernelSpec::boxcar(0.25).unwrap();
        assert_eq!(qhat_mu_loo(0, 1, &data, &nuis, &spec), 0.5 / 0.25);
    }

    #[test]
    fn identical_points_product_kernel() {
        let data = dataset(&[true; 4]);
        let nuis = NuisanceValues::new(vec![2.0; 4], vec![0.4; 4]);
        let spec = KernelSpec::boxcar(0.1).unwrap();
        let expect = (0.5f64 / 0.1).powi(2);
        assert!((qhat_2d(2, &data, &nuis, &spec) - expect).abs() < 1e-12);
    }
}
