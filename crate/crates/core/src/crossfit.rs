//! Cross-fitted nuisance evaluations from the built-in parametric learners.

use rayon::prelude::*;

use crate::data::{Bounds, Dataset, NuisanceValues};
use crate::error::{Error, Result};
use crate::folds::FoldAssignment;
use crate::logistic::{fit_least_squares, fit_logistic};

/// Smallest propensity allowed before inversion, whatever `omega_max` says.
pub const PI_FLOOR: f64 = 1e-3;
/// Largest propensity allowed before inversion.
pub const PI_CEILING: f64 = 1.0 - 1e-6;

/// A fitted regression evaluated at a covariate row.
pub(crate) type Predictor = Box<dyn Fn(&[f64]) -> f64 + Send>;

/// Clamps a propensity into `[max(1/omega_max, PI_FLOOR), PI_CEILING]`,
/// reporting whether it moved.
pub fn clamp_propensity(pi: f64, bounds: &Bounds) -> (f64, bool) {
    let lo = (1.0 / bounds.omega_max).max(PI_FLOOR);
    let clamped = pi.clamp(lo, PI_CEILING);
    (clamped, clamped != pi)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CrossfitResult {
    pub nuisance: NuisanceValues,
    /// Number of propensities moved by [`clamp_propensity`].
    pub clamp_count: usize,
}

/// For each fold, fits the propensity (logistic regression of `A` on `X`)
/// and the outcome regression (among treated units: logistic for binary
/// `Y`, least squares otherwise) on the remaining folds and evaluates them
/// on the held-out fold.
pub fn crossfit_nuisances(
    data: &Dataset,
    folds: &FoldAssignment,
    bounds: &Bounds,
) -> Result<CrossfitResult> {
    let n = data.len();
    if folds.len() != n {
        return Err(Error::MismatchedLength {
            what: "fold assignment",
            expected: n,
            found: folds.len(),
        });
    }
    let binary = data.has_binary_outcome();
    let per_fold = (0..folds.k())
        .into_par_iter()
        .map(|k| {
            let train: Vec<usize> = (0..n).filter(|&i| folds.fold_of(i) != k).collect();
            let x: Vec<&[f64]> = train.iter().map(|&i| data.x(i)).collect();
            let a: Vec<bool> = train.iter().map(|&i| data.treated()[i]).collect();
            let pi_model = fit_logistic(&x, &a, None)?;
            let treated: Vec<usize> = train.iter().copied().filter(|&i| data.treated()[i]).collect();
            let xt: Vec<&[f64]> = treated.iter().map(|&i| data.x(i)).collect();
            let mu: Predictor = if binary {
                let yt: Vec<bool> = treated.iter().map(|&i| data.y()[i] == 1.0).collect();
                let model = fit_logistic(&xt, &yt, None)?;
                Box::new(move |x| model.predict(x))
            } else {
                let yt: Vec<f64> = treated.iter().map(|&i| data.y()[i]).collect();
                let model = fit_least_squares(&xt, &yt)?;
                Box::new(move |x| model.predict(x))
            };
            let held: Vec<(usize, f64, f64)> = folds
                .members(k)
                .into_iter()
                .map(|i| (i, pi_model.predict(data.x(i)), mu(data.x(i))))
                .collect();
            Ok(held)
        })
        .collect::<Result<Vec<_>>>()?;

    let mut omega_hat = vec![0.0; n];
    let mut mu_hat = vec![0.0; n];
    let mut clamp_count = 0;
    for (i, pi, mu) in per_fold.into_iter().flatten() {
        let (pi, moved) = clamp_propensity(pi, bounds);
        clamp_count += moved as usize;
        omega_hat[i] = 1.0 / pi;
        mu_hat[i] = mu;
    }
    Ok(CrossfitResult {
        nuisance: NuisanceValues::new(omega_hat, mu_hat),
        clamp_count,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Observation;
    use crate::folds::make_folds;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn constant_propensity_gives_constant_omega() {
        // Two copies of a balanced pattern: every training fold sees the same
        // treated share.
        let mut obs = Vec::new();
        for _ in 0..2 {
            for a in [true, false] {
                for x in [0.0, 1.0] {
                    for y in [0.0, 1.0] {
                        obs.push(Observation { y, a, x: vec![x] });
                    }
                }
            }
        }
        let data = Dataset::new(obs, &Bounds::default()).unwrap();
        let folds = FoldAssignment::from_assignment((0..16).map(|i| i / 8).collect(), 2).unwrap();
        let fit = crossfit_nuisances(&data, &folds, &Bounds::default()).unwrap();
        for w in &fit.nuisance.omega_hat {
            assert!((w - 2.0).abs() < 1e-6, "{w}");
        }
    }

    #[test]
    fn clamp_rule() {
        let b = Bounds {
            omega_max: 20.0,
            ..Bounds::default()
        };
        assert_eq!(clamp_propensity(0.01, &b), (0.05, true));
        assert_eq!(clamp_propensity(0.5, &b), (0.5, false));
        assert_eq!(clamp_propensity(1.0, &b), (PI_CEILING, true));
        let loose = Bounds {
            omega_max: 1e6,
            ..Bounds::default()
        };
        assert_eq!(clamp_propensity(1e-5, &loose).0, PI_FLOOR);
    }

    #[test]
    fn extreme_propensity_is_clamped_and_counted() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let obs: Vec<Observation> = (0..400)
            .map(|_| {
                let x: f64 = rng.random_range(-1.0..1.0);
                let a = rng.random_bool(1.0 / (1.0 + (-8.0 * x).exp()));
                Observation {
                    y: rng.random_range(0.0..1.0),
                    a,
                    x: vec![x],
                }
            })
            .collect();
        let data = Dataset::new(obs, &Bounds::default()).unwrap();
        let folds = make_folds(400, 2, 1).unwrap();
        let bounds = Bounds {
            omega_max: 5.0,
            ..Bounds::default()
        };
        let fit = crossfit_nuisances(&data, &folds, &bounds).unwrap();
        assert!(fit.clamp_count > 0);
        assert!(fit.nuisance.omega_hat.iter().all(|&w| (1.0..=5.0 + 1e-12).contains(&w)));
    }
}
