//! Monte Carlo study on a two-covariate logistic design with perturbed
//! parametric nuisances.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bandwidth::{rate_bandwidth, select_bandwidth_cv};
use crate::crossfit::clamp_propensity;
use crate::data::{Bounds, Dataset, NuisanceValues};
use crate::error::{Error, Result};
use crate::estimators::{estimate_with_spec, Bandwidth, Method};
use crate::kernels::{KernelFamily, KernelSpec};
use crate::logistic::expit;
use crate::pairwise::Strategy;
use crate::quadrature::GaussLegendre;

/// Nodes per axis of the tensor rule used for population expectations.
pub const QUADRATURE_NODES: usize = 96;

/// Data-generating process: `X` uniform on the square `x_range^2`,
/// `A ~ Bern(expit([1 x] beta_pi))`, `Y1 ~ Bern(expit([1 x] beta_mu))`,
/// `Y0 ~ Bern(y0_prob)`, `Y = A Y1 + (1 - A) Y0`.
///
/// The default square is `(0, 1)^2`, on which `psi = E mu(X)` is about 0.66.
/// [`DgpSpec::symmetric`] gives the `(-1, 1)^2` variant (`psi` about 0.26).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DgpSpec {
    pub beta_pi: [f64; 3],
    pub beta_mu: [f64; 3],
    pub y0_prob: f64,
    pub x_range: (f64, f64),
}

impl Default for DgpSpec {
    fn default() -> Self {
        DgpSpec {
            beta_pi: [-0.5, 2.0, 0.5],
            beta_mu: [-2.5, 5.0, 2.0],
            y0_prob: 0.5,
            x_range: (0.0, 1.0),
        }
    }
}

fn index(beta: &[f64; 3], x: &[f64]) -> f64 {
    beta[0] + beta[1] * x[0] + beta[2] * x[1]
}

impl DgpSpec {
    /// Default coefficients with covariates on `(-1, 1)^2`.
    pub fn symmetric() -> Self {
        DgpSpec {
            x_range: (-1.0, 1.0),
            ..DgpSpec::default()
        }
    }

    pub fn propensity(&self, x: &[f64]) -> f64 {
        expit(index(&self.beta_pi, x))
    }

    pub fn outcome_mean(&self, x: &[f64]) -> f64 {
        expit(index(&self.beta_mu, x))
    }
}

/// `E f(X)` for `X` uniform on `range^2` by tensor Gauss-Legendre
/// quadrature.
pub fn expectation<F: Fn(&[f64]) -> f64>(range: (f64, f64), f: F) -> f64 {
    let rule = GaussLegendre::new(QUADRATURE_NODES).on_interval(range.0, range.1);
    let area = (range.1 - range.0).powi(2);
    let mut total = 0.0;
    for (x1, w1) in rule.nodes.iter().zip(&rule.weights) {
        for (x2, w2) in rule.nodes.iter().zip(&rule.weights) {
            total += w1 * w2 * f(&[*x1, *x2]);
        }
    }
    total / area
}

/// The target `psi = E mu(X)`.
pub fn true_psi(dgp: &DgpSpec) -> f64 {
    expectation(dgp.x_range, |x| dgp.outcome_mean(x))
}

/// A simulated sample with the true nuisance evaluations.
#[derive(Debug, Clone)]
pub struct Simulated {
    pub data: Dataset,
    pub truth: NuisanceValues,
}

pub fn generate_dataset<R: Rng>(dgp: &DgpSpec, n: usize, rng: &mut R) -> Result<Simulated> {
    let mut y = Vec::with_capacity(n);
    let mut a = Vec::with_capacity(n);
    let mut x = Vec::with_capacity(2 * n);
    let mut omega = Vec::with_capacity(n);
    let mut mu = Vec::with_capacity(n);
    for _ in 0..n {
        let (lo, hi) = dgp.x_range;
        let xi = [rng.random_range(lo..hi), rng.random_range(lo..hi)];
        let pi = dgp.propensity(&xi);
        let m = dgp.outcome_mean(&xi);
        let treated = rng.random::<f64>() < pi;
        let y1 = rng.random::<f64>() < m;
        let y0 = rng.random::<f64>() < dgp.y0_prob;
        let yi = if treated { y1 } else { y0 };
        y.push(yi as u8 as f64);
        a.push(treated);
        x.extend_from_slice(&xi);
        omega.push(1.0 / pi);
        mu.push(m);
    }
    let data = Dataset::from_columns(y, a, x, 2, &Bounds::default())?;
    Ok(Simulated {
        data,
        truth: NuisanceValues::new(omega, mu),
    })
}

/// How the coefficient perturbation is drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Perturbation {
    /// An independent draw for each coefficient.
    #[default]
    PerCoordinate,
    /// One draw added to every coefficient.
    CommonScalar,
}

/// Coefficients perturbed by `Normal(n^{-r}, n^{-2r})` noise.
pub fn perturb_coefficients<R: Rng>(
    beta: &[f64; 3],
    n: usize,
    r: f64,
    mode: Perturbation,
    rng: &mut R,
) -> [f64; 3] {
    let scale = (n as f64).powf(-r);
    let noise = Normal::new(scale, scale).expect("finite scale");
    match mode {
        Perturbation::PerCoordinate => beta.map(|b| b + noise.sample(rng)),
        Perturbation::CommonScalar => {
            let e = noise.sample(rng);
            beta.map(|b| b + e)
        }
    }
}

/// Fitted propensity and outcome models with perturbed coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct PerturbedModels {
    pub beta_pi: [f64; 3],
    pub beta_mu: [f64; 3],
}

impl PerturbedModels {
    pub fn draw<R: Rng>(
        dgp: &DgpSpec,
        n: usize,
        r_pi: f64,
        r_mu: f64,
        mode: Perturbation,
        rng: &mut R,
    ) -> Self {
        PerturbedModels {
            beta_pi: perturb_coefficients(&dgp.beta_pi, n, r_pi, mode, rng),
            beta_mu: perturb_coefficients(&dgp.beta_mu, n, r_mu, mode, rng),
        }
    }

    /// Evaluates `omega_hat = 1 / clamp(pi_hat)` and `mu_hat` on `data`.
    pub fn evaluate(&self, data: &Dataset, bounds: &Bounds) -> (NuisanceValues, usize) {
        let mut clamps = 0;
        let mut omega = Vec::with_capacity(data.len());
        let mut mu = Vec::with_capacity(data.len());
        for i in 0..data.len() {
            let (pi, moved) = clamp_propensity(expit(index(&self.beta_pi, data.x(i))), bounds);
            clamps += moved as usize;
            omega.push(1.0 / pi);
            mu.push(expit(index(&self.beta_mu, data.x(i))));
        }
        (NuisanceValues::new(omega, mu), clamps)
    }
}

/// An estimator evaluated by the study.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SimMethod {
    Aipw,
    Omega,
    Mu,
    Main,
    /// AIPW with the true nuisance functions.
    Oracle,
}

impl SimMethod {
    pub const DEFAULT: [SimMethod; 4] = [
        SimMethod::Aipw,
        SimMethod::Omega,
        SimMethod::Mu,
        SimMethod::Main,
    ];

    fn estimator(self) -> Method {
        match self {
            SimMethod::Aipw | SimMethod::Oracle => Method::Aipw,
            SimMethod::Omega => Method::Omega,
            SimMethod::Mu => Method::Mu,
            SimMethod::Main => Method::Main,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            SimMethod::Oracle => "oracle",
            m => m.estimator().name(),
        }
    }
}

impl fmt::Display for SimMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SimMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s.eq_ignore_ascii_case("oracle") {
            return Ok(SimMethod::Oracle);
        }
        Ok(match s.parse::<Method>()? {
            Method::Aipw => SimMethod::Aipw,
            Method::Omega => SimMethod::Omega,
            Method::Mu => SimMethod::Mu,
            Method::Main => SimMethod::Main,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationConfig {
    pub n_values: Vec<usize>,
    pub reps: usize,
    pub r_pi: f64,
    pub r_mu: f64,
    pub alpha: f64,
    pub seed: u64,
    pub methods: Vec<SimMethod>,
    pub perturbation: Perturbation,
    /// Bandwidth rule; cross-validation picks one `h` per replicate shared
    /// by all kernel methods.
    pub bandwidth: Bandwidth,
    pub kernel: KernelFamily,
    pub dgp: DgpSpec,
    pub bounds: Bounds,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        SimulationConfig {
            n_values: vec![500, 1000, 1500, 2000],
            reps: 500,
            r_pi: 0.3,
            r_mu: 0.3,
            alpha: 0.05,
            seed: 0,
            methods: SimMethod::DEFAULT.to_vec(),
            perturbation: Perturbation::PerCoordinate,
            bandwidth: Bandwidth::Cv,
            kernel: KernelFamily::Box,
            dgp: DgpSpec::default(),
            bounds: Bounds::default(),
        }
    }
}

impl SimulationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.reps == 0 {
            return Err(Error::InvalidArgument("reps must be at least 1".into()));
        }
        if self.n_values.is_empty() || self.n_values.iter().any(|&n| n < 2) {
            return Err(Error::InvalidArgument("every n must be at least 2".into()));
        }
        if self.methods.is_empty() {
            return Err(Error::InvalidArgument("no methods requested".into()));
        }
        if !(self.r_pi >= 0.0 && self.r_mu >= 0.0) {
            return Err(Error::InvalidArgument("rates must be non-negative".into()));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::InvalidArgument(format!("alpha must lie in (0, 1), got {}", self.alpha)));
        }
        Ok(())
    }
}

/// One successful (method, n, replicate) evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateRow {
    pub method: SimMethod,
    pub n: usize,
    pub rep: usize,
    pub error: f64,
    pub sqrt_n_error: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub hit: bool,
    #[serde(skip)]
    pub clamp_count: usize,
}

/// One failed evaluation and its error code.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailedRow {
    pub method: SimMethod,
    pub n: usize,
    pub rep: usize,
    pub code: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub method: SimMethod,
    pub n: usize,
    pub coverage: f64,
    pub mean_width: f64,
    pub failures: usize,
    pub mean_error: f64,
    pub sd_sqrt_n_error: f64,
    pub rmse: f64,
    pub mean_clamp_count: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimResults {
    pub psi: f64,
    pub rows: Vec<ReplicateRow>,
    pub failed: Vec<FailedRow>,
    pub summary: Vec<SummaryRow>,
}

impl SimResults {
    pub fn summary_for(&self, method: SimMethod, n: usize) -> Option<&SummaryRow> {
        self.summary.iter().find(|s| s.method == method && s.n == n)
    }
}

/// Random stream for the cell `(n, rep)`; independent of evaluation order.
pub fn replicate_rng(seed: u64, n: usize, rep: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((n as u64) << 32) | rep as u64);
    rng
}

fn run_replicate(
    config: &SimulationConfig,
    psi: f64,
    n: usize,
    rep: usize,
) -> (Vec<ReplicateRow>, Vec<FailedRow>) {
    let mut rows = Vec::new();
    let mut failed = Vec::new();
    let fail_all = |failed: &mut Vec<FailedRow>, code: &str| {
        for &method in &config.methods {
            failed.push(FailedRow {
                method,
                n,
                rep,
                code: code.to_string(),
            });
        }
    };
    let mut rng = replicate_rng(config.seed, n, rep);
    let sim = match generate_dataset(&config.dgp, n, &mut rng) {
        Ok(s) => s,
        Err(e) => {
            fail_all(&mut failed, e.code());
            return (rows, failed);
        }
    };
    let models = PerturbedModels::draw(
        &config.dgp,
        n,
        config.r_pi,
        config.r_mu,
        config.perturbation,
        &mut rng,
    );
    let (nuis, clamps) = models.evaluate(&sim.data, &config.bounds);

    let needs_kernel = config
        .methods
        .iter()
        .any(|m| !matches!(m, SimMethod::Aipw | SimMethod::Oracle));
    let shared_h: Option<Result<f64>> = needs_kernel.then(|| match &config.bandwidth {
        Bandwidth::Fixed(h) => Ok(*h),
        Bandwidth::Rate => Ok(f64::NAN),
        Bandwidth::Cv => select_bandwidth_cv(&sim.data, &nuis, None, config.kernel).map(|c| c.h),
        Bandwidth::CvGrid(g) => {
            select_bandwidth_cv(&sim.data, &nuis, Some(g), config.kernel).map(|c| c.h)
        }
    });

    for &method in &config.methods {
        let est = method.estimator();
        let outcome = (|| {
            let spec = match (est, &shared_h) {
                (Method::Aipw, _) => None,
                (_, Some(Ok(h))) => {
                    let h = if h.is_nan() { rate_bandwidth(est, &nuis) } else { *h };
                    Some(KernelSpec::new(config.kernel, h)?)
                }
                (_, Some(Err(e))) => return Err(e.clone()),
                (_, None) => unreachable!("kernel method without bandwidth"),
            };
            let used = if method == SimMethod::Oracle { &sim.truth } else { &nuis };
            estimate_with_spec(est, &sim.data, used, spec, config.alpha, Strategy::Auto)
        })();
        match outcome {
            Ok(report) => {
                let error = report.psi_hat - psi;
                rows.push(ReplicateRow {
                    method,
                    n,
                    rep,
                    error,
                    sqrt_n_error: (n as f64).sqrt() * error,
                    ci_lo: report.ci.0,
                    ci_hi: report.ci.1,
                    hit: report.ci.0 <= psi && psi <= report.ci.1,
                    clamp_count: report.clamp_count
                        + if method == SimMethod::Oracle { 0 } else { clamps },
                });
            }
            Err(e) => failed.push(FailedRow {
                method,
                n,
                rep,
                code: e.code().to_string(),
            }),
        }
    }
    (rows, failed)
}

fn summarize(config: &SimulationConfig, rows: &[ReplicateRow], failed: &[FailedRow]) -> Vec<SummaryRow> {
    let mut summary = Vec::new();
    for &method in &config.methods {
        for &n in &config.n_values {
            let cell: Vec<&ReplicateRow> =
                rows.iter().filter(|r| r.method == method && r.n == n).collect();
            let failures = failed
                .iter()
                .filter(|r| r.method == method && r.n == n)
                .count();
            let m = cell.len() as f64;
            let mean = |f: &dyn Fn(&ReplicateRow) -> f64| cell.iter().map(|r| f(r)).sum::<f64>() / m;
            let mean_error = mean(&|r| r.error);
            let mean_sqrt = mean(&|r| r.sqrt_n_error);
            let var = if cell.len() > 1 {
                cell.iter()
                    .map(|r| (r.sqrt_n_error - mean_sqrt).powi(2))
                    .sum::<f64>()
                    / (m - 1.0)
            } else {
                0.0
            };
            summary.push(SummaryRow {
                method,
                n,
                coverage: mean(&|r| r.hit as u8 as f64),
                mean_width: mean(&|r| r.ci_hi - r.ci_lo),
                failures,
                mean_error,
                sd_sqrt_n_error: var.sqrt(),
                rmse: mean(&|r| r.error * r.error).sqrt(),
                mean_clamp_count: mean(&|r| r.clamp_count as f64),
            });
        }
    }
    summary
}

/// Runs every `(n, replicate)` cell in parallel and aggregates per
/// `(method, n)`. Results depend only on the configuration.
pub fn run_monte_carlo(config: &SimulationConfig) -> Result<SimResults> {
    config.validate()?;
    let psi = true_psi(&config.dgp);
    let cells: Vec<(usize, usize)> = config
        .n_values
        .iter()
        .flat_map(|&n| (0..config.reps).map(move |rep| (n, rep)))
        .collect();
    let outcomes: Vec<_> = cells
        .par_iter()
        .map(|&(n, rep)| run_replicate(config, psi, n, rep))
        .collect();
    let mut rows = Vec::new();
    let mut failed = Vec::new();
    for (r, f) in outcomes {
        rows.extend(r);
        failed.extend(f);
    }
    let summary = summarize(config, &rows, &failed);
    Ok(SimResults {
        psi,
        rows,
        failed,
        summary,
    })
}

fn csv_error(e: csv::Error) -> Error {
    Error::InvalidArgument(format!("csv output: {e}"))
}

/// Writes `method,n,rep,error,sqrt_n_error,ci_lo,ci_hi,hit`.
pub fn write_errors_csv<W: Write>(results: &SimResults, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for row in &results.rows {
        w.serialize(row).map_err(csv_error)?;
    }
    w.flush().map_err(|e| Error::InvalidArgument(format!("csv output: {e}")))
}

/// Writes `method,n,coverage,mean_width,failures` followed by the extra
/// summary columns.
pub fn write_coverage_csv<W: Write>(results: &SimResults, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for row in &results.summary {
        w.serialize(row).map_err(csv_error)?;
    }
    w.flush().map_err(|e| Error::InvalidArgument(format!("csv output: {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn psi_near_two_thirds() {
        let psi = true_psi(&DgpSpec::default());
        assert!((psi - 0.66).abs() < 0.01, "{psi}");
    }

    #[test]
    fn symmetric_square_value() {
        // Independent 4e6-draw Monte Carlo mean: 0.26289.
        let psi = true_psi(&DgpSpec::symmetric());
        assert!((psi - 0.26289).abs() < 1e-3, "{psi}");
    }

    #[test]
    fn zero_outcome_coefficients_give_half() {
        let dgp = DgpSpec {
            beta_mu: [0.0; 3],
            ..DgpSpec::default()
        };
        assert!((true_psi(&dgp) - 0.5).abs() < 1e-14);
    }

    #[test]
    fn nuisances_at_origin() {
        let dgp = DgpSpec::default();
        assert!((dgp.propensity(&[0.0, 0.0]) - 0.377_540_668_798_145_4).abs() < 1e-12);
        assert!((dgp.outcome_mean(&[0.0, 0.0]) - 0.075_858_180_021_243_55).abs() < 1e-12);
    }

    #[test]
    fn perturbation_scale() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let draws: Vec<f64> = (0..20_000)
            .map(|_| perturb_coefficients(&[0.0; 3], 1000, 0.3, Perturbation::PerCoordinate, &mut rng)[0])
            .collect();
        let m = draws.iter().sum::<f64>() / draws.len() as f64;
        let sd = (draws.iter().map(|d| (d - m).powi(2)).sum::<f64>() / draws.len() as f64).sqrt();
        let target = 1000f64.powf(-0.3);
        assert!((m - target).abs() < 0.005 && (sd - target).abs() < 0.005);
    }

    #[test]
    fn common_scalar_moves_all_coordinates_together() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let b = perturb_coefficients(&[1.0, 2.0, 3.0], 50, 0.0, Perturbation::CommonScalar, &mut rng);
        assert!((b[1] - b[0] - 1.0).abs() < 1e-12 && (b[2] - b[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn huge_rate_recovers_truth() {
        let dgp = DgpSpec::default();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let sim = generate_dataset(&dgp, 50, &mut rng).unwrap();
        let models = PerturbedModels::draw(&dgp, 50, 1e6, 1e6, Perturbation::PerCoordinate, &mut rng);
        let (nuis, _) = models.evaluate(&sim.data, &Bounds::default());
        for i in 0..50 {
            assert!((nuis.omega_hat[i] - sim.truth.omega_hat[i]).abs() < 1e-9);
            assert!((nuis.mu_hat[i] - sim.truth.mu_hat[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn small_study_is_reproducible() {
        let config = SimulationConfig {
            n_values: vec![60],
            reps: 6,
            seed: 9,
            methods: vec![SimMethod::Aipw, SimMethod::Main, SimMethod::Oracle],
            ..SimulationConfig::default()
        };
        let a = run_monte_carlo(&config).unwrap();
        let b = run_monte_carlo(&config).unwrap();
        assert_eq!(a.rows, b.rows);
        assert_eq!(a.summary.len(), 3);
        for s in &a.summary {
            assert!((0.0..=1.0).contains(&s.coverage));
            assert_eq!(s.failures + a.rows.iter().filter(|r| r.method == s.method).count(), 6);
        }
        let mut buf = Vec::new();
        write_coverage_csv(&a, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("method,n,coverage,mean_width,failures"));
        let mut buf = Vec::new();
        write_errors_csv(&a, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("method,n,rep,error,sqrt_n_error,ci_lo,ci_hi,hit\n"));
    }
}
