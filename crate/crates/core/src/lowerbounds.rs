//! Fluctuated density pairs used in minimax lower-bound arguments, and a
//! quadrature verifier for their norm budgets, validity and functional gaps.
//!
//! All pairs perturb base nuisances `(omega_hat, mu_hat)` on `[0, 1]^d` by
//! `S(x) = sum_j lambda_j B_j(x)`, a signed sum of bumps on `k` disjoint
//! cubes. Norms are plain Lebesgue `L2` norms on the unit cube.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::GaussLegendre;

/// Largest number of cubes accepted by [`make_bump_basis`].
pub const MAX_CUBES: usize = 4096;
/// Largest supported dimension.
pub const MAX_DIM: usize = 3;
/// Default quadrature points per axis.
pub const DEFAULT_RESOLUTION: usize = 256;

pub const NORM_TOL: f64 = 1e-6;
pub const GAP_REL_TOL: f64 = 1e-6;
pub const MASS_TOL: f64 = 1e-8;

/// Base bump `B(u) = prod_l 2 sin(4 pi u_l)` on `[0, 1/2]^d`, zero outside.
/// Over its support `int B = 0` and `int B^2 = 1`.
pub fn base_bump(u: &[f64]) -> f64 {
    let mut value = 1.0;
    for &t in u {
        if !(0.0..=0.5).contains(&t) {
            return 0.0;
        }
        value *= 2.0 * (4.0 * std::f64::consts::PI * t).sin();
    }
    value
}

/// `k` scaled and translated copies `B_j(x) = B(k^{1/d} (x - m_j))` of the
/// base bump, on disjoint cubes of side `k^{-1/d} / 2` with corners on a
/// regular lattice.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BumpBasis {
    pub k: usize,
    pub d: usize,
    pub corners: Vec<Vec<f64>>,
    /// Lattice cells per axis.
    pub cells: usize,
    /// `k^{1/d}`.
    pub scale: f64,
}

pub fn make_bump_basis(k: usize, d: usize) -> Result<BumpBasis> {
    if k == 0 {
        return Err(Error::InvalidArgument("need at least one cube".into()));
    }
    if d == 0 || d > MAX_DIM {
        return Err(Error::InvalidArgument(format!(
            "dimension must lie in 1..={MAX_DIM}, got {d}"
        )));
    }
    if k > MAX_CUBES {
        return Err(Error::KTooLarge { k, d });
    }
    let scale = (k as f64).powf(1.0 / d as f64);
    let mut cells = scale.round() as usize;
    if cells.pow(d as u32) < k {
        cells += 1;
    }
    let side = 0.5 / scale;
    let width = 1.0 / cells as f64;
    if side > width + 1e-12 {
        return Err(Error::KTooLarge { k, d });
    }
    let corners = (0..k)
        .map(|j| {
            let mut rest = j;
            let mut c = vec![0.0; d];
            for slot in c.iter_mut().rev() {
                *slot = (rest % cells) as f64 * width;
                rest /= cells;
            }
            c
        })
        .collect();
    Ok(BumpBasis {
        k,
        d,
        corners,
        cells,
        scale,
    })
}

impl BumpBasis {
    /// Side length of each cube.
    pub fn side(&self) -> f64 {
        0.5 / self.scale
    }

    pub fn bump(&self, j: usize, x: &[f64]) -> f64 {
        let u: Vec<f64> = x
            .iter()
            .zip(&self.corners[j])
            .map(|(xi, mi)| self.scale * (xi - mi))
            .collect();
        base_bump(&u)
    }

    /// Index of the cube whose lattice cell contains `x`, if any.
    fn cube_of(&self, x: &[f64]) -> Option<usize> {
        let mut j = 0;
        for &xi in x {
            let c = ((xi * self.cells as f64).floor() as isize).clamp(0, self.cells as isize - 1);
            j = j * self.cells + c as usize;
        }
        (j < self.k).then_some(j)
    }

    /// `sum_j lambda_j B_j(x)`; at most one term is nonzero.
    pub fn combination(&self, lambda: &[f64], x: &[f64]) -> f64 {
        match self.cube_of(x) {
            Some(j) => lambda[j] * self.bump(j, x),
            None => 0.0,
        }
    }

    /// Panel boundaries along `axis`: `0`, `1` and every cube edge.
    fn breakpoints(&self, axis: usize) -> Vec<f64> {
        let mut b = vec![0.0, 1.0];
        for c in &self.corners {
            b.push(c[axis]);
            b.push(c[axis] + self.side());
        }
        b.sort_by(f64::total_cmp);
        b.dedup_by(|a, b| (*a - *b).abs() < 1e-14);
        b
    }
}

/// Tensor composite Gauss-Legendre rule on `[0, 1]^d` with panels split at
/// cube edges.
pub struct CubeQuadrature {
    axes: Vec<GaussLegendre>,
}

impl CubeQuadrature {
    pub fn new(basis: &BumpBasis, resolution: usize) -> Self {
        let axes = (0..basis.d)
            .map(|axis| {
                let breaks = basis.breakpoints(axis);
                let panels = breaks.len() - 1;
                let per_panel = resolution.div_ceil(panels).max(4);
                GaussLegendre::new(per_panel).composite(&breaks)
            })
            .collect();
        CubeQuadrature { axes }
    }

    pub fn points_per_axis(&self) -> usize {
        self.axes[0].len()
    }

    /// Integrals of several integrands at once over `[0, 1]^d`.
    pub fn integrate<const M: usize, F>(&self, f: F) -> [f64; M]
    where
        F: Fn(&[f64]) -> [f64; M] + Sync,
    {
        let first = &self.axes[0];
        let partial: Vec<[f64; M]> = (0..first.len())
            .into_par_iter()
            .map(|i0| {
                let mut acc = [0.0; M];
                let mut x = vec![0.0; self.axes.len()];
                x[0] = first.nodes[i0];
                self.accumulate(1, first.weights[i0], &mut x, &f, &mut acc);
                acc
            })
            .collect();
        let mut total = [0.0; M];
        for p in partial {
            for m in 0..M {
                total[m] += p[m];
            }
        }
        total
    }

    fn accumulate<const M: usize, F>(
        &self,
        axis: usize,
        weight: f64,
        x: &mut Vec<f64>,
        f: &F,
        acc: &mut [f64; M],
    ) where
        F: Fn(&[f64]) -> [f64; M],
    {
        if axis == self.axes.len() {
            let v = f(x);
            for m in 0..M {
                acc[m] += weight * v[m];
            }
            return;
        }
        let rule = &self.axes[axis];
        for (t, w) in rule.nodes.iter().zip(&rule.weights) {
            x[axis] = *t;
            self.accumulate(axis + 1, weight * w, x, f, acc);
        }
    }

    /// Whether `f` holds at every node.
    pub fn all_nodes<F: Fn(&[f64]) -> bool + Sync>(&self, f: F) -> bool {
        let [bad] = self.integrate(|x| [if f(x) { 0.0 } else { 1.0 }]);
        bad == 0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    /// Both nuisances fluctuate; requires `eps <= delta`.
    Pure,
    /// Only the weight fluctuates, with the outcome tied to it.
    HybridOmega,
    /// Only the outcome fluctuates, with the weight tied to it.
    HybridMu,
    /// Both fluctuate at amplitude `min(eps, delta)`.
    HybridBoth,
}

impl Variant {
    pub const ALL: [Variant; 4] = [
        Variant::Pure,
        Variant::HybridOmega,
        Variant::HybridMu,
        Variant::HybridBoth,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Pure => "pure",
            Variant::HybridOmega => "hybrid-omega",
            Variant::HybridMu => "hybrid-mu",
            Variant::HybridBoth => "hybrid-both",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::InvalidArgument(format!("unknown variant '{s}'")))
    }
}

/// A real function on `[0, 1]^d`.
pub type Surface = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

pub fn constant_surface(c: f64) -> Surface {
    Arc::new(move |_| c)
}

/// Base nuisances being fluctuated; the default is `omega_hat = 2`,
/// `mu_hat = 1/2`.
#[derive(Clone)]
pub struct BaseNuisances {
    pub omega_hat: Surface,
    pub mu_hat: Surface,
}

impl Default for BaseNuisances {
    fn default() -> Self {
        BaseNuisances {
            omega_hat: constant_surface(2.0),
            mu_hat: constant_surface(0.5),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Member {
    P,
    Q,
}

/// Nuisance surfaces `(omega, mu)` of the `p` and `q` members of a pair.
#[derive(Clone)]
pub struct ConstructionPair {
    pub variant: Variant,
    pub eps: f64,
    pub delta: f64,
    pub lambda: Vec<f64>,
    pub basis: BumpBasis,
    pub omega_hat: Surface,
    pub mu_hat: Surface,
    /// Constant density scale: `f = g * omega`.
    pub g: f64,
}

impl fmt::Debug for ConstructionPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ConstructionPair")
            .field("variant", &self.variant)
            .field("eps", &self.eps)
            .field("delta", &self.delta)
            .field("lambda", &self.lambda)
            .field("g", &self.g)
            .finish_non_exhaustive()
    }
}

impl ConstructionPair {
    /// `gamma = min(eps, delta)`.
    pub fn gamma(&self) -> f64 {
        self.eps.min(self.delta)
    }

    pub fn fluctuation(&self, x: &[f64]) -> f64 {
        self.basis.combination(&self.lambda, x)
    }

    /// `(omega_p, mu_p, omega_q, mu_q)` at `x`.
    pub fn surfaces(&self, x: &[f64]) -> [f64; 4] {
        let s = self.fluctuation(x);
        let w = (self.omega_hat)(x);
        let m = (self.mu_hat)(x);
        match self.variant {
            Variant::Pure => {
                let omega = w + self.eps * s;
                let mu_p = m - self.eps * m * s / w;
                [omega, mu_p, omega, mu_p + self.delta * s / w]
            }
            Variant::HybridOmega => [w, 1.0 / w, w + self.eps * s, 1.0 / w - self.eps * s / (w * w)],
            Variant::HybridMu => [1.0 / m, m, 1.0 / m + self.delta * s, m - m * m * self.delta * s],
            Variant::HybridBoth => {
                let gamma = self.gamma();
                let omega = w + gamma * s;
                let mu_p = m - gamma * m * s / w;
                [omega, mu_p, omega, mu_p + gamma * s / w]
            }
        }
    }

    /// Joint density of `(Y, A, X)` at `(y, a, x)`:
    /// `g (omega - 1)` when `a = 0`, `g mu^y (1 - mu)^{1-y}` when `a = 1`.
    pub fn density(&self, member: Member, y: bool, a: bool, x: &[f64]) -> f64 {
        let [wp, mp, wq, mq] = self.surfaces(x);
        let (w, m) = match member {
            Member::P => (wp, mp),
            Member::Q => (wq, mq),
        };
        match (a, y) {
            (false, _) => self.g * (w - 1.0),
            (true, true) => self.g * m,
            (true, false) => self.g * (1.0 - m),
        }
    }

    /// The same construction with every `lambda_j = 0`.
    pub fn unfluctuated(&self) -> ConstructionPair {
        ConstructionPair {
            lambda: vec![0.0; self.basis.k],
            ..self.clone()
        }
    }

    /// The same construction with another sign vector.
    pub fn with_lambda(&self, lambda: Vec<f64>) -> Result<ConstructionPair> {
        check_lambda(&lambda, self.basis.k)?;
        Ok(ConstructionPair {
            lambda,
            ..self.clone()
        })
    }

    /// Closed-form `psi_q - psi_p`, integrated by `quad`.
    pub fn closed_form_gap(&self, quad: &CubeQuadrature) -> f64 {
        let [integral] = quad.integrate(|x| {
            let s = self.fluctuation(x);
            let w = (self.omega_hat)(x);
            let m = (self.mu_hat)(x);
            [match self.variant {
                Variant::Pure | Variant::HybridBoth => s * s / w,
                Variant::HybridOmega => -s * s / (w * w),
                Variant::HybridMu => -m * m * s * s,
            }]
        });
        let amp = match self.variant {
            Variant::Pure => self.eps * self.delta,
            Variant::HybridOmega => self.eps * self.eps,
            Variant::HybridMu => self.delta * self.delta,
            Variant::HybridBoth => self.gamma() * self.gamma(),
        };
        self.g * amp * integral
    }
}

fn check_lambda(lambda: &[f64], k: usize) -> Result<()> {
    if lambda.len() != k {
        return Err(Error::MismatchedLength {
            what: "lambda",
            expected: k,
            found: lambda.len(),
        });
    }
    if lambda.iter().any(|&l| l != 1.0 && l != -1.0) {
        return Err(Error::InvalidArgument("lambda entries must be +1 or -1".into()));
    }
    Ok(())
}

/// Builds the pair and checks positivity (`omega >= 1`, `0 < mu < 1`) for
/// both members on the quadrature grid of the given resolution.
pub fn build_pair(
    variant: Variant,
    eps: f64,
    delta: f64,
    basis: &BumpBasis,
    lambda: Vec<f64>,
    base: BaseNuisances,
    resolution: usize,
) -> Result<ConstructionPair> {
    let BaseNuisances { omega_hat, mu_hat } = base;
    for (name, v) in [("eps", eps), ("delta", delta)] {
        if !(v.is_finite() && v >= 0.0) {
            return Err(Error::InvalidArgument(format!("{name} must be finite and >= 0, got {v}")));
        }
    }
    if variant == Variant::Pure && eps > delta {
        return Err(Error::EpsGtDelta { eps, delta });
    }
    check_lambda(&lambda, basis.k)?;
    let quad = CubeQuadrature::new(basis, resolution);
    let [mass] = match variant {
        Variant::HybridMu => quad.integrate(|x| [1.0 / mu_hat(x)]),
        _ => quad.integrate(|x| [omega_hat(x)]),
    };
    let pair = ConstructionPair {
        variant,
        eps,
        delta,
        lambda,
        basis: basis.clone(),
        omega_hat,
        mu_hat,
        g: 1.0 / mass,
    };
    let valid = quad.all_nodes(|x| {
        let [wp, mp, wq, mq] = pair.surfaces(x);
        wp >= 1.0 && wq >= 1.0 && mp > 0.0 && mp < 1.0 && mq > 0.0 && mq < 1.0
    });
    if !valid {
        return Err(Error::InvalidDensity(format!(
            "{variant} construction leaves omega >= 1, 0 < mu < 1 at some grid point"
        )));
    }
    Ok(pair)
}

/// How a measured norm relates to its budget.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BudgetKind {
    /// Must equal the budget.
    Equal,
    /// Must not exceed the budget.
    AtMost,
    /// Reported only.
    Unconstrained,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormCheck {
    pub name: String,
    pub measured: f64,
    pub budget: Option<f64>,
    pub kind: BudgetKind,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub variant: Variant,
    pub eps: f64,
    pub delta: f64,
    pub k: usize,
    pub d: usize,
    pub points_per_axis: usize,
    pub measure: String,
    pub g: f64,
    pub norms: Vec<NormCheck>,
    pub mass_p: f64,
    pub mass_q: f64,
    pub mass_pass: bool,
    pub psi_p: f64,
    pub psi_q: f64,
    pub gap: f64,
    pub closed_form_gap: f64,
    pub gap_rel_error: f64,
    pub gap_pass: bool,
    pub all_pass: bool,
}

/// Quadrature checks of norms, unit mass and the `psi` gap.
pub fn verify_pair(pair: &ConstructionPair, resolution: usize) -> VerificationReport {
    let quad = CubeQuadrature::new(&pair.basis, resolution);
    let g = pair.g;
    let [dwp, dmp, dwq, dmq, mass_p, mass_q, psi_p, psi_q] = quad.integrate(|x| {
        let [wp, mp, wq, mq] = pair.surfaces(x);
        let w = (pair.omega_hat)(x);
        let m = (pair.mu_hat)(x);
        [
            (w - wp).powi(2),
            (m - mp).powi(2),
            (w - wq).powi(2),
            (m - mq).powi(2),
            g * wp,
            g * wq,
            g * wp * mp,
            g * wq * mq,
        ]
    });
    use BudgetKind::*;
    let (eps, delta, gamma) = (pair.eps, pair.delta, pair.gamma());
    let budgets: [(BudgetKind, f64); 4] = match pair.variant {
        Variant::Pure => [(Equal, eps), (AtMost, delta), (Equal, eps), (AtMost, delta)],
        Variant::HybridOmega => [(Equal, 0.0), (Unconstrained, 0.0), (Equal, eps), (Unconstrained, 0.0)],
        Variant::HybridMu => [(Unconstrained, 0.0), (Equal, 0.0), (Unconstrained, 0.0), (AtMost, delta)],
        Variant::HybridBoth => [(Equal, gamma), (AtMost, delta), (Equal, gamma), (AtMost, delta)],
    };
    let names = ["omega_hat - omega_p", "mu_hat - mu_p", "omega_hat - omega_q", "mu_hat - mu_q"];
    let norms: Vec<NormCheck> = [dwp, dmp, dwq, dmq]
        .iter()
        .zip(names)
        .zip(budgets)
        .map(|((sq, name), (kind, budget))| {
            let measured = sq.sqrt();
            let pass = match kind {
                Equal => (measured - budget).abs() <= NORM_TOL,
                AtMost => measured <= budget + NORM_TOL,
                Unconstrained => true,
            };
            NormCheck {
                name: name.to_string(),
                measured,
                budget: (kind != Unconstrained).then_some(budget),
                kind,
                pass,
            }
        })
        .collect();
    let mass_pass = (mass_p - 1.0).abs() <= MASS_TOL && (mass_q - 1.0).abs() <= MASS_TOL;
    let gap = psi_q - psi_p;
    let closed = pair.closed_form_gap(&quad);
    let gap_rel_error = if closed == 0.0 {
        gap.abs()
    } else {
        ((gap - closed) / closed).abs()
    };
    let gap_pass = if closed == 0.0 {
        gap.abs() <= 1e-12
    } else {
        gap_rel_error <= GAP_REL_TOL
    };
    let all_pass = mass_pass && gap_pass && norms.iter().all(|c| c.pass);
    VerificationReport {
        variant: pair.variant,
        eps,
        delta,
        k: pair.basis.k,
        d: pair.basis.d,
        points_per_axis: quad.points_per_axis(),
        measure: "lebesgue on [0,1]^d".into(),
        g,
        norms,
        mass_p,
        mass_q,
        mass_pass,
        psi_p,
        psi_q,
        gap,
        closed_form_gap: closed,
        gap_rel_error,
        gap_pass,
        all_pass,
    }
}

/// Average of the `member` density at `(y, a, x)` over all `2^k` sign
/// vectors.
pub fn lambda_average_density(pair: &ConstructionPair, member: Member, y: bool, a: bool, x: &[f64]) -> Result<f64> {
    let k = pair.basis.k;
    if k > 20 {
        return Err(Error::KTooLarge { k, d: pair.basis.d });
    }
    let mut total = 0.0;
    for bits in 0..(1u64 << k) {
        let lambda: Vec<f64> = (0..k)
            .map(|j| if bits >> j & 1 == 1 { 1.0 } else { -1.0 })
            .collect();
        total += pair.with_lambda(lambda)?.density(member, y, a, x);
    }
    Ok(total / (1u64 << k) as f64)
}
