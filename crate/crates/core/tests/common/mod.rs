//! Random instances and direct double-loop evaluations of the corrections,
//! written from the defining sums without touching the library's engine.

#![allow(dead_code)]

use drustat::data::{Bounds, Dataset, NuisanceValues};
use drustat::kernels::{KernelFamily, KernelSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const TAU: f64 = 1e-3;

pub struct Instance {
    pub y: Vec<f64>,
    pub a: Vec<f64>,
    pub omega: Vec<f64>,
    pub mu: Vec<f64>,
    pub data: Dataset,
    pub nuis: NuisanceValues,
}

/// `n` observations with omega in [1, 4], mu in (0.05, 0.95) and a mix of
/// binary and continuous outcomes.
pub fn random_instance(n: usize, seed: u64) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let binary = rng.random_bool(0.5);
    let mut y = Vec::with_capacity(n);
    let mut a = Vec::with_capacity(n);
    let mut omega = Vec::with_capacity(n);
    let mut mu = Vec::with_capacity(n);
    for i in 0..n {
        // First observation always treated so the dataset is valid.
        let treated = i == 0 || rng.random_bool(0.6);
        a.push(if treated { 1.0 } else { 0.0 });
        y.push(if binary {
            rng.random_bool(0.5) as u8 as f64
        } else {
            rng.random_range(-1.0..2.0)
        });
        omega.push(rng.random_range(1.0..4.0));
        mu.push(rng.random_range(0.05..0.95));
    }
    build(y, a, omega, mu)
}

pub fn build(y: Vec<f64>, a: Vec<f64>, omega: Vec<f64>, mu: Vec<f64>) -> Instance {
    let n = y.len();
    let data = Dataset::from_columns(
        y.clone(),
        a.iter().map(|&t| t == 1.0).collect(),
        vec![0.0; n],
        1,
        &Bounds::default(),
    )
    .unwrap();
    let nuis = NuisanceValues::new(omega.clone(), mu.clone());
    Instance {
        y,
        a,
        omega,
        mu,
        data,
        nuis,
    }
}

pub fn random_spec(rng: &mut impl Rng) -> KernelSpec {
    let family = if rng.random_bool(0.5) {
        KernelFamily::Box
    } else {
        KernelFamily::Epanechnikov
    };
    KernelSpec::new(family, rng.random_range(0.05..0.6)).unwrap()
}

/// `h^{-1} K(u / h)`.
pub fn kh(family: KernelFamily, h: f64, u: f64) -> f64 {
    let t = u / h;
    if t.abs() > 1.0 {
        return 0.0;
    }
    let k = match family {
        KernelFamily::Box => 0.5,
        KernelFamily::Epanechnikov => 0.75 * (1.0 - t * t),
    };
    k / h
}

fn left(inst: &Instance, i: usize) -> f64 {
    inst.a[i] * inst.omega[i] - 1.0
}

fn right(inst: &Instance, j: usize) -> f64 {
    inst.a[j] * (inst.y[j] - inst.mu[j])
}

pub fn naive_qhat_omega(inst: &Instance, spec: &KernelSpec, i: usize) -> f64 {
    let n = inst.y.len();
    let (f, h) = (spec.family(), spec.h());
    (0..n)
        .filter(|&j| j != i)
        .map(|j| inst.a[j] * kh(f, h, inst.omega[j] - inst.omega[i]))
        .sum::<f64>()
        / (n - 1) as f64
}

pub fn naive_qhat_2d(inst: &Instance, spec: &KernelSpec, i: usize) -> f64 {
    let n = inst.y.len();
    let (f, h) = (spec.family(), spec.h());
    (0..n)
        .filter(|&j| j != i)
        .map(|j| {
            inst.a[j] * kh(f, h, inst.omega[j] - inst.omega[i]) * kh(f, h, inst.mu[j] - inst.mu[i])
        })
        .sum::<f64>()
        / (n - 1) as f64
}

/// `Q_{-i}(mu_j)`: the sum runs over every `s != i`, including `s = j`.
pub fn naive_qhat_mu_loo(inst: &Instance, spec: &KernelSpec, i: usize, j: usize) -> f64 {
    let n = inst.y.len();
    let (f, h) = (spec.family(), spec.h());
    (0..n)
        .filter(|&s| s != i)
        .map(|s| inst.a[s] * kh(f, h, inst.mu[s] - inst.mu[j]))
        .sum::<f64>()
        / (n - 1) as f64
}

pub fn naive_t_omega(inst: &Instance, spec: &KernelSpec) -> f64 {
    let n = inst.y.len();
    let (f, h) = (spec.family(), spec.h());
    let q: Vec<f64> = (0..n).map(|i| naive_qhat_omega(inst, spec, i)).collect();
    let mut total = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                total += left(inst, i) * kh(f, h, inst.omega[j] - inst.omega[i]) / q[i].max(TAU) * right(inst, j);
            }
        }
    }
    total / (n * (n - 1)) as f64
}

pub fn naive_t_main(inst: &Instance, spec: &KernelSpec) -> f64 {
    let n = inst.y.len();
    let (f, h) = (spec.family(), spec.h());
    let q: Vec<f64> = (0..n).map(|i| naive_qhat_2d(inst, spec, i)).collect();
    let mut total = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                let w = kh(f, h, inst.omega[j] - inst.omega[i]) * kh(f, h, inst.mu[j] - inst.mu[i]);
                total += left(inst, i) * w / q[i].max(TAU) * right(inst, j);
            }
        }
    }
    total / (n * (n - 1)) as f64
}

/// Literal triple loop; only for small `n`.
pub fn naive_t_mu_cubic(inst: &Instance, spec: &KernelSpec) -> f64 {
    let n = inst.y.len();
    let (f, h) = (spec.family(), spec.h());
    let mut total = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                let q = naive_qhat_mu_loo(inst, spec, i, j);
                total += left(inst, i) * kh(f, h, inst.mu[j] - inst.mu[i]) / q.max(TAU) * right(inst, j);
            }
        }
    }
    total / (n * (n - 1)) as f64
}

/// Same sum as [`naive_t_mu_cubic`], with `Q_{-i}(mu_j)` obtained from the
/// full sum at `j` minus the `s = i` term.
pub fn naive_t_mu(inst: &Instance, spec: &KernelSpec) -> f64 {
    let n = inst.y.len();
    let (f, h) = (spec.family(), spec.h());
    let full: Vec<f64> = (0..n)
        .map(|j| (0..n).map(|s| inst.a[s] * kh(f, h, inst.mu[s] - inst.mu[j])).sum())
        .collect();
    let mut total = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                let w = kh(f, h, inst.mu[j] - inst.mu[i]);
                let q = (full[j] - inst.a[i] * w) / (n - 1) as f64;
                total += left(inst, i) * w / q.max(TAU) * right(inst, j);
            }
        }
    }
    total / (n * (n - 1)) as f64
}

pub fn naive_aipw(inst: &Instance) -> f64 {
    let n = inst.y.len();
    (0..n)
        .map(|i| inst.a[i] * inst.omega[i] * (inst.y[i] - inst.mu[i]) + inst.mu[i])
        .sum::<f64>()
        / n as f64
}

pub struct PlmInstance {
    pub y: Vec<f64>,
    pub a: Vec<f64>,
    pub v: Vec<f64>,
    pub m: Vec<f64>,
}

pub fn random_plm_instance(n: usize, seed: u64) -> PlmInstance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let continuous = rng.random_bool(0.5);
    let mut inst = PlmInstance {
        y: Vec::new(),
        a: Vec::new(),
        v: Vec::new(),
        m: Vec::new(),
    };
    for _ in 0..n {
        inst.y.push(rng.random_bool(0.4) as u8 as f64);
        inst.a.push(if continuous {
            rng.random_range(-1.0..2.0)
        } else {
            rng.random_bool(0.5) as u8 as f64
        });
        inst.v.push(rng.random_range(0.1..0.9));
        inst.m.push(rng.random_range(-1.0..1.0));
    }
    inst
}

/// PLM correction at `theta` by direct double loop.
pub fn naive_plm_t(inst: &PlmInstance, spec: &KernelSpec, theta: f64) -> f64 {
    let n = inst.y.len();
    let (f, h) = (spec.family(), spec.h());
    let w = |i: usize, j: usize| kh(f, h, inst.v[j] - inst.v[i]) * kh(f, h, inst.m[j] - inst.m[i]);
    let mut total = 0.0;
    for i in 0..n {
        let q = (0..n)
            .filter(|&s| s != i)
            .map(|s| (1.0 - inst.y[s]) * w(i, s))
            .sum::<f64>()
            / (n - 1) as f64;
        let li = inst.y[i] * (-theta * inst.a[i] - inst.m[i]).exp() - (1.0 - inst.y[i]);
        for j in 0..n {
            if j != i {
                total += li * w(i, j) / q.max(TAU) * (1.0 - inst.y[j]) * (inst.a[j] - inst.v[j]);
            }
        }
    }
    total / (n * (n - 1)) as f64
}

/// Uncorrected PLM moment minus [`naive_plm_t`].
pub fn naive_plm_moment(inst: &PlmInstance, spec: &KernelSpec, theta: f64) -> f64 {
    let n = inst.y.len();
    let direct = (0..n)
        .map(|i| {
            (inst.a[i] - inst.v[i]) * (inst.y[i] * (-theta * inst.a[i] - inst.m[i]).exp() - (1.0 - inst.y[i]))
        })
        .sum::<f64>()
        / n as f64;
    direct - naive_plm_t(inst, spec, theta)
}

pub fn rel_err(got: f64, want: f64) -> f64 {
    if got == want {
        0.0
    } else {
        (got - want).abs() / want.abs()
    }
}
