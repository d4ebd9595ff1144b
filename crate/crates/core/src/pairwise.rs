//! Pairwise kernel sums over `i != j`.
//!
//! Every U-statistic in the crate reduces to sums of the form
//! `sum_{j != i} K_h(c_j - c_i) v_j` for each `i`. Below
//! [`FAST_PATH_THRESHOLD`] points these are computed by the plain double
//! loop. Above it, candidates are restricted to the kernel support: a sorted
//! sliding window on the line, or a bucket grid with cells slightly wider
//! than `h` in the plane. Both paths evaluate the same kernel weights; only
//! the summation order within a row differs.
//!
//! Rows are computed independently and reduced in index order, so results
//! do not depend on the number of worker threads.

use std::collections::HashMap;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::kernels::KernelSpec;

/// Point count at which [`Strategy::Auto`] switches to the fast path.
pub const FAST_PATH_THRESHOLD: usize = 512;

/// Relative slack on grid cell width so that support membership decided by
/// `|u / h| <= 1` never spans more than one neighboring cell.
const CELL_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Strategy {
    #[default]
    Auto,
    Naive,
    Fast,
}

/// Kernel centers: scalars on a line, or pairs with a product kernel.
#[derive(Debug, Clone, Copy)]
pub enum Centers<'a> {
    Line(&'a [f64]),
    Plane(&'a [f64], &'a [f64]),
}

impl Centers<'_> {
    pub fn len(&self) -> usize {
        match self {
            Centers::Line(c) => c.len(),
            Centers::Plane(c, _) => c.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

enum Layout {
    Naive,
    Sorted { order: Vec<usize>, rank: Vec<usize> },
    Grid {
        cell_of: Vec<(i64, i64)>,
        cells: HashMap<(i64, i64), Vec<usize>>,
    },
}

/// Neighbor structure over a fixed set of centers and kernel.
pub struct PairIndex<'a> {
    centers: Centers<'a>,
    spec: KernelSpec,
    layout: Layout,
}

impl<'a> PairIndex<'a> {
    pub fn new(centers: Centers<'a>, spec: KernelSpec, strategy: Strategy) -> Result<Self> {
        if let Centers::Plane(u, v) = centers {
            if u.len() != v.len() {
                return Err(Error::MismatchedLength {
                    what: "second center coordinate",
                    expected: u.len(),
                    found: v.len(),
                });
            }
        }
        let n = centers.len();
        let fast = match strategy {
            Strategy::Auto => n >= FAST_PATH_THRESHOLD,
            Strategy::Naive => false,
            Strategy::Fast => true,
        };
        let layout = if !fast {
            Layout::Naive
        } else {
            match centers {
                Centers::Line(c) => {
                    let mut order: Vec<usize> = (0..n).collect();
                    order.sort_by(|&a, &b| c[a].total_cmp(&c[b]).then(a.cmp(&b)));
                    let mut rank = vec![0; n];
                    for (r, &i) in order.iter().enumerate() {
                        rank[i] = r;
                    }
                    Layout::Sorted { order, rank }
                }
                Centers::Plane(u, v) => {
                    let width = spec.h() * (1.0 + CELL_SLACK);
                    let cell_of: Vec<(i64, i64)> = (0..n)
                        .map(|i| {
                            (
                                (u[i] / width).floor() as i64,
                                (v[i] / width).floor() as i64,
                            )
                        })
                        .collect();
                    let mut cells: HashMap<(i64, i64), Vec<usize>> = HashMap::new();
                    for (i, &cell) in cell_of.iter().enumerate() {
                        cells.entry(cell).or_default().push(i);
                    }
                    Layout::Grid { cell_of, cells }
                }
            }
        };
        Ok(PairIndex {
            centers,
            spec,
            layout,
        })
    }

    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }

    pub fn spec(&self) -> &KernelSpec {
        &self.spec
    }

    pub fn is_fast(&self) -> bool {
        !matches!(self.layout, Layout::Naive)
    }

    /// Kernel weight between centers `i` and `j`: `K_h(c_j - c_i)` on the
    /// line, `K_h(u_j - u_i) K_h(v_j - v_i)` in the plane.
    #[inline]
    pub fn weight(&self, i: usize, j: usize) -> f64 {
        match self.centers {
            Centers::Line(c) => self.spec.kh(c[j] - c[i]),
            Centers::Plane(u, v) => {
                let first = self.spec.kh(u[j] - u[i]);
                if first == 0.0 {
                    0.0
                } else {
                    first * self.spec.kh(v[j] - v[i])
                }
            }
        }
    }

    /// Weight of a center with itself, `K_h(0)` or `K_h(0)^2`.
    pub fn self_weight(&self) -> f64 {
        let k0 = self.spec.kh(0.0);
        match self.centers {
            Centers::Line(_) => k0,
            Centers::Plane(..) => k0 * k0,
        }
    }

    /// Calls `f(j, w_ij)` for every `j != i` that can carry nonzero weight.
    /// The naive layout visits every `j`; the fast layouts only candidates
    /// inside the kernel support.
    #[inline]
    pub fn for_each_neighbor<F: FnMut(usize, f64)>(&self, i: usize, mut f: F) {
        match &self.layout {
            Layout::Naive => {
                for j in 0..self.len() {
                    if j != i {
                        f(j, self.weight(i, j));
                    }
                }
            }
            Layout::Sorted { order, rank } => {
                let Centers::Line(c) = self.centers else {
                    unreachable!()
                };
                let r = rank[i];
                let ci = c[i];
                for &j in order[..r].iter().rev() {
                    let u = c[j] - ci;
                    if !self.spec.in_support(u) {
                        break;
                    }
                    f(j, self.spec.kh(u));
                }
                for &j in &order[r + 1..] {
                    let u = c[j] - ci;
                    if !self.spec.in_support(u) {
                        break;
                    }
                    f(j, self.spec.kh(u));
                }
            }
            Layout::Grid { cell_of, cells } => {
                let (cx, cy) = cell_of[i];
                for dx in -1..=1 {
                    for dy in -1..=1 {
                        if let Some(members) = cells.get(&(cx + dx, cy + dy)) {
                            for &j in members {
                                if j != i {
                                    let w = self.weight(i, j);
                                    if w != 0.0 {
                                        f(j, w);
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
    }

    /// Row reduction `out[i] = row(i)`, computed in parallel over `i`.
    pub fn map_rows<F>(&self, row: F) -> Vec<f64>
    where
        F: Fn(usize) -> f64 + Sync + Send,
    {
        (0..self.len()).into_par_iter().map(row).collect()
    }

    /// `s_i = sum_{j != i} w_ij values_j` for every `i`.
    pub fn neighbor_sums(&self, values: &[f64]) -> Vec<f64> {
        assert_eq!(values.len(), self.len(), "values length");
        self.map_rows(|i| {
            let mut acc = 0.0;
            self.for_each_neighbor(i, |j, w| acc += w * values[j]);
            acc
        })
    }

    /// `sum_{i != j} left_i w_ij right_j`.
    pub fn weighted_sum(&self, left: &[f64], right: &[f64]) -> f64 {
        assert_eq!(left.len(), self.len(), "left length");
        let rows = self.neighbor_sums(right);
        left.iter().zip(&rows).map(|(l, r)| l * r).sum()
    }
}

/// Which double sum [`pairwise_weighted_sum`] evaluates.
#[derive(Debug, Clone, Copy)]
pub enum SumMode<'a> {
    /// One-dimensional kernel in the first center coordinate.
    Line,
    /// One-dimensional kernel with the leave-one-out normalizer centered at
    /// `j`: each term is divided by
    /// `max(floor, (n-1)^{-1} sum_{s != i} weights_s K_h(c_s - c_j))`.
    LeaveOneOut {
        normalizer_weights: &'a [f64],
        floor: f64,
    },
    /// Product kernel over both center coordinates.
    Product,
}

/// Full-sum normalizer `S_j = sum_s a_s K_h(c_s - c_j)` including `s = j`,
/// from which leave-one-out values are obtained by subtracting one term.
pub(crate) fn loo_full_sums(index: &PairIndex<'_>, normalizer_weights: &[f64]) -> Vec<f64> {
    let k0 = index.self_weight();
    index
        .neighbor_sums(normalizer_weights)
        .into_iter()
        .zip(normalizer_weights)
        .map(|(s, a)| s + a * k0)
        .collect()
}

/// `sum_{i != j} left_i * kernel_term_ij * right_j` under `mode`.
pub fn pairwise_weighted_sum(
    left: &[f64],
    right: &[f64],
    centers: Centers<'_>,
    spec: KernelSpec,
    mode: SumMode<'_>,
    strategy: Strategy,
) -> Result<f64> {
    let n = centers.len();
    for (what, len) in [("left", left.len()), ("right", right.len())] {
        if len != n {
            return Err(Error::MismatchedLength {
                what,
                expected: n,
                found: len,
            });
        }
    }
    let centers = match (mode, centers) {
        (SumMode::Product, Centers::Line(_)) => {
            return Err(Error::InvalidArgument(
                "product mode needs two center coordinates".into(),
            ))
        }
        (SumMode::Product, c) => c,
        (_, Centers::Plane(u, _)) => Centers::Line(u),
        (_, c) => c,
    };
    let index = PairIndex::new(centers, spec, strategy)?;
    match mode {
        SumMode::Line | SumMode::Product => Ok(index.weighted_sum(left, right)),
        SumMode::LeaveOneOut {
            normalizer_weights,
            floor,
        } => {
            if normalizer_weights.len() != n {
                return Err(Error::MismatchedLength {
                    what: "normalizer weights",
                    expected: n,
                    found: normalizer_weights.len(),
                });
            }
            if n < 2 {
                return Ok(0.0);
            }
            let full = loo_full_sums(&index, normalizer_weights);
            let scale = (n - 1) as f64;
            let rows = index.map_rows(|i| {
                let mut acc = 0.0;
                index.for_each_neighbor(i, |j, w| {
                    if w != 0.0 && right[j] != 0.0 {
                        let q = ((full[j] - normalizer_weights[i] * w) / scale).max(floor);
                        acc += w / q * right[j];
                    }
                });
                acc
            });
            Ok(left.iter().zip(&rows).map(|(l, r)| l * r).sum())
        }
    }
}
