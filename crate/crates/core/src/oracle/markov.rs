//! Markov-chain utilities: stationary laws, communicating structure, and
//! total-variation distances.

use std::collections::VecDeque;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};

/// Unique `μ` with `μᵀK = μᵀ` and `Σμ = 1`.
///
/// Solves the stacked system `[Kᵀ − I; 𝟙ᵀ] μ = [0; 1]` in the least-squares
/// sense. A column-rank-deficient stack means the invariant law is not unique.
pub fn stationary_distribution(k: &DMatrix<f64>) -> Result<DVector<f64>> {
    let n = k.nrows();
    if k.ncols() != n {
        return Err(Error::Dimension {
            what: "kernel columns",
            expected: n,
            got: k.ncols(),
        });
    }
    let mut m = DMatrix::zeros(n + 1, n);
    m.view_mut((0, 0), (n, n))
        .copy_from(&(k.transpose() - DMatrix::identity(n, n)));
    m.row_mut(n).fill(1.0);
    let mut rhs = DVector::zeros(n + 1);
    rhs[n] = 1.0;

    let svd = m.svd(true, true);
    let smax = svd.singular_values.max();
    let cut = 1e-10 * smax.max(1.0);
    let rank = svd.singular_values.iter().filter(|s| **s > cut).count();
    if rank < n {
        return Err(Error::NotUnique { rank, n });
    }
    svd.solve(&rhs, cut)
        .map_err(|_| Error::Singular {
            context: "stationary distribution",
            cond: f64::INFINITY,
        })
}

/// Communicating structure of the support graph of a stochastic matrix.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ChainStructure {
    pub irreducible: bool,
    /// Period of the class reached from node 0.
    pub period: usize,
}

impl ChainStructure {
    pub fn ergodic(&self) -> bool {
        self.irreducible && self.period == 1
    }
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

fn reachable(k: &DMatrix<f64>, from: usize, transpose: bool) -> Vec<bool> {
    let n = k.nrows();
    let mut seen = vec![false; n];
    let mut queue = VecDeque::from([from]);
    seen[from] = true;
    while let Some(u) = queue.pop_front() {
        for v in 0..n {
            let w = if transpose { k[(v, u)] } else { k[(u, v)] };
            if w > 0.0 && !seen[v] {
                seen[v] = true;
                queue.push_back(v);
            }
        }
    }
    seen
}

/// Irreducibility by forward/backward reachability from node 0, and the
/// period as the gcd of `level(u) + 1 − level(v)` over support edges.
pub fn chain_structure(k: &DMatrix<f64>) -> ChainStructure {
    let n = k.nrows();
    if n == 0 {
        return ChainStructure { irreducible: false, period: 0 };
    }
    let fwd = reachable(k, 0, false);
    let bwd = reachable(k, 0, true);
    let irreducible = fwd.iter().all(|b| *b) && bwd.iter().all(|b| *b);

    let mut level = vec![usize::MAX; n];
    level[0] = 0;
    let mut queue = VecDeque::from([0usize]);
    while let Some(u) = queue.pop_front() {
        for v in 0..n {
            if k[(u, v)] > 0.0 && level[v] == usize::MAX {
                level[v] = level[u] + 1;
                queue.push_back(v);
            }
        }
    }
    let mut period = 0;
    for u in 0..n {
        if level[u] == usize::MAX {
            continue;
        }
        for v in 0..n {
            if k[(u, v)] > 0.0 && level[v] != usize::MAX {
                let diff = (level[u] + 1).abs_diff(level[v]);
                period = gcd(period, diff);
            }
        }
    }
    ChainStructure { irreducible, period }
}

/// `½ Σ |p_i − q_i|`.
pub fn tv_distance(p: &[f64], q: &[f64]) -> f64 {
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}
