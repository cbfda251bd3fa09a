//! Reference computations written with plain loops and iteration, kept apart
//! from the library's linear-solve routes so the two can check each other.

#![allow(dead_code, clippy::needless_range_loop)]

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use tbac::features::CriticFeatures;
use tbac::mdp::{garnet, seeded_rng, FiniteMdp};
use tbac::policy::PolicyFeatures;

/// Softmax over `θᵀx(s,·)` computed directly.
pub fn softmax(xf: &PolicyFeatures, theta: &[f64], s: usize) -> Vec<f64> {
    let logits: Vec<f64> = (0..xf.n_actions)
        .map(|a| xf.x(s, a).iter().zip(theta).map(|(x, t)| x * t).sum())
        .collect();
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|l| (l - m).exp()).collect();
    let z: f64 = e.iter().sum();
    e.into_iter().map(|v| v / z).collect()
}

/// `P_θ[s][s']` and `R_θ[s]` by summing over actions.
pub fn policy_chain(mdp: &FiniteMdp, xf: &PolicyFeatures, theta: &[f64]) -> (Vec<Vec<f64>>, Vec<f64>) {
    let (n, na) = (mdp.n_states, mdp.n_actions);
    let mut p = vec![vec![0.0; n]; n];
    let mut r = vec![0.0; n];
    for s in 0..n {
        let pi = softmax(xf, theta, s);
        for a in 0..na {
            r[s] += pi[a] * mdp.reward[s * na + a];
            for s2 in 0..n {
                p[s][s2] += pi[a] * mdp.kernel[(s * na + a) * n + s2];
            }
        }
    }
    (p, r)
}

/// `V_π` by repeated Bellman backups until the sup-norm change is below `tol`.
pub fn value_iteration(mdp: &FiniteMdp, xf: &PolicyFeatures, theta: &[f64], tol: f64) -> Vec<f64> {
    let (p, r) = policy_chain(mdp, xf, theta);
    let n = mdp.n_states;
    let g = mdp.discount;
    let mut v = vec![0.0; n];
    loop {
        let next: Vec<f64> = (0..n)
            .map(|s| r[s] + g * (0..n).map(|j| p[s][j] * v[j]).sum::<f64>())
            .collect();
        let change = next.iter().zip(&v).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        v = next;
        // Contraction: remaining error ≤ γ/(1−γ) · change.
        if change * g / (1.0 - g) < tol {
            return v;
        }
    }
}

/// `J(θ) = ρᵀV_π` from value iteration.
pub fn objective_vi(mdp: &FiniteMdp, xf: &PolicyFeatures, theta: &[f64]) -> f64 {
    let v = value_iteration(mdp, xf, theta, 1e-15);
    mdp.init_dist.iter().zip(&v).map(|(a, b)| a * b).sum()
}

/// `(1−γ) Σ_k γ^k ρᵀP_θ^k`, truncated once the tail mass `γ^K` drops below `tail`.
pub fn series_occupancy(mdp: &FiniteMdp, xf: &PolicyFeatures, theta: &[f64], tail: f64) -> Vec<f64> {
    let (p, _) = policy_chain(mdp, xf, theta);
    let n = mdp.n_states;
    let g = mdp.discount;
    let mut row = mdp.init_dist.clone();
    let mut acc = vec![0.0; n];
    let mut weight = 1.0 - g;
    let mut remaining = 1.0;
    while remaining >= tail {
        for s in 0..n {
            acc[s] += weight * row[s];
        }
        row = (0..n).map(|j| (0..n).map(|i| row[i] * p[i][j]).sum()).collect();
        weight *= g;
        remaining *= g;
    }
    acc
}

/// Central differences of `f` at `x` with step `h`.
pub fn central_diff(f: impl Fn(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    (0..x.len())
        .map(|i| {
            let mut up = x.to_vec();
            let mut dn = x.to_vec();
            up[i] += h;
            dn[i] -= h;
            (f(&up) - f(&dn)) / (2.0 * h)
        })
        .collect()
}

/// Weighted least squares `argmin_w Σ_s d_s (φ_sᵀw − y_s)²` via SVD of `√D Φ`.
pub fn wls(phi: &DMatrix<f64>, d: &[f64], y: &[f64]) -> DVector<f64> {
    let a = DMatrix::from_fn(phi.nrows(), phi.ncols(), |s, j| d[s].sqrt() * phi[(s, j)]);
    let b = DVector::from_fn(phi.nrows(), |s, _| d[s].sqrt() * y[s]);
    a.svd(true, true).solve(&b, 1e-14).expect("svd solve")
}

/// `T_θ V` with loops.
pub fn bellman(mdp: &FiniteMdp, xf: &PolicyFeatures, theta: &[f64], v: &[f64]) -> Vec<f64> {
    let (p, r) = policy_chain(mdp, xf, theta);
    let n = mdp.n_states;
    (0..n)
        .map(|s| r[s] + mdp.discount * (0..n).map(|j| p[s][j] * v[j]).sum::<f64>())
        .collect()
}

/// `G`, `Ḡ`, `h` by explicit sums over states.
pub fn critic_matrices_loop(
    mdp: &FiniteMdp,
    xf: &PolicyFeatures,
    theta: &[f64],
    phi: &DMatrix<f64>,
    d: &[f64],
) -> (DMatrix<f64>, DMatrix<f64>, DVector<f64>) {
    let (p, r) = policy_chain(mdp, xf, theta);
    let (n, m) = (phi.nrows(), phi.ncols());
    let mut g = DMatrix::zeros(m, m);
    let mut gb = DMatrix::zeros(m, m);
    let mut h = DVector::zeros(m);
    for s in 0..n {
        for i in 0..m {
            h[i] += d[s] * phi[(s, i)] * r[s];
            for j in 0..m {
                gb[(i, j)] += d[s] * phi[(s, i)] * phi[(s, j)];
                let ev: f64 = (0..n).map(|s2| p[s][s2] * phi[(s2, j)]).sum();
                g[(i, j)] += d[s] * phi[(s, i)] * (phi[(s, j)] - mdp.discount * ev);
            }
        }
    }
    (g, gb, h)
}

pub fn l1(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
}

pub fn l2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

pub fn gaussian_vec(len: usize, scale: f64, seed: u64) -> DVector<f64> {
    let mut rng = seeded_rng(seed);
    DVector::from_fn(len, |_, _| {
        let z: f64 = StandardNormal.sample(&mut rng);
        scale * z
    })
}

/// Random 5-state, 3-action, γ = 0.9 MDP with dense Gaussian policy features.
pub fn random_problem(seed: u64) -> (FiniteMdp, PolicyFeatures, DVector<f64>) {
    let mut rng = seeded_rng(seed ^ 0x5eed);
    let branching: usize = rng.random_range(2..=5);
    let mdp = garnet(5, 3, branching, 0.9, seed).expect("garnet");
    let dim = 4;
    let data: Vec<f64> = (0..5 * 3 * dim).map(|_| StandardNormal.sample(&mut rng)).collect();
    let xf = PolicyFeatures::new(5, 3, dim, data).expect("features");
    let theta = gaussian_vec(dim, 1.0, seed.wrapping_add(7));
    (mdp, xf, theta)
}

/// Two states, two actions, deterministic-ish kernel, γ = 0.5, ρ = (1, 0).
pub fn two_state_mdp() -> FiniteMdp {
    FiniteMdp::new(
        2,
        2,
        vec![
            0.0, 1.0, // (0, 0) -> 1
            1.0, 0.0, // (0, 1) -> 0
            1.0, 0.0, // (1, 0) -> 0
            0.5, 0.5, // (1, 1)
        ],
        vec![1.0, 0.0, 0.5, 2.0],
        0.5,
        vec![1.0, 0.0],
    )
    .expect("valid two-state mdp")
}

/// Two-state critic with rows `(1, 0)` and `(0.5, 1)`.
pub fn two_state_critic() -> CriticFeatures {
    CriticFeatures::new(DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.5, 1.0])).expect("rank 2")
}

/// `|count/n − p| ≤ k` standard errors of a Binomial(n, p) proportion.
pub fn within_sigmas(count: usize, n: usize, p: f64, k: f64) -> bool {
    let se = (p * (1.0 - p) / n as f64).sqrt().max(1e-12);
    ((count as f64 / n as f64) - p).abs() <= k * se
}
