//! Finite MDPs, their validation, and the two sampling kernels.
//!
//! The sampler follows the artificial-kernel construction: from the current
//! chain state `S̃_t` and action `A_t` it draws a true successor `S_{t+1}` from
//! `p`, then either keeps it (with probability γ) or resets to a fresh draw
//! from the initial distribution ρ.

use std::fmt;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Deterministic, platform-independent generator used for every random draw.
pub type SimRng = ChaCha8Rng;

pub fn seeded_rng(seed: u64) -> SimRng {
    ChaCha8Rng::seed_from_u64(seed)
}

const PROB_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FiniteMdp {
    pub n_states: usize,
    pub n_actions: usize,
    /// `p(s'|s,a)` stored at `(s * n_actions + a) * n_states + s'`.
    pub kernel: Vec<f64>,
    /// `R(s,a)` stored at `s * n_actions + a`.
    pub reward: Vec<f64>,
    pub reward_noise_halfwidth: f64,
    pub discount: f64,
    pub init_dist: Vec<f64>,
    /// Declared `U_R`; when absent no reward bound is enforced.
    pub reward_bound: Option<f64>,
}

/// One failed invariant of a [`FiniteMdp`].
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    EmptySpace { n_states: usize, n_actions: usize },
    Shape { field: &'static str, expected: usize, got: usize },
    NonFinite { field: &'static str, index: usize },
    KernelRowSum { state: usize, action: usize, sum: f64 },
    KernelNegative { state: usize, action: usize, next: usize, value: f64 },
    InitDistSum { sum: f64 },
    InitDistNegative { state: usize, value: f64 },
    Discount { value: f64 },
    NoiseHalfwidth { value: f64 },
    RewardBound { state: usize, action: usize, magnitude: f64, bound: f64 },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::EmptySpace { n_states, n_actions } => {
                write!(f, "n_states={n_states}, n_actions={n_actions}: both must be positive")
            }
            Violation::Shape { field, expected, got } => {
                write!(f, "{field}: expected {expected} entries, got {got}")
            }
            Violation::NonFinite { field, index } => write!(f, "{field}[{index}] is not finite"),
            Violation::KernelRowSum { state, action, sum } => {
                write!(f, "kernel(s={state}, a={action}) sums to {sum}")
            }
            Violation::KernelNegative { state, action, next, value } => {
                write!(f, "kernel(s={state}, a={action}, s'={next}) = {value} is negative")
            }
            Violation::InitDistSum { sum } => write!(f, "init_dist sums to {sum}"),
            Violation::InitDistNegative { state, value } => {
                write!(f, "init_dist[{state}] = {value} is negative")
            }
            Violation::Discount { value } => write!(f, "discount = {value} is outside (0, 1)"),
            Violation::NoiseHalfwidth { value } => {
                write!(f, "reward_noise_halfwidth = {value} is negative")
            }
            Violation::RewardBound { state, action, magnitude, bound } => write!(
                f,
                "reward(s={state}, a={action}): |R| + noise = {magnitude} exceeds U_R = {bound}"
            ),
        }
    }
}

impl FiniteMdp {
    /// Builds an MDP and rejects it unless [`FiniteMdp::validate`] is clean.
    pub fn new(
        n_states: usize,
        n_actions: usize,
        kernel: Vec<f64>,
        reward: Vec<f64>,
        discount: f64,
        init_dist: Vec<f64>,
    ) -> Result<Self> {
        let mdp = FiniteMdp {
            n_states,
            n_actions,
            kernel,
            reward,
            reward_noise_halfwidth: 0.0,
            discount,
            init_dist,
            reward_bound: None,
        };
        mdp.checked()
    }

    pub fn checked(self) -> Result<Self> {
        let v = self.validate();
        if v.is_empty() {
            Ok(self)
        } else {
            Err(Error::InvalidMdp(v.iter().map(|x| x.to_string()).collect()))
        }
    }

    pub fn with_reward_noise(mut self, halfwidth: f64) -> Self {
        self.reward_noise_halfwidth = halfwidth;
        self
    }

    pub fn with_reward_bound(mut self, bound: f64) -> Self {
        self.reward_bound = Some(bound);
        self
    }

    /// Lists every violated invariant; empty iff the MDP is well formed.
    pub fn validate(&self) -> Vec<Violation> {
        let (n, na) = (self.n_states, self.n_actions);
        let mut out = Vec::new();
        if n == 0 || na == 0 {
            out.push(Violation::EmptySpace { n_states: n, n_actions: na });
            return out;
        }
        let shapes = [
            ("kernel", n * na * n, self.kernel.len()),
            ("reward", n * na, self.reward.len()),
            ("init_dist", n, self.init_dist.len()),
        ];
        for (field, expected, got) in shapes {
            if expected != got {
                out.push(Violation::Shape { field, expected, got });
            }
        }
        if !out.is_empty() {
            return out;
        }
        for (field, data) in [
            ("kernel", &self.kernel),
            ("reward", &self.reward),
            ("init_dist", &self.init_dist),
        ] {
            if let Some(index) = data.iter().position(|v| !v.is_finite()) {
                out.push(Violation::NonFinite { field, index });
            }
        }
        for s in 0..n {
            for a in 0..na {
                let row = self.kernel_row(s, a);
                if let Some((next, &value)) = row.iter().enumerate().find(|(_, v)| **v < 0.0) {
                    out.push(Violation::KernelNegative { state: s, action: a, next, value });
                }
                let sum: f64 = row.iter().sum();
                if (sum - 1.0).abs() > PROB_TOL {
                    out.push(Violation::KernelRowSum { state: s, action: a, sum });
                }
            }
        }
        if let Some((state, &value)) = self.init_dist.iter().enumerate().find(|(_, v)| **v < 0.0) {
            out.push(Violation::InitDistNegative { state, value });
        }
        let sum: f64 = self.init_dist.iter().sum();
        if (sum - 1.0).abs() > PROB_TOL {
            out.push(Violation::InitDistSum { sum });
        }
        if !(self.discount > 0.0 && self.discount < 1.0) {
            out.push(Violation::Discount { value: self.discount });
        }
        let w = self.reward_noise_halfwidth;
        if !w.is_finite() || w < 0.0 {
            out.push(Violation::NoiseHalfwidth { value: w });
        }
        if let Some(bound) = self.reward_bound {
            for s in 0..n {
                for a in 0..na {
                    let magnitude = self.reward(s, a).abs() + w;
                    if magnitude > bound {
                        out.push(Violation::RewardBound { state: s, action: a, magnitude, bound });
                    }
                }
            }
        }
        out
    }

    #[inline]
    pub fn kernel_row(&self, s: usize, a: usize) -> &[f64] {
        let start = (s * self.n_actions + a) * self.n_states;
        &self.kernel[start..start + self.n_states]
    }

    #[inline]
    pub fn reward(&self, s: usize, a: usize) -> f64 {
        self.reward[s * self.n_actions + a]
    }

    /// `p̃(·|s,a) = γ p(·|s,a) + (1−γ) ρ`, in the same layout as `kernel`.
    pub fn artificial_kernel(&self) -> Vec<f64> {
        let g = self.discount;
        let n = self.n_states;
        self.kernel
            .iter()
            .enumerate()
            .map(|(i, p)| g * p + (1.0 - g) * self.init_dist[i % n])
            .collect()
    }

    /// Samples one transition of the artificial chain from `chain`, advancing it.
    pub fn sample_env_step(&self, chain: &mut ChainState, action: usize) -> Result<EnvStep> {
        if action >= self.n_actions {
            return Err(Error::OutOfRange {
                what: "action",
                index: action,
                limit: self.n_actions,
            });
        }
        let s = chain.tilde_state;
        let next_state = sample_categorical(self.kernel_row(s, action), &mut chain.rng);
        // Always consumed so trajectories do not depend on the noise width.
        let noise_u: f64 = chain.rng.random();
        let w = self.reward_noise_halfwidth;
        let reward = self.reward(s, action) + w * (2.0 * noise_u - 1.0);
        let reset_state = sample_categorical(&self.init_dist, &mut chain.rng);
        let keep = chain.rng.random::<f64>() < self.discount;
        let next_tilde = if keep { next_state } else { reset_state };
        chain.tilde_state = next_tilde;
        chain.step += 1;
        Ok(EnvStep {
            next_state,
            reward,
            bernoulli: keep,
            next_tilde,
        })
    }
}

/// The sampler's position on the artificial chain.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainState {
    pub tilde_state: usize,
    pub rng: SimRng,
    pub step: u64,
}

impl ChainState {
    /// Starts a chain with `S̃_0 ~ ρ`.
    pub fn new(mdp: &FiniteMdp, seed: u64) -> Self {
        let mut rng = seeded_rng(seed);
        let tilde_state = sample_categorical(&mdp.init_dist, &mut rng);
        ChainState { tilde_state, rng, step: 0 }
    }

    pub fn at(state: usize, seed: u64) -> Self {
        ChainState {
            tilde_state: state,
            rng: seeded_rng(seed),
            step: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnvStep {
    /// `S_{t+1} ~ p(·|S̃_t, A_t)`.
    pub next_state: usize,
    pub reward: f64,
    /// `B_{t+1}`: true when the chain kept `S_{t+1}` rather than resetting.
    pub bernoulli: bool,
    /// `S̃_{t+1}`.
    pub next_tilde: usize,
}

/// Inverse-CDF draw, accumulating left to right. Rounding residue falls into
/// the last bucket with positive mass.
pub fn sample_categorical<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    categorical_index(probs, u)
}

pub fn categorical_index(probs: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p > 0.0 {
            last_positive = i;
            acc += p;
            if u < acc {
                return i;
            }
        }
    }
    last_positive
}

/// Garnet-style random MDP: each `(s,a)` has `branching` distinct successors
/// with Dirichlet(1,…,1) weights, rewards uniform on `[0,1]`, uniform ρ.
pub fn garnet(
    n_states: usize,
    n_actions: usize,
    branching: usize,
    discount: f64,
    seed: u64,
) -> Result<FiniteMdp> {
    if branching == 0 || branching > n_states {
        return Err(Error::Config(format!(
            "garnet branching {branching} must lie in 1..={n_states}"
        )));
    }
    let mut rng = seeded_rng(seed);
    let mut kernel = vec![0.0; n_states * n_actions * n_states];
    for sa in 0..n_states * n_actions {
        let succ = index::sample(&mut rng, n_states, branching);
        let weights: Vec<f64> = (0..branching).map(|_| Exp1.sample(&mut rng)).collect();
        let total: f64 = weights.iter().sum();
        for (j, w) in succ.iter().zip(weights) {
            kernel[sa * n_states + j] = w / total;
        }
    }
    let reward = (0..n_states * n_actions).map(|_| rng.random::<f64>()).collect();
    let init_dist = vec![1.0 / n_states as f64; n_states];
    let mdp = FiniteMdp {
        n_states,
        n_actions,
        kernel,
        reward,
        reward_noise_halfwidth: 0.0,
        discount,
        init_dist,
        reward_bound: Some(1.0),
    };
    mdp.checked()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_state() -> FiniteMdp {
        FiniteMdp::new(
            2,
            1,
            vec![0.3, 0.7, 0.6, 0.4],
            vec![1.0, -1.0],
            0.9,
            vec![0.5, 0.5],
        )
        .unwrap()
    }

    #[test]
    fn well_formed_has_no_violations() {
        assert!(two_state().validate().is_empty());
    }

    #[test]
    fn short_row_is_named() {
        let mut m = two_state();
        m.kernel[0] = 0.5;
        m.kernel[1] = 0.4;
        let v = m.validate();
        assert_eq!(v.len(), 1);
        assert!(matches!(v[0], Violation::KernelRowSum { state: 0, action: 0, .. }));
        assert!(v[0].to_string().contains("s=0, a=0"));
    }

    #[test]
    fn bad_init_dist_is_named() {
        let mut m = two_state();
        m.init_dist = vec![1.0, 0.1];
        let v = m.validate();
        assert_eq!(v.len(), 1);
        assert!(v[0].to_string().contains("init_dist"));
    }

    #[test]
    fn discount_and_bound_checked() {
        let mut m = two_state();
        m.discount = 1.0;
        m.reward_noise_halfwidth = 0.5;
        m.reward_bound = Some(1.2);
        let v = m.validate();
        assert!(v.iter().any(|x| matches!(x, Violation::Discount { .. })));
        assert_eq!(v.iter().filter(|x| matches!(x, Violation::RewardBound { .. })).count(), 2);
    }

    #[test]
    fn artificial_kernel_hand_case() {
        let m = FiniteMdp::new(2, 1, vec![1.0, 0.0, 1.0, 0.0], vec![0.0, 0.0], 0.5, vec![0.0, 1.0])
            .unwrap();
        let k = m.artificial_kernel();
        assert_eq!(&k[0..2], &[0.5, 0.5]);
    }

    #[test]
    fn zero_noise_reward_is_exact() {
        let m = two_state();
        let mut chain = ChainState::at(1, 3);
        for _ in 0..50 {
            let s = chain.tilde_state;
            let st = m.sample_env_step(&mut chain, 0).unwrap();
            assert_eq!(st.reward, m.reward(s, 0));
        }
        assert_eq!(chain.step, 50);
    }

    #[test]
    fn action_out_of_range_fails() {
        let m = two_state();
        let mut chain = ChainState::at(0, 0);
        assert!(m.sample_env_step(&mut chain, 1).is_err());
    }

    #[test]
    fn categorical_residue_goes_to_last_positive() {
        assert_eq!(categorical_index(&[0.5, 0.5 - 1e-17, 0.0], 0.999_999_999_999_999_9), 1);
        assert_eq!(categorical_index(&[0.2, 0.8], 0.1), 0);
        assert_eq!(categorical_index(&[0.2, 0.8], 0.2), 1);
    }

    #[test]
    fn garnet_is_valid_and_sparse() {
        let m = garnet(6, 2, 2, 0.9, 11).unwrap();
        for s in 0..6 {
            for a in 0..2 {
                assert_eq!(m.kernel_row(s, a).iter().filter(|p| **p > 0.0).count(), 2);
            }
        }
        assert_eq!(garnet(6, 2, 2, 0.9, 11).unwrap(), m);
    }
}
