//! Softmax policies over linear state-action features.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::sample_categorical;

/// Feature vectors `x(s,a)` of dimension `dim`, one row per `(s,a)` pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyFeatures {
    pub n_states: usize,
    pub n_actions: usize,
    pub dim: usize,
    /// Row `s * n_actions + a` holds `x(s,a)`.
    pub data: Vec<f64>,
}

impl PolicyFeatures {
    pub fn new(n_states: usize, n_actions: usize, dim: usize, data: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Features("policy feature dimension must be positive".into()));
        }
        if data.len() != n_states * n_actions * dim {
            return Err(Error::Dimension {
                what: "policy features",
                expected: n_states * n_actions * dim,
                got: data.len(),
            });
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::Features(format!("policy feature entry {i} is not finite")));
        }
        Ok(PolicyFeatures { n_states, n_actions, dim, data })
    }

    /// One-hot features, `d = |S|·|A|`.
    pub fn tabular(n_states: usize, n_actions: usize) -> Self {
        let dim = n_states * n_actions;
        let mut data = vec![0.0; dim * dim];
        for i in 0..dim {
            data[i * dim + i] = 1.0;
        }
        PolicyFeatures { n_states, n_actions, dim, data }
    }

    #[inline]
    pub fn x(&self, s: usize, a: usize) -> &[f64] {
        let start = (s * self.n_actions + a) * self.dim;
        &self.data[start..start + self.dim]
    }

    /// Largest feature norm `max_{s,a} ‖x(s,a)‖`.
    pub fn max_norm(&self) -> f64 {
        self.data
            .chunks(self.dim)
            .map(|r| r.iter().map(|v| v * v).sum::<f64>().sqrt())
            .fold(0.0, f64::max)
    }

    pub fn policy<'a>(&'a self, theta: &'a DVector<f64>) -> Result<SoftmaxPolicy<'a>> {
        SoftmaxPolicy::new(self, theta)
    }
}

/// `π_θ(a|s) ∝ exp(θᵀx(s,a))`.
#[derive(Debug, Clone, Copy)]
pub struct SoftmaxPolicy<'a> {
    features: &'a PolicyFeatures,
    theta: &'a DVector<f64>,
}

impl<'a> SoftmaxPolicy<'a> {
    pub fn new(features: &'a PolicyFeatures, theta: &'a DVector<f64>) -> Result<Self> {
        if theta.len() != features.dim {
            return Err(Error::Dimension {
                what: "theta",
                expected: features.dim,
                got: theta.len(),
            });
        }
        Ok(SoftmaxPolicy { features, theta })
    }

    pub fn features(&self) -> &'a PolicyFeatures {
        self.features
    }

    pub fn theta(&self) -> &'a DVector<f64> {
        self.theta
    }

    pub fn n_states(&self) -> usize {
        self.features.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.features.n_actions
    }

    fn logit(&self, s: usize, a: usize) -> f64 {
        self.features
            .x(s, a)
            .iter()
            .zip(self.theta.iter())
            .map(|(x, t)| x * t)
            .sum()
    }

    /// Action distribution at `s`; logits are shifted by their max.
    pub fn action_probs(&self, s: usize) -> Vec<f64> {
        let na = self.n_actions();
        let logits: Vec<f64> = (0..na).map(|a| self.logit(s, a)).collect();
        let top = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut p: Vec<f64> = logits.iter().map(|l| (l - top).exp()).collect();
        let z: f64 = p.iter().sum();
        p.iter_mut().for_each(|v| *v /= z);
        p
    }

    /// `π_θ(a|s)` laid out as an `n × |A|` matrix.
    pub fn prob_table(&self) -> DMatrix<f64> {
        let (n, na) = (self.n_states(), self.n_actions());
        let mut m = DMatrix::zeros(n, na);
        for s in 0..n {
            for (a, p) in self.action_probs(s).into_iter().enumerate() {
                m[(s, a)] = p;
            }
        }
        m
    }

    pub fn log_prob(&self, s: usize, a: usize) -> f64 {
        let na = self.n_actions();
        let logits: Vec<f64> = (0..na).map(|b| self.logit(s, b)).collect();
        let top = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = top + logits.iter().map(|l| (l - top).exp()).sum::<f64>().ln();
        logits[a] - lse
    }

    /// `ψ_θ(s,a) = x(s,a) − Σ_b π_θ(b|s) x(s,b)`.
    pub fn score(&self, s: usize, a: usize) -> DVector<f64> {
        let probs = self.action_probs(s);
        self.score_with(s, a, &probs)
    }

    /// Score given precomputed `action_probs(s)`.
    pub fn score_with(&self, s: usize, a: usize, probs: &[f64]) -> DVector<f64> {
        let mut out = DVector::from_column_slice(self.features.x(s, a));
        for (b, p) in probs.iter().enumerate() {
            for (o, x) in out.iter_mut().zip(self.features.x(s, b)) {
                *o -= p * x;
            }
        }
        out
    }

    pub fn sample_action<R: Rng + ?Sized>(&self, s: usize, rng: &mut R) -> usize {
        sample_categorical(&self.action_probs(s), rng)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::seeded_rng;

    #[test]
    fn zero_theta_is_uniform() {
        let f = PolicyFeatures::tabular(2, 4);
        let theta = DVector::zeros(8);
        let p = f.policy(&theta).unwrap().action_probs(1);
        assert!(p.iter().all(|v| (v - 0.25).abs() < 1e-15));
    }

    #[test]
    fn large_logit_dominates() {
        let f = PolicyFeatures::tabular(1, 3);
        let theta = DVector::from_vec(vec![10.0, 0.0, 0.0]);
        let p = f.policy(&theta).unwrap().action_probs(0);
        // e^10 / (e^10 + 2)
        let expected = 1.0 / (1.0 + 2.0 * (-10.0f64).exp());
        assert!((p[0] - expected).abs() < 1e-15);
        assert!(p[0] >= 0.99);
    }

    #[test]
    fn shift_invariance() {
        let base = PolicyFeatures::new(1, 3, 2, vec![0.1, 0.5, -0.3, 0.2, 0.9, -1.0]).unwrap();
        let shifted_data: Vec<f64> = base
            .data
            .chunks(2)
            .flat_map(|r| vec![r[0] + 3.0, r[1] - 7.0])
            .collect();
        let shifted = PolicyFeatures::new(1, 3, 2, shifted_data).unwrap();
        let theta = DVector::from_vec(vec![0.7, -1.3]);
        let p = base.policy(&theta).unwrap().action_probs(0);
        let q = shifted.policy(&theta).unwrap().action_probs(0);
        for (a, b) in p.iter().zip(&q) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn symmetric_two_action_score() {
        let f = PolicyFeatures::tabular(1, 2);
        let theta = DVector::zeros(2);
        let sc = f.policy(&theta).unwrap().score(0, 0);
        assert_eq!(sc.as_slice(), &[0.5, -0.5]);
    }

    #[test]
    fn overflow_safe() {
        let f = PolicyFeatures::tabular(1, 2);
        let theta = DVector::from_vec(vec![1e4, -1e4]);
        let p = f.policy(&theta).unwrap().action_probs(0);
        assert_eq!(p[0], 1.0);
        assert!(p.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn single_action_always_zero() {
        let f = PolicyFeatures::tabular(3, 1);
        let theta = DVector::from_vec(vec![1.0, -2.0, 5.0]);
        let pol = f.policy(&theta).unwrap();
        let mut rng = seeded_rng(4);
        for s in 0..3 {
            for _ in 0..20 {
                assert_eq!(pol.sample_action(s, &mut rng), 0);
            }
        }
    }

    #[test]
    fn theta_dimension_checked() {
        let f = PolicyFeatures::tabular(2, 2);
        assert!(f.policy(&DVector::zeros(3)).is_err());
    }
}
