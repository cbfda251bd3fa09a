//! Policy-level closed forms: `P_θ`, `R_θ`, occupancy measures, and the true
//! value functions.

use nalgebra::{DMatrix, DVector};

use crate::error::Result;
use crate::linalg::{solve_checked, COND_WARN};
use crate::mdp::FiniteMdp;
use crate::policy::SoftmaxPolicy;

use super::markov::stationary_distribution;

/// `P_θ(s'|s) = Σ_a p(s'|s,a) π_θ(a|s)`.
pub fn transition_matrix(mdp: &FiniteMdp, policy: &SoftmaxPolicy) -> DMatrix<f64> {
    transition_from_probs(mdp, &policy.prob_table())
}

pub(crate) fn transition_from_probs(mdp: &FiniteMdp, probs: &DMatrix<f64>) -> DMatrix<f64> {
    let n = mdp.n_states;
    let mut p = DMatrix::zeros(n, n);
    for s in 0..n {
        for a in 0..mdp.n_actions {
            let w = probs[(s, a)];
            for (s2, k) in mdp.kernel_row(s, a).iter().enumerate() {
                p[(s, s2)] += w * k;
            }
        }
    }
    p
}

/// `R_θ(s) = Σ_a π_θ(a|s) R(s,a)`.
pub fn reward_vector(mdp: &FiniteMdp, policy: &SoftmaxPolicy) -> DVector<f64> {
    reward_from_probs(mdp, &policy.prob_table())
}

pub(crate) fn reward_from_probs(mdp: &FiniteMdp, probs: &DMatrix<f64>) -> DVector<f64> {
    DVector::from_fn(mdp.n_states, |s, _| {
        (0..mdp.n_actions).map(|a| probs[(s, a)] * mdp.reward(s, a)).sum()
    })
}

/// `dᵀ = (1−γ) ρᵀ (I − γP_θ)⁻¹` together with the solve's condition number.
pub(crate) fn occupancy_from_transition(mdp: &FiniteMdp, p: &DMatrix<f64>) -> Result<(DVector<f64>, f64)> {
    let n = mdp.n_states;
    let g = mdp.discount;
    let a = (DMatrix::identity(n, n) - p * g).transpose();
    let rhs = DVector::from_column_slice(&mdp.init_dist) * (1.0 - g);
    let sol = solve_checked(&a, &rhs, "discounted occupancy")?;
    Ok((sol.x, sol.cond))
}

/// Discounted state occupancy `d_ρ,θ`.
pub fn discounted_occupancy(mdp: &FiniteMdp, policy: &SoftmaxPolicy) -> Result<DVector<f64>> {
    Ok(occupancy_from_transition(mdp, &transition_matrix(mdp, policy))?.0)
}

/// `P̃_θ = γP_θ + (1−γ)𝟙ρᵀ`, the state chain of the artificial kernel.
pub fn artificial_state_kernel(mdp: &FiniteMdp, policy: &SoftmaxPolicy) -> DMatrix<f64> {
    let n = mdp.n_states;
    let g = mdp.discount;
    let p = transition_matrix(mdp, policy);
    DMatrix::from_fn(n, n, |s, s2| g * p[(s, s2)] + (1.0 - g) * mdp.init_dist[s2])
}

/// `K̃_θ((s',a')|(s,a)) = p̃(s'|s,a) π_θ(a'|s')` on the `n·|A|` pairs.
pub fn artificial_pair_kernel(mdp: &FiniteMdp, policy: &SoftmaxPolicy) -> DMatrix<f64> {
    pair_kernel(mdp, &mdp.artificial_kernel(), &policy.prob_table())
}

/// Same construction with the true kernel `p` in place of `p̃`.
pub fn true_pair_kernel(mdp: &FiniteMdp, policy: &SoftmaxPolicy) -> DMatrix<f64> {
    pair_kernel(mdp, &mdp.kernel, &policy.prob_table())
}

fn pair_kernel(mdp: &FiniteMdp, kernel: &[f64], probs: &DMatrix<f64>) -> DMatrix<f64> {
    let (n, na) = (mdp.n_states, mdp.n_actions);
    DMatrix::from_fn(n * na, n * na, |i, j| {
        let (s2, a2) = (j / na, j % na);
        kernel[i * n + s2] * probs[(s2, a2)]
    })
}

/// Occupancy as the invariant law of `P̃_θ`; cross-check route only.
pub fn occupancy_via_stationary(mdp: &FiniteMdp, policy: &SoftmaxPolicy) -> Result<DVector<f64>> {
    stationary_distribution(&artificial_state_kernel(mdp, policy))
}

/// `μ_ρ,θ(s,a) = d_ρ,θ(s) π_θ(a|s)`, indexed `s·|A| + a`.
pub fn state_action_occupancy(mdp: &FiniteMdp, policy: &SoftmaxPolicy) -> Result<DVector<f64>> {
    let d = discounted_occupancy(mdp, policy)?;
    Ok(pair_measure(&d, &policy.prob_table()))
}

fn pair_measure(d: &DVector<f64>, probs: &DMatrix<f64>) -> DVector<f64> {
    let na = probs.ncols();
    DVector::from_fn(d.len() * na, |i, _| d[i / na] * probs[(i / na, i % na)])
}

/// `T_θ V = R_θ + γ P_θ V`.
pub fn bellman_apply(mdp: &FiniteMdp, policy: &SoftmaxPolicy, v: &DVector<f64>) -> DVector<f64> {
    reward_vector(mdp, policy) + transition_matrix(mdp, policy) * v * mdp.discount
}

/// `V_π = (I − γP_θ)⁻¹ R_θ`.
pub fn true_value(mdp: &FiniteMdp, policy: &SoftmaxPolicy) -> Result<DVector<f64>> {
    Ok(PolicyEval::new(mdp, policy)?.v)
}

/// `Q_π(s,a) = R(s,a) + γ Σ_{s'} p(s'|s,a) V_π(s')`, indexed `s·|A| + a`.
pub fn true_q(mdp: &FiniteMdp, policy: &SoftmaxPolicy) -> Result<DVector<f64>> {
    Ok(PolicyEval::new(mdp, policy)?.q)
}

pub(crate) fn q_from_value(mdp: &FiniteMdp, v: &DVector<f64>) -> DVector<f64> {
    let na = mdp.n_actions;
    DVector::from_fn(mdp.n_states * na, |i, _| {
        let (s, a) = (i / na, i % na);
        let ev: f64 = mdp.kernel_row(s, a).iter().zip(v.iter()).map(|(p, x)| p * x).sum();
        mdp.reward(s, a) + mdp.discount * ev
    })
}

/// `J(θ) = Σ_s ρ(s) V_π(s)`.
pub fn objective(mdp: &FiniteMdp, policy: &SoftmaxPolicy) -> Result<f64> {
    Ok(PolicyEval::new(mdp, policy)?.objective(mdp))
}

/// Every policy-level quantity at one θ, computed once.
#[derive(Debug, Clone)]
pub struct PolicyEval {
    /// `π_θ(a|s)` as `n × |A|`.
    pub probs: DMatrix<f64>,
    pub p_theta: DMatrix<f64>,
    pub r_theta: DVector<f64>,
    pub d: DVector<f64>,
    pub mu: DVector<f64>,
    pub v: DVector<f64>,
    pub q: DVector<f64>,
    /// Largest condition estimate among the solves.
    pub cond: f64,
    pub warnings: Vec<String>,
}

impl PolicyEval {
    pub fn new(mdp: &FiniteMdp, policy: &SoftmaxPolicy) -> Result<Self> {
        let probs = policy.prob_table();
        let p_theta = transition_from_probs(mdp, &probs);
        let r_theta = reward_from_probs(mdp, &probs);
        let (d, cond_d) = occupancy_from_transition(mdp, &p_theta)?;
        let n = mdp.n_states;
        let a = DMatrix::identity(n, n) - &p_theta * mdp.discount;
        let sol = solve_checked(&a, &r_theta, "true value")?;
        let v = sol.x;
        let q = q_from_value(mdp, &v);
        let mu = pair_measure(&d, &probs);
        let cond = cond_d.max(sol.cond);
        let mut warnings = Vec::new();
        if cond > COND_WARN {
            warnings.push(format!("ill-conditioned policy evaluation (cond {cond:e})"));
        }
        Ok(PolicyEval {
            probs,
            p_theta,
            r_theta,
            d,
            mu,
            v,
            q,
            cond,
            warnings,
        })
    }

    pub fn objective(&self, mdp: &FiniteMdp) -> f64 {
        mdp.init_dist.iter().zip(self.v.iter()).map(|(r, v)| r * v).sum()
    }

    /// `Δ_π(s,a) = Q_π(s,a) − V_π(s)`.
    pub fn advantage(&self) -> DVector<f64> {
        let na = self.probs.ncols();
        DVector::from_fn(self.q.len(), |i, _| self.q[i] - self.v[i / na])
    }

    pub fn bellman_apply(&self, mdp: &FiniteMdp, v: &DVector<f64>) -> DVector<f64> {
        &self.r_theta + &self.p_theta * v * mdp.discount
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::PolicyFeatures;

    fn single_action() -> FiniteMdp {
        FiniteMdp::new(
            2,
            1,
            vec![0.2, 0.8, 0.9, 0.1],
            vec![1.0, 1.0],
            0.8,
            vec![1.0, 0.0],
        )
        .unwrap()
    }

    #[test]
    fn single_action_ignores_theta() {
        let m = single_action();
        let f = PolicyFeatures::tabular(2, 1);
        let theta = DVector::from_vec(vec![3.0, -1.0]);
        let p = transition_matrix(&m, &f.policy(&theta).unwrap());
        assert_eq!(p.as_slice(), &[0.2, 0.9, 0.8, 0.1]);
        let r = reward_vector(&m, &f.policy(&theta).unwrap());
        assert_eq!(r.as_slice(), &[1.0, 1.0]);
    }

    #[test]
    fn constant_reward_value() {
        let m = single_action();
        let f = PolicyFeatures::tabular(2, 1);
        let theta = DVector::zeros(2);
        let v = true_value(&m, &f.policy(&theta).unwrap()).unwrap();
        for x in v.iter() {
            assert!((x - 5.0).abs() < 1e-12);
        }
    }

    #[test]
    fn bellman_fixed_point_and_zero() {
        let m = single_action();
        let f = PolicyFeatures::tabular(2, 1);
        let theta = DVector::zeros(2);
        let pol = f.policy(&theta).unwrap();
        let v = true_value(&m, &pol).unwrap();
        assert!((bellman_apply(&m, &pol, &v) - &v).amax() < 1e-12);
        assert_eq!(bellman_apply(&m, &pol, &DVector::zeros(2)), reward_vector(&m, &pol));
    }
}
