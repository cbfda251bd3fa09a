//! Exact policy gradient, the actor's steady-state drift, and the
//! function-approximation bias between them.

use nalgebra::DVector;

use crate::error::Result;
use crate::features::CriticFeatures;
use crate::mdp::FiniteMdp;
use crate::policy::SoftmaxPolicy;

use super::critic::fixed_points_from_eval;
use super::evaluation::PolicyEval;

/// `∇J(θ) = (1/(1−γ)) Σ_{s,a} μ(s,a) Δ_π(s,a) ψ_θ(s,a)`.
pub fn exact_gradient(mdp: &FiniteMdp, policy: &SoftmaxPolicy) -> Result<DVector<f64>> {
    let pe = PolicyEval::new(mdp, policy)?;
    Ok(gradient_from_eval(mdp, policy, &pe))
}

pub fn gradient_from_eval(mdp: &FiniteMdp, policy: &SoftmaxPolicy, pe: &PolicyEval) -> DVector<f64> {
    let adv = pe.advantage();
    weighted_score_sum(mdp, policy, pe, |s, a| adv[s * mdp.n_actions + a]) / (1.0 - mdp.discount)
}

/// `Σ_{s,a} μ(s,a) w(s,a) ψ_θ(s,a)`.
pub(crate) fn weighted_score_sum(
    mdp: &FiniteMdp,
    policy: &SoftmaxPolicy,
    pe: &PolicyEval,
    weight: impl Fn(usize, usize) -> f64,
) -> DVector<f64> {
    let na = mdp.n_actions;
    let mut out = DVector::zeros(policy.features().dim);
    for s in 0..mdp.n_states {
        let probs: Vec<f64> = pe.probs.row(s).iter().copied().collect();
        for a in 0..na {
            let c = pe.mu[s * na + a] * weight(s, a);
            if c != 0.0 {
                out += policy.score_with(s, a, &probs) * c;
            }
        }
    }
    out
}

/// `Q̂_θ(s,a) = R(s,a) + γ Σ_{s'} p(s'|s,a) φ(s')ᵀ ω̄*(θ)`, indexed `s·|A| + a`.
pub fn q_hat(mdp: &FiniteMdp, features: &CriticFeatures, bar_omega_star: &DVector<f64>) -> DVector<f64> {
    let v_hat = features.matrix() * bar_omega_star;
    super::evaluation::q_from_value(mdp, &v_hat)
}

/// Bias vector `b(θ)` and `Q̂_θ`.
#[derive(Debug, Clone)]
pub struct Bias {
    pub b: DVector<f64>,
    pub q_hat: DVector<f64>,
}

/// `b(θ) = (γ/(1−γ)) Σ μ(s,a) ψ_θ(s,a) Σ_{s'} p(s'|s,a) (φ(s')ᵀω̄* − V_π(s'))`.
pub fn bias(mdp: &FiniteMdp, policy: &SoftmaxPolicy, features: &CriticFeatures) -> Result<Bias> {
    let pe = PolicyEval::new(mdp, policy)?;
    let fp = fixed_points_from_eval(mdp, &pe, features)?;
    Ok(bias_from(mdp, policy, &pe, features, &fp.bar_omega_star))
}

pub fn bias_from(
    mdp: &FiniteMdp,
    policy: &SoftmaxPolicy,
    pe: &PolicyEval,
    features: &CriticFeatures,
    bar_omega_star: &DVector<f64>,
) -> Bias {
    let gap = features.matrix() * bar_omega_star - &pe.v;
    let g = mdp.discount;
    let b = weighted_score_sum(mdp, policy, pe, |s, a| {
        mdp.kernel_row(s, a).iter().zip(gap.iter()).map(|(p, x)| p * x).sum()
    }) * (g / (1.0 - g));
    Bias {
        b,
        q_hat: q_hat(mdp, features, bar_omega_star),
    }
}

/// Steady-state actor drift `f(θ) = (1/(1−γ)) (H̄(θ) ω̄*(θ) + u(θ))` with
/// `H̄ = E_μ[ψ (γ Σ p φ(s') − φ(s))ᵀ]` and `u = E_μ[R ψ]`.
pub fn steady_state_drift(
    mdp: &FiniteMdp,
    policy: &SoftmaxPolicy,
    pe: &PolicyEval,
    features: &CriticFeatures,
    bar_omega_star: &DVector<f64>,
) -> DVector<f64> {
    let (n, na) = (mdp.n_states, mdp.n_actions);
    let d = policy.features().dim;
    let m = features.dim();
    let phi = features.matrix();
    let mut h_bar = nalgebra::DMatrix::<f64>::zeros(d, m);
    let mut u = DVector::<f64>::zeros(d);
    for s in 0..n {
        let probs: Vec<f64> = pe.probs.row(s).iter().copied().collect();
        for a in 0..na {
            let w = pe.mu[s * na + a];
            let psi = policy.score_with(s, a, &probs);
            let mut dir = DVector::<f64>::zeros(m);
            for (s2, p) in mdp.kernel_row(s, a).iter().enumerate() {
                dir += phi.row(s2).transpose() * (mdp.discount * p);
            }
            dir -= phi.row(s).transpose();
            h_bar += &psi * dir.transpose() * w;
            u += &psi * (w * mdp.reward(s, a));
        }
    }
    (h_bar * bar_omega_star + u) / (1.0 - mdp.discount)
}
