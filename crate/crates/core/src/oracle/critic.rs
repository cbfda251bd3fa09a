//! Critic-side closed forms: `G`, `Ḡ`, `h`, `h̄`, the two fixed points, the
//! `D`-weighted projection, and the approximation error.

use nalgebra::{DMatrix, DVector};

use crate::error::Result;
use crate::features::CriticFeatures;
use crate::linalg::{solve, solve_checked, weighted_sq_norm, COND_WARN};
use crate::mdp::FiniteMdp;
use crate::policy::SoftmaxPolicy;

use super::evaluation::{
    occupancy_from_transition, reward_from_probs, transition_from_probs, PolicyEval,
};

/// Matrices driving the critic and target iterates at one θ.
#[derive(Debug, Clone)]
pub struct CriticMatrices {
    /// `G = Φᵀ D (I − γP_θ) Φ`.
    pub g: DMatrix<f64>,
    /// `Ḡ = Φᵀ D Φ`.
    pub g_bar: DMatrix<f64>,
    /// `h = Φᵀ D R_θ`.
    pub h: DVector<f64>,
    /// `γ Φᵀ D P_θ Φ`, the ω̄-dependent part of `h̄`.
    bootstrap: DMatrix<f64>,
}

impl CriticMatrices {
    pub fn from_parts(
        mdp: &FiniteMdp,
        p_theta: &DMatrix<f64>,
        r_theta: &DVector<f64>,
        d: &DVector<f64>,
        features: &CriticFeatures,
    ) -> Self {
        let phi = features.matrix();
        let dphi = DMatrix::from_fn(phi.nrows(), phi.ncols(), |s, j| d[s] * phi[(s, j)]);
        let g_bar = phi.transpose() * &dphi;
        let bootstrap = dphi.transpose() * p_theta * phi * mdp.discount;
        let g = &g_bar - &bootstrap;
        let h = dphi.transpose() * r_theta;
        CriticMatrices { g, g_bar, h, bootstrap }
    }

    pub fn from_eval(mdp: &FiniteMdp, pe: &PolicyEval, features: &CriticFeatures) -> Self {
        Self::from_parts(mdp, &pe.p_theta, &pe.r_theta, &pe.d, features)
    }

    /// `h̄(θ, ω̄) = Φᵀ D (R_θ + γ P_θ Φ ω̄)`.
    pub fn h_bar(&self, omega_bar: &DVector<f64>) -> DVector<f64> {
        &self.h + &self.bootstrap * omega_bar
    }

    /// `ω*(θ, ω̄) = Ḡ⁻¹ h̄(θ, ω̄)`.
    pub fn omega_star(&self, omega_bar: &DVector<f64>) -> Result<DVector<f64>> {
        solve(&self.g_bar, &self.h_bar(omega_bar), "critic fixed point")
    }

    /// `ω̄*(θ) = G⁻¹ h`.
    pub fn bar_omega_star(&self) -> Result<DVector<f64>> {
        solve(&self.g, &self.h, "target fixed point")
    }
}

/// `(G, Ḡ, h)` at the policy's θ.
pub fn critic_matrices(
    mdp: &FiniteMdp,
    policy: &SoftmaxPolicy,
    features: &CriticFeatures,
) -> Result<CriticMatrices> {
    let probs = policy.prob_table();
    let p = transition_from_probs(mdp, &probs);
    let r = reward_from_probs(mdp, &probs);
    let (d, _) = occupancy_from_transition(mdp, &p)?;
    Ok(CriticMatrices::from_parts(mdp, &p, &r, &d, features))
}

/// `ω̄*(θ)` without computing value functions; the learner's hot path.
pub fn target_fixed_point(
    mdp: &FiniteMdp,
    policy: &SoftmaxPolicy,
    features: &CriticFeatures,
) -> Result<DVector<f64>> {
    let probs = policy.prob_table();
    let p = transition_from_probs(mdp, &probs);
    let r = reward_from_probs(mdp, &probs);
    let (d, _) = occupancy_from_transition(mdp, &p)?;
    CriticMatrices::from_parts(mdp, &p, &r, &d, features).bar_omega_star()
}

/// Both fixed points with their conditioning.
#[derive(Debug, Clone)]
pub struct FixedPoints {
    pub matrices: CriticMatrices,
    pub bar_omega_star: DVector<f64>,
    pub cond_g: f64,
    pub cond_g_bar: f64,
    pub warnings: Vec<String>,
}

impl FixedPoints {
    pub fn omega_star(&self, omega_bar: &DVector<f64>) -> Result<DVector<f64>> {
        self.matrices.omega_star(omega_bar)
    }
}

pub fn fixed_points(
    mdp: &FiniteMdp,
    policy: &SoftmaxPolicy,
    features: &CriticFeatures,
) -> Result<FixedPoints> {
    let pe = PolicyEval::new(mdp, policy)?;
    fixed_points_from_eval(mdp, &pe, features)
}

pub fn fixed_points_from_eval(
    mdp: &FiniteMdp,
    pe: &PolicyEval,
    features: &CriticFeatures,
) -> Result<FixedPoints> {
    let matrices = CriticMatrices::from_eval(mdp, pe, features);
    let sol = solve_checked(&matrices.g, &matrices.h, "target fixed point")?;
    let m = features.dim();
    let cond_g_bar = solve_checked(&matrices.g_bar, &DVector::zeros(m), "critic fixed point")?.cond;
    let mut warnings = Vec::new();
    if sol.cond > COND_WARN {
        warnings.push(format!("G is ill-conditioned (cond {:e})", sol.cond));
    }
    if cond_g_bar > COND_WARN {
        warnings.push(format!("Ḡ is ill-conditioned (cond {cond_g_bar:e})"));
    }
    Ok(FixedPoints {
        matrices,
        bar_omega_star: sol.x,
        cond_g: sol.cond,
        cond_g_bar,
        warnings,
    })
}

/// `Π_θ = Φ (ΦᵀDΦ)⁻¹ ΦᵀD`.
pub fn projection(
    mdp: &FiniteMdp,
    policy: &SoftmaxPolicy,
    features: &CriticFeatures,
) -> Result<DMatrix<f64>> {
    let pe = PolicyEval::new(mdp, policy)?;
    projection_from_occupancy(&pe.d, features)
}

pub fn projection_from_occupancy(d: &DVector<f64>, features: &CriticFeatures) -> Result<DMatrix<f64>> {
    let phi = features.matrix();
    let dphi_t = DMatrix::from_fn(phi.ncols(), phi.nrows(), |j, s| d[s] * phi[(s, j)]);
    let g_bar = &dphi_t * phi;
    let inv_part = g_bar
        .lu()
        .solve(&dphi_t)
        .ok_or(crate::error::Error::Singular {
            context: "projection",
            cond: f64::INFINITY,
        })?;
    Ok(phi * inv_part)
}

/// `‖V_π − Φω̄*‖_D`.
pub fn fa_error(mdp: &FiniteMdp, policy: &SoftmaxPolicy, features: &CriticFeatures) -> Result<f64> {
    let pe = PolicyEval::new(mdp, policy)?;
    let fp = fixed_points_from_eval(mdp, &pe, features)?;
    Ok(fa_error_from(&pe, features, &fp.bar_omega_star))
}

pub fn fa_error_from(pe: &PolicyEval, features: &CriticFeatures, bar_omega_star: &DVector<f64>) -> f64 {
    let diff = &pe.v - features.matrix() * bar_omega_star;
    weighted_sq_norm(&diff, &pe.d).sqrt()
}

/// `‖Π_θ T_θ(Φω) − Φω‖₂`.
pub fn projected_bellman_residual(
    mdp: &FiniteMdp,
    pe: &PolicyEval,
    features: &CriticFeatures,
    omega: &DVector<f64>,
) -> Result<f64> {
    let pi = projection_from_occupancy(&pe.d, features)?;
    let v = features.matrix() * omega;
    Ok((pi * pe.bellman_apply(mdp, &v) - v).norm())
}
