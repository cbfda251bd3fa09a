//! Exact closed-form theory quantities at a fixed θ.
//!
//! Everything here is a pure function of `(mdp, θ, Φ)` and serves as ground
//! truth for the stochastic learner.

mod critic;
mod evaluation;
mod gradient;
pub mod markov;
mod spectral;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

pub use critic::{
    critic_matrices, fa_error, fa_error_from, fixed_points, fixed_points_from_eval,
    projected_bellman_residual, projection, projection_from_occupancy, target_fixed_point,
    CriticMatrices, FixedPoints,
};
pub use evaluation::{
    artificial_pair_kernel, artificial_state_kernel, bellman_apply, discounted_occupancy,
    objective, occupancy_via_stationary, reward_vector, state_action_occupancy, transition_matrix,
    true_pair_kernel, true_q, true_value, PolicyEval,
};
pub use gradient::{bias, bias_from, exact_gradient, gradient_from_eval, q_hat, steady_state_drift, Bias};
pub use markov::{chain_structure, stationary_distribution, tv_distance, ChainStructure};
pub use spectral::{
    posdef2_slack, spectral_report, SpectralReport, KAPPA_SLACK, POSDEF2_SAMPLES, POSDEF2_SLACK,
};

use crate::error::Result;
use crate::instance::Instance;
use crate::linalg::to_rows;

const PROB_TOL: f64 = 1e-10;
const IDEMPOTENT_TOL: f64 = 1e-9;
const SELF_ADJOINT_TOL: f64 = 1e-10;
const FIXED_POINT_TOL: f64 = 1e-10;

/// Pass/fail of the identities every valid instance must satisfy.
#[derive(Debug, Clone, Serialize)]
pub struct OracleChecks {
    pub occupancy_is_probability: bool,
    pub pair_occupancy_is_probability: bool,
    pub projection_idempotent: bool,
    pub projection_self_adjoint: bool,
    /// `‖Π T(Φω̄*) − Φω̄*‖ ≤ 1e-10`.
    pub projected_fixed_point: bool,
    /// `‖ω*(θ, ω̄*(θ)) − ω̄*(θ)‖ ≤ 1e-10`.
    pub fixed_point_consistency: bool,
    pub g_bar_posdef: bool,
    pub g_posdef_chain: bool,
    pub hurwitz: bool,
    pub posdef2: bool,
}

impl OracleChecks {
    pub fn all_pass(&self) -> bool {
        self.occupancy_is_probability
            && self.pair_occupancy_is_probability
            && self.projection_idempotent
            && self.projection_self_adjoint
            && self.projected_fixed_point
            && self.fixed_point_consistency
            && self.g_bar_posdef
            && self.g_posdef_chain
            && self.hurwitz
            && self.posdef2
    }

    pub fn failures(&self) -> Vec<&'static str> {
        let items = [
            ("occupancy_is_probability", self.occupancy_is_probability),
            ("pair_occupancy_is_probability", self.pair_occupancy_is_probability),
            ("projection_idempotent", self.projection_idempotent),
            ("projection_self_adjoint", self.projection_self_adjoint),
            ("projected_fixed_point", self.projected_fixed_point),
            ("fixed_point_consistency", self.fixed_point_consistency),
            ("g_bar_posdef", self.g_bar_posdef),
            ("g_posdef_chain", self.g_posdef_chain),
            ("hurwitz", self.hurwitz),
            ("posdef2", self.posdef2),
        ];
        items.iter().filter(|(_, ok)| !ok).map(|(n, _)| *n).collect()
    }
}

/// All closed-form quantities at one θ.
#[derive(Debug, Clone, Serialize)]
pub struct OracleReport {
    pub theta: Vec<f64>,
    pub p_theta: Vec<Vec<f64>>,
    pub r_theta: Vec<f64>,
    pub d_rho_theta: Vec<f64>,
    pub mu_rho_theta: Vec<f64>,
    pub g: Vec<Vec<f64>>,
    pub g_bar: Vec<Vec<f64>>,
    pub h: Vec<f64>,
    pub pi_theta: Vec<Vec<f64>>,
    pub bar_omega_star: Vec<f64>,
    pub v_pi: Vec<f64>,
    pub q_pi: Vec<f64>,
    pub objective: f64,
    pub grad_j: Vec<f64>,
    pub bias: Vec<f64>,
    pub q_hat: Vec<f64>,
    pub eps_fa: f64,
    pub projected_bellman_residual: f64,
    pub fixed_point_gap: f64,
    pub spectral: SpectralReport,
    pub checks: OracleChecks,
    pub warnings: Vec<String>,
}

/// Seed for the randomized occupancy-norm inequality samples.
pub const SPECTRAL_SEED: u64 = 0x05ee_d0f0_ac1e;

impl OracleReport {
    pub fn compute(instance: &Instance, theta: &DVector<f64>) -> Result<Self> {
        let mdp = &instance.mdp;
        let features = &instance.critic;
        let policy = instance.policy.policy(theta)?;
        let pe = PolicyEval::new(mdp, &policy)?;
        let fp = fixed_points_from_eval(mdp, &pe, features)?;
        let w = &fp.bar_omega_star;
        let pi = projection_from_occupancy(&pe.d, features)?;
        let phi_w = features.matrix() * w;
        let pb_residual = (&pi * pe.bellman_apply(mdp, &phi_w) - &phi_w).norm();
        let fixed_point_gap = (fp.omega_star(w)? - w).norm();
        let grad = gradient_from_eval(mdp, &policy, &pe);
        let bias = bias_from(mdp, &policy, &pe, features, w);
        let spectral = spectral_report(mdp, &pe, &fp.matrices, POSDEF2_SAMPLES, SPECTRAL_SEED)?;

        let dm = DMatrix::from_diagonal(&pe.d);
        let checks = OracleChecks {
            occupancy_is_probability: is_probability(&pe.d),
            pair_occupancy_is_probability: is_probability(&pe.mu),
            projection_idempotent: (&pi * &pi - &pi).amax() <= IDEMPOTENT_TOL,
            projection_self_adjoint: (&dm * &pi - pi.transpose() * &dm).amax() <= SELF_ADJOINT_TOL,
            projected_fixed_point: pb_residual <= FIXED_POINT_TOL,
            fixed_point_consistency: fixed_point_gap <= FIXED_POINT_TOL,
            g_bar_posdef: spectral.g_bar_posdef,
            g_posdef_chain: spectral.g_posdef_chain,
            hurwitz: spectral.hurwitz,
            posdef2: spectral.posdef2_holds,
        };
        let mut warnings = pe.warnings.clone();
        warnings.extend(fp.warnings.iter().cloned());

        Ok(OracleReport {
            theta: theta.iter().copied().collect(),
            p_theta: to_rows(&pe.p_theta),
            r_theta: pe.r_theta.iter().copied().collect(),
            d_rho_theta: pe.d.iter().copied().collect(),
            mu_rho_theta: pe.mu.iter().copied().collect(),
            g: to_rows(&fp.matrices.g),
            g_bar: to_rows(&fp.matrices.g_bar),
            h: fp.matrices.h.iter().copied().collect(),
            pi_theta: to_rows(&pi),
            bar_omega_star: w.iter().copied().collect(),
            v_pi: pe.v.iter().copied().collect(),
            q_pi: pe.q.iter().copied().collect(),
            objective: pe.objective(mdp),
            grad_j: grad.iter().copied().collect(),
            bias: bias.b.iter().copied().collect(),
            q_hat: bias.q_hat.iter().copied().collect(),
            eps_fa: fa_error_from(&pe, features, w),
            projected_bellman_residual: pb_residual,
            fixed_point_gap,
            spectral,
            checks,
            warnings,
        })
    }
}

fn is_probability(v: &DVector<f64>) -> bool {
    v.iter().all(|x| *x >= -PROB_TOL) && (v.sum() - 1.0).abs() <= PROB_TOL
}
