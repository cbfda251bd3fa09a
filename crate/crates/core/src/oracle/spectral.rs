//! Spectral constants of the critic matrices and the occupancy-norm
//! contraction inequality for `P_θ`.

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::error::Result;
use crate::linalg::{eigenvalues, solve, sym, sym_eigenvalues, weighted_sq_norm};
use crate::mdp::{seeded_rng, FiniteMdp};

use super::critic::CriticMatrices;
use super::evaluation::PolicyEval;

pub const KAPPA_SLACK: f64 = 1e-10;
pub const POSDEF2_SLACK: f64 = 1e-12;
pub const POSDEF2_SAMPLES: usize = 100;

#[derive(Debug, Clone, Serialize)]
pub struct SpectralReport {
    /// Smallest eigenvalue of `Ḡ`.
    pub eps_min: f64,
    /// Smallest eigenvalue of `sym(G)`.
    pub kappa_min: f64,
    /// `(1 − √γ) · eps_min`, the lower bound `kappa_min` must clear.
    pub kappa_lower_bound: f64,
    /// Smallest eigenvalue of `sym(Ḡ⁻¹G)`.
    pub zeta_min: f64,
    /// Largest real part in the spectrum of `−Ḡ⁻¹G`.
    pub hurwitz_margin: f64,
    /// Smallest slack of `(1/γ)‖V‖²_D − ((1−γ)/γ)‖V‖²_ρ − ‖P_θV‖²_D` over the samples.
    pub posdef2_min_slack: f64,
    pub posdef2_samples: usize,
    pub g_bar_posdef: bool,
    pub g_posdef_chain: bool,
    pub hurwitz: bool,
    pub zeta_positive: bool,
    pub posdef2_holds: bool,
}

impl SpectralReport {
    /// The lemma-level checks; `zeta_positive` is an assumption, not a lemma.
    pub fn lemmas_hold(&self) -> bool {
        self.g_bar_posdef && self.g_posdef_chain && self.hurwitz && self.posdef2_holds
    }
}

/// Slack of the occupancy-norm inequality for one `V`.
pub fn posdef2_slack(mdp: &FiniteMdp, pe: &PolicyEval, v: &DVector<f64>) -> f64 {
    let g = mdp.discount;
    let rho = DVector::from_column_slice(&mdp.init_dist);
    let pv = &pe.p_theta * v;
    weighted_sq_norm(v, &pe.d) / g - (1.0 - g) / g * weighted_sq_norm(v, &rho)
        - weighted_sq_norm(&pv, &pe.d)
}

pub fn spectral_report(
    mdp: &FiniteMdp,
    pe: &PolicyEval,
    matrices: &CriticMatrices,
    samples: usize,
    seed: u64,
) -> Result<SpectralReport> {
    let eps_min = sym_eigenvalues(&matrices.g_bar)[0];
    let kappa_min = sym_eigenvalues(&sym(&matrices.g))[0];
    let m = matrices.g.nrows();
    let mut gbar_inv_g = DMatrix::zeros(m, m);
    for j in 0..m {
        let col = solve(&matrices.g_bar, &matrices.g.column(j).into_owned(), "Ḡ⁻¹G")?;
        gbar_inv_g.set_column(j, &col);
    }
    let zeta_min = sym_eigenvalues(&sym(&gbar_inv_g))[0];
    let hurwitz_margin = eigenvalues(&(-&gbar_inv_g))
        .iter()
        .map(|z| z.re)
        .fold(f64::NEG_INFINITY, f64::max);

    let mut rng = seeded_rng(seed);
    let n = mdp.n_states;
    let posdef2_min_slack = (0..samples)
        .map(|_| {
            let v = DVector::from_fn(n, |_, _| StandardNormal.sample(&mut rng));
            posdef2_slack(mdp, pe, &v)
        })
        .fold(f64::INFINITY, f64::min);

    let kappa_lower_bound = (1.0 - mdp.discount.sqrt()) * eps_min;
    Ok(SpectralReport {
        eps_min,
        kappa_min,
        kappa_lower_bound,
        zeta_min,
        hurwitz_margin,
        posdef2_min_slack,
        posdef2_samples: samples,
        g_bar_posdef: eps_min > 0.0,
        g_posdef_chain: kappa_min >= kappa_lower_bound - KAPPA_SLACK,
        hurwitz: hurwitz_margin < 0.0,
        zeta_positive: zeta_min > 0.0,
        posdef2_holds: posdef2_min_slack >= -POSDEF2_SLACK,
    })
}
