//! Consolidated assumption audit over a finite sample of θ.

use nalgebra::DVector;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::error::Result;
use crate::instance::Instance;
use crate::mdp::seeded_rng;
use crate::oracle::{
    artificial_pair_kernel, chain_structure, fa_error_from, fixed_points_from_eval, posdef2_slack,
    spectral_report, true_pair_kernel, CriticMatrices, PolicyEval, POSDEF2_SAMPLES,
};
use crate::linalg::sym_eigenvalues;
use crate::schedules::{MixingConstants, PowerSchedule, MIXING_WINDOW};

/// Gaussian θ draws added to `θ = 0`.
pub const AUDIT_THETA_SAMPLES: usize = 20;

#[derive(Debug, Clone, Serialize)]
pub struct AuditItem {
    pub name: String,
    pub pass: bool,
    /// Worst margin over the θ sample, where meaningful.
    pub margin: Option<f64>,
    pub detail: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct AuditReport {
    pub n_theta: usize,
    pub items: Vec<AuditItem>,
}

impl AuditReport {
    pub fn all_pass(&self) -> bool {
        self.items.iter().all(|i| i.pass)
    }

    pub fn item(&self, name: &str) -> Option<&AuditItem> {
        self.items.iter().find(|i| i.name == name)
    }

    pub fn failures(&self) -> Vec<&str> {
        self.items.iter().filter(|i| !i.pass).map(|i| i.name.as_str()).collect()
    }
}

struct Worst {
    pass: bool,
    margin: f64,
    note: String,
}

impl Worst {
    fn new() -> Self {
        Worst { pass: true, margin: f64::INFINITY, note: String::new() }
    }

    fn see(&mut self, k: usize, ok: bool, margin: f64) {
        if margin < self.margin {
            self.margin = margin;
        }
        if !ok && self.pass {
            self.pass = false;
            self.note = format!("first failure at theta sample {k}");
        }
    }

    /// Marks the item failed without a sampled margin.
    fn block(&mut self, reason: &str) {
        self.pass = false;
        self.note = reason.to_string();
    }

    fn item(self, name: &str, detail: &str) -> AuditItem {
        let detail = if self.note.is_empty() {
            detail.to_string()
        } else {
            format!("{detail}; {}", self.note)
        };
        AuditItem {
            name: name.into(),
            pass: self.pass,
            margin: self.margin.is_finite().then_some(self.margin),
            detail,
        }
    }
}

/// Runs every validator on `θ = 0` plus `n_random` standard-normal draws.
///
/// Item names: `mdp`, `policy_positivity`, `score_bound`, `ergodicity`,
/// `ergodicity_artificial`, `feature_rank`, `stepsizes`, `mixing`,
/// `g_bar_posdef`, `g_posdef_chain`, `hurwitz`, `zeta_positive`, `posdef2`.
/// `eps_fa` is reported but never fails.
pub fn assumption_audit(
    instance: &Instance,
    schedule: &PowerSchedule,
    n_random: usize,
    seed: u64,
) -> Result<AuditReport> {
    let mdp = &instance.mdp;
    let xf = &instance.policy;
    let mut rng = seeded_rng(seed);
    let mut thetas = vec![DVector::zeros(xf.dim)];
    for _ in 0..n_random {
        thetas.push(DVector::from_fn(xf.dim, |_, _| StandardNormal.sample(&mut rng)));
    }

    let violations = mdp.validate();
    let mut items = vec![AuditItem {
        name: "mdp".into(),
        pass: violations.is_empty(),
        margin: None,
        detail: if violations.is_empty() {
            "kernel, init_dist, reward bound and discount valid".into()
        } else {
            violations.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; ")
        },
    }];

    let mut positivity = Worst::new();
    let mut score = Worst::new();
    let mut ergodic = Worst::new();
    let mut ergodic_art = Worst::new();
    let mut mixing = Worst::new();
    let mut gbar = Worst::new();
    let mut chain = Worst::new();
    let mut hurwitz = Worst::new();
    let mut zeta = Worst::new();
    let mut posdef2 = Worst::new();
    let mut eps_fa_max: f64 = 0.0;
    let mut periods = Vec::new();
    let mut analytic = true;
    let bound = 2.0 * xf.max_norm();
    let rank = instance.critic.check_rank();
    let full_rank = rank.full_column_rank;

    for (k, theta) in thetas.iter().enumerate() {
        let policy = xf.policy(theta)?;
        let probs = policy.prob_table();
        let pmin = probs.min();
        positivity.see(k, pmin > 1e-300, pmin);
        for s in 0..mdp.n_states {
            for a in 0..mdp.n_actions {
                let slack = bound - policy.score(s, a).norm();
                score.see(k, slack >= -1e-12, slack);
            }
        }

        let truth = chain_structure(&true_pair_kernel(mdp, &policy));
        periods.push(truth.period);
        ergodic.see(k, truth.ergodic(), if truth.ergodic() { 1.0 } else { 0.0 });
        let art = chain_structure(&artificial_pair_kernel(mdp, &policy));
        ergodic_art.see(k, art.ergodic(), if art.ergodic() { 1.0 } else { 0.0 });
        if !art.ergodic() {
            analytic = false;
            continue;
        }

        let mc = MixingConstants::estimate(mdp, &policy, MIXING_WINDOW)?;
        mixing.see(k, mc.bound_holds, 1.0 - mc.slem);

        let pe = PolicyEval::new(mdp, &policy)?;
        if !full_rank {
            // Ḡ is singular, so only its spectrum and the feature-free inequality are measurable.
            let cm = CriticMatrices::from_eval(mdp, &pe, &instance.critic);
            let eps_min = sym_eigenvalues(&cm.g_bar)[0];
            gbar.see(k, false, eps_min);
            let mut vr = seeded_rng(seed ^ k as u64);
            for _ in 0..POSDEF2_SAMPLES {
                let v = DVector::from_fn(mdp.n_states, |_, _| StandardNormal.sample(&mut vr));
                let slack = posdef2_slack(mdp, &pe, &v);
                posdef2.see(k, slack >= -crate::oracle::POSDEF2_SLACK, slack);
            }
            continue;
        }
        let fp = fixed_points_from_eval(mdp, &pe, &instance.critic)?;
        let sr = spectral_report(mdp, &pe, &fp.matrices, POSDEF2_SAMPLES, seed ^ k as u64)?;
        gbar.see(k, sr.g_bar_posdef, sr.eps_min);
        chain.see(k, sr.g_posdef_chain, sr.kappa_min - sr.kappa_lower_bound);
        hurwitz.see(k, sr.hurwitz, -sr.hurwitz_margin);
        zeta.see(k, sr.zeta_positive, sr.zeta_min);
        posdef2.see(k, sr.posdef2_holds, sr.posdef2_min_slack);
        eps_fa_max = eps_fa_max.max(fa_error_from(&pe, &instance.critic, &fp.bar_omega_star));
    }

    let max_period = periods.iter().copied().max().unwrap_or(0);
    items.push(positivity.item("policy_positivity", "min pi(a|s) over the sample"));
    items.push(score.item("score_bound", "||psi|| <= 2 max ||x|| (slack)"));
    items.push(ergodic.item(
        "ergodicity",
        &format!("pair chain under the true kernel; largest period seen {max_period}"),
    ));
    items.push(ergodic_art.item("ergodicity_artificial", "pair chain under the reset kernel"));

    items.push(AuditItem {
        name: "feature_rank".into(),
        pass: rank.full_column_rank && rank.norm_bound_ok != Some(false),
        margin: Some(rank.ratio),
        detail: format!(
            "rank {} of {} (sigma_min/sigma_max = {:e})",
            rank.rank,
            instance.critic.dim(),
            rank.ratio
        ),
    });

    let a3 = schedule.check_assumption_3();
    let failed: Vec<&str> = a3.items().into_iter().filter(|(_, ok)| !ok).map(|(n, _)| n).collect();
    let regime = match (a3.asymptotic_regime, a3.finite_time_regime) {
        (true, true) => "asymptotic and finite-time",
        (true, false) => "asymptotic",
        (false, true) => "finite-time",
        (false, false) => "neither",
    };
    items.push(AuditItem {
        name: "stepsizes".into(),
        pass: a3.serves_some_regime(),
        margin: None,
        detail: if failed.is_empty() {
            format!("regime: {regime}")
        } else {
            format!("regime: {regime}; unmet: {}", failed.join(", "))
        },
    });

    if !full_rank {
        let why = "not evaluated: critic features lack full column rank";
        chain.block(why);
        hurwitz.block(why);
        zeta.block(why);
    }
    let skipped = if analytic { "" } else { "; non-ergodic samples skipped" };
    items.push(mixing.item("mixing", &format!("tv_t <= c sigma^t over t <= {MIXING_WINDOW}, margin 1 - SLEM{skipped}")));
    items.push(gbar.item("g_bar_posdef", "min eig of G_bar"));
    items.push(chain.item("g_posdef_chain", "kappa_min - (1 - sqrt(gamma)) eps_min"));
    items.push(hurwitz.item("hurwitz", "-max Re eig(-G_bar^-1 G)"));
    items.push(zeta.item("zeta_positive", "min eig sym(G_bar^-1 G)"));
    items.push(posdef2.item("posdef2", "min slack of the occupancy-norm inequality"));
    items.push(AuditItem {
        name: "eps_fa".into(),
        pass: true,
        margin: Some(eps_fa_max),
        detail: "largest D-weighted approximation error over the sample".into(),
    });

    Ok(AuditReport { n_theta: thetas.len(), items })
}
