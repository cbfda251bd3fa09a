//! Power-law step sizes, their assumption validators, and the mixing-time
//! diagnostic.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::FiniteMdp;
use crate::oracle::{artificial_pair_kernel, artificial_state_kernel, discounted_occupancy, tv_distance};
use crate::policy::SoftmaxPolicy;

/// `α_t = c1/(1+t)^a_exp`, `ξ_t = c2/(1+t)^xi_exp`, `β_t = c3/(1+t)^b_exp`.
///
/// `c1 = 0` freezes the actor (policy-evaluation mode).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PowerSchedule {
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub a_exp: f64,
    pub xi_exp: f64,
    pub b_exp: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Rates {
    pub alpha: f64,
    pub beta: f64,
    pub xi: f64,
}

impl Rates {
    pub fn min(&self) -> f64 {
        self.alpha.min(self.beta).min(self.xi)
    }
}

impl PowerSchedule {
    /// Exponents `(α, ξ, β) = (2/3, 1/2, 1/3)`.
    pub fn corollary(c1: f64, c2: f64, c3: f64) -> Self {
        PowerSchedule {
            c1,
            c2,
            c3,
            a_exp: 2.0 / 3.0,
            xi_exp: 0.5,
            b_exp: 1.0 / 3.0,
        }
    }

    pub fn frozen_actor(mut self) -> Self {
        self.c1 = 0.0;
        self
    }

    pub fn rates_at(&self, t: u64) -> Rates {
        let base = 1.0 + t as f64;
        Rates {
            alpha: self.c1 / base.powf(self.a_exp),
            beta: self.c3 / base.powf(self.b_exp),
            xi: self.c2 / base.powf(self.xi_exp),
        }
    }

    pub fn actor_frozen(&self) -> bool {
        self.c1 == 0.0
    }

    /// Structural checks; `finite_time` additionally requires `0 < β < ξ < α < 1`.
    pub fn validate(&self, finite_time: bool) -> Result<()> {
        let all = [self.c1, self.c2, self.c3, self.a_exp, self.xi_exp, self.b_exp];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(Error::Schedule("non-finite schedule parameter".into()));
        }
        if self.c1 < 0.0 || self.c2 <= 0.0 || self.c3 <= 0.0 {
            return Err(Error::Schedule(format!(
                "constants must satisfy c1 ≥ 0, c2 > 0, c3 > 0 (got {}, {}, {})",
                self.c1, self.c2, self.c3
            )));
        }
        if self.a_exp < 0.0 || self.xi_exp < 0.0 || self.b_exp < 0.0 {
            return Err(Error::Schedule("exponents must be nonnegative".into()));
        }
        if self.c2 > 1.0 {
            return Err(Error::Schedule(format!("ξ_0 = c2 = {} exceeds 1", self.c2)));
        }
        if finite_time && !self.finite_time_ordering() {
            return Err(Error::Schedule(format!(
                "finite-time mode needs 0 < b_exp < xi_exp < a_exp < 1 (got {}, {}, {})",
                self.b_exp, self.xi_exp, self.a_exp
            )));
        }
        Ok(())
    }

    pub fn finite_time_ordering(&self) -> bool {
        0.0 < self.b_exp && self.b_exp < self.xi_exp && self.xi_exp < self.a_exp && self.a_exp < 1.0
    }

    /// Exponents of the four critic-rate terms
    /// `T^{−(1−ξ)}, ln T·T^{−β}, T^{−2(α−ξ)}, T^{−2(ξ−β)}`.
    pub fn critic_rate_exponents(&self) -> [f64; 4] {
        [
            -(1.0 - self.xi_exp),
            -self.b_exp,
            -2.0 * (self.a_exp - self.xi_exp),
            -2.0 * (self.xi_exp - self.b_exp),
        ]
    }

    /// Slowest-decaying critic term (ignoring logarithms).
    pub fn dominant_critic_exponent(&self) -> f64 {
        self.critic_rate_exponents().into_iter().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Exponents of the actor-rate terms, the critic terms included.
    pub fn actor_rate_exponents(&self) -> Vec<f64> {
        let mut v = vec![-(1.0 - self.a_exp), -self.a_exp];
        v.extend(self.critic_rate_exponents());
        v
    }

    pub fn check_assumption_3(&self) -> Assumption3Report {
        let diverges = |c: f64, e: f64| c > 0.0 && e <= 1.0;
        let square_summable = |c: f64, e: f64| c == 0.0 || e > 0.5;
        let alpha_over_xi = self.c1 == 0.0 || self.a_exp > self.xi_exp;
        let xi_over_beta = self.xi_exp > self.b_exp;
        let r = Assumption3Report {
            alpha_diverges: diverges(self.c1, self.a_exp),
            xi_diverges: diverges(self.c2, self.xi_exp),
            beta_diverges: diverges(self.c3, self.b_exp),
            alpha_square_summable: square_summable(self.c1, self.a_exp),
            xi_square_summable: square_summable(self.c2, self.xi_exp),
            beta_square_summable: square_summable(self.c3, self.b_exp),
            alpha_over_xi_vanishes: alpha_over_xi,
            xi_over_beta_vanishes: xi_over_beta,
            nonincreasing: self.a_exp >= 0.0 && self.xi_exp >= 0.0 && self.b_exp >= 0.0,
            xi_at_most_one: self.c2 > 0.0 && self.c2 <= 1.0,
            asymptotic_regime: false,
            finite_time_regime: self.finite_time_ordering(),
        };
        Assumption3Report {
            asymptotic_regime: r.alpha_diverges
                && r.xi_diverges
                && r.beta_diverges
                && r.alpha_square_summable
                && r.xi_square_summable
                && r.beta_square_summable
                && r.alpha_over_xi_vanishes
                && r.xi_over_beta_vanishes,
            ..r
        }
    }
}

/// Per-condition verdicts for a power-law schedule.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Assumption3Report {
    pub alpha_diverges: bool,
    pub xi_diverges: bool,
    pub beta_diverges: bool,
    pub alpha_square_summable: bool,
    pub xi_square_summable: bool,
    pub beta_square_summable: bool,
    pub alpha_over_xi_vanishes: bool,
    pub xi_over_beta_vanishes: bool,
    /// Decreasing-stepsize conditions: nonincreasing and `0 < ξ_t ≤ 1`.
    pub nonincreasing: bool,
    pub xi_at_most_one: bool,
    /// Every asymptotic condition holds.
    pub asymptotic_regime: bool,
    /// `0 < β < ξ < α < 1`, the finite-time hypothesis.
    pub finite_time_regime: bool,
}

impl Assumption3Report {
    pub fn items(&self) -> Vec<(&'static str, bool)> {
        vec![
            ("sum alpha_t = inf", self.alpha_diverges),
            ("sum xi_t = inf", self.xi_diverges),
            ("sum beta_t = inf", self.beta_diverges),
            ("sum alpha_t^2 < inf", self.alpha_square_summable),
            ("sum xi_t^2 < inf", self.xi_square_summable),
            ("sum beta_t^2 < inf", self.beta_square_summable),
            ("alpha_t/xi_t -> 0", self.alpha_over_xi_vanishes),
            ("xi_t/beta_t -> 0", self.xi_over_beta_vanishes),
            ("nonincreasing", self.nonincreasing),
            ("0 < xi_t <= 1", self.xi_at_most_one),
        ]
    }

    /// The schedule serves at least one of the two regimes.
    pub fn serves_some_regime(&self) -> bool {
        (self.asymptotic_regime || self.finite_time_regime) && self.nonincreasing && self.xi_at_most_one
    }
}

/// `τ = min{t ≥ 1 : c σ^{t−1} ≤ threshold}`; closed form, then checked directly.
pub fn mixing_time(c: f64, sigma: f64, threshold: f64) -> Result<u64> {
    let positive = |x: f64| x.is_finite() && x > 0.0;
    if !positive(c) || !positive(threshold) || !(positive(sigma) && sigma < 1.0) {
        return Err(Error::Schedule(format!(
            "mixing time needs c > 0, σ in (0,1), threshold > 0 (got {c}, {sigma}, {threshold})"
        )));
    }
    let holds = |t: u64| c * sigma.powf((t - 1) as f64) <= threshold;
    let guess = ((threshold / c).ln() / sigma.ln()).ceil();
    let mut t = if guess.is_finite() && guess > 0.0 { guess as u64 + 1 } else { 1 };
    while t > 1 && holds(t - 1) {
        t -= 1;
    }
    while !holds(t) {
        t += 1;
    }
    Ok(t)
}

/// `τ_T` for `threshold = min{α_T, ξ_T, β_T}`. A frozen actor is skipped.
pub fn mixing_time_at(schedule: &PowerSchedule, horizon: u64, c: f64, sigma: f64) -> Result<u64> {
    let r = schedule.rates_at(horizon);
    let threshold = if schedule.actor_frozen() { r.beta.min(r.xi) } else { r.min() };
    mixing_time(c, sigma, threshold)
}

/// Geometric-ergodicity constants fitted on the exact TV decay of `S̃_t`.
#[derive(Debug, Clone, Serialize)]
pub struct MixingConstants {
    pub c: f64,
    pub sigma: f64,
    /// Second-largest eigenvalue modulus of `K̃_θ`.
    pub slem: f64,
    /// `sup_s d_TV(P(S̃_t ∈ ·|S̃_0 = s), d_ρ,θ)` for `t = 0..=window`.
    pub tv: Vec<f64>,
    /// `tv[t] ≤ c σ^t` on the whole window.
    pub bound_holds: bool,
}

pub const MIXING_WINDOW: usize = 200;
const TV_NUMERICAL_ZERO: f64 = 1e-13;

impl MixingConstants {
    pub fn estimate(mdp: &FiniteMdp, policy: &SoftmaxPolicy, window: usize) -> Result<Self> {
        let k = artificial_pair_kernel(mdp, policy);
        let mut moduli: Vec<f64> = crate::linalg::eigenvalues(&k).iter().map(|z| z.norm()).collect();
        moduli.sort_by(|a, b| b.total_cmp(a));
        let slem = moduli.get(1).copied().unwrap_or(0.0);
        let sigma = slem.clamp(1e-6, 1.0 - 1e-12);

        let tv = exact_tv_curve(mdp, policy, window)?;
        let c = tv
            .iter()
            .enumerate()
            .filter(|(t, v)| *t == 0 || **v > TV_NUMERICAL_ZERO)
            .map(|(t, v)| v / sigma.powi(t as i32))
            .fold(0.0, f64::max)
            .max(f64::MIN_POSITIVE);
        let bound_holds = slem < 1.0 - 1e-12
            && tv
                .iter()
                .enumerate()
                .all(|(t, v)| *v <= c * sigma.powi(t as i32) + 1e-12);
        Ok(MixingConstants {
            c,
            sigma,
            slem,
            tv,
            bound_holds,
        })
    }
}

/// Exact worst-start TV distance to `d_ρ,θ` by matrix powers of `P̃_θ`.
pub fn exact_tv_curve(mdp: &FiniteMdp, policy: &SoftmaxPolicy, window: usize) -> Result<Vec<f64>> {
    let d = discounted_occupancy(mdp, policy)?;
    let d: Vec<f64> = d.iter().copied().collect();
    let p = artificial_state_kernel(mdp, policy);
    let n = mdp.n_states;
    let mut power = DMatrix::<f64>::identity(n, n);
    let mut out = Vec::with_capacity(window + 1);
    for _ in 0..=window {
        let worst = (0..n)
            .map(|s| {
                let row: Vec<f64> = power.row(s).iter().copied().collect();
                tv_distance(&row, &d)
            })
            .fold(0.0, f64::max);
        out.push(worst);
        power = &power * &p;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rates_at_zero() {
        let s = PowerSchedule::corollary(0.3, 0.5, 0.7);
        let r = s.rates_at(0);
        assert_eq!((r.alpha, r.beta, r.xi), (0.3, 0.7, 0.5));
    }

    #[test]
    fn corollary_rates_at_63() {
        let r = PowerSchedule::corollary(1.0, 1.0, 1.0).rates_at(63);
        assert!((r.alpha - 1.0 / 16.0).abs() < 1e-15);
        assert!((r.beta - 1.0 / 4.0).abs() < 1e-15);
        assert!((r.xi - 1.0 / 8.0).abs() < 1e-15);
    }

    #[test]
    fn corollary_exponents_fail_only_square_summability() {
        let rep = PowerSchedule::corollary(1.0, 1.0, 1.0).check_assumption_3();
        assert!(rep.alpha_diverges && rep.xi_diverges && rep.beta_diverges);
        assert!(rep.alpha_square_summable);
        assert!(!rep.xi_square_summable && !rep.beta_square_summable);
        assert!(rep.alpha_over_xi_vanishes && rep.xi_over_beta_vanishes);
        assert!(!rep.asymptotic_regime);
        assert!(rep.finite_time_regime);
        assert!(rep.serves_some_regime());
    }

    #[test]
    fn robbins_monro_exponents_pass() {
        let s = PowerSchedule { c1: 1.0, c2: 1.0, c3: 1.0, a_exp: 1.0, xi_exp: 0.8, b_exp: 0.6 };
        let rep = s.check_assumption_3();
        assert!(rep.asymptotic_regime);
        assert!(!rep.finite_time_regime);
    }

    #[test]
    fn equal_exponents_break_ratio() {
        let s = PowerSchedule { c1: 1.0, c2: 1.0, c3: 1.0, a_exp: 0.7, xi_exp: 0.7, b_exp: 0.6 };
        assert!(!s.check_assumption_3().alpha_over_xi_vanishes);
    }

    #[test]
    fn mixing_time_hand_case() {
        assert_eq!(mixing_time(1.0, 0.5, 0.25).unwrap(), 3);
        assert_eq!(mixing_time(0.1, 0.5, 0.25).unwrap(), 1);
        assert!(mixing_time(1.0, 1.0, 0.25).is_err());
    }

    #[test]
    fn validation() {
        let mut s = PowerSchedule::corollary(1.0, 1.0, 1.0);
        assert!(s.validate(true).is_ok());
        s.c2 = 1.5;
        assert!(s.validate(false).is_err());
        let inverted = PowerSchedule { c1: 1.0, c2: 1.0, c3: 1.0, a_exp: 2.0 / 3.0, xi_exp: 1.0 / 3.0, b_exp: 0.5 };
        assert!(inverted.validate(false).is_ok());
        assert!(inverted.validate(true).is_err());
    }

    #[test]
    fn dominant_exponent_of_corollary() {
        let s = PowerSchedule::corollary(1.0, 1.0, 1.0);
        assert!((s.dominant_critic_exponent() + 1.0 / 3.0).abs() < 1e-15);
    }
}
