//! The online three-timescale target-based actor-critic loop.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::CriticFeatures;
use crate::instance::Instance;
use crate::mdp::{sample_categorical, ChainState};
use crate::schedules::PowerSchedule;

/// Live iterates `(θ_t, ω_t, ω̄_t)` and the sampler position.
#[derive(Debug, Clone, PartialEq)]
pub struct LearnerState {
    pub theta: DVector<f64>,
    pub omega: DVector<f64>,
    pub omega_bar: DVector<f64>,
    pub chain: ChainState,
    pub t: u64,
}

impl LearnerState {
    /// `θ_0 = 0`, `ω_0 = ω̄_0 = 0`, `S̃_0 ~ ρ`.
    pub fn initial(instance: &Instance, seed: u64) -> Self {
        LearnerState {
            theta: DVector::zeros(instance.policy.dim),
            omega: DVector::zeros(instance.critic.dim()),
            omega_bar: DVector::zeros(instance.critic.dim()),
            chain: ChainState::new(&instance.mdp, seed),
            t: 0,
        }
    }

    /// Sets `ω_0` and, to keep `ω̄_0 = ω_0`, the target too.
    pub fn with_omega(mut self, omega: DVector<f64>) -> Self {
        self.omega_bar = omega.clone();
        self.omega = omega;
        self
    }

    pub fn with_omega_bar(mut self, omega_bar: DVector<f64>) -> Self {
        self.omega_bar = omega_bar;
        self
    }

    pub fn with_theta(mut self, theta: DVector<f64>) -> Self {
        self.theta = theta;
        self
    }

    fn check_dims(&self, instance: &Instance) -> Result<()> {
        let checks = [
            ("theta", instance.policy.dim, self.theta.len()),
            ("omega", instance.critic.dim(), self.omega.len()),
            ("omega_bar", instance.critic.dim(), self.omega_bar.len()),
        ];
        for (what, expected, got) in checks {
            if expected != got {
                return Err(Error::Dimension { what, expected, got });
            }
        }
        if self.chain.tilde_state >= instance.mdp.n_states {
            return Err(Error::OutOfRange {
                what: "tilde_state",
                index: self.chain.tilde_state,
                limit: instance.mdp.n_states,
            });
        }
        Ok(())
    }
}

/// One iteration's sampled quantities and TD errors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StepRecord {
    pub t: u64,
    pub delta: f64,
    pub delta_bar: f64,
    pub s_tilde: usize,
    pub a_tilde: usize,
    pub s_next: usize,
    pub reward: f64,
    pub bernoulli: bool,
    pub next_tilde: usize,
}

/// Which actor increment is applied.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ActorVariant {
    #[default]
    Plain,
    /// Actor increment scaled by `Γ(ω_t)`.
    Stabilized { c0: f64 },
}

/// TD error driving the actor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActorTd {
    /// `δ_{t+1}`, built on `ω_t`.
    #[default]
    Classical,
    /// `δ̄_{t+1}`; the simplified variant.
    Target,
}

/// Target-variable update rule.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TargetUpdate {
    /// `ω̄_{t+1} = ω̄_t + ξ_t (ω_{t+1} − ω̄_t)`.
    #[default]
    Polyak,
    /// Non-averaging comparison rule: `ω̄ ← ω` every `period` steps.
    HardCopy { period: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LearnerOptions {
    #[serde(default)]
    pub actor: ActorVariant,
    #[serde(default)]
    pub actor_td: ActorTd,
    #[serde(default)]
    pub target: TargetUpdate,
}

impl LearnerOptions {
    pub fn validate(&self) -> Result<()> {
        if let ActorVariant::Stabilized { c0 } = self.actor {
            if !(c0 > 0.0 && c0.is_finite()) {
                return Err(Error::Config(format!("stabilized actor needs C0 > 0 (got {c0})")));
            }
        }
        if let TargetUpdate::HardCopy { period } = self.target {
            if period == 0 {
                return Err(Error::Config("hard-copy period must be ≥ 1".into()));
            }
        }
        Ok(())
    }
}

/// `δ = r + γ φ(s')ᵀω − φ(s̃)ᵀω`.
pub fn td_error(
    features: &CriticFeatures,
    discount: f64,
    omega: &DVector<f64>,
    s_tilde: usize,
    s_next: usize,
    reward: f64,
) -> f64 {
    reward + discount * features.dot(s_next, omega) - features.dot(s_tilde, omega)
}

/// `δ̄ = r + γ φ(s')ᵀω̄ − φ(s̃)ᵀω`.
pub fn target_td_error(
    features: &CriticFeatures,
    discount: f64,
    omega: &DVector<f64>,
    omega_bar: &DVector<f64>,
    s_tilde: usize,
    s_next: usize,
    reward: f64,
) -> f64 {
    reward + discount * features.dot(s_next, omega_bar) - features.dot(s_tilde, omega)
}

/// `Γ(ω)` as a function of `‖ω‖`.
pub fn gamma_scale(norm: f64, c0: f64) -> f64 {
    if norm <= c0 {
        1.0
    } else {
        (1.0 + c0) / (1.0 + norm)
    }
}

/// One iteration of the loop, mutating `state` in place.
pub fn step(
    instance: &Instance,
    schedule: &PowerSchedule,
    options: &LearnerOptions,
    state: &mut LearnerState,
) -> Result<StepRecord> {
    let mdp = &instance.mdp;
    let xf = &instance.policy;
    let phi = &instance.critic;
    let gamma = mdp.discount;
    let t = state.t;
    let rates = schedule.rates_at(t);

    let s = state.chain.tilde_state;
    let probs = action_probs(xf, &state.theta, s);
    let a = sample_categorical(&probs, &mut state.chain.rng);
    let env = mdp.sample_env_step(&mut state.chain, a)?;
    let s_next = env.next_state;

    let delta = td_error(phi, gamma, &state.omega, s, s_next, env.reward);
    let delta_bar = target_td_error(phi, gamma, &state.omega, &state.omega_bar, s, s_next, env.reward);

    if rates.alpha != 0.0 {
        let td = match options.actor_td {
            ActorTd::Classical => delta,
            ActorTd::Target => delta_bar,
        };
        let gamma_w = match options.actor {
            ActorVariant::Plain => 1.0,
            ActorVariant::Stabilized { c0 } => gamma_scale(state.omega.norm(), c0),
        };
        let coef = rates.alpha / (1.0 - gamma) * gamma_w * td;
        actor_increment(xf, &mut state.theta, s, a, &probs, coef);
    }

    let cb = rates.beta * delta_bar;
    for (j, w) in state.omega.iter_mut().enumerate() {
        *w += cb * phi.matrix()[(s, j)];
    }

    match options.target {
        TargetUpdate::Polyak => {
            let xi = rates.xi;
            for (wb, w) in state.omega_bar.iter_mut().zip(state.omega.iter()) {
                *wb = (1.0 - xi) * *wb + xi * w;
            }
        }
        TargetUpdate::HardCopy { period } => {
            if (t + 1).is_multiple_of(period) {
                state.omega_bar.copy_from(&state.omega);
            }
        }
    }

    state.t += 1;
    let finite = |v: &DVector<f64>| v.iter().all(|x| x.is_finite());
    for (what, ok) in [
        ("theta", finite(&state.theta)),
        ("omega", finite(&state.omega)),
        ("omega_bar", finite(&state.omega_bar)),
    ] {
        if !ok {
            return Err(Error::Diverged { what, step: t });
        }
    }

    Ok(StepRecord {
        t,
        delta,
        delta_bar,
        s_tilde: s,
        a_tilde: a,
        s_next,
        reward: env.reward,
        bernoulli: env.bernoulli,
        next_tilde: env.next_tilde,
    })
}

/// Softmax probabilities at `s`, allocation-light version of the policy's.
fn action_probs(xf: &crate::policy::PolicyFeatures, theta: &DVector<f64>, s: usize) -> Vec<f64> {
    let logits: Vec<f64> = (0..xf.n_actions)
        .map(|a| xf.x(s, a).iter().zip(theta.iter()).map(|(x, t)| x * t).sum())
        .collect();
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut p: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let z: f64 = p.iter().sum();
    p.iter_mut().for_each(|v| *v /= z);
    p
}

/// `θ += coef · (x(s,a) − Σ_b π(b|s) x(s,b))`.
fn actor_increment(
    xf: &crate::policy::PolicyFeatures,
    theta: &mut DVector<f64>,
    s: usize,
    a: usize,
    probs: &[f64],
    coef: f64,
) {
    for i in 0..xf.dim {
        let mean: f64 = probs.iter().enumerate().map(|(b, p)| p * xf.x(s, b)[i]).sum();
        theta[i] += coef * (xf.x(s, a)[i] - mean);
    }
}

/// Parameters of a stored iterate.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Snapshot {
    pub t: u64,
    pub theta: Vec<f64>,
    pub omega: Vec<f64>,
    pub omega_bar: Vec<f64>,
}

impl Snapshot {
    pub fn of(state: &LearnerState) -> Self {
        Snapshot {
            t: state.t,
            theta: state.theta.iter().copied().collect(),
            omega: state.omega.iter().copied().collect(),
            omega_bar: state.omega_bar.iter().copied().collect(),
        }
    }
}

/// Result of [`run`]. On divergence `aborted` holds the error and every
/// step completed before it is kept.
#[derive(Debug)]
pub struct Trajectory {
    pub snapshots: Vec<Snapshot>,
    pub records: Vec<StepRecord>,
    pub final_state: LearnerState,
    pub aborted: Option<Error>,
}

/// Drives `state` for `horizon` steps, calling `observe` after each one.
/// The callback sees the post-step state.
pub fn drive(
    instance: &Instance,
    schedule: &PowerSchedule,
    options: &LearnerOptions,
    state: &mut LearnerState,
    horizon: u64,
    mut observe: impl FnMut(&LearnerState, &StepRecord),
) -> Result<()> {
    options.validate()?;
    schedule.validate(false)?;
    state.check_dims(instance)?;
    for _ in 0..horizon {
        let rec = step(instance, schedule, options, state)?;
        observe(state, &rec);
    }
    Ok(())
}

/// Runs `horizon` steps, snapshotting at `t = 0`, every `stride` steps, and
/// at the end. `keep_records` retains every `StepRecord`.
pub fn run(
    instance: &Instance,
    schedule: &PowerSchedule,
    options: &LearnerOptions,
    init: LearnerState,
    horizon: u64,
    stride: u64,
    keep_records: bool,
) -> Result<Trajectory> {
    if stride == 0 {
        return Err(Error::Config("snapshot stride must be ≥ 1".into()));
    }
    let mut state = init;
    let mut snapshots = vec![Snapshot::of(&state)];
    let mut records = Vec::new();
    let start = state.t;
    let res = drive(instance, schedule, options, &mut state, horizon, |st, rec| {
        if keep_records {
            records.push(*rec);
        }
        let k = st.t - start;
        if k.is_multiple_of(stride) || k == horizon {
            snapshots.push(Snapshot::of(st));
        }
    });
    let aborted = match res {
        Ok(()) => None,
        Err(e @ Error::Diverged { .. }) => Some(e),
        Err(e) => return Err(e),
    };
    Ok(Trajectory {
        snapshots,
        records,
        final_state: state,
        aborted,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    fn scalar_features() -> CriticFeatures {
        CriticFeatures::new(DMatrix::from_element(2, 1, 1.0)).unwrap()
    }

    #[test]
    fn td_error_hand_case() {
        let f = scalar_features();
        let w = DVector::from_element(1, 2.0);
        assert_eq!(td_error(&f, 0.5, &w, 0, 1, 1.0), 0.0);
        assert_eq!(td_error(&f, 0.5, &DVector::zeros(1), 0, 1, 1.0), 1.0);
    }

    #[test]
    fn target_td_collapses() {
        let f = scalar_features();
        let w = DVector::from_element(1, 0.7);
        assert_eq!(
            target_td_error(&f, 0.9, &w, &w, 0, 1, 0.3),
            td_error(&f, 0.9, &w, 0, 1, 0.3)
        );
        let z = DVector::zeros(1);
        assert_eq!(target_td_error(&f, 0.9, &z, &z, 0, 1, 0.3), 0.3);
    }

    #[test]
    fn gamma_scale_formula() {
        assert_eq!(gamma_scale(0.5, 1.0), 1.0);
        let c0 = 2.0;
        let g = gamma_scale(2.0 * c0 + 1.0, c0);
        assert!((g - (1.0 + c0) / (2.0 + 2.0 * c0)).abs() < 1e-15);
    }

    #[test]
    fn zero_horizon_returns_initial_state() {
        let inst = Instance::default_tabular();
        let init = LearnerState::initial(&inst, 3);
        let sched = PowerSchedule::corollary(0.5, 0.5, 0.5);
        let tr = run(&inst, &sched, &LearnerOptions::default(), init.clone(), 0, 10, true).unwrap();
        assert_eq!(tr.snapshots.len(), 1);
        assert!(tr.records.is_empty());
        assert_eq!(tr.final_state, init);
    }

    #[test]
    fn divergence_is_reported_with_step() {
        let inst = Instance::default_tabular();
        let init = LearnerState::initial(&inst, 3).with_omega(DVector::from_element(5, f64::INFINITY));
        let sched = PowerSchedule::corollary(0.5, 0.5, 0.5);
        let tr = run(&inst, &sched, &LearnerOptions::default(), init, 100, 10, true).unwrap();
        assert!(matches!(tr.aborted, Some(Error::Diverged { .. })));
    }
}
