//! An MDP bundled with its policy and critic feature sets.

use crate::error::{Error, Result};
use crate::features::CriticFeatures;
use crate::mdp::{garnet, FiniteMdp};
use crate::policy::PolicyFeatures;

/// Generator seed of the shipped desk-scale Garnet instance.
pub const DEFAULT_GARNET_SEED: u64 = 1;
pub const DEFAULT_STATES: usize = 5;
pub const DEFAULT_ACTIONS: usize = 3;
pub const DEFAULT_BRANCHING: usize = 2;
pub const DEFAULT_DISCOUNT: f64 = 0.9;

#[derive(Debug, Clone)]
pub struct Instance {
    pub mdp: FiniteMdp,
    pub policy: PolicyFeatures,
    pub critic: CriticFeatures,
}

impl Instance {
    pub fn new(mdp: FiniteMdp, policy: PolicyFeatures, critic: CriticFeatures) -> Result<Self> {
        if policy.n_states != mdp.n_states || policy.n_actions != mdp.n_actions {
            return Err(Error::Config(format!(
                "policy features are {}x{} but the MDP is {}x{}",
                policy.n_states, policy.n_actions, mdp.n_states, mdp.n_actions
            )));
        }
        if critic.n_states() != mdp.n_states {
            return Err(Error::Dimension {
                what: "critic feature rows",
                expected: mdp.n_states,
                got: critic.n_states(),
            });
        }
        Ok(Instance { mdp, policy, critic })
    }

    /// The default Garnet MDP (5 states, 3 actions, branching 2, γ = 0.9).
    pub fn default_mdp() -> FiniteMdp {
        garnet(
            DEFAULT_STATES,
            DEFAULT_ACTIONS,
            DEFAULT_BRANCHING,
            DEFAULT_DISCOUNT,
            DEFAULT_GARNET_SEED,
        )
        .expect("default garnet parameters are valid")
    }

    /// Default MDP, tabular policy, tabular critic.
    pub fn default_tabular() -> Self {
        let mdp = Self::default_mdp();
        let (n, na) = (mdp.n_states, mdp.n_actions);
        Instance::new(mdp, PolicyFeatures::tabular(n, na), CriticFeatures::tabular(n))
            .expect("consistent default instance")
    }

    /// Default MDP with the two-column affine-ramp critic.
    pub fn default_deficient() -> Self {
        let mdp = Self::default_mdp();
        let (n, na) = (mdp.n_states, mdp.n_actions);
        let critic = CriticFeatures::affine_ramp(n).expect("n ≥ 2");
        Instance::new(mdp, PolicyFeatures::tabular(n, na), critic).expect("consistent default instance")
    }

    pub fn with_critic(&self, critic: CriticFeatures) -> Result<Self> {
        Instance::new(self.mdp.clone(), self.policy.clone(), critic)
    }
}
