//! Three-timescale target-based actor-critic on finite MDPs, with exact
//! closed-form oracles for every quantity the learner estimates.

pub mod algorithm;
pub mod error;
pub mod experiments;
pub mod features;
pub mod instance;
pub mod io;
pub mod linalg;
pub mod mdp;
pub mod oracle;
pub mod policy;
pub mod schedules;

pub use error::{Error, Result};
pub use instance::Instance;
