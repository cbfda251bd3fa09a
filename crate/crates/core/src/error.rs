use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid MDP: {}", join(.0))]
    InvalidMdp(Vec<String>),

    #[error("{what} index {index} out of range (limit {limit})")]
    OutOfRange {
        what: &'static str,
        index: usize,
        limit: usize,
    },

    #[error("dimension mismatch for {what}: expected {expected}, got {got}")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("singular linear system in {context} (condition estimate {cond:e})")]
    Singular { context: &'static str, cond: f64 },

    #[error("stationary distribution is not unique: stacked system has rank {rank} < {n}")]
    NotUnique { rank: usize, n: usize },

    #[error("non-finite {what} at step {step}")]
    Diverged { what: &'static str, step: u64 },

    #[error("features: {0}")]
    Features(String),

    #[error("schedule: {0}")]
    Schedule(String),

    #[error("config: {0}")]
    Config(String),

    #[error("experiment: {0}")]
    Experiment(String),

    #[error("{path}: {message}")]
    Parse { path: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn join(items: &[String]) -> String {
    items.join("; ")
}
