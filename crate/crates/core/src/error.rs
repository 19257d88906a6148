use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("agent index {index} out of range for a population of {m}")]
    IndexOutOfRange { index: usize, m: usize },

    #[error("self-interaction of agent {0} is undefined")]
    SelfInteraction(usize),

    #[error("triad indices must be distinct, got ({0}, {1}, {2})")]
    DegenerateTriad(usize, usize, usize),

    #[error("population needs at least 3 agents, got {0}")]
    PopulationTooSmall(usize),

    #[error("matrix for {m} agents needs {expected} entries, got {got}")]
    EntryCount { m: usize, expected: usize, got: usize },

    #[error("initial interactions must be -1 or +1; found neutral at ({0}, {1})")]
    NeutralAtInit(usize, usize),

    #[error("invalid sign value {0}")]
    InvalidSign(i64),

    #[error("transport failure after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },

    #[error("protocol error: {0}")]
    Protocol(String),

    #[error("no recorded response for iteration {iteration}, focal {focal}, target {target}")]
    MissingFixture {
        iteration: usize,
        focal: usize,
        target: usize,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Toml(#[from] toml::de::Error),
}

impl Error {
    /// Fatal transport failures abort a simulation; everything else is a bug or bad input.
    pub fn is_transport(&self) -> bool {
        matches!(self, Error::Transport { .. })
    }
}
