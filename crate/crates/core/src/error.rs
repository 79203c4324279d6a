use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("an ecosystem needs at least 3 sites, got {0}")]
    TooFewSites(usize),

    #[error("an ecosystem needs at least one user")]
    NoUsers,

    #[error("popularity must lie in [0, 1], got {0}")]
    PopularityOutOfRange(f64),

    #[error("capacity coefficient must be finite and non-negative, got {0}")]
    BadCapacityCoefficient(f64),

    #[error("expected {expected} capacity coefficients, got {got}")]
    CoefficientCount { expected: usize, got: usize },

    #[error("unknown site index {0}")]
    UnknownSite(usize),

    #[error("user {user} out of range (ecosystem has {users} users)")]
    UnknownUser { user: u32, users: usize },

    #[error("a site cannot be paired with itself ({0})")]
    SelfPair(usize),

    #[error("reuse rate must lie in [0, 1], got {0}")]
    ReuseOutOfRange(f64),

    #[error("stuffing attempts {attempts} exceed the shared user count {shared}")]
    AttemptsExceedShared { attempts: u64, shared: u64 },

    #[error("shared user count {shared} exceeds the monitoring site's user count {local}")]
    SharedExceedsLocal { shared: u64, local: u64 },

    #[error("Stirling path needs every factorial argument >= 1 (N={n}, f={f}, m={m})")]
    StirlingDegenerate { n: u64, f: u64, m: u64 },

    #[error("allocation must be non-negative and finite, got {0}")]
    BadAllocation(f64),

    #[error("site {site} has not received an allocation from peer {peer} yet")]
    MissingAllocation { site: usize, peer: usize },

    #[error("slack must be at least 1")]
    ZeroSlack,

    #[error("lookahead must be at least 1")]
    ZeroLookahead,

    #[error("foresight + lookahead = {depth} exceeds the configured bound {bound}")]
    DepthExceeded { depth: usize, bound: usize },

    #[error("increment must be at least 1 slot")]
    ZeroIncrement,

    #[error("insert decision requested for a bidder without cut-in-line rights")]
    CutlineDisabled,

    #[error("aggression must lie in [0, 1], got {0}")]
    AggressionOutOfRange(f64),

    #[error("plan violates the aggression budget: detection probability {detection} > {aggression}")]
    BudgetViolated { detection: f64, aggression: f64 },

    #[error("plan assigns user {0} twice or assigns a captured user")]
    InvalidAssignment(u32),

    #[error("no reuse data for sites {0} and {1}: they share no users")]
    NoSharedUsers(usize, usize),

    #[error("quartile {quartile} has {available} sites, cannot sample {requested}")]
    QuartileTooSmall {
        quartile: &'static str,
        available: usize,
        requested: usize,
    },

    #[error("parse error on line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
