use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum Error {
    #[error("cannot parse number `{0}`")]
    UnparsableNumber(String),

    #[error("atom probabilities sum to {total}, not 1")]
    NonUnitMass { total: String },

    #[error("arity mismatch: expected {expected}, found {found}")]
    ArityMismatch { expected: usize, found: usize },

    #[error("atom {atom} has non-positive probability {probability}")]
    NonPositiveProbability { atom: usize, probability: String },

    #[error("market needs at least one action and one atom")]
    EmptyMarket,

    #[error("duplicate action label `{0}`")]
    DuplicateLabel(String),

    #[error("weights are not a point of the simplex: {0}")]
    NonSimplexWeights(String),

    #[error("product space has {atoms} atoms, above the cap of {cap}")]
    AtomCapExceeded { atoms: u128, cap: u128 },

    #[error("mapping for action `{action}` is undefined at {point}")]
    IncompleteMapping { action: String, point: String },

    #[error("tabulated allocation at {point} is not on the simplex: {reason}")]
    NonSimplexTable { point: String, reason: String },

    #[error("invalid plan: {0}")]
    InvalidPlan(String),

    #[error("game has {profiles} pure profiles, above the cap of {cap}")]
    TensorCapExceeded { profiles: u128, cap: u128 },

    #[error("earnings weight must lie in [0, 1), got {0}")]
    InvalidLambda(String),

    #[error("player index {player} out of range for {players} players")]
    PlayerOutOfRange { player: usize, players: usize },

    #[error("all outcomes are zero; no linear plan can be scaled to this market")]
    DegenerateSupport,

    #[error("expected value is maximised by several actions: {0:?}")]
    ExpectationNotUnique(Vec<String>),

    #[error("market has a single action; no deviation exists")]
    SingleAction,

    #[error("violation no longer reproduces under re-evaluation: {0}")]
    StaleViolation(String),

    #[error("parameter search exhausted after {iterations} iterations: {what}")]
    SearchExhausted { iterations: u32, what: String },

    #[error("invalid grid: {0}")]
    InvalidGrid(String),
}
