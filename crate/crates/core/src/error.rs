use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DistError {
    #[error("value {v} is outside the distribution support")]
    OutOfSupport { v: f64 },
    #[error("density vanishes at {v}; virtual value undefined")]
    ZeroDensity { v: f64 },
    #[error("no value in the support reaches virtual value {target}")]
    NoSolution { target: f64 },
    #[error("invalid support [{lo}, {hi}]")]
    BadSupport { lo: f64, hi: f64 },
    #[error("invalid distribution parameters")]
    BadParameters,
    #[error("unknown distribution id")]
    UnknownId,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GraphError {
    #[error("unknown bidder {0}")]
    UnknownBidder(usize),
    #[error("edge ({0}, {1}) does not join a retailer to a supplier")]
    BadEdge(usize, usize),
    #[error("duplicate edge ({0}, {1})")]
    DuplicateEdge(usize, usize),
    #[error("bidder {0} has no incident bundle")]
    Isolated(usize),
    #[error("graph has no bundles")]
    Empty,
    #[error("expected {expected} values, got {got}")]
    ValueCount { expected: usize, got: usize },
    #[error("value {value} of bidder {bidder} is outside its support")]
    ValueOutOfSupport { bidder: usize, value: f64 },
    #[error("CTRs must be nonincreasing and lie in [0, 1]")]
    BadCtrs,
    #[error("instance needs at least one slot")]
    NoSlots,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MechanismError {
    #[error("the exact mechanism supports a single slot, got {0}")]
    UnsupportedSlots(usize),
    #[error("mechanism built for {expected_n} bundles and {expected_m} slots, instance has {n} and {m}")]
    ShapeMismatch { expected_n: usize, expected_m: usize, n: usize, m: usize },
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Dist(#[from] DistError),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("unrecognized setting label {0:?}")]
    BadSetting(alloc::string::String),
    #[error("invalid training configuration: {0}")]
    BadTrainConfig(&'static str),
}
