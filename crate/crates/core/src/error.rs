use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid lattice: {0}")]
    InvalidLattice(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    /// A sampling weight came out non-positive or non-finite.
    #[error("sampling weight breach at energy {energy}: weight {weight}")]
    WeightBreach { energy: f64, weight: f64 },

    #[error("sampled energy {energy} lies outside [{lo}, {hi}]; the supplied band maximum is wrong")]
    EnergyOutOfRange { energy: f64, lo: f64, hi: f64 },

    #[error("pilot histogram has empty bins inside the bulk (bin {bin}); increase the pilot budget")]
    EmptyBulkBins { bin: usize },

    #[error("no critical points survived after {starts} starts; increase the number of starts")]
    NoCriticalPoints { starts: usize },

    #[error("all Hessian eigenvalues vanish at the critical point")]
    FlatPoint,

    #[error("best point found has index {index}, expected a maximum of index {dim}")]
    NotAMaximum { index: usize, dim: usize },

    #[error("tail coefficient is only defined at quadratic extrema (found {n_zero} zero modes)")]
    DegenerateExtremum { n_zero: usize },

    #[error("walk length {n} is too large for the multinomial oracle (max {max})")]
    WalkLengthTooLarge { n: usize, max: usize },

    #[error("integer overflow in walk counting at level {level}")]
    Overflow { level: usize },

    #[error("real part of the Green's function vanishes at the band bottom")]
    ZeroGreens,

    #[error("malformed input: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
