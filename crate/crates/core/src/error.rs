use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid system: {0}")]
    InvalidSystem(String),

    #[error("wave vector must be nonzero")]
    ZeroWaveVector,

    #[error("kernel of L(omega, kappa) has dimension {dim}, expected 1 (singular values {singular_values:?})")]
    KernelDimension { dim: usize, singular_values: Vec<f64> },

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("size mismatch: expected {expected}, got {got}")]
    SizeMismatch { expected: usize, got: usize },

    #[error("fields live on different grids")]
    GridMismatch,

    #[error("W^s norm supported for s <= 2, got s = {0}")]
    UnsupportedOrder(u32),

    #[error("direct convolution limited to N <= {max}, got N = {n}")]
    TooLarge { n: usize, max: usize },

    #[error("decomposition grid is not symmetric about 0")]
    AsymmetricGrid,

    #[error("carrier kappa/eps = {carrier} is not an integer multiple of k0 = {k0}")]
    Commensurability { carrier: f64, k0: f64 },

    #[error("grid under-resolved: {0}")]
    UnderResolved(String),

    #[error("envelope profile is not polarized along the kernel vector (residual {0:.3e})")]
    Polarization(f64),

    #[error("profile does not decay on the torus: |p(+-L/2)|/max|p| = {0:.3e}")]
    Periodization(f64),

    #[error("non-finite state at t = {t}")]
    NonFinite { t: f64 },

    #[error("solution norm grew from {initial:.3e} to {current:.3e} at t = {t} (blow-up guard)")]
    BlowUp { initial: f64, current: f64, t: f64 },

    #[error("no eigendecomposition available for harmonic {0}")]
    MissingDecomposition(i32),

    #[error("invalid simulation config: {0}")]
    InvalidConfig(String),

    #[error("snapshot times differ: {0} vs {1}")]
    TimeMismatch(f64, f64),

    #[error("need at least {needed} snapshots, got {got}")]
    TooFewSnapshots { needed: usize, got: usize },

    #[error("rate fit needs at least 2 positive points, got {0}")]
    TooFewPoints(usize),

    #[error("config error at `{path}`: {msg}")]
    Config { path: String, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
