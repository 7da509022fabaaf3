use thiserror::Error;

/// Failure modes of the spectral toolkit.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid tree: {0}")]
    InvalidTree(String),
    #[error("invalid potential: {0}")]
    InvalidPotential(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("degenerate range: only {found} generations in [{t_min}, {t_max}], need at least 4")]
    DegenerateRange { found: usize, t_min: f64, t_max: f64 },
    #[error("envelope ratio g_k/(1+t)^(d-1) is unbounded for d = {d} (per-generation factor {factor:.3})")]
    UnboundedRatio { d: f64, factor: f64 },
    #[error("divergent moment: {0}")]
    DivergentMoment(String),
    #[error("constants are near-singular at d = {0} (d must stay below 2 - 1e-6)")]
    NearSingular(f64),
    #[error("overflow evaluating Bessel functions at x = {0}")]
    Overflow(f64),
    #[error("bad grid: {0}")]
    BadGrid(String),
    #[error("unconverged: {0}")]
    Unconverged(String),
    #[error("channel cutoff not found below cap {0}")]
    CutoffNotFound(usize),
    #[error("size cap exceeded: {size} unknowns > cap {cap}")]
    SizeCapExceeded { size: usize, cap: usize },
    #[error("quadrature under-resolved: relative change {0:.3e} after refinement")]
    QuadratureUnderresolved(f64),
    #[error("no root: {0}")]
    NoRoot(String),
    #[error("norm condition violated: lambda * ||M|| = {0:.4} >= 1")]
    NormConditionViolated(f64),
    #[error("inconclusive: {0}")]
    Inconclusive(String),
    #[error("sandwich violated at lambda = {lambda:.4e}: E- = {lower:.6e}, E = {value:.6e}, E+ = {upper:.6e}")]
    SandwichViolation { lambda: f64, lower: f64, value: f64, upper: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Stable snake_case tag for machine-readable reports.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidTree(_) => "invalid_tree",
            Error::InvalidPotential(_) => "invalid_potential",
            Error::InvalidArgument(_) => "invalid_argument",
            Error::DegenerateRange { .. } => "degenerate_range",
            Error::UnboundedRatio { .. } => "unbounded_ratio",
            Error::DivergentMoment(_) => "divergent_moment",
            Error::NearSingular(_) => "near_singular",
            Error::Overflow(_) => "overflow",
            Error::BadGrid(_) => "bad_grid",
            Error::Unconverged(_) => "unconverged",
            Error::CutoffNotFound(_) => "cutoff_not_found",
            Error::SizeCapExceeded { .. } => "size_cap_exceeded",
            Error::QuadratureUnderresolved(_) => "quadrature_underresolved",
            Error::NoRoot(_) => "no_root",
            Error::NormConditionViolated(_) => "norm_condition_violated",
            Error::Inconclusive(_) => "inconclusive",
            Error::SandwichViolation { .. } => "sandwich_violation",
        }
    }
}
