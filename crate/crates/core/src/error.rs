use thiserror::Error;

/// Which labelled sample a class-frequency error refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Domain {
    Source,
    Target,
}

impl core::fmt::Display for Domain {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            Domain::Source => f.write_str("source"),
            Domain::Target => f.write_str("target"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("sample is empty")]
    EmptySample,

    #[error("score {value} at position {index} is outside [0, 1]")]
    ScoreOutOfRange { index: usize, value: f64 },

    #[error("cannot build {bins} bins from {n} scores (need 1 <= bins <= n)")]
    InvalidArity { bins: usize, n: usize },

    #[error(
        "bin edge u_{edge} = {value} sits on tied scores, so the bins cannot hold \
         equal counts; add jitter to the scores or use fewer bins"
    )]
    DegenerateBins { edge: usize, value: f64 },

    #[error("bin {bin} received no points")]
    EmptyBin { bin: usize },

    #[error(
        "class {class} is absent from the {domain} labels; every class must be present \
         in both domains for the shift weights to be defined"
    )]
    ClassAbsent { class: usize, domain: Domain },

    #[error("weight {index} is {value}; shift weights must be positive and finite")]
    NonpositiveWeight { index: usize, value: f64 },

    #[error("probability vector is not on the simplex (sum {sum})")]
    InvalidSimplex { sum: f64 },

    #[error("expected {expected} entries, found {found}")]
    ArityMismatch { expected: usize, found: usize },

    #[error("length mismatch: expected {expected}, found {found}")]
    LengthMismatch { expected: usize, found: usize },

    #[error("floor(n / B) = {per_bin}; the bound needs at least 2 points per bin")]
    InsufficientSample { per_bin: usize },

    #[error("realized weight ratios (rho_0, rho_1) are required")]
    MissingRho,

    #[error("invalid parameter {name} = {value}")]
    InvalidParameter { name: &'static str, value: f64 },

    #[error("interval has zero probability mass")]
    ZeroMass,

    #[error("quadrature did not reach tolerance {target:e} (estimate {achieved:e})")]
    QuadratureFailure { achieved: f64, target: f64 },
}

pub type Result<T, E = Error> = core::result::Result<T, E>;
