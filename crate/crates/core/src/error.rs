use num_complex::Complex64;
use thiserror::Error;

/// Failures reported by the solver.
#[derive(Debug, Error)]
pub enum Error {
    #[error("λ = {0} lies on the essential spectrum (-∞, -mc²] ∪ [mc², ∞)")]
    EssentialSpectrumPoint(Complex64),

    #[error("Green function requested at the origin")]
    OriginSingularity,

    #[error("η² - τ² = -4c²: confinement coupling has no transmission matrix")]
    ConfinementCase,

    #[error("η² - τ² ≠ -4c²: confinement projectors are undefined")]
    NotConfinement,

    #[error("η² = τ²: the coupling-inversion map is undefined")]
    DegenerateCoupling,

    #[error(
        "critical coupling η² - τ² = 4c² (η = {eta}, τ = {tau}, c = {c}): the critical case \
         needs H^(-1/2) trace theory and is not supported"
    )]
    CriticalCoupling { eta: f64, tau: f64, c: f64 },

    #[error(
        "mixed coupling η = {eta}, τ = {tau}: the nonrelativistic limit requires a purely \
         electrostatic or purely scalar shell"
    )]
    MixedCoupling { eta: f64, tau: f64 },

    #[error("bad resolution: {0}")]
    BadResolution(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("open surface: {0} boundary edge(s)")]
    OpenSurface(usize),

    #[error("inconsistent face orientation")]
    InconsistentOrientation,

    #[error("evaluation point {0:?} lies on the surface")]
    PointOnSurface([f64; 3]),

    #[error("volume node {0:?} lies on the surface")]
    VolumeNodeOnSurface([f64; 3]),

    #[error("no eigenvalue in [{lo}, {hi}]: smallest singular value {sigma_min:e} above acceptance")]
    NoEigenvalueInBracket { lo: f64, hi: f64, sigma_min: f64 },

    #[error("the resolvent formula needs a nonreal λ, got {0}")]
    RealLambda(Complex64),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("linear algebra failure: {0}")]
    Linalg(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
