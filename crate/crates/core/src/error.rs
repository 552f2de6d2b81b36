use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("eccentricity {0} outside [0, 1)")]
    InvalidEccentricity(f64),

    #[error("invalid orbital elements: {0}")]
    InvalidElements(String),

    #[error("Kepler's equation did not converge (m = {m}, e = {e})")]
    KeplerNonConvergence { m: f64, e: f64 },

    #[error("propagation failed: {0}")]
    Propagation(String),

    #[error("collinear endpoints, transfer plane undefined")]
    Collinear,

    #[error("time of flight must be positive and finite, got {0}")]
    InvalidTof(f64),

    #[error("Lambert root-find did not converge")]
    LambertNonConvergence,

    #[error("no parabolic arc connects the endpoints")]
    NoParabolicConnection,

    #[error("burn magnitude below 1e-12 km/s, cost not differentiable")]
    DegenerateBurn,

    #[error("phi_rv is singular (condition number {0:.3e})")]
    SingularStm(f64),

    #[error("constraint Jacobian is rank deficient, possible bifurcation")]
    RankDeficient,

    #[error("corrector did not converge")]
    CorrectorFailure,

    #[error("corrector jumped {dist:.3e} from the previous member (guard {guard:.3e})")]
    JumpGuard { dist: f64, guard: f64 },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("scenario: {0}")]
    Scenario(String),

    #[error("I/O: {0}")]
    Io(#[from] std::io::Error),

    #[error("CSV: {0}")]
    Csv(#[from] csv::Error),

    #[error("JSON: {0}")]
    Json(#[from] serde_json::Error),

    #[error("TOML: {0}")]
    Toml(#[from] toml::de::Error),
}
