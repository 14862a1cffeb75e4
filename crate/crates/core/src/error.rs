use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("model component {0} is absent")]
    ComponentAbsent(&'static str),
    #[error("characteristic value u = {u} lies strictly between the endstates (sigma = {sigma})")]
    CharacteristicInRange { u: f64, sigma: f64 },
    #[error("endstates are not consecutive zeros of g: zero at {0} in between")]
    NonConsecutiveZeros(f64),
    #[error("endstate {0} is not a non-degenerate zero of g")]
    NotAZero(f64),
    #[error("degenerate characteristic value {u_star}: f''(u*) = {f2}")]
    DegenerateCharacteristic { u_star: f64, f2: f64 },
    #[error("profile left the model range without reaching a zero of g")]
    NoAdjacentZero,
    #[error("Oleinik condition violated at x = {position}: {detail}")]
    OleinikViolation { position: f64, detail: String },
    #[error("Rankine-Hugoniot mismatch at x = {position}: residual {residual:e}")]
    RhMismatch { position: f64, residual: f64 },
    #[error("one-sided limit {value} at x = {position} is a characteristic value")]
    CharacteristicLimit { position: f64, value: f64 },
    #[error("degenerate wave: {0}")]
    Degenerate(String),
    #[error("endstate {0} is stable (g' <= 0), no critical weight")]
    StableEndstate(f64),
    #[error("endstate {0} is characteristic (f' = sigma)")]
    CharacteristicEndstate(f64),
    #[error("weight kappa = {kappa} is below the critical weight {kappa_plus}")]
    SubcriticalWeight { kappa: f64, kappa_plus: f64 },
    #[error("no convergence: {0}")]
    NoConvergence(String),
    #[error("grid does not resolve the weight: kappa*dx = {0}")]
    UnresolvedWeight(f64),
    #[error("fit window contains no usable points")]
    EmptyWindow,
    #[error("characteristics crossed at t = {time}")]
    CrossingDetected { time: f64 },
    #[error("characteristics no longer cover x = {x} at t = {time}")]
    Coverage { x: f64, time: f64 },
    #[error("characteristic speed changes sign on the half-line at u = {u}")]
    SignViolation { u: f64 },
    #[error("tracked discontinuity {index} escaped the extension overlap at t = {time}")]
    TrackingEscape { index: usize, time: f64 },
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("singular integrand: {0}")]
    SingularIntegrand(String),
    #[error("shift map not invertible: {0}")]
    Invertibility(String),
    #[error("level set: {0}")]
    LevelSet(String),
    #[error("configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
