use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid chart: {0}")]
    InvalidChart(String),

    #[error("degree {degree} is not representable on a {dim}-dimensional chart")]
    DegreeOutOfRange { degree: usize, dim: usize },

    #[error("expected degree {expected}, found {found}")]
    DegreeMismatch { expected: usize, found: usize },

    #[error("operands live on different charts ({0} vs {1})")]
    ChartMismatch(String, String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("point {point:?} lies outside chart {chart}")]
    OutsideChart { chart: String, point: Vec<f64> },

    #[error("sphere of radius {radius} around {center:?} leaves chart {chart}")]
    SphereOutsideChart {
        chart: String,
        center: Vec<f64>,
        radius: f64,
    },

    #[error("invalid cover: {0}")]
    InvalidCover(String),

    #[error("invalid bundle data: {0}")]
    InvalidBundle(String),

    #[error("incompatible connection: max discrepancy {discrepancy:.3e} exceeds {tolerance:.3e}")]
    IncompatibleConnection { discrepancy: f64, tolerance: f64 },

    #[error("metric is not positive definite at node {node} of chart {chart} (min eigenvalue {min_eigenvalue:.3e})")]
    SingularMetric {
        chart: String,
        node: usize,
        min_eigenvalue: f64,
    },

    #[error("bundle map loses injectivity at node {node} of chart {chart} (smallest singular value {sigma_min:.3e})")]
    InjectivityFloor {
        chart: String,
        node: usize,
        sigma_min: f64,
    },

    #[error("bundle map is not surjective at node {node} of chart {chart} (smallest singular value {sigma_min:.3e})")]
    NotSurjective {
        chart: String,
        node: usize,
        sigma_min: f64,
    },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("homotopy endpoints drift by {drift:.3e} (limit {limit:.3e})")]
    EndpointDrift { drift: f64, limit: f64 },

    #[error("homotopy leaves the normalized class at t = {t}: radial variation {variation:.3e}")]
    NotNormalized { t: f64, variation: f64 },

    #[error("epsilon sequence does not converge: spread {spread:.3e} above tolerance {tolerance:.3e}")]
    NotExtendable { spread: f64, tolerance: f64 },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("budget refused: {0}")]
    Budget(String),
}
