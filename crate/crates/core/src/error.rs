use thiserror::Error;

/// Errors raised by the kinematic and static models.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),

    #[error("domain error: {0}")]
    Domain(String),

    /// A trigonometric inverse was asked for an argument outside [-1, 1],
    /// i.e. the linkage cannot close at this configuration.
    #[error("geometry infeasible: {what} argument {value} outside [-1, 1]")]
    Infeasible { what: &'static str, value: f64 },

    #[error("{quantity} = {value} outside [{min}, {max}]")]
    OutOfRange {
        quantity: &'static str,
        value: f64,
        min: f64,
        max: f64,
    },
}

pub type ModelResult<T> = Result<T, ModelError>;
