use finhol::algebra::AlgebraError;
use finhol::fields::FieldError;
use finhol::models::ModelError;
use finhol::transport::TransportError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("model degeneracy: {0}")]
    Degenerate(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Io(_) => 2,
            CliError::Degenerate(_) => 3,
            CliError::Numerical(_) => 4,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Config(_) => "config",
            CliError::Degenerate(_) => "degenerate_model",
            CliError::Numerical(_) => "numerical",
            CliError::Io(_) => "io",
        }
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        if e.is_degeneracy() {
            CliError::Degenerate(e.to_string())
        } else {
            CliError::Config(e.to_string())
        }
    }
}

impl From<FieldError> for CliError {
    fn from(e: FieldError) -> Self {
        match e {
            FieldError::Model(m) => m.into(),
            other => CliError::Config(other.to_string()),
        }
    }
}

impl From<AlgebraError> for CliError {
    fn from(e: AlgebraError) -> Self {
        match e {
            AlgebraError::Model(m) => m.into(),
            AlgebraError::Field(f) => f.into(),
            other => CliError::Config(other.to_string()),
        }
    }
}

impl From<TransportError> for CliError {
    fn from(e: TransportError) -> Self {
        match e {
            TransportError::Model(m) => m.into(),
            TransportError::Field(f) => f.into(),
            TransportError::Algebra(a) => a.into(),
            TransportError::InvalidCurve(s) => CliError::Config(format!("invalid curve: {s}")),
            e @ (TransportError::Ode(_) | TransportError::Drift { .. }) => CliError::Numerical(e.to_string()),
        }
    }
}
