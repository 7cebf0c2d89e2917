use thiserror::Error;

/// Failure classes shared by the CLI (exit codes) and the HTTP API (status
/// codes).
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GatewayError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Validation(String),
    #[error("{0}")]
    Io(String),
    #[error("{0}")]
    NotFound(String),
    #[error("{0}")]
    Conflict(String),
}

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 1;
pub const EXIT_IO: i32 = 2;
pub const EXIT_USAGE: i32 = 64;

impl GatewayError {
    pub fn exit_code(&self) -> i32 {
        match self {
            GatewayError::Usage(_) => EXIT_USAGE,
            GatewayError::Io(_) => EXIT_IO,
            // a missing named input is a bad argument, not a failed read
            GatewayError::Validation(_) | GatewayError::NotFound(_) | GatewayError::Conflict(_) => EXIT_VALIDATION,
        }
    }

    pub fn code(&self) -> &'static str {
        match self {
            GatewayError::Usage(_) => "usage",
            GatewayError::Validation(_) => "validation_failed",
            GatewayError::Io(_) => "io_error",
            GatewayError::NotFound(_) => "not_found",
            GatewayError::Conflict(_) => "conflict",
        }
    }
}

impl From<decarb_core::dataset::DatasetError> for GatewayError {
    fn from(e: decarb_core::dataset::DatasetError) -> Self {
        if e.is_io() {
            GatewayError::Io(e.to_string())
        } else {
            GatewayError::Validation(e.to_string())
        }
    }
}

impl From<decarb_mobsim::WorldError> for GatewayError {
    fn from(e: decarb_mobsim::WorldError) -> Self {
        if e.is_io() {
            GatewayError::Io(e.to_string())
        } else {
            GatewayError::Validation(e.to_string())
        }
    }
}

impl From<decarb_mobsim::SimError> for GatewayError {
    fn from(e: decarb_mobsim::SimError) -> Self {
        match e {
            decarb_mobsim::SimError::Finished => GatewayError::Conflict(e.to_string()),
            _ => GatewayError::Validation(e.to_string()),
        }
    }
}

impl From<std::io::Error> for GatewayError {
    fn from(e: std::io::Error) -> Self {
        GatewayError::Io(e.to_string())
    }
}

macro_rules! validation_from {
    ($($t:ty),*) => {$(
        impl From<$t> for GatewayError {
            fn from(e: $t) -> Self {
                GatewayError::Validation(e.to_string())
            }
        }
    )*};
}

validation_from!(
    decarb_core::ScenarioError,
    decarb_core::InventoryError,
    decarb_core::equity::EquityError,
    decarb_mobsim::LeverError,
    serde_json::Error
);
