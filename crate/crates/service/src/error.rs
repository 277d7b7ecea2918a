use thiserror::Error;

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("session `{0}` not found")]
    SessionNotFound(String),
    #[error("{0}")]
    BadRequest(String),
    /// The request is valid but not in the session's current step.
    #[error("{0}")]
    WrongState(String),
    #[error("no compatible outfits under these preferences")]
    NoCompatibleOutfits,
    #[error("budget {budget} is below the cheapest compatible outfit ({cheapest})")]
    BudgetTooLow { budget: u64, cheapest: u64 },
    #[error("product `{0}` is not in the recommended box")]
    UnknownProduct(String),
    #[error(transparent)]
    Core(#[from] boxrec_core::Error),
    #[error("store: {0}")]
    Store(String),
    /// A server-side recheck of a result failed.
    #[error("integrity check failed: {0}")]
    Integrity(String),
}

impl ServiceError {
    /// Stable machine-readable code for API clients.
    pub fn code(&self) -> &'static str {
        match self {
            ServiceError::SessionNotFound(_) => "session_not_found",
            ServiceError::BadRequest(_) => "bad_request",
            ServiceError::WrongState(_) => "wrong_state",
            ServiceError::NoCompatibleOutfits => "no_compatible_outfits",
            ServiceError::BudgetTooLow { .. } => "budget_too_low",
            ServiceError::UnknownProduct(_) => "unknown_product",
            ServiceError::Core(_) => "invalid_input",
            ServiceError::Store(_) => "store_error",
            ServiceError::Integrity(_) => "integrity_error",
        }
    }
}

pub type ServiceResult<T> = std::result::Result<T, ServiceError>;
