//! Outfit box recommendation service: session workflow, persistence, JSON API
//! and command line.

pub mod app;
pub mod cli;
pub mod error;
pub mod http;
pub mod session;
pub mod store;

pub use app::Service;
pub use error::{ServiceError, ServiceResult};
