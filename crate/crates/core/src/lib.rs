//! Outfit box recommendation.
//!
//! The pipeline retrieves preferred items per clothing type ([`retrieval`]),
//! verifies every cross-type combination with per-pair compatibility decoders
//! ([`decoder`], [`training`], [`engine`]) and packs the verified outfits into a
//! budget-feasible box ([`solver`]). [`metrics`] holds the evaluation measures.

pub mod catalog;
pub mod decoder;
pub mod engine;
pub mod error;
pub mod features;
pub mod metrics;
pub mod retrieval;
pub mod solver;
pub mod synthetic;
pub mod training;

pub use error::{Error, Result};
