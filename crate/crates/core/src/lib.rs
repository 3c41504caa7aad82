//! Reproducible daily benchmark pipeline for government-bond CIP
//! deviations: public-data ingestion and lag alignment, three regression
//! families with Newey-West inference, leave-one-year-out and
//! expanding-window validation, cointegration and aggregation-difference
//! diagnostics, principal-component rotation, and tidy report emission.

pub mod error;
pub mod diagnostics;
pub mod hac;
pub mod ingest;
pub mod linalg;
pub mod panel;
pub mod par;
pub mod regress;
pub mod validate;
pub mod stats;
pub mod synth;
pub mod types;

pub use error::{Error, Result};
