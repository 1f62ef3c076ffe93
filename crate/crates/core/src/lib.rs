//! Transit origin–destination estimation from route-level trip segments.
//!
//! The pipeline: load stops, segments and observed transfer rates
//! ([`ingest`]); enumerate candidate transfers ([`feasibility`]); pick
//! transfers ([`solver`]); assemble stop-level O-D matrices ([`odmatrix`]);
//! aggregate them to zones ([`aggregate`]); score against ground truth
//! ([`evaluate`]).

pub mod aggregate;
pub mod error;
pub mod evaluate;
pub mod feasibility;
pub mod ingest;
pub mod model;
pub mod odmatrix;
pub mod pipeline;
pub mod solver;

pub use error::{Error, Result};
