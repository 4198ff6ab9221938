//! Geometry of token representation matrices: the average representation,
//! the first principal component and the cosine between them, together with
//! the statistical and spectral tooling around that measurement.

pub mod error;
pub mod ingest;
pub mod linalg;
pub mod property;
pub mod rng;
pub mod stats;
pub mod synth;
pub mod theory;
pub mod toymodel;

pub use error::{Error, Result};
