//! Block-counting chains of exchangeable fragmentation-coalescence
//! processes: rates, generators, boundary criteria and exact simulation.

pub mod cli;
pub mod criteria;
pub mod error;
pub mod experiments;
pub mod generator;
pub mod measures;
pub mod quad;
pub mod rates;
pub mod simulate;
pub mod special;
pub mod stats;

pub use error::{EfcError, Result};
