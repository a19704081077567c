pub mod builders;
pub mod cohomology;
pub mod complex;
pub mod eigen;
pub mod error;
pub mod feec;
pub mod experiments;
pub mod geometry;
pub mod meshio;
pub mod sparse;

pub use error::{Error, Result};
