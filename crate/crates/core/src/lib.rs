pub mod augment;
pub mod cli;
pub mod compiler;
pub mod error;
pub mod evalkit;
pub mod geometry;
pub mod ingest;
pub mod mask;
pub mod policy;
pub mod seed;
pub mod sim;
pub mod types;

pub use error::{Error, Result};
