pub mod certify;
pub mod cli;
pub mod config;
pub mod dynamics;
pub mod error;
pub mod experiments;
pub mod kernel;
pub mod output;
pub mod scenario;
pub mod spde;

pub use error::{Error, Result};
