pub mod adapter;
pub mod backbone;
pub mod cli;
pub mod compute;
pub mod data;
pub mod engine;
pub mod error;
pub mod eval;
pub mod synthetic;

pub use error::{Error, Result};
