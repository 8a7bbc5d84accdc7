pub mod api;
pub mod artifacts;
pub mod cli;
pub mod error;
pub mod fetch;
pub mod formats;
pub mod service;

pub use error::{Error, Result};
