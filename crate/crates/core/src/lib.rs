pub mod cli;
pub mod config;
pub mod cycle;
pub mod error;
pub mod hybrid;
pub mod integrator;
pub mod model;
pub mod normal_form;
pub mod oracle;
pub mod poincare;

pub use error::{Error, Result};
