pub mod comms;
pub mod error;
pub mod harness;
pub mod learning;
pub mod pipeline;
pub mod seed;
pub mod sim;
pub mod windowing;

pub use error::{Error, Result};
