pub mod admm;
pub mod dgp;
pub mod error;
pub mod gradcheck;
pub mod gradients;
pub mod harness;
pub mod imaging;
pub mod interval;
pub mod metrics;
pub mod net;

pub use error::{Error, Result};
