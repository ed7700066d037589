pub mod choice;
pub mod desk;
pub mod domain;
pub mod error;
pub mod lshaped;
pub mod model;
pub mod saa;
pub mod sim;
pub mod solve;
pub mod stochastics;

pub use error::{Error, Result};
