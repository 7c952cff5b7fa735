pub mod error;
pub mod group;
pub mod oracle;
pub mod sim;
pub mod simon;
pub mod poly;
pub mod reduction;

pub use error::{Error, Result};
