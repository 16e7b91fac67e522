pub mod analysis;
pub mod bundles;
pub mod conditions;
pub mod coupling;
pub mod error;
pub mod expr;
pub mod model;
pub mod order;
pub mod scalar;

pub use error::{Error, Result};
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
