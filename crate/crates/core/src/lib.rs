pub mod error;
pub mod estimation;
pub mod interval;
pub mod linalg;
pub mod models;
pub mod montecarlo;
pub mod normal;
pub mod numdiff;
pub mod quadrature;
pub mod rng;
pub mod types;

pub use error::{Error, Result};
