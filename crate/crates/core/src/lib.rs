pub mod correlation;
pub mod ensemble;
pub mod error;
pub mod fft;
pub mod io;
pub mod moments;
pub mod paraxial;
pub mod random_fields;
pub mod rays;

pub use error::{Error, Result};
