pub mod attack;
pub mod detector;
mod error;
pub mod features;
pub mod fixtures;
pub mod image;
pub mod metrics;
pub mod mitigate;
pub mod nn;

pub use error::{Error, Result};
pub use image::Image;
