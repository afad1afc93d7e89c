pub mod boundary;
pub mod classify;
pub mod error;
pub mod geom;
pub mod index;
pub mod linalg;
pub mod moments;
pub mod raster;
pub mod region;
pub mod vectorize;
mod text;

pub use error::{Error, Result};
