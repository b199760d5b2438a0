pub mod bitstream;
pub mod codec;
pub mod dictionary;
pub mod error;
pub mod eval;
pub mod image;
pub mod nn;
pub mod physical;
pub mod priors_file;
pub mod rfd;
pub mod synthetic;
pub mod training;

pub use error::{Error, Result};
pub use image::{Image, Planes};
