//! Backbone transforms, quantization, mixture entropy model and range coding.

pub mod backbone;
pub mod checkpoint;
pub mod entropy;
pub mod gmm;
pub mod layers;
pub mod quantize;
pub mod range_coder;

pub use backbone::{Backbone, BackboneConfig};
pub use checkpoint::Checkpoint;
pub use gmm::{gmm_likelihood, GmmParams, P_MIN, SIGMA_FLOOR};
pub use quantize::{quantize, QuantMode};
