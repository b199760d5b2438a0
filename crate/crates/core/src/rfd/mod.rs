//! Reference path: style normalisation, matching, morphing and the progressive codec.

pub mod dependency;
pub mod matching;
pub mod model;
pub mod priors;
pub mod svrconv;
pub mod usnb;

pub use dependency::compute_dependency;
pub use matching::{feature_match, match_scores};
pub use model::{Ablation, Encoded, ForwardPass, Mode, RfdConfig, RfdModel, ScaleState, LAMBDA_LADDER, W_LEVELS};
pub use priors::InputPriors;
pub use svrconv::{svr_forward, svrconv};
pub use usnb::{usnb_normalize, PriorMaps};
