//! Forward-pass engine over randomly initialized networks and the scores built on it.

mod network;
mod score;
mod tensor;

pub use network::{
    build_network, AttentionUnit, BatchNorm, BuildError, Conv, ConvBn, ForwardError, ForwardTrace, Layer,
    NetworkInstance, ResidualUnit, BN_EPS,
};
pub use score::{
    aggregate, bn_scaling_term, classification_score, detection_score, score, score_inputs, ScoreConfig,
    ScoreError, ScoreReport,
};
pub use tensor::{channel_moments, conv2d, Tensor};
