//! Differentiable building blocks of the embedding network: time-delay
//! layers, statistics pooling, dense layers, softmax cross-entropy and
//! gradient reversal, with exact reverse-mode gradients.

pub mod checkpoint;
pub mod layer;
pub mod network;
pub mod seq;

pub use layer::{
    grad_reversal_backward, softmax_backward_rows, softmax_cross_entropy, softmax_rows,
    stats_pool_forward, Activation, LayerGrad, LayerKind, LayerParams, LayerSpec, POOL_VAR_EPS,
};
pub use network::{
    build_x_vector, ClassifierHead, EmbeddingNetwork, Gradients, HeadKind, LayerActivations,
    XVectorConfig,
};
pub use seq::{sliding_cmn, FrameSequence};

#[cfg(test)]
mod tests;
