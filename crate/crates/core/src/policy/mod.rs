//! Attention actor-critic: row embedding, pre-norm self-attention encoder,
//! ego-row readout, action and value heads, and exact gradients.

mod loss;
mod net;
mod params;

pub use loss::{
    entropy, evaluate_actions, evaluate_samples, ppo_gradients, ppo_loss, sample_action, ActionEval, LossConfig,
    LossStats, Sample, SampleMode,
};
pub use net::{backward, forward, forward_rows, masked_softmax, softmax, ForwardTrace, LayerTrace};
pub use params::{init_params, Dims, LayerSlots, Layout, PolicyParams, Slot};

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PolicyError {
    #[error("invalid dimensions: {0}")]
    InvalidDims(&'static str),
    #[error("input has {got} values, expected {expected}")]
    ShapeMismatch { expected: usize, got: usize },
    #[error("loss or gradient is not finite")]
    NonFiniteLoss,
    #[error("empty batch")]
    EmptyBatch,
}
