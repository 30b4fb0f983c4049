//! Plaintext decoder-only transformer: the reference semantics for every
//! private and merged variant.

mod forward;
mod matrix;
mod model;

pub use forward::{
    add_positional, attention_projection, embed_lookup, feed_forward, generate_vanilla, greedy_sample, layernorm,
    layernorm_rows, lm_head, one_hot, self_attention, softmax_rows, transformer_forward, transformer_forward_traced,
    AttentionTrace, SequenceModel,
};
pub(crate) use forward::check_length;
pub use matrix::Matrix;
pub use model::{LayerWeights, ModelConfig, ModelWeights, QUAD_COEFFS};
