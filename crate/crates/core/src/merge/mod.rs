//! The merge compiler: constant-attention calibration, layer-norm
//! approximation and folding of each block into one merge module.

mod attention;
mod compile;

pub use attention::{calibrate_constant_attention, markov_corpus, pad_to, slice_constant_attention, ConstantAttention};
pub use compile::{
    approx_layernorm, check_commutativity, composed_reference, merge_layer, merged_forward, merged_model_forward,
    single_head_transcription, MergedLayer, MergedModel,
};
