//! Encoder-decoder variants, their parameters and checkpoints.

mod checkpoint;
mod layers;
mod params;
mod seq2seq;

pub use checkpoint::Checkpoint;
pub use layers::{
    attend, attention_keys, encode, lstm_step, output_logits, output_logits_copy, Attended,
    AttentionKeys, EncoderOutput, LstmState, Mode,
};
pub use params::{AttentionParams, LstmLayer, ModelDims, ModelParams, Variant};
pub use seq2seq::{
    action_distribution, correct_actions, decode_greedy, decoder_step, loss_teacher_forced,
    prepare, DecodeContext, DecodeResult, StepOutput,
};
