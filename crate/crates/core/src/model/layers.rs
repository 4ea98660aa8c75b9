use rand::RngCore;

use super::params::{AttentionParams, LstmLayer, ModelParams};
use crate::corpus::{TypeFeatures, TYPE_FEATURE_WIDTH};
use crate::error::{Error, Result};
use crate::tensor::{Array, ParamId, Real, Tape, Var};

/// Dropout switch threaded through a forward pass.
pub enum Mode<'r> {
    Infer,
    Train { keep: f64, rng: &'r mut dyn RngCore },
}

impl Mode<'_> {
    pub(crate) fn dropout<T: Real>(&mut self, tape: &mut Tape<'_, T>, x: Var) -> Result<Var> {
        match self {
            Mode::Infer => Ok(x),
            Mode::Train { keep, rng } => tape.dropout(x, T::of(*keep), &mut **rng),
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct LstmState {
    pub h: Var,
    pub c: Var,
}

impl LstmState {
    pub fn zeros<T: Real>(tape: &mut Tape<'_, T>, hidden: usize) -> Self {
        LstmState {
            h: tape.leaf(Array::zeros(&[1, hidden])),
            c: tape.leaf(Array::zeros(&[1, hidden])),
        }
    }
}

/// One LSTM recurrence on a `[1, input]` row.
pub fn lstm_step<T: Real>(
    tape: &mut Tape<'_, T>,
    layer: &LstmLayer,
    x: Var,
    state: LstmState,
) -> Result<LstmState> {
    let d = layer.hidden;
    if tape.value(x).len() != layer.input {
        return Err(Error::shape(format!(
            "lstm input width {} but layer expects {}",
            tape.value(x).len(),
            layer.input
        )));
    }
    let xh = tape.concat(&[x, state.h], 1)?;
    let w = tape.param(layer.weight);
    let b = tape.param(layer.bias);
    let z = tape.matmul(xh, w)?;
    let z = tape.add(z, b)?;
    let zi = tape.slice_cols(z, 0, d)?;
    let zf = tape.slice_cols(z, d, d)?;
    let zg = tape.slice_cols(z, 2 * d, d)?;
    let zo = tape.slice_cols(z, 3 * d, d)?;
    let i = tape.sigmoid(zi)?;
    let f = tape.sigmoid(zf)?;
    let g = tape.tanh(zg)?;
    let o = tape.sigmoid(zo)?;
    let keep = tape.mul(f, state.c)?;
    let write = tape.mul(i, g)?;
    let c = tape.add(keep, write)?;
    let tc = tape.tanh(c)?;
    let h = tape.mul(o, tc)?;
    Ok(LstmState { h, c })
}

pub struct EncoderOutput {
    /// Top-layer states stacked as `[m, hidden]`.
    pub states: Var,
    /// Final state of each layer, bottom first.
    pub final_states: Vec<LstmState>,
    pub len: usize,
}

/// Embeds a token, optionally appends its type features, applies input dropout.
fn embed_input<T: Real>(
    tape: &mut Tape<'_, T>,
    table: ParamId,
    id: usize,
    features: Option<[f64; TYPE_FEATURE_WIDTH]>,
    mode: &mut Mode<'_>,
) -> Result<Var> {
    let e = tape.gather(table, &[id])?;
    let e = mode.dropout(tape, e)?;
    match features {
        None => Ok(e),
        Some(f) => {
            let f = tape.leaf(Array::row(f.iter().map(|&x| T::of(x)).collect()));
            tape.concat(&[e, f], 1)
        }
    }
}

/// Runs the stacked encoder left to right over `context_ids`.
pub fn encode<T: Real>(
    tape: &mut Tape<'_, T>,
    model: &ModelParams<T>,
    context_ids: &[usize],
    features: Option<&TypeFeatures>,
    mode: &mut Mode<'_>,
) -> Result<EncoderOutput> {
    let m = context_ids.len();
    if m == 0 {
        return Err(Error::invalid("empty encoder input"));
    }
    if let Some(&bad) = context_ids.iter().find(|&&id| id >= model.dims.vocab_size) {
        return Err(Error::invalid(format!("token id {bad} outside vocabulary")));
    }
    let use_features = model.variant.uses_type_features();
    if use_features {
        match features {
            Some(f) if f.len() == m => {}
            _ => return Err(Error::invalid("type features missing or misaligned")),
        }
    }

    let d = model.dims.hidden;
    let mut states: Vec<LstmState> = (0..model.encoder.len())
        .map(|_| LstmState::zeros(tape, d))
        .collect();
    let mut top = Vec::with_capacity(m);
    for (pos, &id) in context_ids.iter().enumerate() {
        let feats = if use_features {
            features.map(|f| f.row(pos))
        } else {
            None
        };
        let mut x = embed_input(tape, model.embedding, id, feats, mode)?;
        for (l, layer) in model.encoder.iter().enumerate() {
            states[l] = lstm_step(tape, layer, x, states[l])?;
            x = mode.dropout(tape, states[l].h)?;
        }
        top.push(x);
    }
    let stacked = tape.concat(&top, 0)?;
    Ok(EncoderOutput {
        states: stacked,
        final_states: states,
        len: m,
    })
}

/// Encoder states with the `w_enc` projection precomputed once per context.
pub struct AttentionKeys {
    pub states: Var,
    pub projected: Var,
}

pub fn attention_keys<T: Real>(
    tape: &mut Tape<'_, T>,
    attn: &AttentionParams,
    states: Var,
) -> Result<AttentionKeys> {
    let w1 = tape.param(attn.w_enc);
    let projected = tape.matmul(states, w1)?;
    Ok(AttentionKeys { states, projected })
}

pub struct Attended {
    /// Unnormalized scores `[1, m]`.
    pub scores: Var,
    /// Softmax of the scores, `[1, m]`.
    pub weights: Var,
    /// Weighted sum of encoder states, `[1, hidden]`.
    pub context: Var,
}

/// `u_i = v . tanh(W1 h_i + W2 q)`, `a = softmax(u)`, `ctx = sum_i a_i h_i`.
pub fn attend<T: Real>(
    tape: &mut Tape<'_, T>,
    attn: &AttentionParams,
    keys: &AttentionKeys,
    query: Var,
) -> Result<Attended> {
    let w2 = tape.param(attn.w_dec);
    let v = tape.param(attn.v);
    let q = tape.matmul(query, w2)?;
    let pre = tape.add(keys.projected, q)?;
    let act = tape.tanh(pre)?;
    let col = tape.matmul(act, v)?;
    let scores = tape.transpose(col)?;
    let weights = tape.softmax(scores)?;
    let context = tape.matmul(weights, keys.states)?;
    Ok(Attended {
        scores,
        weights,
        context,
    })
}

/// Vocabulary logits `[h; ctx] U`, or `h U` when there is no attention context.
pub fn output_logits<T: Real>(
    tape: &mut Tape<'_, T>,
    output: ParamId,
    hidden: Var,
    context: Option<Var>,
) -> Result<Var> {
    let u = tape.param(output);
    let input = match context {
        Some(c) => tape.concat(&[hidden, c], 1)?,
        None => hidden,
    };
    tape.matmul(input, u)
}

/// Vocabulary logits followed by one copy logit per context position:
/// `gamma * u_i` where position `i` holds an entity, `-inf` elsewhere.
pub fn output_logits_copy<T: Real>(
    tape: &mut Tape<'_, T>,
    output: ParamId,
    copy_scale: ParamId,
    hidden: Var,
    context: Var,
    scores: Var,
    copyable: &[bool],
) -> Result<Var> {
    let vocab = output_logits(tape, output, hidden, Some(context))?;
    let gamma = tape.param(copy_scale);
    let scaled = tape.mul(scores, gamma)?;
    let masked = tape.mask_fill(scaled, copyable)?;
    tape.concat(&[vocab, masked], 1)
}
