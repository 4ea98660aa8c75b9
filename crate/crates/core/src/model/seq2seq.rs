use super::layers::{
    attend, attention_keys, encode, lstm_step, output_logits, output_logits_copy, AttentionKeys,
    EncoderOutput, LstmState, Mode,
};
use super::params::ModelParams;
use crate::corpus::{
    featurize_types, EncodedSample, EntityLexicon, TypeFeatures, Vocabulary, EOS, GO, UNK,
};
use crate::error::{Error, Result};
use crate::tensor::{softmax_rows, Array, Real, Tape, Var};

/// Encoder-side state shared by every decoder step of one response.
pub struct DecodeContext {
    pub encoder: EncoderOutput,
    pub keys: Option<AttentionKeys>,
    /// Context positions the copy head may select.
    pub copyable: Vec<bool>,
}

pub struct StepOutput {
    /// `[1, |V|]`, or `[1, |V| + m]` for copy variants.
    pub logits: Var,
    /// Attention weights `[1, m]` when the variant attends.
    pub weights: Option<Var>,
}

pub fn prepare<T: Real>(
    tape: &mut Tape<'_, T>,
    model: &ModelParams<T>,
    context_ids: &[usize],
    features: &TypeFeatures,
    mode: &mut Mode<'_>,
) -> Result<(DecodeContext, Vec<LstmState>)> {
    let encoder = encode(tape, model, context_ids, Some(features), mode)?;
    let keys = match &model.attention {
        Some(attn) => Some(attention_keys(tape, attn, encoder.states)?),
        None => None,
    };
    let copyable = (0..features.len()).map(|i| features.is_entity(i)).collect();
    let init = encoder.final_states.clone();
    Ok((
        DecodeContext {
            encoder,
            keys,
            copyable,
        },
        init,
    ))
}

/// Feeds `prev` through the decoder stack and produces this step's logits.
pub fn decoder_step<T: Real>(
    tape: &mut Tape<'_, T>,
    model: &ModelParams<T>,
    ctx: &DecodeContext,
    prev: usize,
    states: &mut [LstmState],
    mode: &mut Mode<'_>,
) -> Result<StepOutput> {
    let e = tape.gather(model.embedding, &[prev])?;
    let mut x = mode.dropout(tape, e)?;
    for (l, layer) in model.decoder.iter().enumerate() {
        states[l] = lstm_step(tape, layer, x, states[l])?;
        x = mode.dropout(tape, states[l].h)?;
    }
    let hidden = x;
    match (&model.attention, &ctx.keys) {
        (Some(attn), Some(keys)) => {
            let a = attend(tape, attn, keys, hidden)?;
            let logits = match model.copy_scale {
                Some(gamma) => output_logits_copy(
                    tape,
                    model.output,
                    gamma,
                    hidden,
                    a.context,
                    a.scores,
                    &ctx.copyable,
                )?,
                None => output_logits(tape, model.output, hidden, Some(a.context))?,
            };
            Ok(StepOutput {
                logits,
                weights: Some(a.weights),
            })
        }
        _ => Ok(StepOutput {
            logits: output_logits(tape, model.output, hidden, None)?,
            weights: None,
        }),
    }
}

/// Indices of the actions that produce gold step `t`: its vocabulary id
/// (unless out of vocabulary) and, for copy variants, every matching context
/// position offset by `|V|`. Falls back to UNK when nothing else applies.
pub fn correct_actions<T: Real>(model: &ModelParams<T>, sample: &EncodedSample, t: usize) -> Vec<usize> {
    let gold = sample.gold_ids[t];
    let mut actions = Vec::new();
    if gold != UNK {
        actions.push(gold);
    }
    if model.variant.uses_copy() {
        let v = model.vocab_size();
        actions.extend(sample.copy_positions[t].iter().map(|&p| v + p));
    }
    if actions.is_empty() {
        actions.push(UNK);
    }
    actions
}

/// Summed negative log-likelihood of the gold response under teacher forcing.
/// Each step's likelihood is the total probability of its correct actions.
pub fn loss_teacher_forced<T: Real>(
    tape: &mut Tape<'_, T>,
    model: &ModelParams<T>,
    sample: &EncodedSample,
    mode: &mut Mode<'_>,
) -> Result<Var> {
    if sample.gold_ids.is_empty() {
        return Err(Error::invalid("empty gold response"));
    }
    let (ctx, mut states) = prepare(tape, model, &sample.context_ids, &sample.type_features, mode)?;
    let mut losses = Vec::with_capacity(sample.gold_ids.len());
    for t in 0..sample.gold_ids.len() {
        let prev = if t == 0 { GO } else { sample.gold_ids[t - 1] };
        let step = decoder_step(tape, model, &ctx, prev, &mut states, mode)?;
        let correct = correct_actions(model, sample, t);
        losses.push(tape.marginal_nll(step.logits, &correct)?);
    }
    tape.add_n(&losses)
}

#[derive(Clone, Debug, PartialEq)]
pub struct DecodeResult {
    /// Emitted action ids, EOS excluded. Ids `>= |V|` are copies.
    pub output_ids: Vec<usize>,
    /// Surface tokens after copy resolution.
    pub tokens: Vec<String>,
    pub copied: Vec<bool>,
    /// One row of attention weights per emitted token; empty for the
    /// attention-free variant.
    pub attention: Vec<Vec<f64>>,
    /// Logits of every step including the final EOS step, when retained.
    pub logits: Option<Vec<Vec<f64>>>,
}

impl DecodeResult {
    pub fn text(&self) -> String {
        self.tokens.join(" ")
    }
}

/// Greedy decoding: argmax per step (lowest index on ties), stopping at EOS
/// or after `max_len` tokens.
pub fn decode_greedy<T: Real>(
    model: &ModelParams<T>,
    vocab: &Vocabulary,
    lexicon: &EntityLexicon,
    context_tokens: &[String],
    max_len: usize,
    retain_logits: bool,
) -> Result<DecodeResult> {
    if max_len == 0 {
        return Err(Error::invalid("max_len must be positive"));
    }
    if vocab.len() != model.vocab_size() {
        return Err(Error::invalid(format!(
            "vocabulary has {} entries, model expects {}",
            vocab.len(),
            model.vocab_size()
        )));
    }
    let context_ids = vocab.encode(context_tokens);
    let features = featurize_types(context_tokens, lexicon);
    let tape = &mut Tape::new(&model.params);
    let mode = &mut Mode::Infer;
    let (ctx, mut states) = prepare(tape, model, &context_ids, &features, mode)?;

    let v = model.vocab_size();
    let mut result = DecodeResult {
        output_ids: Vec::new(),
        tokens: Vec::new(),
        copied: Vec::new(),
        attention: Vec::new(),
        logits: retain_logits.then(Vec::new),
    };
    let mut prev = GO;
    for _ in 0..max_len {
        let step = decoder_step(tape, model, &ctx, prev, &mut states, mode)?;
        let logits = tape.value(step.logits);
        if let Some(kept) = result.logits.as_mut() {
            kept.push(logits.data().iter().map(|x| x.as_f64()).collect());
        }
        let id = logits.argmax();
        if id == EOS {
            break;
        }
        let (token, copied) = if id >= v {
            (context_tokens[id - v].clone(), true)
        } else {
            (vocab.token(id).to_string(), false)
        };
        if let Some(w) = step.weights {
            result
                .attention
                .push(tape.value(w).data().iter().map(|x| x.as_f64()).collect());
        }
        prev = vocab.id(&token);
        result.output_ids.push(id);
        result.tokens.push(token);
        result.copied.push(copied);
    }
    Ok(result)
}

/// Probability distribution over actions for a row of logits.
pub fn action_distribution(logits: &[f64]) -> Vec<f64> {
    softmax_rows(&Array::row(logits.to_vec())).into_data()
}
