use rayon::prelude::*;

use super::metrics::MetricsReport;
use crate::corpus::{encode_corpus, Dialogue, EncodedSample, EntityLexicon, Vocabulary};
use crate::error::{Error, Result};
use crate::model::{decode_greedy, Checkpoint, DecodeResult, ModelParams};
use crate::tensor::Real;

#[derive(Clone, Debug)]
pub struct Evaluation {
    pub report: MetricsReport,
    /// One decode per sample, in sample order.
    pub decodes: Vec<DecodeResult>,
}

impl Evaluation {
    pub fn predictions(&self) -> Vec<Vec<String>> {
        self.decodes.iter().map(|d| d.tokens.clone()).collect()
    }
}

/// Greedy-decodes every sample from its gold-history context and scores the
/// outputs. Decodes run in parallel; results keep sample order.
pub fn evaluate_samples<T: Real>(
    model: &ModelParams<T>,
    vocab: &Vocabulary,
    lexicon: &EntityLexicon,
    samples: &[EncodedSample],
    max_len: usize,
    retain_logits: bool,
) -> Result<Evaluation> {
    if samples.is_empty() {
        return Err(Error::invalid("nothing to evaluate"));
    }
    let decodes = samples
        .par_iter()
        .map(|s| decode_greedy(model, vocab, lexicon, &s.context_tokens, max_len, retain_logits))
        .collect::<Result<Vec<_>>>()?;
    let predictions: Vec<Vec<String>> = decodes.iter().map(|d| d.tokens.clone()).collect();
    let golds: Vec<Vec<String>> = samples.iter().map(|s| s.gold_tokens.clone()).collect();
    let ids: Vec<usize> = samples.iter().map(|s| s.dialogue_id).collect();
    let report = MetricsReport::compute(&predictions, &golds, &ids, lexicon)?;
    Ok(Evaluation { report, decodes })
}

/// Checks the checkpoint against `vocab`, then evaluates every turn of
/// `dialogues`, decoding at 64-bit.
pub fn evaluate_model(
    checkpoint: &Checkpoint,
    vocab: &Vocabulary,
    lexicon: &EntityLexicon,
    dialogues: &[Dialogue],
    max_len: usize,
) -> Result<Evaluation> {
    checkpoint.check_vocab(&vocab.hash())?;
    let samples = encode_corpus(dialogues, vocab, lexicon);
    evaluate_samples(&checkpoint.params.cast::<f64>(), vocab, lexicon, &samples, max_len, false)
}
