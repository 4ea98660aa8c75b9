use serde::{Deserialize, Serialize};

use crate::corpus::{
    context_from_history, tokenize, EntityLexicon, KnowledgeBase, Turn, Vocabulary, API_CALL,
};
use crate::error::{Error, Result};
use crate::model::{decode_greedy, Checkpoint, ModelDims, ModelParams, Variant};

/// One emitted token with the attention it was produced under.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceFrame {
    /// Decoder step, from 1.
    pub t: usize,
    pub token: String,
    pub was_copy: bool,
    /// Attention over the context; empty for the attention-free variant.
    pub weights: Vec<f64>,
    pub context: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Reply {
    pub response: String,
    pub api_call: bool,
    pub trace: Vec<TraceFrame>,
    /// The completed turn, with KB results attached after an API call.
    #[serde(skip)]
    pub turn: Turn,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelInfo {
    pub variant: Variant,
    pub dims: ModelDims,
    pub vocab_size: usize,
    pub entity_types: Vec<String>,
    pub checkpoint_hash: String,
}

/// A frozen model with everything needed to answer chat turns. Decoding runs
/// at 64-bit from the stored 32-bit weights.
pub struct ChatEngine {
    model: ModelParams<f64>,
    vocab: Vocabulary,
    lexicon: EntityLexicon,
    kb: KnowledgeBase,
    max_len: usize,
    checkpoint_hash: String,
}

impl ChatEngine {
    pub fn new(
        checkpoint: &Checkpoint,
        vocab: Vocabulary,
        lexicon: EntityLexicon,
        kb: KnowledgeBase,
        max_len: usize,
    ) -> Result<Self> {
        checkpoint.check_vocab(&vocab.hash())?;
        if max_len == 0 {
            return Err(Error::invalid("max_len must be positive"));
        }
        Ok(ChatEngine {
            model: checkpoint.params.cast(),
            vocab,
            lexicon,
            kb,
            max_len,
            checkpoint_hash: checkpoint.content_hash(),
        })
    }

    pub fn model(&self) -> &ModelParams<f64> {
        &self.model
    }

    pub fn variant(&self) -> Variant {
        self.model.variant
    }

    pub fn info(&self) -> ModelInfo {
        ModelInfo {
            variant: self.model.variant,
            dims: self.model.dims,
            vocab_size: self.vocab.len(),
            entity_types: self.lexicon.type_names().to_vec(),
            checkpoint_hash: self.checkpoint_hash.clone(),
        }
    }

    /// Answers `text` given the turns so far. Does not modify anything; the
    /// caller appends `reply.turn` to its history.
    pub fn respond(&self, history: &[Turn], text: &str) -> Result<Reply> {
        let user = tokenize(text);
        if user.is_empty() {
            return Err(Error::invalid("empty user utterance"));
        }
        let context = context_from_history(history, &user);
        let decoded = decode_greedy(&self.model, &self.vocab, &self.lexicon, &context, self.max_len, false)?;
        let trace = decoded
            .tokens
            .iter()
            .enumerate()
            .map(|(i, token)| TraceFrame {
                t: i + 1,
                token: token.clone(),
                was_copy: decoded.copied[i],
                weights: decoded.attention.get(i).cloned().unwrap_or_default(),
                context: context.clone(),
            })
            .collect();
        let api_call = decoded.tokens.first().map(String::as_str) == Some(API_CALL);
        let kb_results = if api_call {
            self.kb.lookup(&decoded.tokens)
        } else {
            Vec::new()
        };
        Ok(Reply {
            response: decoded.text(),
            api_call,
            trace,
            turn: Turn {
                user,
                system: decoded.tokens,
                kb_results,
            },
        })
    }
}
