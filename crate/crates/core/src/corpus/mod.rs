//! Dialogue corpora: parsing, vocabulary, entity lexicon, context
//! aggregation and synthetic data.

mod dialogue;
mod encode;
mod kb;
mod lexicon;
mod synth;
mod vocab;

pub use dialogue::{
    parse_dialogue_file, parse_dialogues, serialize_dialogues, tokenize, Dialogue, Turn, API_CALL,
    SILENCE,
};
pub use encode::{
    aggregate_context, annotate_copy_targets, context_from_history, encode_corpus,
    encode_dialogue, featurize_types, EncodedSample, TypeFeatures, BOUNDARY,
};
pub use kb::KnowledgeBase;
pub use lexicon::{EntityLexicon, TYPE_FEATURE_WIDTH};
pub use synth::{
    entity_mentions, synthesize_corpus, synthesize_split, KbSpec, SyntheticCorpus, SyntheticSplit,
};
pub use vocab::{
    Vocabulary, EOS, EOS_TOKEN, GO, GO_TOKEN, NUM_RESERVED, PAD, PAD_TOKEN, UNK, UNK_TOKEN,
};
