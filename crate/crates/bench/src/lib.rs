//! Fixtures shared by the benchmarks.

use copydial::corpus::{encode_corpus, synthesize_corpus, KbSpec};
use copydial::model::ModelParams;
use copydial::train::init_params;
use copydial::{EncodedSample, EntityLexicon, Variant, Vocabulary};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub struct Fixture {
    pub vocab: Vocabulary,
    pub lexicon: EntityLexicon,
    pub samples: Vec<EncodedSample>,
}

/// A small synthetic corpus, always the same.
pub fn fixture(dialogues: usize) -> Fixture {
    let corpus = synthesize_corpus(&KbSpec::desk_default(), dialogues, 42).expect("synthesis");
    let vocab = Vocabulary::build(&corpus.dialogues);
    let samples = encode_corpus(&corpus.dialogues, &vocab, &corpus.lexicon);
    Fixture {
        vocab,
        lexicon: corpus.lexicon,
        samples,
    }
}

/// Randomly initialized weights at the given sizes.
pub fn model(variant: Variant, vocab_size: usize, embedding: usize, hidden: usize) -> ModelParams<f32> {
    let dims = copydial::ModelDims {
        vocab_size,
        embedding,
        hidden,
        layers: 1,
    };
    init_params(variant, dims, &mut ChaCha8Rng::seed_from_u64(0)).expect("init")
}
