use super::dialogue::{Dialogue, Turn};
use super::lexicon::{EntityLexicon, TYPE_FEATURE_WIDTH};
use super::vocab::{Vocabulary, EOS, EOS_TOKEN};
use crate::error::{Error, Result};

/// Token placed between consecutive utterances and KB lines in a context.
pub const BOUNDARY: &str = EOS_TOKEN;

/// Encoder context for turn `turn_index` (1-based): every earlier user and
/// system utterance, each earlier turn's KB lines, then the current user
/// utterance, separated by [`BOUNDARY`].
pub fn aggregate_context(dialogue: &Dialogue, turn_index: usize) -> Result<Vec<String>> {
    if turn_index == 0 || turn_index > dialogue.turns.len() {
        return Err(Error::invalid(format!(
            "turn {turn_index} outside 1..={}",
            dialogue.turns.len()
        )));
    }
    let i = turn_index - 1;
    Ok(context_from_history(
        &dialogue.turns[..i],
        &dialogue.turns[i].user,
    ))
}

/// Context from completed turns plus a pending user utterance. Chat sessions
/// and corpus encoding share this path.
pub fn context_from_history(history: &[Turn], user: &[String]) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    let push_segment = |seg: &[String], out: &mut Vec<String>| {
        if !out.is_empty() {
            out.push(BOUNDARY.to_string());
        }
        out.extend(seg.iter().cloned());
    };
    for turn in history {
        push_segment(&turn.user, &mut out);
        push_segment(&turn.system, &mut out);
        for kb in &turn.kb_results {
            push_segment(kb, &mut out);
        }
    }
    push_segment(user, &mut out);
    out
}

/// For each gold token, every context index holding the same lexicon entity.
pub fn annotate_copy_targets(
    context: &[String],
    gold: &[String],
    lexicon: &EntityLexicon,
) -> Vec<Vec<usize>> {
    gold.iter()
        .map(|g| {
            if !lexicon.is_entity(g) {
                return Vec::new();
            }
            context
                .iter()
                .enumerate()
                .filter(|(_, c)| *c == g)
                .map(|(i, _)| i)
                .collect()
        })
        .collect()
}

/// Per-position entity type index; `None` for non-entities.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TypeFeatures(pub Vec<Option<usize>>);

impl TypeFeatures {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// One-hot (or all-zero) row for position `i`.
    pub fn row(&self, i: usize) -> [f64; TYPE_FEATURE_WIDTH] {
        let mut r = [0.0; TYPE_FEATURE_WIDTH];
        if let Some(t) = self.0[i] {
            r[t] = 1.0;
        }
        r
    }

    pub fn is_entity(&self, i: usize) -> bool {
        self.0[i].is_some()
    }
}

pub fn featurize_types(context: &[String], lexicon: &EntityLexicon) -> TypeFeatures {
    TypeFeatures(context.iter().map(|t| lexicon.type_of(t)).collect())
}

/// One training/evaluation example: the context of a turn and its gold reply.
#[derive(Clone, Debug, PartialEq)]
pub struct EncodedSample {
    pub dialogue_id: usize,
    /// 1-based.
    pub turn_index: usize,
    pub context_tokens: Vec<String>,
    pub context_ids: Vec<usize>,
    pub type_features: TypeFeatures,
    pub gold_tokens: Vec<String>,
    /// Gold ids followed by [`EOS`].
    pub gold_ids: Vec<usize>,
    /// Parallel to `gold_ids`; the trailing EOS entry is always empty.
    pub copy_positions: Vec<Vec<usize>>,
}

impl EncodedSample {
    pub fn new(
        dialogue_id: usize,
        turn_index: usize,
        context_tokens: Vec<String>,
        gold_tokens: Vec<String>,
        vocab: &Vocabulary,
        lexicon: &EntityLexicon,
    ) -> Self {
        let context_ids = vocab.encode(&context_tokens);
        let type_features = featurize_types(&context_tokens, lexicon);
        let mut gold_ids = vocab.encode(&gold_tokens);
        gold_ids.push(EOS);
        let mut copy_positions = annotate_copy_targets(&context_tokens, &gold_tokens, lexicon);
        copy_positions.push(Vec::new());
        EncodedSample {
            dialogue_id,
            turn_index,
            context_tokens,
            context_ids,
            type_features,
            gold_tokens,
            gold_ids,
            copy_positions,
        }
    }

    pub fn context_len(&self) -> usize {
        self.context_ids.len()
    }
}

pub fn encode_dialogue(
    dialogue: &Dialogue,
    dialogue_id: usize,
    vocab: &Vocabulary,
    lexicon: &EntityLexicon,
) -> Vec<EncodedSample> {
    (1..=dialogue.turns.len())
        .map(|i| {
            let context = context_from_history(&dialogue.turns[..i - 1], &dialogue.turns[i - 1].user);
            EncodedSample::new(
                dialogue_id,
                i,
                context,
                dialogue.turns[i - 1].system.clone(),
                vocab,
                lexicon,
            )
        })
        .collect()
}

pub fn encode_corpus(
    dialogues: &[Dialogue],
    vocab: &Vocabulary,
    lexicon: &EntityLexicon,
) -> Vec<EncodedSample> {
    dialogues
        .iter()
        .enumerate()
        .flat_map(|(id, d)| encode_dialogue(d, id, vocab, lexicon))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::dialogue::tokenize;

    fn lexicon() -> EntityLexicon {
        EntityLexicon::parse(
            "cheap\tR_price\neast\tR_location\nthe_missing_sock\tR_name\n\
             the_missing_sock_phone\tR_phone\n",
            false,
        )
        .unwrap()
    }

    fn sample_dialogue() -> Dialogue {
        let mut t1 = Turn::new(
            "cheap restaurant in east part of town",
            "api_call r_cuisine east cheap",
        );
        t1.kb_results = vec![
            tokenize("the_missing_sock R_phone the_missing_sock_phone"),
            tokenize("the_missing_sock R_price cheap"),
        ];
        Dialogue::new(vec![
            t1,
            Turn::new("<SILENCE>", "the_missing_sock is a nice place in the east of town"),
            Turn::new("phone number", "the phone number of the_missing_sock is the_missing_sock_phone"),
        ])
        .unwrap()
    }

    #[test]
    fn first_turn_context_is_user_only() {
        let d = sample_dialogue();
        assert_eq!(aggregate_context(&d, 1).unwrap(), d.turns[0].user);
    }

    #[test]
    fn second_turn_context_order() {
        let d = sample_dialogue();
        let ctx = aggregate_context(&d, 2).unwrap();
        let expected = tokenize(
            "cheap restaurant in east part of town <eos> api_call r_cuisine east cheap <eos> \
             the_missing_sock R_phone the_missing_sock_phone <eos> the_missing_sock R_price cheap \
             <eos> <SILENCE>",
        );
        assert_eq!(ctx, expected);
    }

    #[test]
    fn context_out_of_range() {
        let d = sample_dialogue();
        assert!(aggregate_context(&d, 0).is_err());
        assert!(aggregate_context(&d, 4).is_err());
    }

    #[test]
    fn context_grows_by_appending() {
        let d = sample_dialogue();
        for i in 1..d.len() {
            let a = aggregate_context(&d, i).unwrap();
            let b = aggregate_context(&d, i + 1).unwrap();
            assert!(b.len() > a.len());
            assert_eq!(&b[..a.len()], &a[..]);
        }
    }

    #[test]
    fn copy_targets() {
        let lex = lexicon();
        let ctx = aggregate_context(&sample_dialogue(), 3).unwrap();
        let gold = tokenize("you are welcome");
        assert!(annotate_copy_targets(&ctx, &gold, &lex).iter().all(Vec::is_empty));

        let gold = tokenize("the_missing_sock is a nice place");
        let targets = annotate_copy_targets(&ctx, &gold, &lex);
        let expected: Vec<usize> = ctx
            .iter()
            .enumerate()
            .filter(|(_, t)| *t == "the_missing_sock")
            .map(|(i, _)| i)
            .collect();
        assert!(expected.len() >= 2);
        assert_eq!(targets[0], expected);
        assert!(targets[1..].iter().all(Vec::is_empty));

        // entity in the lexicon but absent from context
        let ctx1 = aggregate_context(&sample_dialogue(), 1).unwrap();
        let targets = annotate_copy_targets(&ctx1, &tokenize("the_missing_sock"), &lex);
        assert!(targets[0].is_empty());
    }

    #[test]
    fn type_features() {
        let lex = lexicon();
        let f = featurize_types(&tokenize("cheap restaurant in east"), &lex);
        let price = lex.type_names().iter().position(|t| t == "R_price").unwrap();
        let loc = lex.type_names().iter().position(|t| t == "R_location").unwrap();
        assert_eq!(f.0, vec![Some(price), None, None, Some(loc)]);
        for i in 0..f.len() {
            let s: f64 = f.row(i).iter().sum();
            assert!(s == 0.0 || s == 1.0);
        }
        assert_eq!(f.row(0)[price], 1.0);
        assert!(featurize_types(&tokenize("no entities here"), &lex)
            .0
            .iter()
            .all(Option::is_none));
    }

    #[test]
    fn encoded_samples_are_consistent() {
        let d = sample_dialogue();
        let vocab = Vocabulary::build(std::slice::from_ref(&d));
        let lex = lexicon();
        let samples = encode_dialogue(&d, 0, &vocab, &lex);
        assert_eq!(samples.len(), 3);
        for s in &samples {
            assert_eq!(s.type_features.len(), s.context_len());
            assert_eq!(s.gold_ids.len(), s.gold_tokens.len() + 1);
            assert_eq!(*s.gold_ids.last().unwrap(), EOS);
            assert_eq!(s.copy_positions.len(), s.gold_ids.len());
            for (t, pos) in s.copy_positions.iter().enumerate() {
                for &p in pos {
                    assert_eq!(vocab.token(s.context_ids[p]), s.gold_tokens[t]);
                    assert!(lex.is_entity(&s.gold_tokens[t]));
                }
            }
        }
        assert!(!samples[2].copy_positions[4].is_empty());
        assert!(!samples[2].copy_positions[6].is_empty());
    }
}
