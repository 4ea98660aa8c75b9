use std::collections::{BTreeSet, HashMap};

use sha2::{Digest, Sha256};

use super::dialogue::Dialogue;

pub const PAD: usize = 0;
pub const UNK: usize = 1;
pub const GO: usize = 2;
pub const EOS: usize = 3;
pub const NUM_RESERVED: usize = 4;

pub const PAD_TOKEN: &str = "<pad>";
pub const UNK_TOKEN: &str = "<unk>";
pub const GO_TOKEN: &str = "<go>";
pub const EOS_TOKEN: &str = "<eos>";

const RESERVED: [&str; NUM_RESERVED] = [PAD_TOKEN, UNK_TOKEN, GO_TOKEN, EOS_TOKEN];

/// Token/id maps. Ids `0..4` are the reserved markers; corpus tokens follow
/// in lexicographic order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocabulary {
    /// Builds the vocabulary from every user, system and KB-result token.
    pub fn build(dialogues: &[Dialogue]) -> Self {
        let mut seen = BTreeSet::new();
        for d in dialogues {
            for t in &d.turns {
                let kb = t.kb_results.iter().flatten();
                for tok in t.user.iter().chain(&t.system).chain(kb) {
                    seen.insert(tok.as_str());
                }
            }
        }
        Self::from_tokens(seen)
    }

    pub fn from_tokens<'a>(tokens: impl IntoIterator<Item = &'a str>) -> Self {
        let regular: BTreeSet<&str> = tokens
            .into_iter()
            .filter(|t| !RESERVED.contains(t))
            .collect();
        let tokens: Vec<String> = RESERVED
            .iter()
            .copied()
            .chain(regular)
            .map(str::to_string)
            .collect();
        let index = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        Vocabulary { tokens, index }
    }

    /// Total size including reserved ids.
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.len() == NUM_RESERVED
    }

    /// Number of corpus tokens, excluding reserved markers.
    pub fn num_regular(&self) -> usize {
        self.tokens.len() - NUM_RESERVED
    }

    pub fn get(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    /// Id of `token`, or [`UNK`] when it is out of vocabulary.
    pub fn id(&self, token: &str) -> usize {
        self.get(token).unwrap_or(UNK)
    }

    pub fn token(&self, id: usize) -> &str {
        &self.tokens[id]
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn encode(&self, tokens: &[String]) -> Vec<usize> {
        tokens.iter().map(|t| self.id(t)).collect()
    }

    /// Stable fingerprint of the id assignment.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        for t in &self.tokens {
            h.update(t.as_bytes());
            h.update([0u8]);
        }
        hex::encode(&h.finalize()[..16])
    }
}
