use std::collections::{BTreeSet, HashMap};
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

/// Width of the entity-type feature vector appended to encoder inputs.
pub const TYPE_FEATURE_WIDTH: usize = 8;

/// Maps entity surface forms to one of at most eight entity types.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct EntityLexicon {
    types: Vec<String>,
    entities: HashMap<String, usize>,
}

impl EntityLexicon {
    pub fn load(path: impl AsRef<Path>, strict: bool) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, strict)
    }

    /// Parses `surface<TAB>type` lines. `strict` demands exactly eight types.
    pub fn parse(text: &str, strict: bool) -> Result<Self> {
        let mut pairs = Vec::new();
        for (n, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let (surface, ty) = line.split_once('\t').ok_or_else(|| {
                Error::Lexicon(format!("line {}: expected `surface<TAB>type`", n + 1))
            })?;
            let (surface, ty) = (surface.trim(), ty.trim());
            if surface.is_empty() || ty.is_empty() || surface.contains(char::is_whitespace) {
                return Err(Error::Lexicon(format!("line {}: malformed entry", n + 1)));
            }
            pairs.push((surface.to_string(), ty.to_string()));
        }
        Self::from_pairs(pairs, strict)
    }

    pub fn from_pairs<S: Into<String>>(
        pairs: impl IntoIterator<Item = (S, S)>,
        strict: bool,
    ) -> Result<Self> {
        let pairs: Vec<(String, String)> = pairs
            .into_iter()
            .map(|(a, b)| (a.into(), b.into()))
            .collect();
        let types: Vec<String> = pairs
            .iter()
            .map(|(_, t)| t.clone())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        if types.len() > TYPE_FEATURE_WIDTH || (strict && types.len() != TYPE_FEATURE_WIDTH) {
            return Err(Error::Lexicon(format!(
                "expected {} entity types, found {}",
                TYPE_FEATURE_WIDTH,
                types.len()
            )));
        }
        let type_index: HashMap<&str, usize> = types
            .iter()
            .enumerate()
            .map(|(i, t)| (t.as_str(), i))
            .collect();
        let mut entities = HashMap::new();
        for (surface, ty) in &pairs {
            let idx = type_index[ty.as_str()];
            if let Some(&prev) = entities.get(surface) {
                if prev != idx {
                    return Err(Error::Lexicon(format!(
                        "{surface} listed as both {} and {ty}",
                        types[prev]
                    )));
                }
            }
            entities.insert(surface.clone(), idx);
        }
        Ok(EntityLexicon { types, entities })
    }

    pub fn type_of(&self, token: &str) -> Option<usize> {
        self.entities.get(token).copied()
    }

    pub fn is_entity(&self, token: &str) -> bool {
        self.entities.contains_key(token)
    }

    /// Type names in one-hot index order.
    pub fn type_names(&self) -> &[String] {
        &self.types
    }

    pub fn num_entities(&self) -> usize {
        self.entities.len()
    }

    pub fn entities(&self) -> impl Iterator<Item = (&str, &str)> {
        self.entities
            .iter()
            .map(|(s, &t)| (s.as_str(), self.types[t].as_str()))
    }

    /// Serialized form, one `surface<TAB>type` line per entity, sorted.
    pub fn to_file_string(&self) -> String {
        let mut rows: Vec<(&str, &str)> = self.entities().collect();
        rows.sort();
        let mut out = String::new();
        for (s, t) in rows {
            let _ = writeln!(out, "{s}\t{t}");
        }
        out
    }
}
