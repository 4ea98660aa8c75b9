use std::fmt::Write as _;
use std::path::Path;

use super::dialogue::{tokenize, API_CALL};
use crate::error::{Error, Result};

/// Restaurant facts as `subject attribute value` triples, in file order.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct KnowledgeBase {
    facts: Vec<[String; 3]>,
}

impl KnowledgeBase {
    pub fn new(facts: Vec<[String; 3]>) -> Self {
        KnowledgeBase { facts }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path)
    }

    pub fn parse(text: &str, origin: &Path) -> Result<Self> {
        let mut facts = Vec::new();
        for (n, line) in text.lines().enumerate() {
            let toks = tokenize(line);
            match toks.len() {
                0 => continue,
                3 => facts.push([toks[0].clone(), toks[1].clone(), toks[2].clone()]),
                _ => {
                    return Err(Error::Parse {
                        path: origin.to_path_buf(),
                        line: n + 1,
                        msg: "expected `subject attribute value`".into(),
                    })
                }
            }
        }
        Ok(KnowledgeBase { facts })
    }

    pub fn facts(&self) -> &[[String; 3]] {
        &self.facts
    }

    pub fn is_empty(&self) -> bool {
        self.facts.is_empty()
    }

    pub fn to_file_string(&self) -> String {
        let mut out = String::new();
        for [s, a, v] in &self.facts {
            let _ = writeln!(out, "{s} {a} {v}");
        }
        out
    }

    /// KB-result lines for an `api_call` utterance: all facts of every
    /// subject whose attribute values include each constrained argument.
    /// `dontcare` and slot placeholders such as `r_cuisine` match anything.
    pub fn lookup(&self, api_call: &[String]) -> Vec<Vec<String>> {
        if api_call.first().map(String::as_str) != Some(API_CALL) {
            return Vec::new();
        }
        let constraints: Vec<&str> = api_call[1..]
            .iter()
            .map(String::as_str)
            .filter(|a| !is_wildcard(a))
            .collect();

        let mut subjects: Vec<&str> = Vec::new();
        for [s, _, _] in &self.facts {
            if !subjects.contains(&s.as_str()) {
                subjects.push(s);
            }
        }
        let matching: Vec<&str> = subjects
            .into_iter()
            .filter(|subj| {
                constraints.iter().all(|c| {
                    self.facts
                        .iter()
                        .any(|[s, _, v]| s == subj && v == c)
                })
            })
            .collect();
        self.facts
            .iter()
            .filter(|[s, _, _]| matching.contains(&s.as_str()))
            .map(|f| f.to_vec())
            .collect()
    }
}

fn is_wildcard(arg: &str) -> bool {
    arg == "dontcare" || arg.starts_with("r_") || arg.starts_with("R_")
}
