use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

pub const SILENCE: &str = "<SILENCE>";
pub const API_CALL: &str = "api_call";

/// One user utterance, the system reply, and any KB-result lines that
/// followed the reply in the corpus.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Turn {
    pub user: Vec<String>,
    pub system: Vec<String>,
    pub kb_results: Vec<Vec<String>>,
}

impl Turn {
    pub fn new(user: &str, system: &str) -> Self {
        Turn {
            user: tokenize(user),
            system: tokenize(system),
            kb_results: Vec::new(),
        }
    }

    pub fn is_api_call(&self) -> bool {
        self.system.first().map(String::as_str) == Some(API_CALL)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Dialogue {
    pub turns: Vec<Turn>,
}

impl Dialogue {
    pub fn new(turns: Vec<Turn>) -> Result<Self> {
        if turns.is_empty() {
            return Err(Error::invalid("a dialogue needs at least one turn"));
        }
        Ok(Dialogue { turns })
    }

    pub fn len(&self) -> usize {
        self.turns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.turns.is_empty()
    }
}

pub fn tokenize(text: &str) -> Vec<String> {
    text.split_whitespace().map(str::to_string).collect()
}

pub fn parse_dialogue_file(path: impl AsRef<Path>) -> Result<Vec<Dialogue>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_dialogues(&text, path)
}

/// Parses the line format `<id> <user>\t<system>` / `<id> <kb tokens>`.
///
/// Ids number every line of a dialogue (turn lines and KB lines alike),
/// start at 1 and must increase by one.
pub fn parse_dialogues(text: &str, origin: &Path) -> Result<Vec<Dialogue>> {
    let mut dialogues = Vec::new();
    let mut turns: Vec<Turn> = Vec::new();
    let mut last_id = 0usize;

    let err = |line: usize, msg: String| Error::Parse {
        path: origin.to_path_buf(),
        line,
        msg,
    };

    for (lineno, raw) in text.lines().enumerate() {
        let lineno = lineno + 1;
        let line = raw.strip_suffix('\r').unwrap_or(raw);
        if line.trim().is_empty() {
            if !turns.is_empty() {
                dialogues.push(Dialogue {
                    turns: std::mem::take(&mut turns),
                });
            }
            last_id = 0;
            continue;
        }
        let (id_str, rest) = line
            .split_once(' ')
            .ok_or_else(|| err(lineno, "expected `<id> <text>`".into()))?;
        let id: usize = id_str
            .parse()
            .map_err(|_| err(lineno, format!("bad line id {id_str:?}")))?;
        if id != last_id + 1 {
            return Err(err(lineno, format!("line id {id} does not follow {last_id}")));
        }
        last_id = id;

        match rest.split_once('\t') {
            Some((user, system)) => {
                let turn = Turn::new(user, system);
                if turn.user.is_empty() || turn.system.is_empty() {
                    return Err(err(lineno, "empty user or system utterance".into()));
                }
                turns.push(turn);
            }
            None => {
                let tokens = tokenize(rest);
                let Some(turn) = turns.last_mut() else {
                    return Err(err(lineno, "KB-result line before any turn".into()));
                };
                if tokens.is_empty() {
                    return Err(err(lineno, "empty KB-result line".into()));
                }
                turn.kb_results.push(tokens);
            }
        }
    }
    if !turns.is_empty() {
        dialogues.push(Dialogue { turns });
    }
    Ok(dialogues)
}

/// Inverse of [`parse_dialogues`]. Every dialogue is followed by one blank line.
pub fn serialize_dialogues(dialogues: &[Dialogue]) -> String {
    let mut out = String::new();
    for d in dialogues {
        let mut id = 0;
        for turn in &d.turns {
            id += 1;
            let _ = writeln!(out, "{id} {}\t{}", turn.user.join(" "), turn.system.join(" "));
            for kb in &turn.kb_results {
                id += 1;
                let _ = writeln!(out, "{id} {}", kb.join(" "));
            }
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn parse(text: &str) -> Result<Vec<Dialogue>> {
        parse_dialogues(text, Path::new("test.txt"))
    }

    #[test]
    fn single_turn() {
        let ds = parse("1 hi\thello\n\n").unwrap();
        assert_eq!(ds.len(), 1);
        assert_eq!(ds[0].turns, vec![Turn::new("hi", "hello")]);
    }

    #[test]
    fn api_call_and_kb_lines() {
        let text = "1 cheap restaurant in east part of town\tapi_call r_cuisine east cheap\n\
                    2 the_missing_sock R_price cheap\n\
                    3 the_missing_sock R_location east\n\
                    4 <SILENCE>\tthe_missing_sock is a nice place\n\n";
        let ds = parse(text).unwrap();
        let d = &ds[0];
        assert_eq!(d.len(), 2);
        assert!(d.turns[0].is_api_call());
        assert!(!d.turns[1].is_api_call());
        assert_eq!(d.turns[0].kb_results.len(), 2);
        assert_eq!(d.turns[1].user, vec![SILENCE]);
    }

    #[test]
    fn splits_on_blank_lines() {
        let ds = parse("1 a\tb\n2 c\td\n\n1 e\tf\n").unwrap();
        assert_eq!(ds.len(), 2);
        assert_eq!(ds[0].len(), 2);
        assert_eq!(ds[1].len(), 1);
    }

    #[test]
    fn rejects_non_consecutive_ids() {
        let e = parse("1 a\tb\n3 c\td\n").unwrap_err();
        assert!(matches!(e, Error::Parse { line: 2, .. }), "{e}");
        assert!(parse("2 a\tb\n").is_err());
    }

    #[test]
    fn rejects_malformed_lines() {
        assert!(parse("hello\tthere\n").is_err());
        assert!(parse("1 x R_price cheap\n").is_err());
        assert!(parse("1 a\t\n").is_err());
    }

    #[test]
    fn serialize_matches_input_bytes() {
        let text = "1 hi\thello\n2 x R_phone x_phone\n3 bye\tyou are welcome\n\n1 a\tb\n\n";
        assert_eq!(serialize_dialogues(&parse(text).unwrap()), text);
    }

    fn token() -> impl Strategy<Value = String> {
        "[a-z_<>]{1,8}"
    }

    fn utterance() -> impl Strategy<Value = Vec<String>> {
        proptest::collection::vec(token(), 1..6)
    }

    fn turn() -> impl Strategy<Value = Turn> {
        (utterance(), utterance(), proptest::collection::vec(utterance(), 0..3)).prop_map(
            |(user, system, kb_results)| Turn {
                user,
                system,
                kb_results,
            },
        )
    }

    proptest! {
        #[test]
        fn parse_after_serialize_is_identity(
            ds in proptest::collection::vec(proptest::collection::vec(turn(), 1..5), 1..5)
        ) {
            let dialogues: Vec<Dialogue> = ds.into_iter().map(|t| Dialogue::new(t).unwrap()).collect();
            let text = serialize_dialogues(&dialogues);
            prop_assert_eq!(parse(&text).unwrap(), dialogues);
        }
    }
}
