use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::corpus::EntityLexicon;
use crate::error::{Error, Result};

fn check_aligned(predictions: usize, golds: usize) -> Result<()> {
    if predictions != golds {
        return Err(Error::invalid(format!(
            "{predictions} predictions for {golds} gold responses"
        )));
    }
    if golds == 0 {
        return Err(Error::invalid("no responses to score"));
    }
    Ok(())
}

/// Fraction of responses whose every token matches the gold response.
pub fn per_response_accuracy(predictions: &[Vec<String>], golds: &[Vec<String>]) -> Result<f64> {
    check_aligned(predictions.len(), golds.len())?;
    let hits = predictions.iter().zip(golds).filter(|(p, g)| p == g).count();
    Ok(hits as f64 / golds.len() as f64)
}

/// Fraction of dialogues in which every response is exactly right.
/// `dialogue_ids` gives the dialogue of each response.
pub fn per_dialogue_accuracy(
    predictions: &[Vec<String>],
    golds: &[Vec<String>],
    dialogue_ids: &[usize],
) -> Result<f64> {
    check_aligned(predictions.len(), golds.len())?;
    if dialogue_ids.len() != golds.len() {
        return Err(Error::invalid("dialogue ids do not cover every response"));
    }
    let mut all_right: BTreeMap<usize, bool> = BTreeMap::new();
    for ((p, g), &d) in predictions.iter().zip(golds).zip(dialogue_ids) {
        *all_right.entry(d).or_insert(true) &= p == g;
    }
    let hits = all_right.values().filter(|&&ok| ok).count();
    Ok(hits as f64 / all_right.len() as f64)
}

fn ngram_counts(tokens: &[String], n: usize) -> HashMap<&[String], usize> {
    let mut counts = HashMap::new();
    for w in tokens.windows(n) {
        *counts.entry(w).or_insert(0) += 1;
    }
    counts
}

/// Sentence BLEU-4 with brevity penalty. Unigram precision is unsmoothed;
/// higher orders add one to both matched and total counts. An empty
/// prediction scores 0.
pub fn sentence_bleu(prediction: &[String], gold: &[String]) -> f64 {
    if prediction.is_empty() {
        return 0.0;
    }
    let mut log_sum = 0.0;
    for n in 1..=4 {
        let cand = ngram_counts(prediction, n);
        let refs = ngram_counts(gold, n);
        let total: usize = cand.values().sum();
        let matched: usize = cand
            .iter()
            .map(|(g, &c)| c.min(refs.get(g).copied().unwrap_or(0)))
            .sum();
        let p = if n == 1 {
            matched as f64 / total as f64
        } else {
            (matched + 1) as f64 / (total + 1) as f64
        };
        if p == 0.0 {
            return 0.0;
        }
        log_sum += p.ln() / 4.0;
    }
    let (c, r) = (prediction.len() as f64, gold.len() as f64);
    let bp = if c > r { 1.0 } else { (1.0 - r / c).exp() };
    bp * log_sum.exp()
}

/// Mean sentence BLEU over aligned responses.
pub fn bleu_average(predictions: &[Vec<String>], golds: &[Vec<String>]) -> Result<f64> {
    check_aligned(predictions.len(), golds.len())?;
    let total: f64 = predictions
        .iter()
        .zip(golds)
        .map(|(p, g)| sentence_bleu(p, g))
        .sum();
    Ok(total / golds.len() as f64)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntityCounts {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl EntityCounts {
    /// Micro F1. Defined as 1 when there are no gold and no predicted
    /// entities at all, 0 whenever nothing was matched otherwise.
    pub fn f1(&self) -> f64 {
        if self.tp + self.fp + self.fn_ == 0 {
            return 1.0;
        }
        if self.tp == 0 {
            return 0.0;
        }
        let p = self.tp as f64 / (self.tp + self.fp) as f64;
        let r = self.tp as f64 / (self.tp + self.fn_) as f64;
        2.0 * p * r / (p + r)
    }
}

/// Distinct lexicon entities of each response, counted against the gold
/// response's set and accumulated over the corpus.
pub fn entity_counts(
    predictions: &[Vec<String>],
    golds: &[Vec<String>],
    lexicon: &EntityLexicon,
) -> Result<EntityCounts> {
    check_aligned(predictions.len(), golds.len())?;
    let set = |toks: &[String]| -> BTreeSet<String> {
        toks.iter().filter(|t| lexicon.is_entity(t)).cloned().collect()
    };
    let mut counts = EntityCounts::default();
    for (p, g) in predictions.iter().zip(golds) {
        let (ps, gs) = (set(p), set(g));
        let tp = ps.intersection(&gs).count();
        counts.tp += tp;
        counts.fp += ps.len() - tp;
        counts.fn_ += gs.len() - tp;
    }
    Ok(counts)
}

pub fn entity_f1(
    predictions: &[Vec<String>],
    golds: &[Vec<String>],
    lexicon: &EntityLexicon,
) -> Result<f64> {
    Ok(entity_counts(predictions, golds, lexicon)?.f1())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub per_response_accuracy: f64,
    pub per_dialogue_accuracy: f64,
    pub bleu: f64,
    pub entity_f1: f64,
    pub n_responses: usize,
    pub n_dialogues: usize,
    pub entities: EntityCounts,
}

impl MetricsReport {
    pub fn compute(
        predictions: &[Vec<String>],
        golds: &[Vec<String>],
        dialogue_ids: &[usize],
        lexicon: &EntityLexicon,
    ) -> Result<Self> {
        let entities = entity_counts(predictions, golds, lexicon)?;
        Ok(MetricsReport {
            per_response_accuracy: per_response_accuracy(predictions, golds)?,
            per_dialogue_accuracy: per_dialogue_accuracy(predictions, golds, dialogue_ids)?,
            bleu: bleu_average(predictions, golds)?,
            entity_f1: entities.f1(),
            n_responses: golds.len(),
            n_dialogues: dialogue_ids.iter().collect::<BTreeSet<_>>().len(),
            entities,
        })
    }

    /// `key=value` lines; scores are fractions in [0, 1].
    pub fn to_key_values(&self) -> String {
        format!(
            "per_response_accuracy={}\nper_dialogue_accuracy={}\nbleu={}\nentity_f1={}\n\
             n_responses={}\nn_dialogues={}\nentity_tp={}\nentity_fp={}\nentity_fn={}\n",
            self.per_response_accuracy,
            self.per_dialogue_accuracy,
            self.bleu,
            self.entity_f1,
            self.n_responses,
            self.n_dialogues,
            self.entities.tp,
            self.entities.fp,
            self.entities.fn_,
        )
    }

    pub fn table_header() -> &'static str {
        "model              per-resp  per-dial    BLEU  ent-F1"
    }

    /// One results-table row, scores as percentages.
    pub fn table_row(&self, label: &str) -> String {
        format!(
            "{label:<18} {:>8.1} {:>9.1} {:>7.1} {:>7.1}",
            100.0 * self.per_response_accuracy,
            100.0 * self.per_dialogue_accuracy,
            100.0 * self.bleu,
            100.0 * self.entity_f1
        )
    }
}

impl fmt::Display for MetricsReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_key_values())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(s: &str) -> Vec<String> {
        s.split_whitespace().map(str::to_string).collect()
    }

    fn lex() -> EntityLexicon {
        EntityLexicon::from_pairs([("a", "X"), ("b", "Y"), ("c", "X")], false).unwrap()
    }

    #[test]
    fn response_accuracy_examples() {
        let g = vec![t("hello there"), t("bye")];
        assert_eq!(per_response_accuracy(&g, &g).unwrap(), 1.0);
        let p = vec![t("hello here"), t("bye")];
        assert_eq!(per_response_accuracy(&p, &g).unwrap(), 0.5);
        assert!(per_response_accuracy(&p[..1], &g).is_err());
        assert!(per_response_accuracy(&[], &[]).is_err());
    }

    #[test]
    fn dialogue_accuracy_examples() {
        let g: Vec<_> = (0..8).map(|i| t(&format!("r{i}"))).collect();
        let ids = [0, 0, 1, 1, 2, 2, 3, 3];
        let mut p = g.clone();
        for i in [2, 4, 7] {
            p[i] = t("wrong");
        }
        assert_eq!(per_dialogue_accuracy(&p, &g, &ids).unwrap(), 0.25);
        assert!(per_dialogue_accuracy(&p, &g, &ids[..7]).is_err());
    }

    #[test]
    fn bleu_examples() {
        assert_eq!(sentence_bleu(&t("a b c d e"), &t("a b c d e")), 1.0);
        assert_eq!(sentence_bleu(&t("x y"), &t("a b c")), 0.0);
        assert_eq!(sentence_bleu(&[], &t("a")), 0.0);
        // p1 = 1/3, p2 = 1/3, p3 = 1/2, p4 = 1/1, no brevity penalty.
        let want = (1.0f64 / 18.0).powf(0.25);
        assert!((sentence_bleu(&t("the the the"), &t("the cat sat")) - want).abs() < 1e-12);
        assert!((want - 0.4855).abs() < 1e-4);
        // Short candidate: bp = exp(1 - 4/2).
        let short = sentence_bleu(&t("a b"), &t("a b c d"));
        assert!((short - (-1.0f64).exp()).abs() < 1e-12);
    }

    #[test]
    fn bleu_is_order_sensitive() {
        let g = t("a b c d");
        assert!(sentence_bleu(&t("d c b a"), &g) < sentence_bleu(&g, &g));
    }

    #[test]
    fn entity_f1_examples() {
        let lex = lex();
        let r = entity_counts(&[t("a x")], &[t("a b")], &lex).unwrap();
        assert_eq!(r, EntityCounts { tp: 1, fp: 0, fn_: 1 });
        assert!((r.f1() - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(entity_f1(&[t("x")], &[t("y")], &lex).unwrap(), 1.0);
        assert_eq!(entity_f1(&[t("a")], &[t("b")], &lex).unwrap(), 0.0);
        assert_eq!(entity_f1(&[t("a a a b")], &[t("a b b")], &lex).unwrap(), 1.0);
    }

    #[test]
    fn report_formats() {
        let g = vec![t("a is here"), t("bye")];
        let r = MetricsReport::compute(&g, &g, &[0, 0], &lex()).unwrap();
        assert_eq!(r.n_dialogues, 1);
        assert!(r.to_key_values().contains("per_response_accuracy=1\n"));
        assert!(r.table_row("copy").starts_with("copy "));
    }
}
