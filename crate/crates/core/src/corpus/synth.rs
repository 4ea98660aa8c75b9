//! Synthetic restaurant-booking corpora in the dialogue file format.

use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;

use super::dialogue::{serialize_dialogues, Dialogue, Turn, SILENCE};
use super::kb::KnowledgeBase;
use super::lexicon::EntityLexicon;
use crate::error::{Error, Result};

const SLOTS: [&str; 4] = ["cuisine", "location", "price", "name"];

#[derive(Clone, Debug, Deserialize)]
pub struct KbSpec {
    /// Share of each entity list reserved for the held-out split.
    #[serde(default = "default_heldout")]
    pub heldout_fraction: f64,
    /// User requests with `{cuisine}`, `{location}` and `{price}` slots.
    pub request_templates: Vec<String>,
    /// Entity names per slot: `cuisine`, `location`, `price`, `name`.
    pub entities: BTreeMap<String, Vec<String>>,
}

fn default_heldout() -> f64 {
    0.3
}

impl KbSpec {
    pub fn parse(text: &str) -> Result<Self> {
        let spec: KbSpec = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    /// The bundled restaurant domain.
    pub fn desk_default() -> Self {
        Self::parse(include_str!("../../data/kb_spec.toml")).expect("bundled spec is valid")
    }

    fn validate(&self) -> Result<()> {
        for slot in SLOTS {
            if self.entities.get(slot).is_none_or(Vec::is_empty) {
                return Err(Error::Config(format!("KB spec has no `{slot}` entities")));
            }
        }
        if self.request_templates.is_empty() {
            return Err(Error::Config("KB spec has no request templates".into()));
        }
        if !(0.0..1.0).contains(&self.heldout_fraction) {
            return Err(Error::Config("heldout_fraction must lie in [0, 1)".into()));
        }
        Ok(())
    }

    fn list(&self, slot: &str) -> &[String] {
        &self.entities[slot]
    }
}

#[derive(Clone, Debug)]
struct Restaurant {
    name: String,
    cuisine: String,
    location: String,
    price: String,
}

impl Restaurant {
    fn phone(&self) -> String {
        format!("{}_phone", self.name)
    }

    fn address(&self) -> String {
        format!("{}_address", self.name)
    }

    fn facts(&self) -> Vec<[String; 3]> {
        let f = |a: &str, v: String| [self.name.clone(), a.to_string(), v];
        vec![
            f("R_cuisine", self.cuisine.clone()),
            f("R_location", self.location.clone()),
            f("R_price", self.price.clone()),
            f("R_phone", self.phone()),
            f("R_address", self.address()),
        ]
    }
}

#[derive(Clone, Debug)]
pub struct SyntheticCorpus {
    pub dialogues: Vec<Dialogue>,
    pub kb: KnowledgeBase,
    pub lexicon: EntityLexicon,
}

impl SyntheticCorpus {
    pub fn to_file_string(&self) -> String {
        serialize_dialogues(&self.dialogues)
    }
}

/// Train and held-out corpora drawn from disjoint entity pools.
#[derive(Clone, Debug)]
pub struct SyntheticSplit {
    pub train: SyntheticCorpus,
    pub heldout: SyntheticCorpus,
    /// Entities of both pools.
    pub lexicon: EntityLexicon,
}

type Pools = BTreeMap<&'static str, Vec<String>>;

fn lexicon_for(restaurants: &[Restaurant]) -> Result<EntityLexicon> {
    let mut pairs = Vec::new();
    for r in restaurants {
        pairs.push((r.name.clone(), "R_name".to_string()));
        pairs.push((r.cuisine.clone(), "R_cuisine".to_string()));
        pairs.push((r.location.clone(), "R_location".to_string()));
        pairs.push((r.price.clone(), "R_price".to_string()));
        pairs.push((r.phone(), "R_phone".to_string()));
        pairs.push((r.address(), "R_address".to_string()));
    }
    EntityLexicon::from_pairs(pairs, false)
}

fn lexicon_for_pools(pools: &[&Pools]) -> Result<EntityLexicon> {
    let mut pairs = Vec::new();
    for p in pools {
        for (slot, values) in p.iter() {
            for v in values {
                pairs.push((v.clone(), format!("R_{slot}")));
                if *slot == "name" {
                    pairs.push((format!("{v}_phone"), "R_phone".to_string()));
                    pairs.push((format!("{v}_address"), "R_address".to_string()));
                }
            }
        }
    }
    EntityLexicon::from_pairs(pairs, false)
}

/// Gives each name a distinct (cuisine, location, price) so that every
/// `api_call` returns exactly one restaurant.
fn build_restaurants(pools: &Pools, rng: &mut ChaCha8Rng) -> Result<Vec<Restaurant>> {
    let mut triples = Vec::new();
    for c in &pools["cuisine"] {
        for l in &pools["location"] {
            for p in &pools["price"] {
                triples.push((c.clone(), l.clone(), p.clone()));
            }
        }
    }
    let names = &pools["name"];
    if names.is_empty() || triples.is_empty() {
        return Err(Error::Config("empty knowledge base".into()));
    }
    if triples.len() < names.len() {
        return Err(Error::Config(format!(
            "{} restaurant names but only {} attribute combinations",
            names.len(),
            triples.len()
        )));
    }
    triples.shuffle(rng);
    Ok(names
        .iter()
        .zip(triples)
        .map(|(name, (cuisine, location, price))| Restaurant {
            name: name.clone(),
            cuisine,
            location,
            price,
        })
        .collect())
}

fn fill(template: &str, r: &Restaurant) -> String {
    template
        .replace("{cuisine}", &r.cuisine)
        .replace("{location}", &r.location)
        .replace("{price}", &r.price)
}

fn make_dialogue(spec: &KbSpec, r: &Restaurant, rng: &mut ChaCha8Rng) -> Dialogue {
    let greet = ["hello", "hi", SILENCE].choose(rng).unwrap();
    let mut turns = vec![Turn::new(greet, "hello what can i help you with today")];

    let template = spec.request_templates.choose(rng).unwrap();
    let mut request = Turn::new(
        &fill(template, r),
        &format!("api_call {} {} {}", r.cuisine, r.location, r.price),
    );
    request.kb_results = r
        .facts()
        .into_iter()
        .map(|f| f.to_vec())
        .collect();
    turns.push(request);

    turns.push(Turn::new(
        SILENCE,
        &format!(
            "{} is a nice place in the {} of town serving {} food",
            r.name, r.location, r.cuisine
        ),
    ));

    let mut follow_ups = vec![
        Turn::new(
            "what is the address",
            &format!("sure {} is on {}", r.name, r.address()),
        ),
        Turn::new(
            "what is the phone number",
            &format!("the phone number of {} is {}", r.name, r.phone()),
        ),
        Turn::new(
            "what is the price range",
            &format!("{} is in the {} price range", r.name, r.price),
        ),
    ];
    follow_ups.shuffle(rng);
    let keep = rng.gen_range(0..=follow_ups.len());
    turns.extend(follow_ups.into_iter().take(keep));

    turns.push(Turn::new("thank you good bye", "you are welcome"));
    Dialogue { turns }
}

fn generate(
    spec: &KbSpec,
    pools: &Pools,
    n: usize,
    rng: &mut ChaCha8Rng,
) -> Result<SyntheticCorpus> {
    let restaurants = build_restaurants(pools, rng)?;
    let dialogues = (0..n)
        .map(|_| {
            let r = restaurants.choose(rng).unwrap();
            make_dialogue(spec, r, rng)
        })
        .collect();
    let kb = KnowledgeBase::new(restaurants.iter().flat_map(Restaurant::facts).collect());
    Ok(SyntheticCorpus {
        dialogues,
        kb,
        lexicon: lexicon_for(&restaurants)?,
    })
}

fn all_pools(spec: &KbSpec) -> Pools {
    SLOTS
        .iter()
        .map(|&s| (s, spec.list(s).to_vec()))
        .collect()
}

/// `n_dialogues` dialogues over the whole KB. Same seed, same bytes.
pub fn synthesize_corpus(spec: &KbSpec, n_dialogues: usize, seed: u64) -> Result<SyntheticCorpus> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pools = all_pools(spec);
    let mut corpus = generate(spec, &pools, n_dialogues, &mut rng)?;
    corpus.lexicon = lexicon_for_pools(&[&pools])?;
    Ok(corpus)
}

/// Splits every entity list into disjoint train and held-out pools and
/// generates a corpus from each with the same templates.
pub fn synthesize_split(
    spec: &KbSpec,
    n_train: usize,
    n_heldout: usize,
    seed: u64,
) -> Result<SyntheticSplit> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train_pools = Pools::new();
    let mut heldout_pools = Pools::new();
    for slot in SLOTS {
        let mut values = spec.list(slot).to_vec();
        if values.len() < 2 {
            return Err(Error::Config(format!(
                "`{slot}` needs at least two entities to split"
            )));
        }
        values.shuffle(&mut rng);
        let held = ((values.len() as f64 * spec.heldout_fraction).round() as usize)
            .clamp(1, values.len() - 1);
        let train = values.split_off(held);
        heldout_pools.insert(slot, values);
        train_pools.insert(slot, train);
    }
    let train = generate(spec, &train_pools, n_train, &mut rng)?;
    let heldout = generate(spec, &heldout_pools, n_heldout, &mut rng)?;
    let lexicon = lexicon_for_pools(&[&train_pools, &heldout_pools])?;
    Ok(SyntheticSplit {
        train,
        heldout,
        lexicon,
    })
}

/// Entity tokens mentioned anywhere in a corpus.
pub fn entity_mentions<'a>(
    dialogues: &'a [Dialogue],
    lexicon: &'a EntityLexicon,
) -> std::collections::BTreeSet<&'a str> {
    dialogues
        .iter()
        .flat_map(|d| &d.turns)
        .flat_map(|t| {
            t.user
                .iter()
                .chain(&t.system)
                .chain(t.kb_results.iter().flatten())
        })
        .map(String::as_str)
        .filter(|tok| lexicon.is_entity(tok))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::dialogue::parse_dialogues;

    #[test]
    fn same_seed_same_bytes() {
        let spec = KbSpec::desk_default();
        let a = synthesize_corpus(&spec, 20, 42).unwrap().to_file_string();
        let b = synthesize_corpus(&spec, 20, 42).unwrap().to_file_string();
        assert_eq!(a, b);
        let c = synthesize_corpus(&spec, 20, 43).unwrap().to_file_string();
        assert_ne!(a, c);
    }

    #[test]
    fn output_parses_back() {
        let spec = KbSpec::desk_default();
        let corpus = synthesize_corpus(&spec, 20, 42).unwrap();
        let parsed = parse_dialogues(&corpus.to_file_string(), Path::new("synth")).unwrap();
        assert_eq!(parsed.len(), 20);
        assert_eq!(parsed, corpus.dialogues);
        assert!(parsed.iter().all(|d| d.turns[1].is_api_call()));
        assert!(parsed.iter().all(|d| !d.turns[1].kb_results.is_empty()));
    }

    #[test]
    fn heldout_split_has_no_entity_overlap() {
        let spec = KbSpec::desk_default();
        let split = synthesize_split(&spec, 30, 30, 7).unwrap();
        let train = entity_mentions(&split.train.dialogues, &split.lexicon);
        let held = entity_mentions(&split.heldout.dialogues, &split.lexicon);
        assert!(!train.is_empty() && !held.is_empty());
        assert!(train.intersection(&held).next().is_none());

        // templates are shared: the request turn of each held-out dialogue
        // matches some template once entities are blanked out
        let blank = |toks: &[String]| -> String {
            toks.iter()
                .map(|t| if split.lexicon.is_entity(t) { "_" } else { t.as_str() })
                .collect::<Vec<_>>()
                .join(" ")
        };
        for d in &split.heldout.dialogues {
            let shape = blank(&d.turns[1].user);
            let known = spec.request_templates.iter().any(|t| {
                let r = Restaurant {
                    name: "_".into(),
                    cuisine: "_".into(),
                    location: "_".into(),
                    price: "_".into(),
                };
                fill(t, &r) == shape
            });
            assert!(known, "{shape}");
        }
    }

    #[test]
    fn empty_kb_is_rejected() {
        let mut spec = KbSpec::desk_default();
        spec.entities.insert("name".into(), vec![]);
        assert!(synthesize_corpus(&spec, 5, 1).is_err());
    }

    #[test]
    fn kb_lookup_finds_the_requested_restaurant() {
        let corpus = synthesize_corpus(&KbSpec::desk_default(), 10, 3).unwrap();
        for d in &corpus.dialogues {
            let hits = corpus.kb.lookup(&d.turns[1].system);
            assert_eq!(hits, d.turns[1].kb_results);
        }
    }
}
