//! Template corpus whose labels can only be read off the entity chain.
//!
//! Each record has a subject document `S <link a> C .`, an answer document
//! `C <link b> O .` and a distractor document `C <unrelated> W .`, padded
//! with filler sentences that mention unrelated entities, half of them
//! decoys that join two unrelated entities with a link phrase. `a` ranges over
//! the relations and `b` over {0, 1}; the relation of `(S, O)` is
//! `(a + b) mod n_relations`, so the subject link narrows the label to two
//! relations and only the answer link decides between them. `(S, W)` is a
//! None pair.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::text::tokenize;
use super::types::{normalize_key, KbStore, WikiHopRecord};
use crate::error::{Error, Result};

/// Seed of the shared lexicon (link phrases, filler words); independent of
/// the corpus seed so corpora generated with different seeds share words.
const LEXICON_SEED: u64 = 0x7a11_0b0b;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub n_relations: usize,
    pub n_records: usize,
    /// Number of filler words.
    pub vocab: usize,
    /// Most filler sentences per document; each document draws 0..=this.
    pub max_fillers: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_relations: 5,
            n_records: 200,
            vocab: 60,
            max_fillers: 2,
            seed: 1,
        }
    }
}

/// Number of answer-document links; link `b` shifts the relation by `b`.
const SHIFTS: usize = 2;

struct Lexicon {
    subject_links: Vec<[String; 2]>,
    object_links: Vec<[String; 2]>,
    unrelated_link: [String; 2],
    fillers: Vec<String>,
}

const ONSETS: &[&str] = &[
    "b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z", "br", "tr", "st", "gl",
];
const NUCLEI: &[&str] = &["a", "e", "i", "o", "u", "ai", "ou"];
const CODAS: &[&str] = &["", "n", "r", "s", "l", "m", "x"];

fn pseudo_word<R: Rng>(rng: &mut R, syllables: usize) -> String {
    (0..syllables)
        .map(|_| {
            format!(
                "{}{}{}",
                ONSETS.choose(rng).unwrap(),
                NUCLEI.choose(rng).unwrap(),
                CODAS.choose(rng).unwrap()
            )
        })
        .collect()
}

fn unique_word<R: Rng>(rng: &mut R, used: &mut BTreeSet<String>, syllables: usize) -> String {
    loop {
        let w = pseudo_word(rng, syllables);
        if w.len() >= 4 && used.insert(w.clone()) {
            return w;
        }
    }
}

fn capitalize(w: &str) -> String {
    let mut c = w.chars();
    match c.next() {
        Some(f) => f.to_uppercase().chain(c).collect(),
        None => String::new(),
    }
}

impl Lexicon {
    fn new(n_relations: usize, n_fillers: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(LEXICON_SEED);
        let mut used = BTreeSet::new();
        let mut pair = |rng: &mut ChaCha8Rng| {
            [
                unique_word(rng, &mut used, 2),
                unique_word(rng, &mut used, 2),
            ]
        };
        let subject_links = (0..n_relations).map(|_| pair(&mut rng)).collect();
        let object_links = (0..SHIFTS).map(|_| pair(&mut rng)).collect();
        let unrelated_link = pair(&mut rng);
        let fillers = (0..n_fillers)
            .map(|_| unique_word(&mut rng, &mut used, 2))
            .collect();
        Self {
            subject_links,
            object_links,
            unrelated_link,
            fillers,
        }
    }
}

struct Names {
    used: BTreeSet<String>,
}

impl Names {
    fn fresh<R: Rng>(&mut self, rng: &mut R) -> String {
        loop {
            let (first, last) = (pseudo_word(rng, 2), pseudo_word(rng, 2));
            if first.len() < 4 || last.len() < 4 {
                continue;
            }
            let n = format!("{} {}", capitalize(&first), capitalize(&last));
            if self.used.insert(normalize_key(&n)) {
                return n;
            }
        }
    }
}

fn filler_sentence<R: Rng>(rng: &mut R, lex: &Lexicon, entity: &str) -> String {
    let n = rng.gen_range(3..=5);
    let mut words: Vec<String> = (0..n)
        .map(|_| lex.fillers.choose(rng).unwrap().clone())
        .collect();
    let at = rng.gen_range(1..=words.len());
    words.insert(at, entity.to_string());
    words.push(".".into());
    words.join(" ")
}

fn document<R: Rng>(
    rng: &mut R,
    lex: &Lexicon,
    names: &mut Names,
    key_sentence: String,
    decoy_links: &[[String; 2]],
    max_fillers: usize,
) -> String {
    let mut sentences = vec![key_sentence];
    for _ in 0..rng.gen_range(0..=max_fillers) {
        let d = names.fresh(rng);
        if rng.gen_bool(0.5) {
            let l = decoy_links.choose(rng).unwrap();
            let e = names.fresh(rng);
            sentences.push(format!("{d} {} {} {e} .", l[0], l[1]));
        } else {
            sentences.push(filler_sentence(rng, lex, &d));
        }
    }
    sentences.shuffle(rng);
    sentences.join(" ")
}

/// Generates records and the KB triples for their positive tuples.
pub fn generate_synthetic(config: &SynthConfig) -> Result<(Vec<WikiHopRecord>, KbStore)> {
    if config.n_relations < 2 {
        return Err(Error::Input(format!(
            "synthetic corpus needs at least 2 relations, got {}",
            config.n_relations
        )));
    }
    if config.vocab == 0 {
        return Err(Error::Input("synthetic corpus needs filler words".into()));
    }
    let n = config.n_relations;
    let lex = Lexicon::new(n, config.vocab);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut names = Names {
        used: BTreeSet::new(),
    };
    let mut kb = KbStore::new();
    let rel_names: Vec<String> = (0..config.n_relations)
        .map(|r| format!("rel_{r}"))
        .collect();
    for n in &rel_names {
        kb.relations.intern(n);
    }

    let mut records = Vec::with_capacity(config.n_records);
    for k in 0..config.n_records {
        let id = format!("synth-{}-{k}", config.seed);
        let r = rng.gen_range(0..n);
        let b = rng.gen_range(0..SHIFTS);
        let a = (r + n - b) % n;
        let (s, c, o, w) = (
            names.fresh(&mut rng),
            names.fresh(&mut rng),
            names.fresh(&mut rng),
            names.fresh(&mut rng),
        );
        let link = |l: &[String; 2]| format!("{} {}", l[0], l[1]);
        let texts = [
            document(
                &mut rng,
                &lex,
                &mut names,
                format!("{s} {} {c} .", link(&lex.subject_links[a])),
                &lex.subject_links,
                config.max_fillers,
            ),
            document(
                &mut rng,
                &lex,
                &mut names,
                format!("{c} {} {o} .", link(&lex.object_links[b])),
                &lex.object_links,
                config.max_fillers,
            ),
            document(
                &mut rng,
                &lex,
                &mut names,
                format!("{c} {} {w} .", link(&lex.unrelated_link)),
                &lex.object_links,
                config.max_fillers,
            ),
        ];
        let mut order = [0usize, 1, 2];
        order.shuffle(&mut rng);
        let supports = order
            .iter()
            .map(|&i| tokenize(&format!("{id}-d{i}"), &texts[i]))
            .collect::<Result<Vec<_>>>()?;
        let mut candidates = vec![normalize_key(&o), normalize_key(&w)];
        candidates.shuffle(&mut rng);
        let relation = kb.insert(&s, &rel_names[r], &o);
        records.push(WikiHopRecord {
            id,
            relation,
            subject: normalize_key(&s),
            candidates,
            answer: normalize_key(&o),
            supports,
        });
    }
    Ok((records, kb))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixed_seed_is_reproducible() {
        let cfg = SynthConfig {
            n_records: 20,
            ..Default::default()
        };
        let (a, _) = generate_synthetic(&cfg).unwrap();
        let (b, _) = generate_synthetic(&cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn too_few_relations() {
        let cfg = SynthConfig {
            n_relations: 1,
            ..Default::default()
        };
        assert!(generate_synthetic(&cfg).is_err());
    }

    #[test]
    fn lexicon_is_seed_independent() {
        let a = Lexicon::new(6, 10);
        let b = Lexicon::new(6, 10);
        assert_eq!(a.subject_links, b.subject_links);
        assert_eq!(a.fillers, b.fillers);
    }
}
