//! Token embeddings (word vector concatenated with an entity indicator
//! vector) and the BiLSTM over the joined chain `doc_s ⊕ [SEP] ⊕ doc_o`.

use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{DocSide, InstanceChain};
use crate::error::{Error, Result};
use crate::numerics::optim::uniform;
use crate::numerics::{LstmParams, ParamId, ParamStore, Scalar, Tape, Tensor, Var};

pub const PAD_WORD: usize = 0;
pub const UNK_WORD: usize = 1;
pub const SEP_WORD: usize = 2;
pub const SEP_TOKEN: &str = "<sep>";

pub const INDICATOR_PAD: usize = 0;
pub const INDICATOR_PLAIN: usize = 1;
pub const INDICATOR_SUBJECT: usize = 2;
pub const INDICATOR_OBJECT: usize = 3;
pub const INDICATOR_FIRST_COMMON: usize = 4;
/// Rows of the indicator table; common entities past the end share the last row.
pub const INDICATOR_TABLE_SIZE: usize = 64;

pub const WORD_INIT_BOUND: f64 = 0.01;
pub const PARAM_INIT_BOUND: f64 = 0.08;

/// Lowercased word vocabulary with reserved padding, unknown and separator entries.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "Vec<String>", into = "Vec<String>")]
pub struct WordVocab {
    words: Vec<String>,
    index: HashMap<String, usize>,
}

impl From<Vec<String>> for WordVocab {
    fn from(words: Vec<String>) -> Self {
        Self::from_words(words)
    }
}

impl From<WordVocab> for Vec<String> {
    fn from(v: WordVocab) -> Self {
        v.words
    }
}

impl Default for WordVocab {
    fn default() -> Self {
        Self::new()
    }
}

impl WordVocab {
    pub fn new() -> Self {
        Self::from_words(["<pad>", "<unk>", SEP_TOKEN].map(String::from))
    }

    /// Rebuilds a vocabulary from its word list (reserved entries first).
    pub fn from_words(words: impl IntoIterator<Item = String>) -> Self {
        let words: Vec<String> = words.into_iter().collect();
        let index = words
            .iter()
            .enumerate()
            .map(|(i, w)| (w.clone(), i))
            .collect();
        Self { words, index }
    }

    /// Every token of every chain, in first-seen order.
    pub fn from_chains<'a>(chains: impl IntoIterator<Item = &'a InstanceChain>) -> Self {
        Self::from_chains_min(chains, 1)
    }

    /// Tokens occurring in at least `min_chains` chains, in first-seen order.
    pub fn from_chains_min<'a>(
        chains: impl IntoIterator<Item = &'a InstanceChain>,
        min_chains: usize,
    ) -> Self {
        let mut counts: HashMap<String, usize> = HashMap::new();
        let mut order = Vec::new();
        for c in chains {
            let seen: HashSet<String> = c
                .doc_s
                .tokens
                .iter()
                .chain(&c.doc_o.tokens)
                .map(|t| t.to_lowercase())
                .collect();
            for t in c.doc_s.tokens.iter().chain(&c.doc_o.tokens) {
                let key = t.to_lowercase();
                if !counts.contains_key(&key) {
                    order.push(key.clone());
                    counts.insert(key, 0);
                }
            }
            for key in seen {
                *counts.get_mut(&key).expect("counted above") += 1;
            }
        }
        let mut v = Self::new();
        for w in order.iter().filter(|w| counts[*w] >= min_chains) {
            v.insert(w);
        }
        v
    }

    pub fn insert(&mut self, token: &str) -> usize {
        let key = token.to_lowercase();
        if let Some(&i) = self.index.get(&key) {
            return i;
        }
        self.words.push(key.clone());
        self.index.insert(key, self.words.len() - 1);
        self.words.len() - 1
    }

    pub fn get(&self, token: &str) -> Option<usize> {
        self.index.get(&token.to_lowercase()).copied()
    }

    /// Id of `token`, or the unknown-word id.
    pub fn id(&self, token: &str) -> usize {
        self.get(token).unwrap_or(UNK_WORD)
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }
}

/// Row positions of the joined chain.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ChainLayout {
    pub len_s: usize,
    pub len_o: usize,
}

impl ChainLayout {
    pub fn of(chain: &InstanceChain) -> Self {
        Self {
            len_s: chain.doc_s.len(),
            len_o: chain.doc_o.len(),
        }
    }

    pub fn separator(&self) -> usize {
        self.len_s
    }

    pub fn total(&self) -> usize {
        self.len_s + 1 + self.len_o
    }

    pub fn offset(&self, side: DocSide) -> usize {
        match side {
            DocSide::Subject => 0,
            DocSide::Object => self.len_s + 1,
        }
    }

    pub fn row(&self, side: DocSide, token: usize) -> usize {
        self.offset(side) + token
    }
}

/// Indicator index per token of each document.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IndicatorAssignment {
    pub doc_s: Vec<usize>,
    pub doc_o: Vec<usize>,
    /// Common entities that had to share the last table row.
    pub overflow: usize,
}

impl IndicatorAssignment {
    /// Per row of the joined chain, separator included.
    pub fn joined(&self) -> Vec<usize> {
        let mut v = self.doc_s.clone();
        v.push(INDICATOR_PLAIN);
        v.extend_from_slice(&self.doc_o);
        v
    }
}

pub fn assign_indicator_indices(chain: &InstanceChain) -> IndicatorAssignment {
    let mut common: HashMap<&str, usize> = HashMap::new();
    let mut overflow = 0;
    let ordered = chain
        .mentions_in(DocSide::Subject)
        .chain(chain.mentions_in(DocSide::Object))
        .map(|m| m.entity_key.as_str());
    for key in ordered {
        if common.contains_key(key) || !chain.common.iter().any(|c| c == key) {
            continue;
        }
        let next = INDICATOR_FIRST_COMMON + common.len();
        if next >= INDICATOR_TABLE_SIZE {
            overflow += 1;
        }
        common.insert(key, next.min(INDICATOR_TABLE_SIZE - 1));
    }
    if overflow > 0 {
        log::warn!(
            "{} common entities beyond the indicator table share index {}",
            overflow,
            INDICATOR_TABLE_SIZE - 1
        );
    }
    let fill = |side: DocSide| {
        let mut v = vec![INDICATOR_PLAIN; chain.doc(side).len()];
        for m in chain.mentions_in(side) {
            let idx = if m.entity_key == chain.subject {
                INDICATOR_SUBJECT
            } else if m.entity_key == chain.object {
                INDICATOR_OBJECT
            } else if let Some(&i) = common.get(m.entity_key.as_str()) {
                i
            } else {
                continue;
            };
            v[m.start..m.end].iter_mut().for_each(|x| *x = idx);
        }
        v
    };
    IndicatorAssignment {
        doc_s: fill(DocSide::Subject),
        doc_o: fill(DocSide::Object),
        overflow,
    }
}

/// Word ids of the joined chain.
pub fn chain_word_ids(chain: &InstanceChain, vocab: &WordVocab) -> Vec<usize> {
    let mut v: Vec<usize> = chain.doc_s.tokens.iter().map(|t| vocab.id(t)).collect();
    v.push(SEP_WORD);
    v.extend(chain.doc_o.tokens.iter().map(|t| vocab.id(t)));
    v
}

/// The word and indicator tables.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct EmbeddingTables {
    pub word: ParamId,
    pub indicator: ParamId,
    pub d_w: usize,
    pub d_z: usize,
}

impl EmbeddingTables {
    pub fn register<T: Scalar, R: Rng>(
        store: &mut ParamStore<T>,
        vocab_len: usize,
        d_w: usize,
        d_z: usize,
        rng: &mut R,
    ) -> Result<Self> {
        Ok(Self {
            word: store.add_uniform("embed.word", &[vocab_len, d_w], WORD_INIT_BOUND, rng)?,
            indicator: store.add_uniform(
                "embed.indicator",
                &[INDICATOR_TABLE_SIZE, d_z],
                PARAM_INIT_BOUND,
                rng,
            )?,
            d_w,
            d_z,
        })
    }

    pub fn lookup<T: Scalar>(store: &ParamStore<T>) -> Result<Self> {
        let get = |n: &str| {
            store
                .id(n)
                .ok_or_else(|| Error::Contract(format!("missing parameter {n}")))
        };
        let (word, indicator) = (get("embed.word")?, get("embed.indicator")?);
        Ok(Self {
            word,
            indicator,
            d_w: store.get(word).cols(),
            d_z: store.get(indicator).cols(),
        })
    }

    pub fn width(&self) -> usize {
        self.d_w + self.d_z
    }
}

/// Token vectors `x_t = w_t ∥ z_t` of the joined chain, `n_total x (d_w + d_z)`.
pub fn embed_chain<T: Scalar>(
    tape: &mut Tape<T>,
    store: &ParamStore<T>,
    tables: &EmbeddingTables,
    chain: &InstanceChain,
    vocab: &WordVocab,
) -> Result<Var> {
    let words = tape.gather(store, tables.word, &chain_word_ids(chain, vocab))?;
    let ind = tape.gather(
        store,
        tables.indicator,
        &assign_indicator_indices(chain).joined(),
    )?;
    tape.concat_cols(&[words, ind])
}

/// Forward and backward LSTMs over the joined chain.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BiLstm {
    pub fwd: LstmParams,
    pub bwd: LstmParams,
}

impl BiLstm {
    pub fn register<T: Scalar, R: Rng>(
        store: &mut ParamStore<T>,
        prefix: &str,
        d_in: usize,
        hidden: usize,
        rng: &mut R,
    ) -> Result<Self> {
        Ok(Self {
            fwd: LstmParams::register(
                store,
                &format!("{prefix}.fwd"),
                d_in,
                hidden,
                PARAM_INIT_BOUND,
                rng,
            )?,
            bwd: LstmParams::register(
                store,
                &format!("{prefix}.bwd"),
                d_in,
                hidden,
                PARAM_INIT_BOUND,
                rng,
            )?,
        })
    }

    pub fn lookup<T: Scalar>(store: &ParamStore<T>, prefix: &str) -> Result<Self> {
        Ok(Self {
            fwd: LstmParams::lookup(store, &format!("{prefix}.fwd"))?,
            bwd: LstmParams::lookup(store, &format!("{prefix}.bwd"))?,
        })
    }

    pub fn output_width(&self) -> usize {
        self.fwd.hidden + self.bwd.hidden
    }
}

/// Hidden states of a joined chain.
#[derive(Clone, Copy, Debug)]
pub struct EncodedChain {
    /// `n_total x 2H`, rows `[forward ∥ backward]`.
    pub h: Var,
    pub layout: ChainLayout,
}

pub fn encode_chain<T: Scalar>(
    tape: &mut Tape<T>,
    store: &ParamStore<T>,
    lstm: &BiLstm,
    x: Var,
    layout: ChainLayout,
) -> Result<EncodedChain> {
    if tape.value(x).rows() == 0 {
        return Err(Error::Input("cannot encode an empty sequence".into()));
    }
    let run = |tape: &mut Tape<T>, p: &LstmParams, reverse: bool| {
        let (wx, wh, b) = (
            tape.param(store, p.wx),
            tape.param(store, p.wh),
            tape.param(store, p.b),
        );
        tape.lstm_sequence(x, wx, wh, b, reverse)
    };
    let f = run(tape, &lstm.fwd, false)?;
    let b = run(tape, &lstm.bwd, true)?;
    Ok(EncodedChain {
        h: tape.concat_cols(&[f, b])?,
        layout,
    })
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PretrainedStats {
    pub found: usize,
    pub missing: usize,
    pub duplicates: usize,
}

/// Reads a whitespace-separated `token v1 .. v_dw` file into a word table for
/// `vocab`. Words absent from the file get the random unknown-word init.
pub fn load_pretrained_embeddings<T: Scalar, R: Rng>(
    path: &Path,
    vocab: &WordVocab,
    d_w: usize,
    rng: &mut R,
) -> Result<(Tensor<T>, PretrainedStats)> {
    let file = File::open(path).map_err(|e| Error::Input(format!("{}: {e}", path.display())))?;
    let mut table: Tensor<T> = uniform(&[vocab.len(), d_w], WORD_INIT_BOUND, rng);
    let mut seen = vec![false; vocab.len()];
    let mut stats = PretrainedStats::default();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        let mut parts = line.split_whitespace();
        let Some(word) = parts.next() else { continue };
        let values = parts
            .map(|v| v.parse::<f64>().map(T::lit))
            .collect::<std::result::Result<Vec<T>, _>>()
            .map_err(|e| Error::Parse {
                path: path.display().to_string(),
                line: n + 1,
                msg: format!("bad value for {word:?}: {e}"),
            })?;
        if values.is_empty() {
            return Err(Error::Parse {
                path: path.display().to_string(),
                line: n + 1,
                msg: format!("no values for {word:?}"),
            });
        }
        if values.len() != d_w {
            return Err(Error::Contract(format!(
                "{}:{}: vector of {} values, expected d_w = {}",
                path.display(),
                n + 1,
                values.len(),
                d_w
            )));
        }
        let Some(id) = vocab.get(word) else { continue };
        if seen[id] {
            stats.duplicates += 1;
        } else {
            seen[id] = true;
            stats.found += 1;
        }
        table.row_slice_mut(id).copy_from_slice(&values);
    }
    stats.missing = vocab.len() - stats.found;
    if stats.duplicates > 0 {
        log::warn!(
            "{}: {} duplicate words, last occurrence kept",
            path.display(),
            stats.duplicates
        );
    }
    Ok((table, stats))
}
