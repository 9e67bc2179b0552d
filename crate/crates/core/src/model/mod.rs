//! The hierarchical entity GCN (HEGCN) and four baselines over the same
//! token encoding: CNN, BiLSTM, BiLSTM+CNN and LinkPath.
//!
//! Every model maps an [`InstanceChain`] to logits over the relations plus a
//! trailing None label. Parameters live in a [`ParamStore`] under stable
//! names so checkpoints are self-describing.

mod checkpoint;
mod config;
pub mod gradcheck;
pub mod hegcn;

use std::borrow::Cow;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use checkpoint::{
    Checkpoint, DecisionRule, NamedTensor, CHECKPOINT_FORMAT, CHECKPOINT_VERSION,
};
pub use config::{ModelConfig, ModelKind};

use crate::corpus::{DocSide, InstanceChain, Label, Mention, RelationId, RelationVocab};
use crate::encoder::{
    embed_chain, encode_chain, BiLstm, ChainLayout, EmbeddingTables, WordVocab, PARAM_INIT_BOUND,
};
use crate::error::{Error, Result};
use crate::graphs::ChainGraphs;
use crate::numerics::{softmax, ParamGrads, ParamId, ParamStore, Scalar, Tape, Tensor, Var};
use hegcn::{
    entity_node_init, gcn_forward, mention_node_init, mention_rows, output_logits, Adjacencies,
};

/// Whether a forward pass applies dropout.
pub enum Mode<'a> {
    Eval,
    Train(&'a mut ChaCha8Rng),
}

impl Mode<'_> {
    pub fn is_training(&self) -> bool {
        matches!(self, Mode::Train(_))
    }
}

#[derive(Clone, Debug, PartialEq)]
struct ConvLayer {
    width: usize,
    kernel: ParamId,
    bias: ParamId,
}

#[derive(Clone, Debug, PartialEq)]
struct Parts {
    tables: EmbeddingTables,
    lstm: Option<BiLstm>,
    att: Option<ParamId>,
    emgcn: Vec<ParamId>,
    egcn: Vec<ParamId>,
    conv: Vec<ConvLayer>,
    cls_w: ParamId,
    cls_b: ParamId,
}

const LSTM_PREFIX: &str = "enc";

impl Parts {
    fn register<T: Scalar>(
        config: &ModelConfig,
        vocab_len: usize,
        store: &mut ParamStore<T>,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        let d = config.token_width();
        let dg = config.node_width();
        let bound = PARAM_INIT_BOUND;
        let tables = EmbeddingTables::register(store, vocab_len, config.d_w, config.d_z, rng)?;
        let lstm = if config.kind.uses_lstm() {
            Some(BiLstm::register(store, LSTM_PREFIX, d, d, rng)?)
        } else {
            None
        };
        let mut att = None;
        let (mut emgcn, mut egcn, mut conv) = (Vec::new(), Vec::new(), Vec::new());
        match config.kind {
            ModelKind::Hegcn => {
                att = Some(store.add_uniform("att.w", &[4 * d, 2 * d], bound, rng)?);
                for l in 0..config.l1 {
                    emgcn.push(store.add_uniform(
                        &format!("emgcn.{l}.w"),
                        &[dg, dg],
                        bound,
                        rng,
                    )?);
                }
                for l in 0..config.l2 {
                    egcn.push(store.add_uniform(&format!("egcn.{l}.w"), &[dg, dg], bound, rng)?);
                }
            }
            ModelKind::Cnn | ModelKind::BilstmCnn => {
                let d_in = if config.kind == ModelKind::Cnn {
                    d
                } else {
                    2 * d
                };
                for &w in &config.cnn_widths {
                    conv.push(ConvLayer {
                        width: w,
                        kernel: store.add_uniform(
                            &format!("conv.{w}.k"),
                            &[w * d_in, config.cnn_filters],
                            bound,
                            rng,
                        )?,
                        bias: store.add_uniform(
                            &format!("conv.{w}.b"),
                            &[1, config.cnn_filters],
                            bound,
                            rng,
                        )?,
                    });
                }
            }
            ModelKind::Bilstm | ModelKind::Linkpath => {}
        }
        let k = config.classifier_input();
        let cls_w = store.add_uniform("cls.w", &[config.n_labels(), k], bound, rng)?;
        let cls_b = store.add_uniform("cls.b", &[1, config.n_labels()], bound, rng)?;
        Ok(Self {
            tables,
            lstm,
            att,
            emgcn,
            egcn,
            conv,
            cls_w,
            cls_b,
        })
    }

    fn lookup<T: Scalar>(config: &ModelConfig, store: &ParamStore<T>) -> Result<Self> {
        let get = |n: &str| {
            store
                .id(n)
                .ok_or_else(|| Error::Contract(format!("checkpoint lacks parameter {n}")))
        };
        let tables = EmbeddingTables::lookup(store)?;
        let lstm = if config.kind.uses_lstm() {
            Some(BiLstm::lookup(store, LSTM_PREFIX)?)
        } else {
            None
        };
        let mut att = None;
        let (mut emgcn, mut egcn, mut conv) = (Vec::new(), Vec::new(), Vec::new());
        match config.kind {
            ModelKind::Hegcn => {
                att = Some(get("att.w")?);
                for l in 0..config.l1 {
                    emgcn.push(get(&format!("emgcn.{l}.w"))?);
                }
                for l in 0..config.l2 {
                    egcn.push(get(&format!("egcn.{l}.w"))?);
                }
            }
            ModelKind::Cnn | ModelKind::BilstmCnn => {
                for &w in &config.cnn_widths {
                    conv.push(ConvLayer {
                        width: w,
                        kernel: get(&format!("conv.{w}.k"))?,
                        bias: get(&format!("conv.{w}.b"))?,
                    });
                }
            }
            ModelKind::Bilstm | ModelKind::Linkpath => {}
        }
        Ok(Self {
            tables,
            lstm,
            att,
            emgcn,
            egcn,
            conv,
            cls_w: get("cls.w")?,
            cls_b: get("cls.b")?,
        })
    }
}

/// A model of any kind together with its vocabularies and parameters.
#[derive(Clone, Debug)]
pub struct Model<T> {
    pub config: ModelConfig,
    pub vocab: WordVocab,
    pub relations: RelationVocab,
    pub store: ParamStore<T>,
    parts: Parts,
}

/// Index of a label in the output layer; None is the last entry.
pub fn label_index(label: Label, n_relations: usize) -> usize {
    label.map_or(n_relations, RelationId::index)
}

impl<T: Scalar> Model<T> {
    /// Fresh parameters drawn from `config.seed`.
    pub fn new(
        config: ModelConfig,
        vocab: WordVocab,
        relations: RelationVocab,
        lr: f64,
    ) -> Result<Self> {
        config.validate()?;
        if relations.len() != config.n_relations {
            return Err(Error::Input(format!(
                "config has {} relations, vocabulary {}",
                config.n_relations,
                relations.len()
            )));
        }
        let mut store = ParamStore::new(T::lit(lr));
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let parts = Parts::register(&config, vocab.len(), &mut store, &mut rng)?;
        Ok(Self {
            config,
            vocab,
            relations,
            store,
            parts,
        })
    }

    pub fn kind(&self) -> ModelKind {
        self.config.kind
    }

    /// Id of the word table, e.g. for installing pretrained vectors.
    pub fn word_table(&self) -> ParamId {
        self.parts.tables.word
    }

    pub fn classifier(&self) -> (ParamId, ParamId) {
        (self.parts.cls_w, self.parts.cls_b)
    }

    /// Target index of a gold label.
    pub fn target(&self, label: Label) -> usize {
        label_index(label, self.config.n_relations)
    }

    /// Cuts over-long documents to `max_doc_len` tokens.
    pub fn fit_length<'c>(&self, chain: &'c InstanceChain) -> Result<Cow<'c, InstanceChain>> {
        let max = self.config.max_doc_len;
        if chain.doc_s.len() <= max && chain.doc_o.len() <= max {
            return Ok(Cow::Borrowed(chain));
        }
        chain.truncated(max).map(Cow::Owned).ok_or_else(|| {
            Error::Input(format!(
                "instance {} -> {} loses its entities when cut to {max} tokens",
                chain.doc_s.id, chain.doc_o.id
            ))
        })
    }

    /// Logits `1 x (|R| + 1)`.
    pub fn forward(
        &self,
        tape: &mut Tape<T>,
        chain: &InstanceChain,
        mode: &mut Mode<'_>,
    ) -> Result<Var> {
        let chain = self.fit_length(chain)?;
        match self.config.kind {
            ModelKind::Hegcn => self.hegcn(tape, &chain, mode),
            ModelKind::Cnn => {
                let x = self.embed(tape, &chain, mode)?;
                self.conv_classifier(tape, x, mode)
            }
            ModelKind::BilstmCnn => {
                let h = self.encode(tape, &chain, mode)?;
                self.conv_classifier(tape, h, mode)
            }
            ModelKind::Bilstm => self.bilstm(tape, &chain, mode),
            ModelKind::Linkpath => self.linkpath(tape, &chain, mode),
        }
    }

    /// Probability of every label, None last.
    pub fn probabilities(&self, chain: &InstanceChain) -> Result<Vec<f64>> {
        let mut tape = Tape::new();
        let logits = self.forward(&mut tape, chain, &mut Mode::Eval)?;
        Ok(softmax(tape.value(logits))?
            .data()
            .iter()
            .map(|x| x.as_f64())
            .collect())
    }

    /// Negative log-likelihood of the gold label and its parameter gradients.
    pub fn loss_and_grads(
        &self,
        chain: &InstanceChain,
        mode: &mut Mode<'_>,
    ) -> Result<(f64, ParamGrads<T>)> {
        let mut tape = Tape::new();
        let logits = self.forward(&mut tape, chain, mode)?;
        let loss = tape.nll_from_logits(logits, self.target(chain.label))?;
        let value = tape.value(loss).data()[0].as_f64();
        Ok((value, tape.backward(loss)?.into_params()))
    }

    pub fn loss(&self, chain: &InstanceChain) -> Result<f64> {
        let mut tape = Tape::new();
        let logits = self.forward(&mut tape, chain, &mut Mode::Eval)?;
        let loss = tape.nll_from_logits(logits, self.target(chain.label))?;
        Ok(tape.value(loss).data()[0].as_f64())
    }

    fn dropout(&self, tape: &mut Tape<T>, x: Var, mode: &mut Mode<'_>) -> Result<Var> {
        match mode {
            Mode::Eval => Ok(x),
            Mode::Train(rng) => tape.dropout(x, self.config.dropout, true, *rng),
        }
    }

    fn embed(&self, tape: &mut Tape<T>, chain: &InstanceChain, mode: &mut Mode<'_>) -> Result<Var> {
        let x = embed_chain(tape, &self.store, &self.parts.tables, chain, &self.vocab)?;
        self.dropout(tape, x, mode)
    }

    fn encode(
        &self,
        tape: &mut Tape<T>,
        chain: &InstanceChain,
        mode: &mut Mode<'_>,
    ) -> Result<Var> {
        let lstm = self
            .parts
            .lstm
            .as_ref()
            .ok_or_else(|| Error::Contract("model has no encoder".into()))?;
        let x = self.embed(tape, chain, mode)?;
        Ok(encode_chain(tape, &self.store, lstm, x, ChainLayout::of(chain))?.h)
    }

    fn classify(&self, tape: &mut Tape<T>, z: Var, mode: &mut Mode<'_>) -> Result<Var> {
        let z = self.dropout(tape, z, mode)?;
        let w = tape.param(&self.store, self.parts.cls_w);
        let b = tape.param(&self.store, self.parts.cls_b);
        output_logits(tape, z, w, b)
    }

    fn hegcn(&self, tape: &mut Tape<T>, chain: &InstanceChain, mode: &mut Mode<'_>) -> Result<Var> {
        let h = self.encode(tape, chain, mode)?;
        let layout = ChainLayout::of(chain);
        let graphs = ChainGraphs::build(chain, &self.config.edges);
        let adj = Adjacencies::<T>::of(&graphs);
        let att = tape.param(
            &self.store,
            self.parts.att.expect("hegcn has attention weights"),
        );
        let emw: Vec<Var> = self
            .parts
            .emgcn
            .iter()
            .map(|&id| tape.param(&self.store, id))
            .collect();
        let egw: Vec<Var> = self
            .parts
            .egcn
            .iter()
            .map(|&id| tape.param(&self.store, id))
            .collect();

        let mut doc_outputs = Vec::with_capacity(2);
        for (side, a) in [
            (DocSide::Subject, &adj.emg_s),
            (DocSide::Object, &adj.emg_o),
        ] {
            let emg = graphs.emg(side);
            let rows = mention_rows(chain.doc(side), &emg.nodes, layout, side);
            let mut q = Vec::with_capacity(rows.len());
            for (span, sentence) in &rows {
                q.push(mention_node_init(tape, h, *span, sentence, att)?);
            }
            let g0 = tape.concat_rows(&q)?;
            let a = tape.constant(a.clone());
            doc_outputs.push(gcn_forward(tape, a, g0, &emw)?);
        }
        let e0 = entity_node_init(tape, doc_outputs[0], doc_outputs[1], &graphs.unified)?;
        let a = tape.constant(adj.unified);
        let e = gcn_forward(tape, a, e0, &egw)?;
        let node = |key: &str| {
            graphs.unified.node(key).ok_or_else(|| {
                Error::Contract(format!("entity {key:?} missing from the unified graph"))
            })
        };
        let ends = [node(&chain.subject)?, node(&chain.object)?];
        let es = tape.select_rows(e, &ends[..1])?;
        let eo = tape.select_rows(e, &ends[1..])?;
        let z = tape.concat_cols(&[es, eo])?;
        self.classify(tape, z, mode)
    }

    /// Convolution + max-pooling over the rows of `x` for each width.
    fn conv_classifier(&self, tape: &mut Tape<T>, x: Var, mode: &mut Mode<'_>) -> Result<Var> {
        let mut pooled = Vec::with_capacity(self.parts.conv.len());
        for layer in &self.parts.conv {
            let windows = tape.unfold(x, layer.width)?;
            let k = tape.param(&self.store, layer.kernel);
            let b = tape.param(&self.store, layer.bias);
            let c = tape.matmul(windows, k)?;
            let c = tape.add_row(c, b)?;
            let c = tape.relu(c);
            pooled.push(tape.max_rows(c)?);
        }
        let z = tape.concat_cols(&pooled)?;
        self.classify(tape, z, mode)
    }

    /// Rows of `h` holding the first and last token of each mention.
    fn span_rows(
        chain: &InstanceChain,
        mentions: &[(DocSide, &Mention)],
    ) -> (Vec<usize>, Vec<usize>) {
        let layout = ChainLayout::of(chain);
        mentions
            .iter()
            .map(|&(side, m)| (layout.row(side, m.start), layout.row(side, m.end - 1)))
            .unzip()
    }

    /// `[h_first ∥ h_last]` per mention, `k x 4D`.
    fn mention_matrix(
        tape: &mut Tape<T>,
        h: Var,
        chain: &InstanceChain,
        mentions: &[(DocSide, &Mention)],
    ) -> Result<Var> {
        let (first, last) = Self::span_rows(chain, mentions);
        let f = tape.select_rows(h, &first)?;
        let l = tape.select_rows(h, &last)?;
        tape.concat_cols(&[f, l])
    }

    fn all_mentions(chain: &InstanceChain) -> Vec<(DocSide, &Mention)> {
        [DocSide::Subject, DocSide::Object]
            .into_iter()
            .flat_map(|side| chain.mentions_in(side).map(move |m| (side, m)))
            .collect()
    }

    fn bilstm(
        &self,
        tape: &mut Tape<T>,
        chain: &InstanceChain,
        mode: &mut Mode<'_>,
    ) -> Result<Var> {
        let h = self.encode(tape, chain, mode)?;
        let all = Self::all_mentions(chain);
        let mut ends = Vec::with_capacity(2);
        for key in [&chain.subject, &chain.object] {
            let ms: Vec<_> = all
                .iter()
                .copied()
                .filter(|(_, m)| &m.entity_key == key)
                .collect();
            let mat = Self::mention_matrix(tape, h, chain, &ms)?;
            ends.push(tape.mean_rows(mat)?);
        }
        let z = tape.concat_cols(&ends)?;
        self.classify(tape, z, mode)
    }

    /// Index tuples `(subject, connector in doc_s, connector in doc_o,
    /// object)` into [`Self::all_mentions`], capped at `max_paths`.
    pub fn link_paths(&self, chain: &InstanceChain) -> Vec<[usize; 4]> {
        let all = Self::all_mentions(chain);
        let pick = |side: DocSide, key: &str| -> Vec<usize> {
            all.iter()
                .enumerate()
                .filter(|(_, (s, m))| *s == side && m.entity_key == key)
                .map(|(i, _)| i)
                .collect()
        };
        let subj = pick(DocSide::Subject, &chain.subject);
        let obj = pick(DocSide::Object, &chain.object);
        let groups: Vec<(Vec<usize>, Vec<usize>)> = chain
            .common
            .iter()
            .map(|c| (pick(DocSide::Subject, c), pick(DocSide::Object, c)))
            .collect();
        let per_connector: Vec<usize> = groups
            .iter()
            .map(|(a, b)| subj.len() * a.len() * b.len() * obj.len())
            .collect();
        let total: usize = per_connector.iter().sum();
        let decode = |mut i: usize| -> [usize; 4] {
            let mut g = 0;
            while i >= per_connector[g] {
                i -= per_connector[g];
                g += 1;
            }
            let (cs, co) = &groups[g];
            let o = obj[i % obj.len()];
            i /= obj.len();
            let c2 = co[i % co.len()];
            i /= co.len();
            let c1 = cs[i % cs.len()];
            i /= cs.len();
            [subj[i], c1, c2, o]
        };
        if total <= self.config.max_paths {
            return (0..total).map(decode).collect();
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.config.seed ^ chain_fingerprint(chain));
        let mut picked = sample(&mut rng, total, self.config.max_paths).into_vec();
        picked.sort_unstable();
        picked.into_iter().map(decode).collect()
    }

    fn linkpath(
        &self,
        tape: &mut Tape<T>,
        chain: &InstanceChain,
        mode: &mut Mode<'_>,
    ) -> Result<Var> {
        let h = self.encode(tape, chain, mode)?;
        let all = Self::all_mentions(chain);
        let m = Self::mention_matrix(tape, h, chain, &all)?;
        let paths = self.link_paths(chain);
        if paths.is_empty() {
            return Err(Error::Contract(format!(
                "no path from {:?} to {:?} through a common entity",
                chain.subject, chain.object
            )));
        }
        let mut slots = Vec::with_capacity(4);
        for k in 0..4 {
            let idx: Vec<usize> = paths.iter().map(|p| p[k]).collect();
            slots.push(tape.select_rows(m, &idx)?);
        }
        let p = tape.concat_cols(&slots)?;
        let z = tape.mean_rows(p)?;
        self.classify(tape, z, mode)
    }

    /// Parameters as a checkpoint with the tuned None cutoff.
    pub fn to_checkpoint(&self, threshold: f64, decision: DecisionRule) -> Checkpoint {
        Checkpoint {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            config: self.config.clone(),
            threshold,
            decision,
            words: self.vocab.words().to_vec(),
            relations: self.relations.names().to_vec(),
            params: self
                .store
                .ids()
                .map(|id| NamedTensor {
                    name: self.store.name(id).to_string(),
                    shape: self.store.get(id).shape().to_vec(),
                    values: self
                        .store
                        .get(id)
                        .data()
                        .iter()
                        .map(|v| v.as_f64())
                        .collect(),
                })
                .collect(),
        }
    }

    pub fn from_checkpoint(ck: &Checkpoint, lr: f64) -> Result<Self> {
        ck.check_header()?;
        ck.config.validate()?;
        let mut store = ParamStore::new(T::lit(lr));
        for p in &ck.params {
            let values = p.values.iter().map(|&v| T::lit(v)).collect();
            store.add(&p.name, Tensor::new(p.shape.clone(), values)?)?;
        }
        let parts = Parts::lookup(&ck.config, &store)?;
        let model = Self {
            config: ck.config.clone(),
            vocab: WordVocab::from_words(ck.words.iter().cloned()),
            relations: RelationVocab::from_names(ck.relations.iter().cloned()),
            store,
            parts,
        };
        let mut fresh = ParamStore::<T>::new(T::zero());
        Parts::register(
            &model.config,
            model.vocab.len(),
            &mut fresh,
            &mut ChaCha8Rng::seed_from_u64(0),
        )?;
        for id in fresh.ids() {
            let name = fresh.name(id);
            let got = model.store.id(name).map(|i| model.store.get(i).shape());
            if got != Some(fresh.get(id).shape()) {
                return Err(Error::Contract(format!(
                    "checkpoint parameter {name} has shape {got:?}, expected {:?}",
                    fresh.get(id).shape()
                )));
            }
        }
        Ok(model)
    }
}

/// Stable 64-bit FNV-1a hash of an instance's identity.
fn chain_fingerprint(chain: &InstanceChain) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for part in [
        &chain.doc_s.id,
        &chain.doc_o.id,
        &chain.subject,
        &chain.object,
    ] {
        for b in part.bytes().chain([0u8]) {
            h ^= u64::from(b);
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
    }
    h
}

#[cfg(test)]
mod tests;
