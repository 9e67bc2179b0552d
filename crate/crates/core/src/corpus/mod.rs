//! Documents, instances, and the distant-supervision pipeline that turns
//! multi-document QA records plus KB triples into two-hop instances.

mod dataset;
pub mod io;
mod pipeline;
pub mod sample;
mod synth;
mod text;
mod types;

pub use dataset::{balance_none, dataset_stats, split_train_val, StatsReport};
pub use pipeline::{build_corpus, build_two_hop_instances, none_candidates, BuildSummary};
pub use synth::{generate_synthetic, SynthConfig};
pub use text::{
    detect_entities, find_mentions, tokenize, CapitalizationRecognizer, Gazetteer, Recognizer,
};
pub use types::{
    normalize_key, DocSide, Document, InstanceChain, KbStore, Label, Mention, RelationId,
    RelationVocab, WikiHopRecord,
};
