//! Finite-difference checks of whole-model gradients on a toy instance.

use super::{Mode, Model, ModelConfig, ModelKind};
use crate::corpus::{find_mentions, tokenize, Gazetteer, InstanceChain, RelationId, RelationVocab};
use crate::encoder::WordVocab;
use crate::error::Result;
use crate::numerics::gradcheck::{check_gradients, CheckOutcome, FdConfig, HasParams};
use crate::numerics::ParamStore;

impl HasParams for Model<f64> {
    fn params(&self) -> &ParamStore<f64> {
        &self.store
    }

    fn params_mut(&mut self) -> &mut ParamStore<f64> {
        &mut self.store
    }
}

/// Two documents of two sentences each, linked through two common entities.
pub fn toy_instance() -> InstanceChain {
    let doc_s = tokenize(
        "toy-s",
        "Alpha Lake lies near Beta Town . Beta Town is part of Gamma Land .",
    )
    .expect("toy text");
    let doc_o = tokenize(
        "toy-o",
        "Beta Town borders Delta Province . Delta Province contains Gamma Land .",
    )
    .expect("toy text");
    let gz = Gazetteer::new(["alpha lake", "beta town", "gamma land", "delta province"]);
    let mut mentions = find_mentions(&doc_s, &gz);
    mentions.extend(find_mentions(&doc_o, &gz));
    InstanceChain::new(
        doc_s,
        doc_o,
        "alpha lake".into(),
        "delta province".into(),
        vec!["beta town".into(), "gamma land".into()],
        Some(RelationId(1)),
        mentions,
    )
    .expect("toy instance is valid")
}

/// A small model of `kind` over the toy instance vocabulary.
pub fn toy_model(kind: ModelKind, d_w: usize, d_z: usize, seed: u64) -> Result<Model<f64>> {
    let chain = toy_instance();
    let config = ModelConfig {
        kind,
        d_w,
        d_z,
        n_relations: 2,
        cnn_filters: 3,
        cnn_widths: vec![2, 3],
        seed,
        ..ModelConfig::default()
    };
    Model::new(
        config,
        WordVocab::from_chains([&chain]),
        RelationVocab::from_names(["r0", "r1"]),
        0.01,
    )
}

/// NLL gradient of every parameter of `model` against central differences.
pub fn check_model(
    model: &mut Model<f64>,
    chain: &InstanceChain,
    cfg: &FdConfig,
) -> Result<CheckOutcome> {
    let name = format!("{}_forward", model.kind());
    check_gradients(
        &name,
        model,
        |m, tape| {
            let logits = m.forward(tape, chain, &mut Mode::Eval)?;
            tape.nll_from_logits(logits, m.target(chain.label))
        },
        cfg,
    )
}
