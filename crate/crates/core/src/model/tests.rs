use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::gradcheck::{check_model, toy_instance, toy_model};
use super::hegcn::{entity_node_init, gcn_forward};
use super::*;
use crate::graphs::EdgeToggles;
use crate::numerics::gradcheck::FdConfig;
use crate::numerics::optim::uniform;

fn assert_distribution(p: &[f64], n: usize) {
    assert_eq!(p.len(), n);
    assert!(p.iter().all(|&x| x > 0.0));
    assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
}

#[test]
fn every_kind_outputs_a_distribution_over_relations_plus_none() {
    let chain = toy_instance();
    for kind in ModelKind::ALL {
        let m = toy_model(kind, 4, 2, 1).unwrap();
        assert_distribution(&m.probabilities(&chain).unwrap(), 3);
    }
}

#[test]
fn classifier_input_widths() {
    for kind in ModelKind::ALL {
        let m = toy_model(kind, 4, 2, 1).unwrap();
        let w = m.store.get(m.classifier().0);
        let expected = match kind {
            ModelKind::Hegcn => 72,
            ModelKind::Bilstm => 48,
            ModelKind::Linkpath => 96,
            ModelKind::Cnn | ModelKind::BilstmCnn => 6,
        };
        assert_eq!(w.shape(), &[3, expected], "{kind}");
    }
    let cnn = ModelConfig {
        kind: ModelKind::Cnn,
        ..ModelConfig::default()
    };
    assert_eq!(cnn.classifier_input(), 1500);
}

#[test]
fn gradients_match_finite_differences_for_every_kind() {
    let chain = toy_instance();
    for kind in ModelKind::ALL {
        let mut m = toy_model(kind, 4, 2, 7).unwrap();
        let res = check_model(&mut m, &chain, &FdConfig::default()).unwrap();
        assert!(res.passed, "{res:?}");
    }
}

#[test]
fn inference_is_bitwise_deterministic() {
    let chain = toy_instance();
    let m = toy_model(ModelKind::Hegcn, 4, 2, 3).unwrap();
    assert_eq!(
        m.probabilities(&chain).unwrap(),
        m.probabilities(&chain).unwrap()
    );
}

#[test]
fn removing_all_edges_changes_output_but_stays_a_distribution() {
    let chain = toy_instance();
    let mut m = toy_model(ModelKind::Hegcn, 4, 2, 3).unwrap();
    let full = m.probabilities(&chain).unwrap();
    m.config.edges = EdgeToggles::none();
    let bare = m.probabilities(&chain).unwrap();
    assert_distribution(&bare, 3);
    assert_ne!(full, bare);
}

#[test]
fn zero_classifier_loss_is_log_label_count() {
    let chain = toy_instance();
    let mut m = toy_model(ModelKind::Hegcn, 4, 2, 3).unwrap();
    let (w, b) = m.classifier();
    for id in [w, b] {
        let shape = m.store.get(id).shape().to_vec();
        m.store.set(id, Tensor::zeros(&shape)).unwrap();
    }
    assert!((m.loss(&chain).unwrap() - 3f64.ln()).abs() < 1e-12);
}

#[test]
fn one_mention_gcn_weight_set_regardless_of_documents() {
    let m = toy_model(ModelKind::Hegcn, 4, 2, 3).unwrap();
    let names: Vec<&str> = m
        .store
        .ids()
        .map(|id| m.store.name(id))
        .filter(|n| n.starts_with("emgcn"))
        .collect();
    assert_eq!(names, vec!["emgcn.0.w"]);
}

#[test]
fn link_path_enumeration_and_cap() {
    let chain = toy_instance();
    let mut m = toy_model(ModelKind::Linkpath, 4, 2, 3).unwrap();
    // 1 subject x (2x1 beta town + 1x1 gamma land) x 2 object mentions
    assert_eq!(m.link_paths(&chain).len(), 6);
    m.config.max_paths = 4;
    let a = m.link_paths(&chain);
    assert_eq!(a.len(), 4);
    assert_eq!(a, m.link_paths(&chain));
    assert_distribution(&m.probabilities(&chain).unwrap(), 3);
}

#[test]
fn checkpoint_round_trip_is_exact() {
    let chain = toy_instance();
    for kind in ModelKind::ALL {
        let m = toy_model(kind, 4, 2, 5).unwrap();
        let ck = m.to_checkpoint(0.35, DecisionRule::default());
        let back: Checkpoint = serde_json::from_str(&ck.to_json().unwrap()).unwrap();
        assert_eq!(back, ck);
        let m2 = Model::<f64>::from_checkpoint(&back, 0.01).unwrap();
        assert_eq!(
            m.probabilities(&chain).unwrap(),
            m2.probabilities(&chain).unwrap()
        );
    }
}

#[test]
fn checkpoint_with_wrong_shape_is_rejected() {
    let m = toy_model(ModelKind::Hegcn, 4, 2, 5).unwrap();
    let mut ck = m.to_checkpoint(0.0, DecisionRule::default());
    let p = ck.params.iter_mut().find(|p| p.name == "att.w").unwrap();
    p.shape = vec![p.shape[1], p.shape[0]];
    assert!(Model::<f64>::from_checkpoint(&ck, 0.01).is_err());
    let mut ck = m.to_checkpoint(0.0, DecisionRule::default());
    ck.version = 99;
    assert!(Model::<f64>::from_checkpoint(&ck, 0.01).is_err());
}

#[test]
fn single_precision_model_runs() {
    let chain = toy_instance();
    let m64 = toy_model(ModelKind::Hegcn, 4, 2, 5).unwrap();
    let m32 = Model::<f32>::from_checkpoint(&m64.to_checkpoint(0.0, DecisionRule::default()), 0.01)
        .unwrap();
    let (a, b) = (
        m64.probabilities(&chain).unwrap(),
        m32.probabilities(&chain).unwrap(),
    );
    for (x, y) in a.iter().zip(&b) {
        assert!((x - y).abs() < 1e-5);
    }
}

#[test]
fn over_long_documents_are_cut() {
    let chain = toy_instance();
    let mut m = toy_model(ModelKind::Hegcn, 4, 2, 5).unwrap();
    m.config.max_doc_len = 10;
    let cut = m.fit_length(&chain).unwrap();
    assert!(cut.doc_s.len() <= 10 && cut.doc_o.len() <= 10);
    assert_distribution(&m.probabilities(&chain).unwrap(), 3);
}

#[test]
fn document_order_does_not_matter_for_shared_mention_gcn() {
    let chain = toy_instance();
    let graphs = ChainGraphs::build(&chain, &EdgeToggles::all());
    let adj = Adjacencies::<f64>::of(&graphs);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let w: Tensor<f64> = uniform(&[6, 6], 0.5, &mut rng);
    let gs: Tensor<f64> = uniform(&[graphs.emg_s.len(), 6], 1.0, &mut rng);
    let go: Tensor<f64> = uniform(&[graphs.emg_o.len(), 6], 1.0, &mut rng);
    let run = |object_first: bool| {
        let mut t = Tape::new();
        let wv = t.constant(w.clone());
        let mut out = [None, None];
        let order = if object_first { [1, 0] } else { [0, 1] };
        for i in order {
            let (a, g) = if i == 0 {
                (&adj.emg_s, &gs)
            } else {
                (&adj.emg_o, &go)
            };
            let (a, g) = (t.constant(a.clone()), t.constant(g.clone()));
            out[i] = Some(gcn_forward(&mut t, a, g, &[wv]).unwrap());
        }
        let e =
            entity_node_init(&mut t, out[0].unwrap(), out[1].unwrap(), &graphs.unified).unwrap();
        t.value(e).clone()
    };
    assert_eq!(run(false), run(true));
}

#[test]
fn without_edges_subject_node_ignores_unrelated_mentions() {
    let chain = toy_instance();
    let graphs = ChainGraphs::build(&chain, &EdgeToggles::none());
    let adj = Adjacencies::<f64>::of(&graphs);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let w: Tensor<f64> = uniform(&[6, 6], 0.5, &mut rng);
    let gs: Tensor<f64> = uniform(&[graphs.emg_s.len(), 6], 1.0, &mut rng);
    let go: Tensor<f64> = uniform(&[graphs.emg_o.len(), 6], 1.0, &mut rng);
    let subject = graphs.unified.node(&chain.subject).unwrap();
    let run = |gs: &Tensor<f64>, go: &Tensor<f64>| {
        let mut t = Tape::new();
        let wv = t.constant(w.clone());
        let a = t.constant(adj.emg_s.clone());
        let g = t.constant(gs.clone());
        let s = gcn_forward(&mut t, a, g, &[wv]).unwrap();
        let a = t.constant(adj.emg_o.clone());
        let g = t.constant(go.clone());
        let o = gcn_forward(&mut t, a, g, &[wv]).unwrap();
        let e0 = entity_node_init(&mut t, s, o, &graphs.unified).unwrap();
        let a = t.constant(adj.unified.clone());
        let e = gcn_forward(&mut t, a, e0, &[wv]).unwrap();
        t.value(e).row_slice(subject).to_vec()
    };
    let base = run(&gs, &go);
    let mut gs2 = gs.clone();
    for (i, m) in graphs.emg_s.nodes.iter().enumerate() {
        if m.entity_key != chain.subject {
            gs2.row_slice_mut(i).iter_mut().for_each(|x| *x += 3.0);
        }
    }
    let go2 = go.map(|x| x - 2.0);
    assert_eq!(base, run(&gs2, &go2));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn gcn_commutes_with_node_relabeling(m in 1usize..8, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let edges: Vec<(usize, usize)> = (0..m).flat_map(|i| (0..i).map(move |j| (i, j))).collect();
        let edges: Vec<_> = edges.into_iter().filter(|_| rand::Rng::gen_bool(&mut rng, 0.4)).collect();
        let mut perm: Vec<usize> = (0..m).collect();
        perm.shuffle(&mut rng);
        let g: Tensor<f64> = uniform(&[m, 4], 1.0, &mut rng);
        let w: Tensor<f64> = uniform(&[4, 4], 1.0, &mut rng);
        let mut gp = Tensor::zeros(&[m, 4]);
        for i in 0..m {
            gp.row_slice_mut(perm[i]).copy_from_slice(g.row_slice(i));
        }
        let a = crate::graphs::normalize_adjacency::<f64>(edges.clone(), m);
        let ap = crate::graphs::normalize_adjacency::<f64>(edges.iter().map(|&(i, j)| (perm[i], perm[j])), m);
        let mut t = Tape::new();
        let (av, gv, wv) = (t.constant(a), t.constant(g), t.constant(w));
        let out = gcn_forward(&mut t, av, gv, &[wv, wv]).unwrap();
        let (apv, gpv) = (t.constant(ap), t.constant(gp));
        let outp = gcn_forward(&mut t, apv, gpv, &[wv, wv]).unwrap();
        for i in 0..m {
            for (x, y) in t.value(out).row_slice(i).iter().zip(t.value(outp).row_slice(perm[i])) {
                prop_assert!((x - y).abs() < 1e-12);
            }
        }
    }
}
