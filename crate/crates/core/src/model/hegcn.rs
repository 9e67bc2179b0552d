//! Building blocks of the hierarchical entity GCN, each usable on its own.

use crate::corpus::{DocSide, Document, Mention};
use crate::encoder::ChainLayout;
use crate::error::{Error, Result};
use crate::graphs::{normalize_adjacency, ChainGraphs, UnifiedEntityGraph};
use crate::numerics::{Scalar, Tape, Tensor, Var};

/// `p = h_b ∥ h_e` for the first and last token of a mention, `1 x 4D`.
pub fn mention_span_vector<T: Scalar>(
    tape: &mut Tape<T>,
    h: Var,
    first_row: usize,
    last_row: usize,
) -> Result<Var> {
    let hb = tape.select_rows(h, &[first_row])?;
    let he = tape.select_rows(h, &[last_row])?;
    tape.concat_cols(&[hb, he])
}

/// Attention-initialized node vector `q = p ∥ c` of one mention, `1 x 6D`.
///
/// `sentence` lists the rows of `h` of the mention's sentence; `att_w` is
/// `4D x 2D`. Scores are `s_t = tanh(p W) · h_t`.
pub fn mention_node_init<T: Scalar>(
    tape: &mut Tape<T>,
    h: Var,
    span: (usize, usize),
    sentence: &[usize],
    att_w: Var,
) -> Result<Var> {
    if sentence.is_empty() {
        return Err(Error::Contract("mention sentence has no tokens".into()));
    }
    let p = mention_span_vector(tape, h, span.0, span.1)?;
    let pw = tape.matmul(p, att_w)?;
    let u = tape.tanh(pw);
    let rows = tape.select_rows(h, sentence)?;
    let rows_t = tape.transpose(rows);
    let scores = tape.matmul(u, rows_t)?;
    let a = tape.softmax(scores)?;
    let c = tape.matmul(a, rows)?;
    tape.concat_cols(&[p, c])
}

/// `G^l = ReLU(Â G^{l-1} W^l)` for each weight in turn.
pub fn gcn_forward<T: Scalar>(
    tape: &mut Tape<T>,
    adj: Var,
    g0: Var,
    weights: &[Var],
) -> Result<Var> {
    let mut g = g0;
    for &w in weights {
        let (gw_in, w_in) = (tape.value(g).cols(), tape.value(w).rows());
        if gw_in != w_in {
            return Err(Error::Contract(format!(
                "gcn layer expects width {w_in}, got {gw_in}"
            )));
        }
        let ag = tape.matmul(adj, g)?;
        let agw = tape.matmul(ag, w)?;
        g = tape.relu(agw);
    }
    Ok(g)
}

/// Averaging matrix mapping stacked mention outputs `[G_s; G_o]` to entity
/// nodes, `n_entities x (m_s + m_o)`.
pub fn entity_pooling<T: Scalar>(
    unified: &UnifiedEntityGraph,
    m_s: usize,
    m_o: usize,
) -> Result<Tensor<T>> {
    let mut pool = Tensor::zeros(&[unified.nodes.len(), m_s + m_o]);
    for (n, ms) in unified.mentions.iter().enumerate() {
        if ms.is_empty() {
            return Err(Error::Contract(format!(
                "entity {:?} has no mentions",
                unified.nodes[n]
            )));
        }
        let w = T::one() / T::lit(ms.len() as f64);
        for &(side, i) in ms {
            let col = match side {
                DocSide::Subject if i < m_s => i,
                DocSide::Object if i < m_o => m_s + i,
                _ => {
                    return Err(Error::Contract(format!(
                        "mention {i} of {:?} out of range",
                        unified.nodes[n]
                    )))
                }
            };
            pool.set(n, col, w);
        }
    }
    Ok(pool)
}

/// Mean of each entity's mention outputs.
pub fn entity_node_init<T: Scalar>(
    tape: &mut Tape<T>,
    g_s: Var,
    g_o: Var,
    unified: &UnifiedEntityGraph,
) -> Result<Var> {
    let pool = entity_pooling::<T>(unified, tape.value(g_s).rows(), tape.value(g_o).rows())?;
    let stacked = tape.concat_rows(&[g_s, g_o])?;
    let p = tape.constant(pool);
    tape.matmul(p, stacked)
}

/// Logits `W_r z + b_r` for `z` of shape `1 x k`; `w` is `(|R|+1) x k`.
pub fn output_logits<T: Scalar>(tape: &mut Tape<T>, z: Var, w: Var, b: Var) -> Result<Var> {
    let (zk, wk) = (tape.value(z).cols(), tape.value(w).cols());
    if zk != wk {
        return Err(Error::dim(
            "classify",
            format!("input width {zk}, weights expect {wk}"),
        ));
    }
    let wt = tape.transpose(w);
    let zw = tape.matmul(z, wt)?;
    tape.add_row(zw, b)
}

/// `softmax(W_r (e_s ∥ e_o) + b_r)`.
pub fn classify<T: Scalar>(tape: &mut Tape<T>, e_s: Var, e_o: Var, w: Var, b: Var) -> Result<Var> {
    let z = tape.concat_cols(&[e_s, e_o])?;
    let logits = output_logits(tape, z, w, b)?;
    tape.softmax(logits)
}

/// Rows of `h` for each mention of one document: span ends and sentence rows.
pub(crate) fn mention_rows(
    doc: &Document,
    mentions: &[Mention],
    layout: ChainLayout,
    side: DocSide,
) -> Vec<((usize, usize), Vec<usize>)> {
    mentions
        .iter()
        .map(|m| {
            let (a, b) = doc.sentence_range(doc.sentence_of(m.start));
            (
                (layout.row(side, m.start), layout.row(side, m.end - 1)),
                (a..b).map(|t| layout.row(side, t)).collect(),
            )
        })
        .collect()
}

/// Normalized adjacency of each graph of an instance.
pub(crate) struct Adjacencies<T> {
    pub emg_s: Tensor<T>,
    pub emg_o: Tensor<T>,
    pub unified: Tensor<T>,
}

impl<T: Scalar> Adjacencies<T> {
    pub fn of(g: &ChainGraphs) -> Self {
        Self {
            emg_s: normalize_adjacency(g.emg_s.edges.pairs(), g.emg_s.len()),
            emg_o: normalize_adjacency(g.emg_o.edges.pairs(), g.emg_o.len()),
            unified: normalize_adjacency(g.unified.edges.pairs(), g.unified.nodes.len()),
        }
    }
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::numerics::optim::uniform;

    #[test]
    fn zero_attention_weights_average_the_sentence() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut tape = Tape::<f64>::new();
        let h = tape.constant(uniform(&[5, 4], 1.0, &mut rng));
        let w = tape.constant(Tensor::zeros(&[8, 4]));
        let q = mention_node_init(&mut tape, h, (1, 2), &[0, 1, 2, 3], w).unwrap();
        let q = tape.value(q).clone();
        assert_eq!(q.cols(), 12);
        let hv = tape.value(h);
        for c in 0..4 {
            let mean = (0..4).map(|r| hv.at(r, c)).sum::<f64>() / 4.0;
            assert!((q.at(0, 8 + c) - mean).abs() < 1e-15);
        }
        assert_eq!(&q.data()[..4], hv.row_slice(1));
        assert_eq!(&q.data()[4..8], hv.row_slice(2));
    }

    #[test]
    fn single_token_sentence_context_is_that_token() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut tape = Tape::<f64>::new();
        let h = tape.constant(uniform(&[3, 2], 1.0, &mut rng));
        let w = tape.constant(uniform(&[4, 2], 1.0, &mut rng));
        let q = mention_node_init(&mut tape, h, (2, 2), &[2], w).unwrap();
        assert_eq!(&tape.value(q).data()[4..], tape.value(h).row_slice(2));
    }

    #[test]
    fn gcn_identity_and_average() {
        let mut tape = Tape::<f64>::new();
        let a = tape.constant(Tensor::identity(1));
        let g = tape.constant(Tensor::row(vec![0.5, 2.0, 0.0]));
        let w = tape.constant(Tensor::identity(3));
        let out = gcn_forward(&mut tape, a, g, &[w]).unwrap();
        assert_eq!(tape.value(out), tape.value(g));

        let a = tape.constant(Tensor::filled(&[2, 2], 0.5));
        let g = tape.constant(Tensor::from_rows(&[vec![1.0, -3.0], vec![3.0, 1.0]]).unwrap());
        let w = tape.constant(Tensor::identity(2));
        let out = gcn_forward(&mut tape, a, g, &[w]).unwrap();
        assert_eq!(tape.value(out).data(), &[2.0, 0.0, 2.0, 0.0]);
    }

    #[test]
    fn gcn_width_mismatch_is_a_contract_error() {
        let mut tape = Tape::<f64>::new();
        let a = tape.constant(Tensor::identity(1));
        let g = tape.constant(Tensor::row(vec![1.0, 2.0]));
        let w = tape.constant(Tensor::identity(3));
        assert!(matches!(
            gcn_forward(&mut tape, a, g, &[w]),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn zero_classifier_is_uniform() {
        let mut tape = Tape::<f64>::new();
        let es = tape.constant(Tensor::row(vec![1.0, 2.0]));
        let eo = tape.constant(Tensor::row(vec![-1.0, 0.5]));
        let w = tape.constant(Tensor::zeros(&[219, 4]));
        let b = tape.constant(Tensor::zeros(&[1, 219]));
        let p = classify(&mut tape, es, eo, w, b).unwrap();
        assert_eq!(tape.value(p).cols(), 219);
        assert!(tape
            .value(p)
            .data()
            .iter()
            .all(|&x| (x - 1.0 / 219.0).abs() < 1e-15));
    }

    #[test]
    fn entity_means() {
        use crate::graphs::TypedEdges;
        let unified = UnifiedEntityGraph {
            nodes: vec!["a".into(), "c".into()],
            edges: TypedEdges::new(),
            mentions: vec![
                vec![(DocSide::Subject, 0)],
                vec![
                    (DocSide::Subject, 1),
                    (DocSide::Subject, 2),
                    (DocSide::Object, 0),
                    (DocSide::Object, 1),
                ],
            ],
        };
        let mut tape = Tape::<f64>::new();
        let gs = tape.constant(Tensor::from_rows(&[vec![1.0], vec![2.0], vec![4.0]]).unwrap());
        let go = tape.constant(Tensor::from_rows(&[vec![6.0], vec![8.0]]).unwrap());
        let e = entity_node_init(&mut tape, gs, go, &unified).unwrap();
        assert_eq!(tape.value(e).data(), &[1.0, 5.0]);
    }
}
