//! Mention graphs, entity graphs, the unified cross-document entity graph,
//! and symmetric adjacency normalization.
//!
//! Node order is always appearance order: mentions by (start, end), entities
//! by first occurrence. Edges are undirected and stored once as `(i, j)` with
//! `i < j`, together with the set of edge types that produced them.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::corpus::{DocSide, Document, InstanceChain, Mention};
use crate::error::{Error, Result};
use crate::numerics::{Scalar, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum EdgeKind {
    /// Mentions in the same sentence.
    Emg1,
    /// Mentions of the same entity.
    Emg2,
    /// Consecutive mentions.
    Emg3,
    /// Entities co-occurring in a sentence.
    Eg1,
    /// Consecutive entities in first-occurrence order.
    Eg2,
}

impl EdgeKind {
    pub const ALL: [EdgeKind; 5] = [
        EdgeKind::Emg1,
        EdgeKind::Emg2,
        EdgeKind::Emg3,
        EdgeKind::Eg1,
        EdgeKind::Eg2,
    ];

    pub fn name(self) -> &'static str {
        match self {
            EdgeKind::Emg1 => "emg1",
            EdgeKind::Emg2 => "emg2",
            EdgeKind::Emg3 => "emg3",
            EdgeKind::Eg1 => "eg1",
            EdgeKind::Eg2 => "eg2",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_lowercase().replace(['_', '-', ' '], "");
        Self::ALL
            .into_iter()
            .find(|k| k.name() == key)
            .ok_or_else(|| {
                Error::Input(format!(
                    "unknown edge type {s:?} (expected emg1, emg2, emg3, eg1 or eg2)"
                ))
            })
    }
}

/// How mentions of one entity are linked by EMG2 edges.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum Emg2Wiring {
    /// Every pair of identical mentions.
    #[default]
    Pairwise,
    /// Consecutive identical mentions only.
    Chain,
}

/// Switches for each edge type.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EdgeToggles {
    pub emg1: bool,
    pub emg2: bool,
    pub emg3: bool,
    pub eg1: bool,
    pub eg2: bool,
    pub emg2_wiring: Emg2Wiring,
}

impl Default for EdgeToggles {
    fn default() -> Self {
        Self::all()
    }
}

impl EdgeToggles {
    pub fn all() -> Self {
        Self {
            emg1: true,
            emg2: true,
            emg3: true,
            eg1: true,
            eg2: true,
            emg2_wiring: Emg2Wiring::Pairwise,
        }
    }

    pub fn none() -> Self {
        Self {
            emg1: false,
            emg2: false,
            emg3: false,
            eg1: false,
            eg2: false,
            emg2_wiring: Emg2Wiring::Pairwise,
        }
    }

    pub fn enabled(&self, kind: EdgeKind) -> bool {
        match kind {
            EdgeKind::Emg1 => self.emg1,
            EdgeKind::Emg2 => self.emg2,
            EdgeKind::Emg3 => self.emg3,
            EdgeKind::Eg1 => self.eg1,
            EdgeKind::Eg2 => self.eg2,
        }
    }

    pub fn set(&mut self, kind: EdgeKind, on: bool) {
        match kind {
            EdgeKind::Emg1 => self.emg1 = on,
            EdgeKind::Emg2 => self.emg2 = on,
            EdgeKind::Emg3 => self.emg3 = on,
            EdgeKind::Eg1 => self.eg1 = on,
            EdgeKind::Eg2 => self.eg2 = on,
        }
    }

    pub fn without(mut self, kind: EdgeKind) -> Self {
        self.set(kind, false);
        self
    }
}

/// Undirected edges keyed by `(min, max)` with the types that produced them.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TypedEdges(BTreeMap<(usize, usize), BTreeSet<EdgeKind>>);

impl TypedEdges {
    pub fn new() -> Self {
        Self::default()
    }

    /// Self pairs are ignored; every node already carries a self loop.
    pub fn insert(&mut self, a: usize, b: usize, kind: EdgeKind) {
        if a == b {
            return;
        }
        self.0.entry((a.min(b), a.max(b))).or_default().insert(kind);
    }

    pub fn contains(&self, a: usize, b: usize) -> bool {
        self.0.contains_key(&(a.min(b), a.max(b)))
    }

    pub fn kinds(&self, a: usize, b: usize) -> Option<&BTreeSet<EdgeKind>> {
        self.0.get(&(a.min(b), a.max(b)))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, &BTreeSet<EdgeKind>)> {
        self.0.iter().map(|(&(a, b), k)| (a, b, k))
    }

    pub fn pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.0.keys().copied()
    }
}

/// Mention nodes of one document.
#[derive(Clone, Debug, PartialEq)]
pub struct MentionGraph {
    pub nodes: Vec<Mention>,
    pub edges: TypedEdges,
}

impl MentionGraph {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}

/// Entity nodes of one document, in first-occurrence order.
#[derive(Clone, Debug, PartialEq)]
pub struct EntityGraph {
    pub nodes: Vec<String>,
    pub edges: TypedEdges,
}

/// Entities of both documents with common entities merged.
#[derive(Clone, Debug, PartialEq)]
pub struct UnifiedEntityGraph {
    pub nodes: Vec<String>,
    pub edges: TypedEdges,
    /// Per node: `(document, index into that document's mention graph)`.
    pub mentions: Vec<Vec<(DocSide, usize)>>,
}

impl UnifiedEntityGraph {
    pub fn node(&self, key: &str) -> Option<usize> {
        self.nodes.iter().position(|n| n == key)
    }
}

fn sorted_mentions(mentions: &[Mention]) -> Vec<Mention> {
    let mut v = mentions.to_vec();
    v.sort_by_key(|m| (m.start, m.end));
    v
}

pub fn build_mention_graph(
    doc: &Document,
    mentions: &[Mention],
    toggles: &EdgeToggles,
) -> MentionGraph {
    let nodes = sorted_mentions(mentions);
    let sentence: Vec<usize> = nodes.iter().map(|m| doc.sentence_of(m.start)).collect();
    let mut edges = TypedEdges::new();
    let n = nodes.len();
    for i in 0..n {
        for j in i + 1..n {
            if toggles.emg1 && sentence[i] == sentence[j] {
                edges.insert(i, j, EdgeKind::Emg1);
            }
            if toggles.emg2
                && toggles.emg2_wiring == Emg2Wiring::Pairwise
                && nodes[i].entity_key == nodes[j].entity_key
            {
                edges.insert(i, j, EdgeKind::Emg2);
            }
        }
        if toggles.emg3 && i + 1 < n {
            edges.insert(i, i + 1, EdgeKind::Emg3);
        }
    }
    if toggles.emg2 && toggles.emg2_wiring == Emg2Wiring::Chain {
        let mut last: HashMap<&str, usize> = HashMap::new();
        for (i, m) in nodes.iter().enumerate() {
            if let Some(prev) = last.insert(m.entity_key.as_str(), i) {
                edges.insert(prev, i, EdgeKind::Emg2);
            }
        }
    }
    MentionGraph { nodes, edges }
}

pub fn build_entity_graph(
    doc: &Document,
    mentions: &[Mention],
    toggles: &EdgeToggles,
) -> EntityGraph {
    let ordered = sorted_mentions(mentions);
    let mut nodes: Vec<String> = Vec::new();
    let mut index: HashMap<&str, usize> = HashMap::new();
    for m in &ordered {
        if !index.contains_key(m.entity_key.as_str()) {
            index.insert(m.entity_key.as_str(), nodes.len());
            nodes.push(m.entity_key.clone());
        }
    }
    let mut edges = TypedEdges::new();
    if toggles.eg1 {
        let mut by_sentence: BTreeMap<usize, BTreeSet<usize>> = BTreeMap::new();
        for m in &ordered {
            by_sentence
                .entry(doc.sentence_of(m.start))
                .or_default()
                .insert(index[m.entity_key.as_str()]);
        }
        for ents in by_sentence.values() {
            let ents: Vec<usize> = ents.iter().copied().collect();
            for (a, &i) in ents.iter().enumerate() {
                for &j in &ents[a + 1..] {
                    edges.insert(i, j, EdgeKind::Eg1);
                }
            }
        }
    }
    if toggles.eg2 {
        for i in 1..nodes.len() {
            edges.insert(i - 1, i, EdgeKind::Eg2);
        }
    }
    EntityGraph { nodes, edges }
}

/// Merges the two document graphs. Mention indices refer to `emg_s` and
/// `emg_o`, which must hold the same mentions the entity graphs came from.
pub fn unify_entity_graphs(
    g_s: &EntityGraph,
    g_o: &EntityGraph,
    emg_s: &MentionGraph,
    emg_o: &MentionGraph,
) -> UnifiedEntityGraph {
    let mut nodes = g_s.nodes.clone();
    let mut index: HashMap<String, usize> = nodes
        .iter()
        .enumerate()
        .map(|(i, k)| (k.clone(), i))
        .collect();
    for k in &g_o.nodes {
        if !index.contains_key(k) {
            index.insert(k.clone(), nodes.len());
            nodes.push(k.clone());
        }
    }
    let mut edges = TypedEdges::new();
    for g in [g_s, g_o] {
        for (a, b, kinds) in g.edges.iter() {
            for &k in kinds {
                edges.insert(index[&g.nodes[a]], index[&g.nodes[b]], k);
            }
        }
    }
    let mut mentions = vec![Vec::new(); nodes.len()];
    for (side, emg) in [(DocSide::Subject, emg_s), (DocSide::Object, emg_o)] {
        for (i, m) in emg.nodes.iter().enumerate() {
            if let Some(&n) = index.get(&m.entity_key) {
                mentions[n].push((side, i));
            }
        }
    }
    UnifiedEntityGraph {
        nodes,
        edges,
        mentions,
    }
}

/// All graphs of one instance.
#[derive(Clone, Debug, PartialEq)]
pub struct ChainGraphs {
    pub emg_s: MentionGraph,
    pub emg_o: MentionGraph,
    pub eg_s: EntityGraph,
    pub eg_o: EntityGraph,
    pub unified: UnifiedEntityGraph,
}

impl ChainGraphs {
    pub fn build(chain: &InstanceChain, toggles: &EdgeToggles) -> Self {
        let ms: Vec<Mention> = chain.mentions_in(DocSide::Subject).cloned().collect();
        let mo: Vec<Mention> = chain.mentions_in(DocSide::Object).cloned().collect();
        let emg_s = build_mention_graph(&chain.doc_s, &ms, toggles);
        let emg_o = build_mention_graph(&chain.doc_o, &mo, toggles);
        let eg_s = build_entity_graph(&chain.doc_s, &ms, toggles);
        let eg_o = build_entity_graph(&chain.doc_o, &mo, toggles);
        let unified = unify_entity_graphs(&eg_s, &eg_o, &emg_s, &emg_o);
        Self {
            emg_s,
            emg_o,
            eg_s,
            eg_o,
            unified,
        }
    }

    pub fn emg(&self, side: DocSide) -> &MentionGraph {
        match side {
            DocSide::Subject => &self.emg_s,
            DocSide::Object => &self.emg_o,
        }
    }

    /// Graphviz rendering of the mention graphs and the unified graph.
    pub fn to_dot(&self, name: &str) -> String {
        let mut out = String::new();
        let esc = |s: &str| s.replace('"', "\\\"");
        let label =
            |k: &BTreeSet<EdgeKind>| k.iter().map(|k| k.name()).collect::<Vec<_>>().join("/");
        let _ = writeln!(out, "graph \"{}\" {{", esc(name));
        for (side, g) in [("s", &self.emg_s), ("o", &self.emg_o)] {
            let _ = writeln!(
                out,
                "  subgraph cluster_{side} {{\n    label=\"mentions {side}\";"
            );
            for (i, m) in g.nodes.iter().enumerate() {
                let _ = writeln!(
                    out,
                    "    m{side}{i} [label=\"{}@{}\"];",
                    esc(&m.surface),
                    m.start
                );
            }
            for (a, b, k) in g.edges.iter() {
                let _ = writeln!(
                    out,
                    "    m{side}{a} -- m{side}{b} [label=\"{}\"];",
                    label(k)
                );
            }
            let _ = writeln!(out, "  }}");
        }
        let _ = writeln!(out, "  subgraph cluster_u {{\n    label=\"entities\";");
        for (i, k) in self.unified.nodes.iter().enumerate() {
            let _ = writeln!(out, "    e{i} [label=\"{}\"];", esc(k));
        }
        for (a, b, k) in self.unified.edges.iter() {
            let _ = writeln!(out, "    e{a} -- e{b} [label=\"{}\"];", label(k));
        }
        let _ = writeln!(out, "  }}\n}}");
        out
    }
}

/// `D^-1/2 (A + I) D^-1/2` for a binary symmetric `A` built from `edges`.
pub fn normalize_adjacency<T: Scalar>(
    edges: impl IntoIterator<Item = (usize, usize)>,
    m: usize,
) -> Tensor<T> {
    let mut a = vec![false; m * m];
    for i in 0..m {
        a[i * m + i] = true;
    }
    for (i, j) in edges {
        assert!(i < m && j < m, "edge ({i}, {j}) outside {m} nodes");
        a[i * m + j] = true;
        a[j * m + i] = true;
    }
    let deg: Vec<T> = (0..m)
        .map(|i| T::lit(a[i * m..(i + 1) * m].iter().filter(|&&x| x).count() as f64))
        .collect();
    let mut out = Tensor::zeros(&[m, m]);
    for i in 0..m {
        for j in 0..m {
            if a[i * m + j] {
                out.set(i, j, T::one() / (deg[i] * deg[j]).sqrt());
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;
    use crate::corpus::sample::zoo_lake_record;
    use crate::corpus::{build_two_hop_instances, CapitalizationRecognizer};

    fn mention(doc: &str, start: usize, end: usize, key: &str) -> Mention {
        Mention {
            doc_id: doc.into(),
            start,
            end,
            surface: key.into(),
            entity_key: key.into(),
        }
    }

    fn doc(n_tokens: usize, spans: Vec<(usize, usize)>) -> Document {
        Document::new("d", (0..n_tokens).map(|i| format!("t{i}")).collect(), spans).unwrap()
    }

    fn zoo_positive() -> InstanceChain {
        let (record, kb) = zoo_lake_record();
        build_two_hop_instances(&record, &kb, &CapitalizationRecognizer)
            .into_iter()
            .find(|c| c.is_positive())
            .unwrap()
    }

    #[test]
    fn zoo_lake_mentions_are_linked_by_identity() {
        let g = ChainGraphs::build(&zoo_positive(), &EdgeToggles::all());
        let zoo: Vec<usize> = (0..g.emg_s.len())
            .filter(|&i| g.emg_s.nodes[i].entity_key == "zoo lake")
            .collect();
        assert_eq!(zoo.len(), 2);
        assert!(g
            .emg_s
            .edges
            .kinds(zoo[0], zoo[1])
            .unwrap()
            .contains(&EdgeKind::Emg2));
    }

    #[test]
    fn same_sentence_neighbours_share_one_edge_with_both_types() {
        let d = doc(4, vec![(0, 4)]);
        let g = build_mention_graph(
            &d,
            &[mention("d", 0, 1, "a"), mention("d", 2, 3, "b")],
            &EdgeToggles::all(),
        );
        assert_eq!(g.edges.len(), 1);
        let kinds: Vec<_> = g.edges.kinds(0, 1).unwrap().iter().copied().collect();
        assert_eq!(kinds, vec![EdgeKind::Emg1, EdgeKind::Emg3]);
    }

    #[test]
    fn disabled_toggles_leave_only_self_loops() {
        let g = ChainGraphs::build(&zoo_positive(), &EdgeToggles::none());
        assert!(g.emg_s.edges.is_empty() && g.emg_o.edges.is_empty() && g.unified.edges.is_empty());
        let a = normalize_adjacency::<f64>(g.emg_s.edges.pairs(), g.emg_s.len());
        assert_eq!(a, Tensor::identity(g.emg_s.len()));
    }

    #[test]
    fn doc2_entity_graph() {
        let chain = zoo_positive();
        let ms: Vec<_> = chain.mentions_in(DocSide::Object).cloned().collect();
        let g = build_entity_graph(&chain.doc_o, &ms, &EdgeToggles::all());
        let j = g.nodes.iter().position(|n| n == "johannesburg").unwrap();
        let s = g.nodes.iter().position(|n| n == "south africa").unwrap();
        assert!(g.edges.kinds(j, s).unwrap().contains(&EdgeKind::Eg1));
        assert!(g.nodes.iter().any(|n| n == "gauteng"));
    }

    #[test]
    fn repeated_entity_is_one_node() {
        let d = doc(6, vec![(0, 6)]);
        let ms = [
            mention("d", 0, 1, "a"),
            mention("d", 2, 3, "a"),
            mention("d", 4, 5, "a"),
        ];
        let g = build_entity_graph(&d, &ms, &EdgeToggles::all());
        assert_eq!(g.nodes, vec!["a"]);
        assert!(g.edges.is_empty());
    }

    #[test]
    fn chain_wiring_links_consecutive_identical_mentions() {
        let d = doc(6, vec![(0, 2), (2, 4), (4, 6)]);
        let ms = [
            mention("d", 0, 1, "a"),
            mention("d", 2, 3, "a"),
            mention("d", 4, 5, "a"),
        ];
        let toggles = EdgeToggles {
            emg2_wiring: Emg2Wiring::Chain,
            ..EdgeToggles::none()
        };
        let g = build_mention_graph(
            &d,
            &ms,
            &EdgeToggles {
                emg2: true,
                ..toggles
            },
        );
        assert_eq!(g.edges.pairs().collect::<Vec<_>>(), vec![(0, 1), (1, 2)]);
        let g = build_mention_graph(
            &d,
            &ms,
            &EdgeToggles {
                emg2: true,
                ..EdgeToggles::none()
            },
        );
        assert_eq!(g.edges.len(), 3);
    }

    #[test]
    fn unified_graph_merges_common_entities() {
        let chain = zoo_positive();
        let g = ChainGraphs::build(&chain, &EdgeToggles::all());
        let n = g.eg_s.nodes.len() + g.eg_o.nodes.len() - 2;
        assert_eq!(g.unified.nodes.len(), n);
        for c in &chain.common {
            let node = g.unified.node(c).unwrap();
            let sides: BTreeSet<_> = g.unified.mentions[node]
                .iter()
                .map(|&(s, _)| s == DocSide::Subject)
                .collect();
            assert_eq!(sides.len(), 2, "{c} should have mentions in both documents");
        }
    }

    #[test]
    fn edge_from_second_document_survives_union() {
        let d = doc(4, vec![(0, 4)]);
        let s = [mention("s", 0, 1, "x"), mention("s", 2, 3, "c")];
        let o = [mention("o", 0, 1, "c"), mention("o", 2, 3, "y")];
        let toggles = EdgeToggles::all();
        let (es, eo) = (
            build_entity_graph(&d, &s, &toggles),
            build_entity_graph(&d, &o, &toggles),
        );
        let (ms, mo) = (
            build_mention_graph(&d, &s, &toggles),
            build_mention_graph(&d, &o, &toggles),
        );
        let u = unify_entity_graphs(&es, &eo, &ms, &mo);
        assert_eq!(u.nodes, vec!["x", "c", "y"]);
        assert!(u.edges.contains(1, 2));
        assert!(!u.edges.contains(0, 2));
        assert_eq!(
            u.mentions[1],
            vec![(DocSide::Subject, 1), (DocSide::Object, 0)]
        );
    }

    #[test]
    fn normalization_examples() {
        assert_eq!(normalize_adjacency::<f64>([], 1).data(), &[1.0]);
        assert_eq!(normalize_adjacency::<f64>([(0, 1)], 2).data(), &[0.5; 4]);
        // 4-cycle: 2-regular
        let a = normalize_adjacency::<f64>([(0, 1), (1, 2), (2, 3), (3, 0)], 4);
        for &x in a.data() {
            assert!(x == 0.0 || (x - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn dot_dump_names_every_node() {
        let g = ChainGraphs::build(&zoo_positive(), &EdgeToggles::all());
        let dot = g.to_dot("zoo");
        assert!(dot.starts_with("graph \"zoo\""));
        for k in &g.unified.nodes {
            assert!(dot.contains(&format!("[label=\"{k}\"]")));
        }
    }

    #[test]
    fn edge_type_names_parse() {
        for k in EdgeKind::ALL {
            assert_eq!(EdgeKind::parse(k.name()).unwrap(), k);
        }
        assert_eq!(EdgeKind::parse("EMG-1").unwrap(), EdgeKind::Emg1);
        assert!(EdgeKind::parse("emg4").is_err());
    }

    fn connected(n: usize, edges: &TypedEdges) -> bool {
        if n == 0 {
            return true;
        }
        let mut seen = vec![false; n];
        let mut stack = vec![0];
        seen[0] = true;
        while let Some(v) = stack.pop() {
            for (a, b) in edges.pairs() {
                for (x, y) in [(a, b), (b, a)] {
                    if x == v && !seen[y] {
                        seen[y] = true;
                        stack.push(y);
                    }
                }
            }
        }
        seen.into_iter().all(|s| s)
    }

    fn arb_edges() -> impl Strategy<Value = (usize, Vec<(usize, usize)>)> {
        (1usize..12).prop_flat_map(|m| (Just(m), prop::collection::vec((0..m, 0..m), 0..30)))
    }

    fn arb_mentions() -> impl Strategy<Value = (Document, Vec<Mention>)> {
        (1usize..10, 1usize..4)
            .prop_flat_map(|(n, n_sent)| {
                let keys = prop::collection::vec(0u8..4, n);
                let cuts = prop::collection::btree_set(1usize..2 * n, 0..n_sent);
                (Just(n), keys, cuts)
            })
            .prop_map(|(n, keys, cuts)| {
                let len = 2 * n;
                let mut bounds: Vec<usize> = vec![0];
                bounds.extend(cuts);
                bounds.push(len);
                let spans = bounds.windows(2).map(|w| (w[0], w[1])).collect();
                let d =
                    Document::new("d", (0..len).map(|i| format!("t{i}")).collect(), spans).unwrap();
                let ms = keys
                    .iter()
                    .enumerate()
                    .map(|(i, k)| mention("d", 2 * i, 2 * i + 1, &format!("e{k}")))
                    .collect();
                (d, ms)
            })
    }

    proptest! {
        #[test]
        fn normalized_adjacency_is_symmetric_with_positive_diagonal((m, edges) in arb_edges()) {
            let a = normalize_adjacency::<f64>(edges, m);
            for i in 0..m {
                prop_assert!(a.at(i, i) > 0.0);
                for j in 0..m {
                    prop_assert_eq!(a.at(i, j), a.at(j, i));
                }
            }
        }

        #[test]
        fn relabeling_permutes_normalized_adjacency(
            (m, edges) in arb_edges(),
            seed in any::<u64>(),
        ) {
            use rand::seq::SliceRandom;
            use rand::SeedableRng;
            let mut perm: Vec<usize> = (0..m).collect();
            perm.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            let a = normalize_adjacency::<f64>(edges.clone(), m);
            let b = normalize_adjacency::<f64>(edges.iter().map(|&(i, j)| (perm[i], perm[j])), m);
            for i in 0..m {
                for j in 0..m {
                    prop_assert_eq!(a.at(i, j), b.at(perm[i], perm[j]));
                }
            }
        }

        #[test]
        fn sequential_edges_keep_mention_graph_connected(
            (d, ms) in arb_mentions(),
            emg1 in any::<bool>(),
            emg2 in any::<bool>(),
        ) {
            let toggles = EdgeToggles { emg1, emg2, ..EdgeToggles::all() };
            let g = build_mention_graph(&d, &ms, &toggles);
            prop_assert!(connected(g.len(), &g.edges));
        }

        #[test]
        fn unified_node_count_is_inclusion_exclusion((d, ms) in arb_mentions(), (d2, ms2) in arb_mentions()) {
            let toggles = EdgeToggles::all();
            let (es, eo) = (build_entity_graph(&d, &ms, &toggles), build_entity_graph(&d2, &ms2, &toggles));
            let (gs, go) = (build_mention_graph(&d, &ms, &toggles), build_mention_graph(&d2, &ms2, &toggles));
            let u = unify_entity_graphs(&es, &eo, &gs, &go);
            let common = es.nodes.iter().filter(|k| eo.nodes.contains(k)).count();
            prop_assert_eq!(u.nodes.len(), es.nodes.len() + eo.nodes.len() - common);
            let total: usize = u.mentions.iter().map(Vec::len).sum();
            prop_assert_eq!(total, gs.len() + go.len());
        }
    }
}
