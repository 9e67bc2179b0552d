use std::collections::{BTreeMap, BTreeSet};

use rand::seq::index::sample;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::types::InstanceChain;

/// Subsamples None instances down to the number of positives. Positives and
/// the relative order of kept instances are unchanged.
pub fn balance_none<R: Rng>(instances: Vec<InstanceChain>, rng: &mut R) -> Vec<InstanceChain> {
    let positives = instances.iter().filter(|c| c.is_positive()).count();
    let none_idx: Vec<usize> = (0..instances.len())
        .filter(|&i| !instances[i].is_positive())
        .collect();
    if none_idx.len() <= positives {
        return instances;
    }
    let keep: BTreeSet<usize> = sample(rng, none_idx.len(), positives)
        .into_iter()
        .map(|k| none_idx[k])
        .collect();
    instances
        .into_iter()
        .enumerate()
        .filter(|(i, c)| c.is_positive() || keep.contains(i))
        .map(|(_, c)| c)
        .collect()
}

/// Random 90/10 partition (validation size rounded down).
pub fn split_train_val<T, R: Rng>(items: Vec<T>, rng: &mut R) -> (Vec<T>, Vec<T>) {
    let n = items.len();
    let n_val = n / 10;
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let val: BTreeSet<usize> = order[..n_val].iter().copied().collect();
    let mut train = Vec::with_capacity(n - n_val);
    let mut valid = Vec::with_capacity(n_val);
    for (i, x) in items.into_iter().enumerate() {
        if val.contains(&i) {
            valid.push(x);
        } else {
            train.push(x);
        }
    }
    (train, valid)
}

/// Dataset counts in the shape of the corpus statistics tables.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StatsReport {
    pub positive_relations: usize,
    pub document_chains: usize,
    pub positive_instances: usize,
    pub none_instances: usize,
    pub positive_entity_pairs: usize,
    /// Chains with 1, 2, 3, 4 and at least 5 common entities.
    pub common_entity_histogram: [usize; 5],
}

/// A document chain is a distinct `(doc_s, doc_o)` id pair; its common
/// entity count is taken from its first instance.
pub fn dataset_stats(instances: &[InstanceChain]) -> StatsReport {
    let mut relations = BTreeSet::new();
    let mut pairs = BTreeSet::new();
    let mut chains: BTreeMap<(&str, &str), usize> = BTreeMap::new();
    let mut report = StatsReport::default();
    for c in instances {
        match c.label {
            Some(r) => {
                report.positive_instances += 1;
                relations.insert(r);
                pairs.insert((c.subject.as_str(), c.object.as_str()));
            }
            None => report.none_instances += 1,
        }
        chains
            .entry((c.doc_s.id.as_str(), c.doc_o.id.as_str()))
            .or_insert(c.common.len());
    }
    report.positive_relations = relations.len();
    report.positive_entity_pairs = pairs.len();
    report.document_chains = chains.len();
    for &k in chains.values() {
        report.common_entity_histogram[k.clamp(1, 5) - 1] += 1;
    }
    report
}
