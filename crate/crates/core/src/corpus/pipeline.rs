//! Distant supervision over document chains.

use std::collections::BTreeSet;

use log::warn;
use serde::{Deserialize, Serialize};

use super::text::{detect_entities, find_mentions, Gazetteer, Recognizer};
use super::types::{InstanceChain, KbStore, Mention, WikiHopRecord};

/// Non-answer candidates `w` such that none of `(s, w)`, `(w, s)`, `(w, a)`,
/// `(a, w)` has a relation in the KB. Candidate order is kept.
pub fn none_candidates(record: &WikiHopRecord, kb: &KbStore) -> Vec<String> {
    let s = record.subject.as_str();
    let a = record.answer.as_str();
    let mut seen = BTreeSet::new();
    record
        .candidates
        .iter()
        .filter(|w| w.as_str() != a && w.as_str() != s)
        .filter(|w| seen.insert(w.as_str()))
        .filter(|w| !(kb.linked(s, w) || kb.linked(w, s) || kb.linked(w, a) || kb.linked(a, w)))
        .cloned()
        .collect()
}

/// Every ordered document pair whose first document mentions the subject
/// and whose second mentions the answer (positive) or a None candidate,
/// provided the two share at least one third entity.
///
/// Returns no instances if the positive tuple has no valid pair.
pub fn build_two_hop_instances(
    record: &WikiHopRecord,
    kb: &KbStore,
    recognizer: &dyn Recognizer,
) -> Vec<InstanceChain> {
    let mut gazetteer = Gazetteer::default();
    gazetteer.insert(&record.subject);
    for c in &record.candidates {
        gazetteer.insert(c);
    }
    for doc in &record.supports {
        for key in detect_entities(doc, recognizer) {
            gazetteer.insert(&key);
        }
    }

    let mentions: Vec<Vec<Mention>> = record
        .supports
        .iter()
        .map(|d| find_mentions(d, &gazetteer))
        .collect();
    let entities: Vec<BTreeSet<&str>> = mentions
        .iter()
        .map(|ms| ms.iter().map(|m| m.entity_key.as_str()).collect())
        .collect();

    let mut targets = vec![(record.answer.clone(), Some(record.relation))];
    targets.extend(none_candidates(record, kb).into_iter().map(|w| (w, None)));

    let mut out = Vec::new();
    for (i, doc_s) in record.supports.iter().enumerate() {
        if !entities[i].contains(record.subject.as_str()) {
            continue;
        }
        for (j, doc_o) in record.supports.iter().enumerate() {
            if i == j {
                continue;
            }
            for (object, label) in &targets {
                if object == &record.subject || !entities[j].contains(object.as_str()) {
                    continue;
                }
                let common = ordered_common(&mentions[i], &mentions[j], &record.subject, object);
                if common.is_empty() {
                    continue;
                }
                let all: Vec<Mention> = mentions[i].iter().chain(&mentions[j]).cloned().collect();
                match InstanceChain::new(
                    doc_s.clone(),
                    doc_o.clone(),
                    record.subject.clone(),
                    object.clone(),
                    common,
                    *label,
                    all,
                ) {
                    Ok(chain) => out.push(chain),
                    Err(e) => warn!(
                        "record {}: dropped pair {}->{}: {}",
                        record.id, doc_s.id, doc_o.id, e
                    ),
                }
            }
        }
    }
    if !out.iter().any(InstanceChain::is_positive) {
        warn!(
            "record {}: no document chain for the positive tuple, skipped",
            record.id
        );
        return Vec::new();
    }
    out
}

fn ordered_common(ms_s: &[Mention], ms_o: &[Mention], subject: &str, object: &str) -> Vec<String> {
    let in_o: BTreeSet<&str> = ms_o.iter().map(|m| m.entity_key.as_str()).collect();
    let mut seen = BTreeSet::new();
    ms_s.iter()
        .map(|m| m.entity_key.as_str())
        .filter(|k| *k != subject && *k != object && in_o.contains(k))
        .filter(|k| seen.insert(*k))
        .map(String::from)
        .collect()
}

/// Counts from converting a list of records.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BuildSummary {
    pub records: usize,
    pub skipped: usize,
    pub positive: usize,
    pub none: usize,
}

/// Applies [`build_two_hop_instances`] to each record, keeping input order.
pub fn build_corpus(
    records: &[WikiHopRecord],
    kb: &KbStore,
    recognizer: &dyn Recognizer,
) -> (Vec<InstanceChain>, BuildSummary) {
    let mut summary = BuildSummary {
        records: records.len(),
        ..Default::default()
    };
    let mut out = Vec::new();
    for r in records {
        let built = build_two_hop_instances(r, kb, recognizer);
        if built.is_empty() {
            summary.skipped += 1;
        }
        for c in built {
            if c.is_positive() {
                summary.positive += 1;
            } else {
                summary.none += 1;
            }
            out.push(c);
        }
    }
    (out, summary)
}
