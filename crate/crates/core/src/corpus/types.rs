use std::collections::{BTreeSet, HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Case-folded, whitespace-normalized entity string.
pub fn normalize_key(s: &str) -> String {
    s.split_whitespace()
        .map(str::to_lowercase)
        .collect::<Vec<_>>()
        .join(" ")
}

/// A tokenized document with sentence boundaries.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    pub tokens: Vec<String>,
    /// Half-open token ranges, ordered and covering every token.
    pub sentence_spans: Vec<(usize, usize)>,
}

impl Document {
    pub fn new(
        id: impl Into<String>,
        tokens: Vec<String>,
        sentence_spans: Vec<(usize, usize)>,
    ) -> Result<Self> {
        let doc = Self {
            id: id.into(),
            tokens,
            sentence_spans,
        };
        doc.validate()?;
        Ok(doc)
    }

    pub fn validate(&self) -> Result<()> {
        let mut next = 0;
        for &(s, e) in &self.sentence_spans {
            if s != next || e <= s {
                return Err(Error::Contract(format!(
                    "document {}: sentence spans {:?} are not contiguous",
                    self.id, self.sentence_spans
                )));
            }
            next = e;
        }
        if next != self.tokens.len() {
            return Err(Error::Contract(format!(
                "document {}: sentence spans cover {} of {} tokens",
                self.id,
                next,
                self.tokens.len()
            )));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Index of the sentence holding `token`.
    pub fn sentence_of(&self, token: usize) -> usize {
        self.sentence_spans
            .partition_point(|&(_, end)| end <= token)
            .min(self.sentence_spans.len().saturating_sub(1))
    }

    pub fn sentence_range(&self, sentence: usize) -> (usize, usize) {
        self.sentence_spans[sentence]
    }

    /// Keeps the first `max_len` tokens; the last sentence is cut short.
    pub fn truncated(&self, max_len: usize) -> Document {
        if self.tokens.len() <= max_len {
            return self.clone();
        }
        let spans = self
            .sentence_spans
            .iter()
            .filter(|&&(s, _)| s < max_len)
            .map(|&(s, e)| (s, e.min(max_len)))
            .collect();
        Document {
            id: self.id.clone(),
            tokens: self.tokens[..max_len].to_vec(),
            sentence_spans: spans,
        }
    }
}

/// One occurrence of an entity string in a document.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Mention {
    pub doc_id: String,
    pub start: usize,
    /// Exclusive.
    pub end: usize,
    pub surface: String,
    pub entity_key: String,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RelationId(pub u32);

impl RelationId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

/// `None` means no relation of the vocabulary holds.
pub type Label = Option<RelationId>;

/// Dense relation ids `0..len`; the None label takes index `len` in model
/// outputs.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "Vec<String>", into = "Vec<String>")]
pub struct RelationVocab {
    names: Vec<String>,
    index: HashMap<String, RelationId>,
}

impl From<Vec<String>> for RelationVocab {
    fn from(names: Vec<String>) -> Self {
        Self::from_names(names)
    }
}

impl From<RelationVocab> for Vec<String> {
    fn from(v: RelationVocab) -> Self {
        v.names
    }
}

impl RelationVocab {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_names<I: IntoIterator<Item = S>, S: Into<String>>(names: I) -> Self {
        let mut v = Self::new();
        for n in names {
            v.intern(&n.into());
        }
        v
    }

    pub fn intern(&mut self, name: &str) -> RelationId {
        if let Some(&id) = self.index.get(name) {
            return id;
        }
        let id = RelationId(self.names.len() as u32);
        self.names.push(name.to_string());
        self.index.insert(name.to_string(), id);
        id
    }

    pub fn get(&self, name: &str) -> Option<RelationId> {
        self.index.get(name).copied()
    }

    pub fn name(&self, id: RelationId) -> &str {
        &self.names[id.index()]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    /// Output index reserved for None.
    pub fn none_index(&self) -> usize {
        self.names.len()
    }
}

/// Knowledge-base triples over entity keys.
#[derive(Clone, Debug, Default)]
pub struct KbStore {
    pub relations: RelationVocab,
    triples: BTreeSet<(String, RelationId, String)>,
    linked: HashSet<(String, String)>,
}

impl KbStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, subject: &str, relation: &str, object: &str) -> RelationId {
        let r = self.relations.intern(relation);
        let (s, o) = (normalize_key(subject), normalize_key(object));
        self.linked.insert((s.clone(), o.clone()));
        self.triples.insert((s, r, o));
        r
    }

    /// Whether any relation holds from `subject` to `object`.
    pub fn linked(&self, subject: &str, object: &str) -> bool {
        self.linked
            .contains(&(subject.to_string(), object.to_string()))
    }

    pub fn contains(&self, subject: &str, relation: RelationId, object: &str) -> bool {
        self.triples
            .contains(&(subject.to_string(), relation, object.to_string()))
    }

    pub fn triples(&self) -> impl Iterator<Item = (&str, RelationId, &str)> {
        self.triples
            .iter()
            .map(|(s, r, o)| (s.as_str(), *r, o.as_str()))
    }

    pub fn len(&self) -> usize {
        self.triples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triples.is_empty()
    }
}

/// A multi-document QA record: the question names a relation and a subject,
/// the answer is the object among the candidates.
#[derive(Clone, Debug, PartialEq)]
pub struct WikiHopRecord {
    pub id: String,
    pub relation: RelationId,
    pub subject: String,
    pub candidates: Vec<String>,
    pub answer: String,
    pub supports: Vec<Document>,
}

impl WikiHopRecord {
    pub fn validate(&self) -> Result<()> {
        if !self.candidates.contains(&self.answer) {
            return Err(Error::Contract(format!(
                "record {}: answer {:?} is not a candidate",
                self.id, self.answer
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum DocSide {
    Subject,
    Object,
}

/// A two-document chain with its subject/object pair and label.
#[derive(Clone, Debug, PartialEq)]
pub struct InstanceChain {
    pub doc_s: Document,
    pub doc_o: Document,
    pub subject: String,
    pub object: String,
    /// Connector entities, ordered by first appearance in `doc_s` then `doc_o`.
    pub common: Vec<String>,
    pub label: Label,
    /// Mentions of both documents; each list sorted by start offset.
    pub mentions: Vec<Mention>,
}

impl InstanceChain {
    /// Builds an instance and checks every invariant.
    pub fn new(
        doc_s: Document,
        doc_o: Document,
        subject: String,
        object: String,
        common: Vec<String>,
        label: Label,
        mut mentions: Vec<Mention>,
    ) -> Result<Self> {
        let side = |m: &Mention| if m.doc_id == doc_s.id { 0 } else { 1 };
        mentions.sort_by(|a, b| (side(a), a.start, a.end).cmp(&(side(b), b.start, b.end)));
        let chain = Self {
            doc_s,
            doc_o,
            subject,
            object,
            common,
            label,
            mentions,
        };
        chain.validate()?;
        Ok(chain)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| {
            Err(Error::Contract(format!(
                "instance {}: {}",
                self.describe(),
                msg
            )))
        };
        if self.doc_s.id == self.doc_o.id {
            return fail("both documents share one id".into());
        }
        self.doc_s.validate()?;
        self.doc_o.validate()?;
        if self.common.is_empty() {
            return fail("no common entity".into());
        }
        let unique: BTreeSet<_> = self.common.iter().collect();
        if unique.len() != self.common.len() {
            return fail("duplicate common entities".into());
        }
        for side in [DocSide::Subject, DocSide::Object] {
            let doc = self.doc(side);
            let mut last_end = 0;
            for m in self.mentions_in(side) {
                if m.start >= m.end || m.end > doc.len() {
                    return fail(format!("mention {}..{} outside document", m.start, m.end));
                }
                if m.start < last_end {
                    return fail(format!("overlapping mention at {}", m.start));
                }
                last_end = m.end;
                if m.surface != doc.tokens[m.start..m.end].join(" ") {
                    return fail(format!(
                        "mention surface {:?} does not match tokens",
                        m.surface
                    ));
                }
            }
        }
        if self
            .mentions
            .iter()
            .any(|m| m.doc_id != self.doc_s.id && m.doc_id != self.doc_o.id)
        {
            return fail("mention of a foreign document".into());
        }
        if !self.has_mention(DocSide::Subject, &self.subject) {
            return fail("subject not mentioned in the first document".into());
        }
        if !self.has_mention(DocSide::Object, &self.object) {
            return fail("object not mentioned in the second document".into());
        }
        for c in &self.common {
            if c == &self.subject || c == &self.object {
                return fail(format!("{c:?} is both an endpoint and a connector"));
            }
            if !self.has_mention(DocSide::Subject, c) || !self.has_mention(DocSide::Object, c) {
                return fail(format!("common entity {c:?} missing from a document"));
            }
        }
        Ok(())
    }

    fn describe(&self) -> String {
        format!(
            "{}->{} ({} -> {})",
            self.doc_s.id, self.doc_o.id, self.subject, self.object
        )
    }

    pub fn doc(&self, side: DocSide) -> &Document {
        match side {
            DocSide::Subject => &self.doc_s,
            DocSide::Object => &self.doc_o,
        }
    }

    pub fn mentions_in(&self, side: DocSide) -> impl Iterator<Item = &Mention> {
        let id = self.doc(side).id.clone();
        self.mentions.iter().filter(move |m| m.doc_id == id)
    }

    pub fn has_mention(&self, side: DocSide, key: &str) -> bool {
        self.mentions_in(side).any(|m| m.entity_key == key)
    }

    pub fn is_positive(&self) -> bool {
        self.label.is_some()
    }

    /// Cuts both documents to `max_len` tokens, dropping mentions that no
    /// longer fit. Returns `None` if the result breaks an invariant.
    pub fn truncated(&self, max_len: usize) -> Option<InstanceChain> {
        if self.doc_s.len() <= max_len && self.doc_o.len() <= max_len {
            return Some(self.clone());
        }
        let doc_s = self.doc_s.truncated(max_len);
        let doc_o = self.doc_o.truncated(max_len);
        let mentions: Vec<Mention> = self
            .mentions
            .iter()
            .filter(|m| m.end <= max_len)
            .cloned()
            .collect();
        let keep: Vec<String> = self
            .common
            .iter()
            .filter(|c| {
                mentions
                    .iter()
                    .any(|m| m.doc_id == doc_s.id && &&m.entity_key == c)
                    && mentions
                        .iter()
                        .any(|m| m.doc_id == doc_o.id && &&m.entity_key == c)
            })
            .cloned()
            .collect();
        InstanceChain::new(
            doc_s,
            doc_o,
            self.subject.clone(),
            self.object.clone(),
            keep,
            self.label,
            mentions,
        )
        .ok()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn keys_are_case_folded_and_whitespace_normalized() {
        assert_eq!(normalize_key("  South\tAfrica "), "south africa");
    }

    #[test]
    fn sentence_lookup() {
        let toks = "a b . c d .".split(' ').map(String::from).collect();
        let d = Document::new("d", toks, vec![(0, 3), (3, 6)]).unwrap();
        assert_eq!(d.sentence_of(2), 0);
        assert_eq!(d.sentence_of(3), 1);
        assert_eq!(d.sentence_of(5), 1);
    }

    #[test]
    fn spans_must_cover() {
        let toks = vec!["a".to_string(), "b".to_string()];
        assert!(Document::new("d", toks.clone(), vec![(0, 1)]).is_err());
        assert!(Document::new("d", toks, vec![(0, 1), (1, 2)]).is_ok());
    }

    #[test]
    fn kb_links_are_directed() {
        let mut kb = KbStore::new();
        kb.insert("Tanzania", "borders", "Gauteng");
        assert!(kb.linked("tanzania", "gauteng"));
        assert!(!kb.linked("gauteng", "tanzania"));
        assert_eq!(kb.relations.len(), 1);
    }
}
