//! File formats: QA records and instances as JSON lines, KB triples as TSV.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::text::tokenize;
use super::types::{
    normalize_key, Document, InstanceChain, KbStore, Mention, RelationVocab, WikiHopRecord,
};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuestionJson {
    pub relation: String,
    pub subject: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SupportJson {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    pub text: String,
}

/// One line of a records file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecordJson {
    pub id: String,
    pub question: QuestionJson,
    pub candidates: Vec<String>,
    pub answer: String,
    pub supports: Vec<SupportJson>,
}

impl RecordJson {
    pub fn from_record(r: &WikiHopRecord, relations: &RelationVocab) -> Self {
        Self {
            id: r.id.clone(),
            question: QuestionJson {
                relation: relations.name(r.relation).to_string(),
                subject: r.subject.clone(),
            },
            candidates: r.candidates.clone(),
            answer: r.answer.clone(),
            supports: r
                .supports
                .iter()
                .map(|d| SupportJson {
                    id: Some(d.id.clone()),
                    text: d.tokens.join(" "),
                })
                .collect(),
        }
    }

    /// Tokenizes supports and resolves the relation name, interning it if new.
    pub fn into_record(self, relations: &mut RelationVocab) -> Result<WikiHopRecord> {
        let mut supports = Vec::with_capacity(self.supports.len());
        let mut used = std::collections::BTreeSet::new();
        for (i, s) in self.supports.iter().enumerate() {
            let mut id = s.id.clone().unwrap_or_else(|| format!("{}/{}", self.id, i));
            while !used.insert(id.clone()) {
                id = format!("{id}#{i}");
            }
            supports.push(tokenize(&id, &s.text)?);
        }
        let record = WikiHopRecord {
            relation: relations.intern(&self.question.relation),
            subject: normalize_key(&self.question.subject),
            candidates: self.candidates.iter().map(|c| normalize_key(c)).collect(),
            answer: normalize_key(&self.answer),
            supports,
            id: self.id,
        };
        record.validate()?;
        Ok(record)
    }
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| Error::Input(format!("cannot open {}: {e}", path.display())))
}

fn parse_err(path: &Path, line: usize, msg: impl ToString) -> Error {
    Error::Parse {
        path: path.display().to_string(),
        line,
        msg: msg.to_string(),
    }
}

/// Reads tab-separated `subject relation object` lines. Blank lines and
/// lines starting with `#` are skipped.
pub fn read_kb(path: &Path) -> Result<KbStore> {
    let mut kb = KbStore::new();
    for (i, line) in open(path)?.lines().enumerate() {
        let line = line?;
        let trimmed = line.trim_end_matches(['\r', '\n']);
        if trimmed.trim().is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = trimmed.split('\t').collect();
        if fields.len() != 3 || fields.iter().any(|f| f.trim().is_empty()) {
            return Err(parse_err(
                path,
                i + 1,
                "expected subject<TAB>relation<TAB>object",
            ));
        }
        kb.insert(fields[0], fields[1].trim(), fields[2]);
    }
    Ok(kb)
}

pub fn write_kb(path: &Path, kb: &KbStore) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for (s, r, o) in kb.triples() {
        writeln!(w, "{}\t{}\t{}", s, kb.relations.name(r), o)?;
    }
    w.flush()?;
    Ok(())
}

fn for_each_json_line<T, F>(path: &Path, mut f: F) -> Result<()>
where
    T: for<'de> Deserialize<'de>,
    F: FnMut(usize, T) -> Result<()>,
{
    for (i, line) in open(path)?.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let value: T = serde_json::from_str(&line).map_err(|e| parse_err(path, i + 1, e))?;
        f(i + 1, value).map_err(|e| match e {
            Error::Parse { .. } => e,
            other => parse_err(path, i + 1, other),
        })?;
    }
    Ok(())
}

/// Reads QA records; relation names are interned into `relations`.
pub fn read_records(path: &Path, relations: &mut RelationVocab) -> Result<Vec<WikiHopRecord>> {
    let mut out = Vec::new();
    for_each_json_line(path, |_, rec: RecordJson| {
        out.push(rec.into_record(relations)?);
        Ok(())
    })?;
    Ok(out)
}

pub fn write_records(
    path: &Path,
    records: &[WikiHopRecord],
    relations: &RelationVocab,
) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for r in records {
        serde_json::to_writer(&mut w, &RecordJson::from_record(r, relations))?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

/// One line of an instances file. `relation` is null for None.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InstanceJson {
    pub doc_s: Document,
    pub doc_o: Document,
    pub subject: String,
    pub object: String,
    pub common: Vec<String>,
    pub relation: Option<String>,
    pub mentions: Vec<Mention>,
}

impl InstanceJson {
    pub fn from_chain(c: &InstanceChain, relations: &RelationVocab) -> Self {
        Self {
            doc_s: c.doc_s.clone(),
            doc_o: c.doc_o.clone(),
            subject: c.subject.clone(),
            object: c.object.clone(),
            common: c.common.clone(),
            relation: c.label.map(|r| relations.name(r).to_string()),
            mentions: c.mentions.clone(),
        }
    }

    pub fn into_chain(self, relations: &mut RelationVocab) -> Result<InstanceChain> {
        let label = self.relation.as_deref().map(|n| relations.intern(n));
        InstanceChain::new(
            self.doc_s,
            self.doc_o,
            self.subject,
            self.object,
            self.common,
            label,
            self.mentions,
        )
    }
}

pub fn write_instances(
    path: &Path,
    chains: &[InstanceChain],
    relations: &RelationVocab,
) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for c in chains {
        serde_json::to_writer(&mut w, &InstanceJson::from_chain(c, relations))?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

/// Reads instances, validating each; unseen relation names are interned.
pub fn read_instances(path: &Path, relations: &mut RelationVocab) -> Result<Vec<InstanceChain>> {
    let mut out = Vec::new();
    for_each_json_line(path, |_, inst: InstanceJson| {
        out.push(inst.into_chain(relations)?);
        Ok(())
    })?;
    Ok(out)
}

pub fn write_relations(path: &Path, relations: &RelationVocab) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for n in relations.names() {
        writeln!(w, "{n}")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_relations(path: &Path) -> Result<RelationVocab> {
    let mut v = RelationVocab::new();
    for line in open(path)?.lines() {
        let line = line?;
        if !line.trim().is_empty() {
            v.intern(line.trim());
        }
    }
    Ok(v)
}
