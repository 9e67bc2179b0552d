//! Tokenization, gazetteer matching and the default entity recognizer.

use std::collections::{BTreeSet, HashMap};

use super::types::{normalize_key, Document, Mention};
use crate::error::{Error, Result};

fn is_punct(c: char) -> bool {
    c.is_ascii_punctuation() || matches!(c, '“' | '”' | '‘' | '’' | '«' | '»' | '—' | '–' | '…')
}

fn is_terminator(tok: &str) -> bool {
    !tok.is_empty() && tok.chars().all(|c| matches!(c, '.' | '!' | '?'))
}

fn is_closer(tok: &str) -> bool {
    matches!(tok, "\"" | "'" | ")" | "]" | "}" | "”" | "’" | "»")
}

/// Splits on whitespace, detaching leading and trailing punctuation as
/// single-character tokens. A sentence ends after a `.`, `!` or `?` token
/// (or a run of them, plus any closing quote or bracket right after).
pub fn tokenize(id: &str, text: &str) -> Result<Document> {
    let mut tokens = Vec::new();
    for chunk in text.split_whitespace() {
        if chunk.chars().all(is_punct) {
            tokens.push(chunk.to_string());
            continue;
        }
        let chars: Vec<char> = chunk.chars().collect();
        let lead = chars.iter().take_while(|&&c| is_punct(c)).count();
        let trail = chars.iter().rev().take_while(|&&c| is_punct(c)).count();
        for &c in &chars[..lead] {
            tokens.push(c.to_string());
        }
        tokens.push(chars[lead..chars.len() - trail].iter().collect());
        for &c in &chars[chars.len() - trail..] {
            tokens.push(c.to_string());
        }
    }
    if tokens.is_empty() {
        return Err(Error::Input(format!("document {id:?} has no text")));
    }
    let mut spans = Vec::new();
    let mut start = 0;
    let mut i = 0;
    while i < tokens.len() {
        if is_terminator(&tokens[i]) {
            let mut end = i + 1;
            while end < tokens.len() && (is_terminator(&tokens[end]) || is_closer(&tokens[end])) {
                end += 1;
            }
            spans.push((start, end));
            start = end;
            i = end;
        } else {
            i += 1;
        }
    }
    if start < tokens.len() {
        spans.push((start, tokens.len()));
    }
    Document::new(id, tokens, spans)
}

/// Entity keys indexed for longest-match lookup over lower-cased tokens.
#[derive(Clone, Debug, Default)]
pub struct Gazetteer {
    /// first token -> token sequences, longest first
    by_first: HashMap<String, Vec<Vec<String>>>,
    keys: BTreeSet<String>,
}

impl Gazetteer {
    pub fn new<I, S>(keys: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut g = Self::default();
        for k in keys {
            g.insert(k.as_ref());
        }
        g
    }

    pub fn insert(&mut self, key: &str) {
        let key = normalize_key(key);
        if key.is_empty() || !self.keys.insert(key.clone()) {
            return;
        }
        let toks: Vec<String> = key.split(' ').map(String::from).collect();
        let entry = self.by_first.entry(toks[0].clone()).or_default();
        entry.push(toks);
        entry.sort_by(|a, b| b.len().cmp(&a.len()).then_with(|| a.cmp(b)));
    }

    pub fn contains(&self, key: &str) -> bool {
        self.keys.contains(key)
    }

    pub fn keys(&self) -> impl Iterator<Item = &String> {
        self.keys.iter()
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }
}

/// Case-insensitive, longest-match, left-to-right, non-overlapping matches.
pub fn find_mentions(doc: &Document, gazetteer: &Gazetteer) -> Vec<Mention> {
    let lower: Vec<String> = doc.tokens.iter().map(|t| t.to_lowercase()).collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < lower.len() {
        let hit = gazetteer.by_first.get(&lower[i]).and_then(|cands| {
            cands
                .iter()
                .find(|seq| i + seq.len() <= lower.len() && lower[i..i + seq.len()] == seq[..])
        });
        match hit {
            Some(seq) => {
                let end = i + seq.len();
                out.push(Mention {
                    doc_id: doc.id.clone(),
                    start: i,
                    end,
                    surface: doc.tokens[i..end].join(" "),
                    entity_key: seq.join(" "),
                });
                i = end;
            }
            None => i += 1,
        }
    }
    out
}

/// Finds entity spans in a document. Implementations must be deterministic.
pub trait Recognizer {
    fn spans(&self, doc: &Document) -> Vec<(usize, usize)>;
}

/// Capitalization heuristic: maximal runs of capitalized tokens. Runs at the
/// start of a sentence lose any leading function words ("The", "It", ...)
/// and are kept if anything remains.
#[derive(Clone, Copy, Debug, Default)]
pub struct CapitalizationRecognizer;

const SENTENCE_INITIAL_FUNCTION_WORDS: &[&str] = &[
    "a", "about", "after", "all", "also", "although", "an", "and", "another", "as", "at",
    "because", "before", "both", "but", "by", "during", "each", "for", "from", "he", "her", "here",
    "his", "how", "however", "i", "if", "in", "it", "its", "many", "most", "my", "no", "not", "of",
    "on", "one", "or", "our", "she", "since", "so", "some", "such", "that", "the", "their", "then",
    "there", "these", "they", "this", "those", "to", "we", "what", "when", "where", "which",
    "while", "who", "why", "with", "you", "your",
];

fn capitalized(tok: &str) -> bool {
    tok.chars().next().is_some_and(char::is_uppercase)
}

impl Recognizer for CapitalizationRecognizer {
    fn spans(&self, doc: &Document) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for &(s_start, s_end) in &doc.sentence_spans {
            let mut i = s_start;
            while i < s_end {
                if !capitalized(&doc.tokens[i]) {
                    i += 1;
                    continue;
                }
                let mut j = i;
                while j < s_end && capitalized(&doc.tokens[j]) {
                    j += 1;
                }
                let mut start = i;
                if i == s_start {
                    while start < j
                        && SENTENCE_INITIAL_FUNCTION_WORDS
                            .contains(&doc.tokens[start].to_lowercase().as_str())
                    {
                        start += 1;
                    }
                }
                if start < j {
                    out.push((start, j));
                }
                i = j;
            }
        }
        out
    }
}

/// Entity keys of every span the recognizer reports.
pub fn detect_entities(doc: &Document, recognizer: &dyn Recognizer) -> BTreeSet<String> {
    recognizer
        .spans(doc)
        .into_iter()
        .filter(|&(s, e)| s < e && e <= doc.len())
        .map(|(s, e)| normalize_key(&doc.tokens[s..e].join(" ")))
        .collect()
}
