//! BM25 lexical retrieval over theme-scoped corpus passages.
//!
//! ```text
//! score(D, Q) = sum over q in Q of idf(q) * tf(q, D) * (k1 + 1)
//!               / (tf(q, D) + k1 * (1 - b + b * |D| / avgdl))
//! idf(q)      = ln(1 + (N - df(q) + 0.5) / (df(q) + 0.5))
//! ```
//!
//! Collection statistics (`N`, `df`, `avgdl`) span the whole index; the theme
//! only restricts which passages are candidates. Query terms are a multiset,
//! so a repeated query term contributes once per occurrence.

use std::collections::{BTreeMap, HashMap, HashSet};

use serde::Serialize;

use crate::corpus::Corpus;
use crate::theme::Theme;

pub const DEFAULT_K1: f64 = 1.2;
pub const DEFAULT_B: f64 = 0.75;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RetrievalError {
    #[error("duplicate passage_id {0}")]
    DuplicatePassage(usize),
    #[error("unknown passage_id {0}")]
    UnknownPassage(usize),
    #[error("passage text must be non-empty")]
    EmptyPassage,
    #[error("k must be at least 1")]
    InvalidK,
}

/// Lowercase and split on every run of non-alphanumeric characters.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Passage {
    pub passage_id: usize,
    pub record_id: String,
    pub theme: Theme,
    pub text: String,
    #[serde(skip)]
    pub tokens: Vec<String>,
}

impl Passage {
    pub fn new(
        passage_id: usize,
        record_id: impl Into<String>,
        theme: Theme,
        text: impl Into<String>,
    ) -> Result<Self, RetrievalError> {
        let text = text.into();
        if text.trim().is_empty() {
            return Err(RetrievalError::EmptyPassage);
        }
        Ok(Self {
            passage_id,
            record_id: record_id.into(),
            theme,
            tokens: tokenize(&text),
            text,
        })
    }

    /// Stable marker used to cite this passage in prompts and stub output.
    pub fn marker(&self) -> String {
        format!("{}#{}", self.record_id, self.passage_id)
    }
}

/// One passage per (record, labelled theme): that theme's ability text
/// followed by the record's challenges. Ids follow corpus order.
pub fn passages_from_corpus(corpus: &Corpus) -> Vec<Passage> {
    let mut passages = Vec::new();
    for record in corpus.records() {
        for theme in &record.labels {
            let ability = record
                .abilities_text
                .get(theme)
                .map(String::as_str)
                .unwrap_or("");
            let text = [ability.trim(), record.challenges_text.trim()]
                .into_iter()
                .filter(|s| !s.is_empty())
                .collect::<Vec<_>>()
                .join(" ");
            if let Ok(p) = Passage::new(passages.len(), &record.record_id, *theme, text) {
                passages.push(p);
            }
        }
    }
    passages
}

#[derive(Debug, Clone)]
pub struct RetrievalIndex {
    passages: BTreeMap<usize, Passage>,
    postings: BTreeMap<String, Vec<(usize, u32)>>,
    doc_len: BTreeMap<usize, usize>,
    avg_doc_len: f64,
    k1: f64,
    b: f64,
}

impl RetrievalIndex {
    pub fn build(passages: Vec<Passage>) -> Result<Self, RetrievalError> {
        Self::with_params(passages, DEFAULT_K1, DEFAULT_B)
    }

    pub fn with_params(passages: Vec<Passage>, k1: f64, b: f64) -> Result<Self, RetrievalError> {
        let mut by_id = BTreeMap::new();
        for p in passages {
            let id = p.passage_id;
            if by_id.insert(id, p).is_some() {
                return Err(RetrievalError::DuplicatePassage(id));
            }
        }

        let mut postings: BTreeMap<String, Vec<(usize, u32)>> = BTreeMap::new();
        let mut doc_len = BTreeMap::new();
        // BTreeMap iteration is ascending by id, so every postings list is sorted.
        for (id, p) in &by_id {
            doc_len.insert(*id, p.tokens.len());
            let mut tf: HashMap<&str, u32> = HashMap::new();
            for t in &p.tokens {
                *tf.entry(t.as_str()).or_default() += 1;
            }
            for (term, count) in tf {
                postings.entry(term.to_string()).or_default().push((*id, count));
            }
        }
        for list in postings.values_mut() {
            list.sort_unstable_by_key(|(id, _)| *id);
        }

        let avg_doc_len = if doc_len.is_empty() {
            0.0
        } else {
            doc_len.values().sum::<usize>() as f64 / doc_len.len() as f64
        };

        Ok(Self {
            passages: by_id,
            postings,
            doc_len,
            avg_doc_len,
            k1,
            b,
        })
    }

    pub fn passage_count(&self) -> usize {
        self.passages.len()
    }

    pub fn avg_doc_len(&self) -> f64 {
        self.avg_doc_len
    }

    pub fn k1(&self) -> f64 {
        self.k1
    }

    pub fn b(&self) -> f64 {
        self.b
    }

    pub fn passage(&self, passage_id: usize) -> Option<&Passage> {
        self.passages.get(&passage_id)
    }

    pub fn passages(&self) -> impl Iterator<Item = &Passage> {
        self.passages.values()
    }

    pub fn postings(&self, term: &str) -> &[(usize, u32)] {
        self.postings.get(term).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn terms(&self) -> impl Iterator<Item = &str> {
        self.postings.keys().map(String::as_str)
    }

    pub fn doc_len(&self, passage_id: usize) -> Option<usize> {
        self.doc_len.get(&passage_id).copied()
    }

    fn idf(&self, df: usize) -> f64 {
        let n = self.passages.len() as f64;
        let df = df as f64;
        (1.0 + (n - df + 0.5) / (df + 0.5)).ln()
    }

    fn term_weight(&self, idf: f64, tf: u32, len: usize) -> f64 {
        let tf = tf as f64;
        let norm = if self.avg_doc_len > 0.0 {
            1.0 - self.b + self.b * len as f64 / self.avg_doc_len
        } else {
            1.0 - self.b
        };
        idf * tf * (self.k1 + 1.0) / (tf + self.k1 * norm)
    }

    pub fn score(&self, query_terms: &[String], passage_id: usize) -> Result<f64, RetrievalError> {
        let len = self
            .doc_len(passage_id)
            .ok_or(RetrievalError::UnknownPassage(passage_id))?;
        let mut total = 0.0;
        for term in query_terms {
            let list = self.postings(term);
            if let Ok(pos) = list.binary_search_by_key(&passage_id, |(id, _)| *id) {
                total += self.term_weight(self.idf(list.len()), list[pos].1, len);
            }
        }
        Ok(total)
    }

    /// Top-`k` passages of `theme` by BM25 score, descending, ties broken by
    /// ascending passage id. Passages scoring zero are never returned.
    pub fn retrieve(
        &self,
        query: &str,
        theme: Theme,
        k: usize,
    ) -> Result<Vec<(Passage, f64)>, RetrievalError> {
        if k == 0 {
            return Err(RetrievalError::InvalidK);
        }
        let terms = tokenize(query);
        let mut acc: BTreeMap<usize, f64> = BTreeMap::new();
        for term in &terms {
            let list = self.postings(term);
            if list.is_empty() {
                continue;
            }
            let idf = self.idf(list.len());
            for (id, tf) in list {
                if self.passages[id].theme != theme {
                    continue;
                }
                *acc.entry(*id).or_default() += self.term_weight(idf, *tf, self.doc_len[id]);
            }
        }

        let mut ranked: Vec<(usize, f64)> = acc.into_iter().filter(|(_, s)| *s > 0.0).collect();
        ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        ranked.truncate(k);
        Ok(ranked
            .into_iter()
            .map(|(id, s)| (self.passages[&id].clone(), s))
            .collect())
    }

    /// Distinct record ids that contributed passages of `theme`.
    pub fn theme_records(&self, theme: Theme) -> HashSet<&str> {
        self.passages
            .values()
            .filter(|p| p.theme == theme)
            .map(|p| p.record_id.as_str())
            .collect()
    }
}
