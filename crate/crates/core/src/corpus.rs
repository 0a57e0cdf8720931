//! Line-delimited corpus of lived-experience story records.
//!
//! Each non-blank line is one JSON object. An optional first line of the form
//! `{"label_aliases": {"Independent Living/Employment": "Employment"}}` declares
//! how raw source labels map onto themes. Labels and `abilities_text` keys must
//! resolve either to a theme name (case-insensitive) or to a declared alias.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::theme::Theme;

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("failed to read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("line {line}: duplicate record_id `{record_id}`")]
    DuplicateRecord { line: usize, record_id: String },
    #[error("line {line}: unknown theme label `{label}`")]
    UnknownLabel { line: usize, label: String },
}

/// One curated entry extracted from a personal story.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct StoryRecord {
    pub record_id: String,
    pub name: String,
    pub diagnosis: String,
    pub resources: String,
    pub age: u32,
    pub gender: String,
    pub region: String,
    pub education: String,
    pub occupation: String,
    pub family_situation: String,
    pub labels: BTreeSet<Theme>,
    pub abilities_text: BTreeMap<Theme, String>,
    pub challenges_text: String,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRecord {
    record_id: String,
    name: String,
    diagnosis: String,
    resources: String,
    age: u32,
    gender: String,
    region: String,
    education: String,
    occupation: String,
    family_situation: String,
    labels: Vec<String>,
    abilities_text: BTreeMap<String, String>,
    challenges_text: String,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    label_aliases: BTreeMap<String, Theme>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Corpus {
    records: Vec<StoryRecord>,
    per_theme_counts: BTreeMap<Theme, usize>,
    label_aliases: BTreeMap<String, Theme>,
}

impl Corpus {
    pub fn new(records: Vec<StoryRecord>, label_aliases: BTreeMap<String, Theme>) -> Self {
        let mut per_theme_counts: BTreeMap<Theme, usize> =
            Theme::ALL.iter().map(|t| (*t, 0)).collect();
        for record in &records {
            for theme in &record.labels {
                *per_theme_counts.entry(*theme).or_default() += 1;
            }
        }
        Self {
            records,
            per_theme_counts,
            label_aliases,
        }
    }

    pub fn records(&self) -> &[StoryRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn label_aliases(&self) -> &BTreeMap<String, Theme> {
        &self.label_aliases
    }

    pub fn get(&self, record_id: &str) -> Option<&StoryRecord> {
        self.records.iter().find(|r| r.record_id == record_id)
    }

    /// Records labelled with `theme`, in corpus order.
    pub fn filter_by_theme(&self, theme: Theme) -> Vec<&StoryRecord> {
        self.records
            .iter()
            .filter(|r| r.labels.contains(&theme))
            .collect()
    }

    /// Per-theme record counts; a multi-label record counts once per theme.
    pub fn stats(&self) -> BTreeMap<Theme, usize> {
        self.per_theme_counts.clone()
    }

    /// Parse corpus text. Line numbers in errors are 1-based.
    pub fn parse(text: &str) -> Result<Self, CorpusError> {
        let mut records = Vec::new();
        let mut aliases = BTreeMap::new();
        let mut seen = HashSet::new();
        let mut first = true;

        for (idx, line) in text.lines().enumerate() {
            let line_no = idx + 1;
            if line.trim().is_empty() {
                continue;
            }
            let value: serde_json::Value =
                serde_json::from_str(line).map_err(|e| CorpusError::Malformed {
                    line: line_no,
                    message: e.to_string(),
                })?;
            let is_first = std::mem::replace(&mut first, false);
            if value.get("label_aliases").is_some() {
                if !is_first {
                    return Err(CorpusError::Malformed {
                        line: line_no,
                        message: "alias header must be the first line".into(),
                    });
                }
                let header: Header =
                    serde_json::from_value(value).map_err(|e| CorpusError::Malformed {
                        line: line_no,
                        message: format!("invalid alias header: {e}"),
                    })?;
                aliases = header.label_aliases;
                continue;
            }

            let raw: RawRecord =
                serde_json::from_value(value).map_err(|e| CorpusError::Malformed {
                    line: line_no,
                    message: e.to_string(),
                })?;
            let record = resolve(raw, &aliases, line_no)?;
            if !seen.insert(record.record_id.clone()) {
                return Err(CorpusError::DuplicateRecord {
                    line: line_no,
                    record_id: record.record_id,
                });
            }
            records.push(record);
        }

        Ok(Corpus::new(records, aliases))
    }

    /// Serialize back to the line format, labels in canonical form.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        if !self.label_aliases.is_empty() {
            let header = Header {
                label_aliases: self.label_aliases.clone(),
            };
            out.push_str(&serde_json::to_string(&header).expect("header serializes"));
            out.push('\n');
        }
        for record in &self.records {
            out.push_str(&serde_json::to_string(record).expect("record serializes"));
            out.push('\n');
        }
        out
    }
}

fn resolve_label(
    label: &str,
    aliases: &BTreeMap<String, Theme>,
    line: usize,
) -> Result<Theme, CorpusError> {
    if let Ok(theme) = label.parse::<Theme>() {
        return Ok(theme);
    }
    aliases
        .get(label)
        .copied()
        .ok_or_else(|| CorpusError::UnknownLabel {
            line,
            label: label.to_string(),
        })
}

fn resolve(
    raw: RawRecord,
    aliases: &BTreeMap<String, Theme>,
    line: usize,
) -> Result<StoryRecord, CorpusError> {
    let malformed = |message: String| CorpusError::Malformed { line, message };

    if raw.record_id.trim().is_empty() {
        return Err(malformed("record_id must be non-empty".into()));
    }
    if raw.name.trim().is_empty() {
        return Err(malformed("name must be non-empty".into()));
    }
    if raw.resources.trim().is_empty() {
        return Err(malformed("resources must be non-empty".into()));
    }

    let labels = raw
        .labels
        .iter()
        .map(|l| resolve_label(l, aliases, line))
        .collect::<Result<BTreeSet<_>, _>>()?;
    if labels.is_empty() {
        return Err(malformed("labels must name at least one theme".into()));
    }

    let mut abilities_text = BTreeMap::new();
    for (key, text) in raw.abilities_text {
        let theme = resolve_label(&key, aliases, line)?;
        if !labels.contains(&theme) {
            return Err(malformed(format!(
                "abilities_text key `{key}` is not among the record labels"
            )));
        }
        if abilities_text.insert(theme, text).is_some() {
            return Err(malformed(format!(
                "abilities_text has more than one entry for {theme}"
            )));
        }
    }

    Ok(StoryRecord {
        record_id: raw.record_id,
        name: raw.name,
        diagnosis: raw.diagnosis,
        resources: raw.resources,
        age: raw.age,
        gender: raw.gender,
        region: raw.region,
        education: raw.education,
        occupation: raw.occupation,
        family_situation: raw.family_situation,
        labels,
        abilities_text,
        challenges_text: raw.challenges_text,
    })
}

pub fn load_corpus(path: impl AsRef<Path>) -> Result<Corpus, CorpusError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Corpus::parse(&text)
}
