//! Theme-scoped ability catalog: each ability carries drivers that enhance it
//! and blockers that hinder it, every factor illustrated by a first-person story.

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::engine::prompt::{fence, ChatTurn, PromptBundle, ResponseFormat, Role, Strategy};
use crate::engine::provider::{LlmProvider, ProviderError};
use crate::retrieval::{Passage, RetrievalIndex};
use crate::theme::Theme;

#[derive(Debug, thiserror::Error)]
pub enum CatalogError {
    #[error("failed to access {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("duplicate ability ({theme}, {name})")]
    Duplicate { theme: Theme, name: String },
    #[error("ability ({theme}, {name}) not found")]
    NotFound { theme: Theme, name: String },
    #[error("invalid ability entry: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AbilityFactor {
    pub name: String,
    pub story: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AbilityEntry {
    pub theme: Theme,
    pub name: String,
    pub description: String,
    pub drivers: Vec<AbilityFactor>,
    pub blockers: Vec<AbilityFactor>,
}

impl AbilityEntry {
    pub fn validate(&self) -> Result<(), CatalogError> {
        let invalid = |m: &str| Err(CatalogError::Invalid(format!("{}: {m}", self.name)));
        if self.name.trim().is_empty() {
            return Err(CatalogError::Invalid("ability name must be non-empty".into()));
        }
        if self.description.trim().is_empty() {
            return invalid("description must be non-empty");
        }
        if self.drivers.is_empty() {
            return invalid("at least one driver is required");
        }
        if self.blockers.is_empty() {
            return invalid("at least one blocker is required");
        }
        for f in self.drivers.iter().chain(&self.blockers) {
            if f.name.trim().is_empty() || f.story.trim().is_empty() {
                return invalid("driver and blocker names and stories must be non-empty");
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CatalogSource {
    CuratedFile,
    Generated,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AbilityCatalog {
    entries: Vec<AbilityEntry>,
    source: CatalogSource,
}

impl AbilityCatalog {
    pub fn new(entries: Vec<AbilityEntry>, source: CatalogSource) -> Result<Self, CatalogError> {
        let mut seen = HashSet::new();
        for e in &entries {
            e.validate()?;
            if !seen.insert((e.theme, e.name.clone())) {
                return Err(CatalogError::Duplicate {
                    theme: e.theme,
                    name: e.name.clone(),
                });
            }
        }
        Ok(Self { entries, source })
    }

    pub fn entries(&self) -> &[AbilityEntry] {
        &self.entries
    }

    pub fn source(&self) -> CatalogSource {
        self.source
    }

    pub fn list(&self, theme: Theme) -> Vec<&AbilityEntry> {
        self.entries.iter().filter(|e| e.theme == theme).collect()
    }

    /// Exact, case-sensitive lookup on name.
    pub fn get(&self, theme: Theme, name: &str) -> Result<&AbilityEntry, CatalogError> {
        self.entries
            .iter()
            .find(|e| e.theme == theme && e.name == name)
            .ok_or_else(|| CatalogError::NotFound {
                theme,
                name: name.to_string(),
            })
    }

    pub fn parse(text: &str) -> Result<Self, CatalogError> {
        let mut entries = Vec::new();
        let mut seen = HashSet::new();
        for (idx, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let entry: AbilityEntry =
                serde_json::from_str(line).map_err(|e| CatalogError::Malformed {
                    line: idx + 1,
                    message: e.to_string(),
                })?;
            entry.validate().map_err(|e| CatalogError::Malformed {
                line: idx + 1,
                message: e.to_string(),
            })?;
            if !seen.insert((entry.theme, entry.name.clone())) {
                return Err(CatalogError::Duplicate {
                    theme: entry.theme,
                    name: entry.name,
                });
            }
            entries.push(entry);
        }
        Ok(Self {
            entries,
            source: CatalogSource::CuratedFile,
        })
    }

    pub fn to_jsonl(&self) -> String {
        self.entries
            .iter()
            .map(|e| serde_json::to_string(e).expect("entry serializes") + "\n")
            .collect()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), CatalogError> {
        let path = path.as_ref();
        fs::write(path, self.to_jsonl()).map_err(|source| CatalogError::Io {
            path: path.to_path_buf(),
            source,
        })
    }
}

pub fn load_catalog(path: impl AsRef<Path>) -> Result<AbilityCatalog, CatalogError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| CatalogError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    AbilityCatalog::parse(&text)
}

#[derive(Debug, thiserror::Error)]
pub enum GenerationError {
    #[error("no grounding passages for theme {0}")]
    NoGroundingPassages(Theme),
    #[error(transparent)]
    Provider(#[from] ProviderError),
    #[error("provider draft is not a JSON list of abilities: {0}")]
    Unparseable(String),
}

/// Outcome of a regeneration run. Accepted entries form a candidate catalog
/// that still needs human review before replacing the curated one.
#[derive(Debug, Clone, PartialEq)]
pub struct GenerationReport {
    pub accepted: Vec<AbilityEntry>,
    pub rejected: Vec<(String, String)>,
    pub grounding: Vec<Passage>,
}

#[derive(Debug, Deserialize)]
struct Draft {
    #[serde(default)]
    name: String,
    #[serde(default)]
    description: String,
    #[serde(default)]
    drivers: Vec<AbilityFactor>,
    #[serde(default)]
    blockers: Vec<AbilityFactor>,
}

fn seed_query(theme: Theme) -> &'static str {
    match theme {
        Theme::Employment => "work job skills employment coworkers",
        Theme::Education => "school learning class education teacher",
        Theme::Family => "family home parents siblings support",
    }
}

/// Draft new ability entries for `theme` from the top retrieved passages.
pub fn generate_ability_entries(
    theme: Theme,
    index: &RetrievalIndex,
    provider: &dyn LlmProvider,
    k: usize,
) -> Result<GenerationReport, GenerationError> {
    let k = k.max(1);
    let theme_passages: Vec<&Passage> = index.passages().filter(|p| p.theme == theme).collect();
    if theme_passages.is_empty() {
        return Err(GenerationError::NoGroundingPassages(theme));
    }
    let mut grounding: Vec<Passage> = index
        .retrieve(seed_query(theme), theme, k)
        .unwrap_or_default()
        .into_iter()
        .map(|(p, _)| p)
        .collect();
    if grounding.is_empty() {
        grounding = theme_passages.into_iter().take(k).cloned().collect();
    }

    let mut system = format!(
        "You help UX designers build ability-based personas of people with Down syndrome. \
         Using only the story excerpts below, describe abilities people show in the {theme} theme.\n\
         Requirements: answer with a JSON array; each element has keys name, description \
         (first person), drivers and blockers (each a non-empty list of {{name, story}} with a \
         first-person story).\n"
    );
    for p in &grounding {
        system.push('\n');
        system.push_str(&fence(p));
    }
    let bundle = PromptBundle {
        turns: vec![
            ChatTurn::new_unchecked(Role::System, system),
            ChatTurn::new_unchecked(
                Role::User,
                format!("Draft ability entries for the {theme} theme."),
            ),
        ],
        grounding: grounding.clone(),
        strategy: Strategy::General,
        format: ResponseFormat::AbilityEntries,
    };

    let raw = provider.complete(&bundle)?;
    let json = strip_code_fence(&raw);
    let drafts: Vec<Draft> =
        serde_json::from_str(json).map_err(|e| GenerationError::Unparseable(e.to_string()))?;

    let mut accepted: Vec<AbilityEntry> = Vec::new();
    let mut rejected = Vec::new();
    for d in drafts {
        let entry = AbilityEntry {
            theme,
            name: d.name.trim().to_string(),
            description: d.description,
            drivers: d.drivers,
            blockers: d.blockers,
        };
        if let Err(e) = entry.validate() {
            rejected.push((entry.name, e.to_string()));
        } else if accepted.iter().any(|a| a.name == entry.name) {
            rejected.push((entry.name, "duplicate name in draft".into()));
        } else {
            accepted.push(entry);
        }
    }
    Ok(GenerationReport {
        accepted,
        rejected,
        grounding,
    })
}

fn strip_code_fence(raw: &str) -> &str {
    let trimmed = raw.trim();
    let Some(rest) = trimmed.strip_prefix("```") else {
        return trimmed;
    };
    let rest = rest.strip_prefix("json").unwrap_or(rest);
    rest.strip_suffix("```").unwrap_or(rest).trim()
}
