//! Prompt assembly: role-play system prompts, delimiter-fenced grounding and
//! the ordered message bundle handed to a provider.

use serde::{Deserialize, Serialize};

use crate::abilities::AbilityCatalog;
use crate::engine::persona::{AbilityRef, PersonaAttributes};
use crate::engine::EngineError;
use crate::retrieval::Passage;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    Assistant,
    User,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::System => "system",
            Role::Assistant => "assistant",
            Role::User => "user",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawTurn")]
pub struct ChatTurn {
    pub role: Role,
    pub content: String,
}

#[derive(Deserialize)]
struct RawTurn {
    role: Role,
    content: String,
}

impl TryFrom<RawTurn> for ChatTurn {
    type Error = String;

    fn try_from(raw: RawTurn) -> Result<Self, Self::Error> {
        ChatTurn::new(raw.role, raw.content)
    }
}

impl ChatTurn {
    pub fn new(role: Role, content: impl Into<String>) -> Result<Self, String> {
        let content = content.into();
        if content.trim().is_empty() {
            return Err(format!("{} turn content must be non-empty", role.as_str()));
        }
        Ok(Self { role, content })
    }

    pub(crate) fn new_unchecked(role: Role, content: impl Into<String>) -> Self {
        Self {
            role,
            content: content.into(),
        }
    }

    pub fn user(content: impl Into<String>) -> Result<Self, String> {
        Self::new(Role::User, content)
    }

    pub fn assistant(content: impl Into<String>) -> Result<Self, String> {
        Self::new(Role::Assistant, content)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Strategy {
    General,
    RolePlay,
    OneShot,
    Incremental,
}

impl Strategy {
    pub fn tag(self) -> &'static str {
        match self {
            Strategy::General => "general",
            Strategy::RolePlay => "role-play",
            Strategy::OneShot => "one-shot",
            Strategy::Incremental => "incremental",
        }
    }
}

/// What shape of answer the caller will parse out of the completion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ResponseFormat {
    #[default]
    Text,
    AbilityEntries,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PromptBundle {
    pub turns: Vec<ChatTurn>,
    pub grounding: Vec<Passage>,
    pub strategy: Strategy,
    pub format: ResponseFormat,
}

impl PromptBundle {
    pub fn system(&self) -> Option<&str> {
        self.turns
            .first()
            .filter(|t| t.role == Role::System)
            .map(|t| t.content.as_str())
    }

    pub fn last_user(&self) -> Option<&str> {
        self.turns
            .iter()
            .rev()
            .find(|t| t.role == Role::User)
            .map(|t| t.content.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptSettings {
    pub reply_word_limit: Option<usize>,
}

impl Default for PromptSettings {
    fn default() -> Self {
        Self {
            reply_word_limit: Some(120),
        }
    }
}

pub const CONTEXT_OPEN: &str = "###CONTEXT";
pub const CONTEXT_CLOSE: &str = "###END CONTEXT###";

/// Wrap a passage in context delimiters, tagged with its marker.
pub fn fence(passage: &Passage) -> String {
    format!(
        "{CONTEXT_OPEN} {}###\n{}\n{CONTEXT_CLOSE}\n",
        passage.marker(),
        passage.text
    )
}

fn lower_first(s: &str) -> String {
    let mut chars = s.chars();
    match (chars.next(), chars.clone().next()) {
        (Some(first), Some(second)) if !second.is_uppercase() => {
            first.to_lowercase().chain(chars).collect()
        }
        _ => s.to_string(),
    }
}

pub fn assemble_system_prompt(
    attrs: &PersonaAttributes,
    selected: &[AbilityRef],
    catalog: &AbilityCatalog,
) -> Result<String, EngineError> {
    attrs.validate()?;
    let entries = selected
        .iter()
        .map(|r| catalog.get(r.theme, &r.name))
        .collect::<Result<Vec<_>, _>>()?;

    let mut out = format!(
        "You are {name}. You are a {age}-year-old {occupation} living with {condition}. \
         Stay in character as {name}, speak in the first person, and draw on your own \
         everyday experiences.\n\n",
        name = attrs.name.trim(),
        age = attrs.age,
        occupation = lower_first(attrs.occupation.trim()),
        condition = attrs.medical_condition.trim(),
    );
    out.push_str("###PERSONA###\n");
    out.push_str(&format!("Name: {}\n", attrs.name.trim()));
    out.push_str(&format!("Age: {}\n", attrs.age));
    out.push_str(&format!("Occupation: {}\n", attrs.occupation.trim()));
    out.push_str(&format!("Medical condition: {}\n", attrs.medical_condition.trim()));
    out.push_str(&format!("Theme: {}\n", attrs.theme));
    out.push_str("###END PERSONA###\n");

    if !entries.is_empty() {
        out.push_str("\n###ABILITIES###\n");
        for e in entries {
            out.push_str(&format!("- {}: {}\n", e.name, e.description.trim()));
            let d = &e.drivers[0];
            out.push_str(&format!("  Driver: {} ({})\n", d.name, d.story.trim()));
            let b = &e.blockers[0];
            out.push_str(&format!("  Blocker: {} ({})\n", b.name, b.story.trim()));
        }
        out.push_str("###END ABILITIES###\n");
    }
    Ok(out)
}

/// Build the provider input for one chat exchange:
/// `[system (+ fenced grounding), history.., user_msg]`.
pub fn assemble_chat_bundle(
    system_prompt: &str,
    history: &[ChatTurn],
    user_msg: &str,
    passages: &[Passage],
    settings: &PromptSettings,
) -> Result<PromptBundle, EngineError> {
    if user_msg.trim().is_empty() {
        return Err(EngineError::Invalid {
            field: "context".into(),
            message: "user message must be non-empty".into(),
        });
    }
    if history.iter().any(|t| t.role == Role::System) {
        return Err(EngineError::SystemTurnInHistory);
    }

    let mut system = system_prompt.trim_end().to_string();
    if !passages.is_empty() {
        system.push_str(
            "\n\nGround your answer in these excerpts from real people's stories. \
             Do not contradict them or invent experiences beyond them.\n",
        );
        for p in passages {
            system.push('\n');
            system.push_str(&fence(p));
        }
    }
    if let Some(limit) = settings.reply_word_limit {
        system.push_str(&format!(
            "\nKeep each reply under {limit} words and answer only what was asked.\n"
        ));
    }

    let mut turns = Vec::with_capacity(history.len() + 2);
    turns.push(ChatTurn::new_unchecked(Role::System, system));
    turns.extend(history.iter().cloned());
    turns.push(ChatTurn::new_unchecked(Role::User, user_msg));

    Ok(PromptBundle {
        turns,
        grounding: passages.to_vec(),
        strategy: Strategy::RolePlay,
        format: ResponseFormat::Text,
    })
}
