//! Grounded persona creation and chat.

pub mod persona;
pub mod prompt;
pub mod provider;
pub mod questions;
pub mod summary;

use std::sync::Arc;

use chrono::Utc;
use uuid::Uuid;

use crate::abilities::{generate_ability_entries, AbilityCatalog, CatalogError, GenerationError, GenerationReport};
use crate::retrieval::{Passage, RetrievalError, RetrievalIndex};
use crate::store::{Store, StoreError};
use crate::theme::Theme;

use persona::{greeting, AbilityRef, CreatedPersona, PersonaAttributes, PersonaProfile};
use prompt::{
    assemble_chat_bundle, assemble_system_prompt, fence, ChatTurn, PromptBundle, PromptSettings,
    ResponseFormat, Role, Strategy,
};
use provider::{LlmProvider, ProviderError};
use questions::QuestionBank;

#[derive(Debug, thiserror::Error)]
pub enum EngineError {
    #[error("invalid {field}: {message}")]
    Invalid { field: String, message: String },
    #[error("system turns are owned by the engine and cannot appear in history")]
    SystemTurnInHistory,
    #[error("context must contain at least one turn")]
    EmptyContext,
    #[error("the last context turn must have role user")]
    LastTurnNotUser,
    #[error("conversation `{conversation_id}` does not belong to persona `{persona_id}`")]
    ConversationMismatch {
        conversation_id: String,
        persona_id: String,
    },
    #[error(transparent)]
    Catalog(#[from] CatalogError),
    #[error(transparent)]
    Provider(#[from] ProviderError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Retrieval(#[from] RetrievalError),
    #[error(transparent)]
    Generation(#[from] GenerationError),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EngineSettings {
    /// Passages injected per prompt.
    pub retrieval_k: usize,
    /// Most recent history turns re-sent to the provider; `None` sends all.
    pub history_window: Option<usize>,
    pub prompt: PromptSettings,
}

impl Default for EngineSettings {
    fn default() -> Self {
        Self {
            retrieval_k: 4,
            history_window: None,
            prompt: PromptSettings::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ChatRequest {
    pub persona_id: String,
    pub conversation_id: Option<String>,
    pub context: Vec<ChatTurn>,
}

#[derive(Debug, Clone)]
pub struct ChatOutcome {
    pub turn: ChatTurn,
    pub conversation_id: Option<String>,
    pub grounding: Vec<Passage>,
}

/// Shared, read-only resources plus the provider. Cheap to clone.
#[derive(Clone)]
pub struct Engine {
    index: Arc<RetrievalIndex>,
    catalog: Arc<AbilityCatalog>,
    questions: Arc<QuestionBank>,
    provider: Arc<dyn LlmProvider>,
    settings: EngineSettings,
}

impl Engine {
    pub fn new(
        index: Arc<RetrievalIndex>,
        catalog: Arc<AbilityCatalog>,
        questions: Arc<QuestionBank>,
        provider: Arc<dyn LlmProvider>,
        settings: EngineSettings,
    ) -> Self {
        Self {
            index,
            catalog,
            questions,
            provider,
            settings,
        }
    }

    pub fn index(&self) -> &RetrievalIndex {
        &self.index
    }

    pub fn catalog(&self) -> &AbilityCatalog {
        &self.catalog
    }

    pub fn questions(&self) -> &QuestionBank {
        &self.questions
    }

    pub fn provider(&self) -> &dyn LlmProvider {
        self.provider.as_ref()
    }

    pub fn settings(&self) -> &EngineSettings {
        &self.settings
    }

    /// Theme-restricted grounding for `query`; empty when nothing matches.
    pub fn ground(&self, query: &str, theme: Theme) -> Result<Vec<Passage>, EngineError> {
        if self.index.passage_count() == 0 {
            tracing::warn!("retrieval index is empty; replying without grounding");
            return Ok(Vec::new());
        }
        let hits = self.index.retrieve(query, theme, self.settings.retrieval_k.max(1))?;
        Ok(hits.into_iter().map(|(p, _)| p).collect())
    }

    fn resolve_abilities(&self, theme: Theme, names: &[String]) -> Result<Vec<AbilityRef>, EngineError> {
        let mut refs: Vec<AbilityRef> = Vec::new();
        for name in names {
            self.catalog.get(theme, name)?;
            let r = AbilityRef {
                theme,
                name: name.clone(),
            };
            if !refs.contains(&r) {
                refs.push(r);
            }
        }
        Ok(refs)
    }

    fn complete(&self, bundle: &PromptBundle) -> Result<String, EngineError> {
        let text = self.provider.complete(bundle)?;
        if text.trim().is_empty() {
            return Err(ProviderError::fatal("provider returned an empty completion").into());
        }
        Ok(text.trim().to_string())
    }

    /// Draft then enrich a description, assemble the role-play system prompt
    /// and persist the persona.
    pub fn create_persona(
        &self,
        store: &Store,
        attrs: PersonaAttributes,
        ability_names: &[String],
    ) -> Result<CreatedPersona, EngineError> {
        attrs.validate()?;
        let selected = self.resolve_abilities(attrs.theme, ability_names)?;
        let system_prompt = assemble_system_prompt(&attrs, &selected, &self.catalog)?;
        let grounding = self.ground(
            &format!("{} {}", attrs.occupation, attrs.medical_condition),
            attrs.theme,
        )?;

        let mut system = format!(
            "You write realistic, respectful first-person persona descriptions for UX designers. \
             Stay consistent with the context excerpts from real people's stories.\n\n\
             Target Group: People with {condition}. Name: {name}. Age: {age}. \
             Profession: {occupation}. Theme: {theme}.\n",
            condition = attrs.medical_condition.trim(),
            name = attrs.name.trim(),
            age = attrs.age,
            occupation = attrs.occupation.trim(),
            theme = attrs.theme,
        );
        for p in &grounding {
            system.push('\n');
            system.push_str(&fence(p));
        }
        let system_turn = ChatTurn::new_unchecked(Role::System, system);
        let draft_request = ChatTurn::new_unchecked(
            Role::User,
            format!(
                "Create a persona for {}: a first-person description of at most three sentences \
                 covering their character and {}-related details.",
                attrs.name.trim(),
                attrs.theme.as_str().to_lowercase()
            ),
        );
        let draft_bundle = PromptBundle {
            turns: vec![system_turn.clone(), draft_request.clone()],
            grounding: grounding.clone(),
            strategy: Strategy::OneShot,
            format: ResponseFormat::Text,
        };
        let draft = self.complete(&draft_bundle)?;

        let keywords = if selected.is_empty() {
            format!("{} experiences, {}", attrs.theme, attrs.occupation.trim())
        } else {
            selected
                .iter()
                .map(|r| {
                    let e = self.catalog.get(r.theme, &r.name).expect("resolved above");
                    format!(
                        "{} (driver: {}; blocker: {})",
                        e.name, e.drivers[0].name, e.blockers[0].name
                    )
                })
                .collect::<Vec<_>>()
                .join(", ")
        };
        let enrich_bundle = PromptBundle {
            turns: vec![
                system_turn,
                draft_request,
                ChatTurn::new_unchecked(Role::Assistant, draft),
                ChatTurn::new_unchecked(
                    Role::User,
                    format!(
                        "Add the following attributes to the persona you created: {keywords}. \
                         Reply with the full revised description only."
                    ),
                ),
            ],
            grounding,
            strategy: Strategy::Incremental,
            format: ResponseFormat::Text,
        };
        let description = self.complete(&enrich_bundle)?;

        let profile = PersonaProfile {
            persona_id: Uuid::new_v4().to_string(),
            attributes: attrs,
            selected_abilities: selected,
            description,
            system_prompt,
            created_at: Utc::now(),
            deleted: false,
        };
        store.save_persona(&profile)?;
        Ok(CreatedPersona {
            assistant_message: greeting(&profile.attributes.name),
            description: profile.description,
            system_prompt: profile.system_prompt,
            persona_id: profile.persona_id,
        })
    }

    /// Replace a persona's selected abilities and rebuild its system prompt.
    pub fn set_abilities(
        &self,
        store: &Store,
        persona_id: &str,
        ability_names: &[String],
    ) -> Result<PersonaProfile, EngineError> {
        let mut profile = store.load_persona(persona_id)?;
        let selected = self.resolve_abilities(profile.attributes.theme, ability_names)?;
        profile.system_prompt = assemble_system_prompt(&profile.attributes, &selected, &self.catalog)?;
        let names: Vec<String> = selected.iter().map(|r| r.name.clone()).collect();
        profile.selected_abilities = selected;
        store.update_persona(&profile, &format!("abilities set to [{}]", names.join(", ")))?;
        Ok(store.load_persona(persona_id)?)
    }

    /// One grounded exchange with a stored persona.
    ///
    /// The stored conversation is authoritative. If the client context (minus
    /// leading system turns) extends the stored turns, the extension is
    /// appended; otherwise only the final user turn is taken as new input.
    pub fn chat(&self, store: &Store, request: ChatRequest) -> Result<ChatOutcome, EngineError> {
        let client = client_turns(&request.context)?;
        let profile = store.load_persona(&request.persona_id)?;

        let conversation_id = match request.conversation_id {
            Some(id) => {
                let c = store.conversation(&id)?;
                if c.persona_id != profile.persona_id {
                    return Err(EngineError::ConversationMismatch {
                        conversation_id: id,
                        persona_id: profile.persona_id,
                    });
                }
                id
            }
            None => store.new_conversation(&profile.persona_id)?,
        };
        let stored = store.conversation(&conversation_id)?.chat_turns();
        let delta: Vec<ChatTurn> = if client.starts_with(&stored) {
            client[stored.len()..].to_vec()
        } else {
            client[client.len() - 1..].to_vec()
        };
        if delta.is_empty() {
            return Err(EngineError::Invalid {
                field: "context".into(),
                message: "context adds no new user message to the stored conversation".into(),
            });
        }

        let (user_msg, new_history) = delta.split_last().expect("delta is non-empty");
        let mut history = stored;
        history.extend_from_slice(new_history);
        let history = self.window(&history);

        let grounding = self.ground(&user_msg.content, profile.attributes.theme)?;
        let bundle = assemble_chat_bundle(
            &profile.system_prompt,
            history,
            &user_msg.content,
            &grounding,
            &self.settings.prompt,
        )?;
        let reply = ChatTurn::new_unchecked(Role::Assistant, self.complete(&bundle)?);

        let mut batch = delta.clone();
        batch.push(reply.clone());
        store.append_turns(&conversation_id, &batch)?;

        Ok(ChatOutcome {
            turn: reply,
            conversation_id: Some(conversation_id),
            grounding,
        })
    }

    /// Chat with a client-held context whose first turn is the system prompt.
    /// Nothing is persisted; grounding happens only when a theme is given.
    pub fn chat_stateless(
        &self,
        context: &[ChatTurn],
        theme: Option<Theme>,
    ) -> Result<ChatOutcome, EngineError> {
        let first = context.first().ok_or(EngineError::EmptyContext)?;
        if first.role != Role::System {
            return Err(EngineError::Invalid {
                field: "context[0].role".into(),
                message: "without persona_id the context must start with the system turn".into(),
            });
        }
        let rest = client_turns(context)?;
        let (user_msg, history) = rest.split_last().expect("client_turns is non-empty");
        let history = self.window(history);
        let grounding = match theme {
            Some(t) => self.ground(&user_msg.content, t)?,
            None => Vec::new(),
        };
        let bundle = assemble_chat_bundle(
            &first.content,
            history,
            &user_msg.content,
            &grounding,
            &self.settings.prompt,
        )?;
        Ok(ChatOutcome {
            turn: ChatTurn::new_unchecked(Role::Assistant, self.complete(&bundle)?),
            conversation_id: None,
            grounding,
        })
    }

    fn window<'a>(&self, history: &'a [ChatTurn]) -> &'a [ChatTurn] {
        match self.settings.history_window {
            Some(n) if history.len() > n => &history[history.len() - n..],
            _ => history,
        }
    }

    pub fn suggest_questions(&self, theme: Theme, selected_abilities: &[String]) -> Vec<String> {
        self.questions.suggest(theme, selected_abilities)
    }

    pub fn generate_abilities(&self, theme: Theme) -> Result<GenerationReport, EngineError> {
        Ok(generate_ability_entries(
            theme,
            &self.index,
            self.provider.as_ref(),
            self.settings.retrieval_k,
        )?)
    }
}

/// Validate a client context and drop its leading system turns.
fn client_turns(context: &[ChatTurn]) -> Result<Vec<ChatTurn>, EngineError> {
    if context.is_empty() {
        return Err(EngineError::EmptyContext);
    }
    let rest: Vec<ChatTurn> = context
        .iter()
        .skip_while(|t| t.role == Role::System)
        .cloned()
        .collect();
    if rest.iter().any(|t| t.role == Role::System) {
        return Err(EngineError::SystemTurnInHistory);
    }
    match rest.last() {
        Some(t) if t.role == Role::User => Ok(rest),
        _ => Err(EngineError::LastTurnNotUser),
    }
}
