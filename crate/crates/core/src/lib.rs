//! Grounded persona chat: a curated story corpus, BM25 retrieval, an
//! ability catalog, prompt assembly with pluggable providers and a
//! file-backed store for personas and conversations.

pub mod abilities;
pub mod corpus;
pub mod engine;
pub mod retrieval;
pub mod store;
pub mod theme;

pub use abilities::{load_catalog, AbilityCatalog, AbilityEntry, AbilityFactor, CatalogSource};
pub use corpus::{load_corpus, Corpus, StoryRecord};
pub use engine::persona::{AbilityRef, CreatedPersona, PersonaAttributes, PersonaProfile};
pub use engine::prompt::{ChatTurn, PromptBundle, Role, Strategy};
pub use engine::provider::{LlmProvider, ProviderError, ProviderKind, RemoteConfig, RemoteProvider, StubProvider};
pub use engine::questions::QuestionBank;
pub use engine::{ChatOutcome, ChatRequest, Engine, EngineError, EngineSettings};
pub use retrieval::{passages_from_corpus, tokenize, Passage, RetrievalIndex};
pub use store::Store;
pub use theme::Theme;
