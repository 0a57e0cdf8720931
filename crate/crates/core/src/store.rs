//! Directory-backed persistence for personas, conversations, timelines and
//! exported interview scripts.
//!
//! Layout under the store root:
//!
//! ```text
//! personas/<persona_id>.json
//! conversations/<conversation_id>.json   turns, marks and timeline events
//! scripts/<conversation_id>.json         latest exported interview script
//! ```
//!
//! Every file carries `schema_version` and is replaced by write-then-rename.
//! Mutations are applied to a copy, persisted, then swapped into memory, so a
//! failed write leaves both disk and memory unchanged.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};

use chrono::{DateTime, Utc};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use uuid::Uuid;

use crate::engine::persona::PersonaProfile;
use crate::engine::prompt::{ChatTurn, Role};
use crate::engine::summary::summarize_conversation;
use crate::theme::Theme;

pub const SCHEMA_VERSION: u32 = 1;

const PERSONAS: &str = "personas";
const CONVERSATIONS: &str = "conversations";
const SCRIPTS: &str = "scripts";

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("store I/O on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("corrupt store file {path}: {message}")]
    Corrupt { path: PathBuf, message: String },
    #[error("persona `{0}` not found")]
    PersonaNotFound(String),
    #[error("conversation `{0}` not found")]
    ConversationNotFound(String),
    #[error("turn {turn_index} not found in conversation `{conversation_id}`")]
    TurnNotFound {
        conversation_id: String,
        turn_index: usize,
    },
    #[error("turn {turn_index} is a {role} turn; only user questions can be marked")]
    NotAUserTurn { turn_index: usize, role: &'static str },
    #[error("persona `{0}` already exists")]
    DuplicatePersona(String),
    #[error("invalid {field}: {message}")]
    Invalid { field: String, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EventKind {
    QuestionAsked,
    QuestionMarked,
    QuestionUnmarked,
    NoteAdded,
    PersonaEdited,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimelineEvent {
    pub event_id: String,
    pub conversation_id: String,
    pub kind: EventKind,
    pub payload: String,
    pub timestamp: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StoredTurn {
    pub turn_index: usize,
    pub role: Role,
    pub content: String,
    pub timestamp: DateTime<Utc>,
}

impl StoredTurn {
    pub fn chat_turn(&self) -> ChatTurn {
        ChatTurn::new_unchecked(self.role, self.content.clone())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Conversation {
    pub conversation_id: String,
    pub persona_id: String,
    pub created_at: DateTime<Utc>,
    pub turns: Vec<StoredTurn>,
    pub marked: BTreeSet<usize>,
    pub events: Vec<TimelineEvent>,
    #[serde(default)]
    pub deleted: bool,
}

impl Conversation {
    pub fn chat_turns(&self) -> Vec<ChatTurn> {
        self.turns.iter().map(StoredTurn::chat_turn).collect()
    }

    fn last_timestamp(&self) -> DateTime<Utc> {
        let turn = self.turns.last().map(|t| t.timestamp);
        let event = self.events.last().map(|e| e.timestamp);
        [Some(self.created_at), turn, event]
            .into_iter()
            .flatten()
            .max()
            .unwrap_or(self.created_at)
    }

    fn next_timestamp(&self) -> DateTime<Utc> {
        Utc::now().max(self.last_timestamp())
    }

    fn push_event(&mut self, kind: EventKind, payload: String) -> TimelineEvent {
        let event = TimelineEvent {
            event_id: Uuid::new_v4().to_string(),
            conversation_id: self.conversation_id.clone(),
            kind,
            payload,
            timestamp: self.next_timestamp(),
        };
        self.events.push(event.clone());
        event
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScriptItem {
    pub turn_index: usize,
    pub question: String,
    pub answer: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InterviewScript {
    pub persona_id: String,
    pub conversation_id: String,
    pub generated_at: DateTime<Utc>,
    pub marked_only: bool,
    pub items: Vec<ScriptItem>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PersonaSummary {
    pub persona_id: String,
    pub name: String,
    pub theme: Theme,
    pub age: u32,
    pub occupation: String,
    pub created_at: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ConversationSummary {
    pub conversation_id: String,
    pub persona_id: String,
    pub created_at: DateTime<Utc>,
    pub turn_count: usize,
    pub marked_count: usize,
    pub first_question: Option<String>,
}

/// Everything the store holds, for equality checks across reopen.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StoreSnapshot {
    pub personas: BTreeMap<String, PersonaProfile>,
    pub conversations: BTreeMap<String, Conversation>,
    pub scripts: BTreeMap<String, InterviewScript>,
}

#[derive(Serialize, Deserialize)]
struct Versioned<T> {
    schema_version: u32,
    #[serde(flatten)]
    inner: T,
}

pub struct Store {
    root: PathBuf,
    personas: RwLock<BTreeMap<String, PersonaProfile>>,
    conversations: RwLock<BTreeMap<String, Arc<Mutex<Conversation>>>>,
    scripts: RwLock<BTreeMap<String, InterviewScript>>,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> StoreError + '_ {
    move |source| StoreError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn check_id(field: &str, id: &str) -> Result<(), StoreError> {
    let ok = !id.is_empty()
        && id.len() <= 128
        && id.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_');
    if ok {
        Ok(())
    } else {
        Err(StoreError::Invalid {
            field: field.into(),
            message: format!("`{id}` is not a valid identifier"),
        })
    }
}

fn write_atomic<T: Serialize>(dir: &Path, id: &str, value: &T) -> Result<(), StoreError> {
    let doc = Versioned {
        schema_version: SCHEMA_VERSION,
        inner: value,
    };
    let mut bytes = serde_json::to_vec_pretty(&doc).expect("store documents serialize");
    bytes.push(b'\n');
    let target = dir.join(format!("{id}.json"));
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io_err(dir))?;
    tmp.write_all(&bytes).map_err(io_err(&target))?;
    tmp.as_file().sync_all().map_err(io_err(&target))?;
    tmp.persist(&target).map_err(|e| StoreError::Io {
        path: target.clone(),
        source: e.error,
    })?;
    Ok(())
}

fn read_dir_docs<T: DeserializeOwned>(dir: &Path) -> Result<Vec<T>, StoreError> {
    let mut out = Vec::new();
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(io_err(dir))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|ext| ext == "json"))
        .collect();
    paths.sort();
    for path in paths {
        let text = fs::read_to_string(&path).map_err(io_err(&path))?;
        let doc: Versioned<T> = serde_json::from_str(&text).map_err(|e| StoreError::Corrupt {
            path: path.clone(),
            message: e.to_string(),
        })?;
        if doc.schema_version != SCHEMA_VERSION {
            return Err(StoreError::Corrupt {
                path,
                message: format!("unsupported schema_version {}", doc.schema_version),
            });
        }
        out.push(doc.inner);
    }
    Ok(out)
}

impl Store {
    /// Open (creating if needed) the store rooted at `root`.
    pub fn open(root: impl AsRef<Path>) -> Result<Self, StoreError> {
        let root = root.as_ref().to_path_buf();
        for sub in [PERSONAS, CONVERSATIONS, SCRIPTS] {
            let dir = root.join(sub);
            fs::create_dir_all(&dir).map_err(io_err(&dir))?;
        }

        let personas = read_dir_docs::<PersonaProfile>(&root.join(PERSONAS))?
            .into_iter()
            .map(|p| (p.persona_id.clone(), p))
            .collect();
        let conversations = read_dir_docs::<Conversation>(&root.join(CONVERSATIONS))?
            .into_iter()
            .map(|c| (c.conversation_id.clone(), Arc::new(Mutex::new(c))))
            .collect();
        let scripts = read_dir_docs::<InterviewScript>(&root.join(SCRIPTS))?
            .into_iter()
            .map(|s| (s.conversation_id.clone(), s))
            .collect();

        Ok(Self {
            root,
            personas: RwLock::new(personas),
            conversations: RwLock::new(conversations),
            scripts: RwLock::new(scripts),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    // ---- personas ----

    pub fn save_persona(&self, profile: &PersonaProfile) -> Result<String, StoreError> {
        check_id("persona_id", &profile.persona_id)?;
        let mut personas = self.personas.write().unwrap();
        if personas.contains_key(&profile.persona_id) {
            return Err(StoreError::DuplicatePersona(profile.persona_id.clone()));
        }
        write_atomic(&self.root.join(PERSONAS), &profile.persona_id, profile)?;
        personas.insert(profile.persona_id.clone(), profile.clone());
        Ok(profile.persona_id.clone())
    }

    pub fn load_persona(&self, persona_id: &str) -> Result<PersonaProfile, StoreError> {
        self.personas
            .read()
            .unwrap()
            .get(persona_id)
            .filter(|p| !p.deleted)
            .cloned()
            .ok_or_else(|| StoreError::PersonaNotFound(persona_id.to_string()))
    }

    /// Live personas, newest first; equal timestamps order by id.
    pub fn list_personas(&self) -> Vec<PersonaSummary> {
        let mut list: Vec<PersonaSummary> = self
            .personas
            .read()
            .unwrap()
            .values()
            .filter(|p| !p.deleted)
            .map(|p| PersonaSummary {
                persona_id: p.persona_id.clone(),
                name: p.attributes.name.clone(),
                theme: p.attributes.theme,
                age: p.attributes.age,
                occupation: p.attributes.occupation.clone(),
                created_at: p.created_at,
            })
            .collect();
        list.sort_by(|a, b| {
            b.created_at
                .cmp(&a.created_at)
                .then_with(|| a.persona_id.cmp(&b.persona_id))
        });
        list
    }

    /// Replace a live persona and log `change` on each of its conversations.
    pub fn update_persona(&self, profile: &PersonaProfile, change: &str) -> Result<(), StoreError> {
        {
            let mut personas = self.personas.write().unwrap();
            let existing = personas
                .get(&profile.persona_id)
                .filter(|p| !p.deleted)
                .ok_or_else(|| StoreError::PersonaNotFound(profile.persona_id.clone()))?;
            let mut updated = profile.clone();
            updated.created_at = existing.created_at;
            write_atomic(&self.root.join(PERSONAS), &updated.persona_id, &updated)?;
            personas.insert(updated.persona_id.clone(), updated);
        }
        for conversation_id in self.conversation_ids_for(&profile.persona_id) {
            self.mutate(&conversation_id, |c| {
                c.push_event(EventKind::PersonaEdited, change.to_string());
                Ok(())
            })?;
        }
        Ok(())
    }

    /// Tombstone a persona; its conversations and timelines stay on disk.
    pub fn delete_persona(&self, persona_id: &str) -> Result<(), StoreError> {
        let mut personas = self.personas.write().unwrap();
        let mut profile = personas
            .get(persona_id)
            .filter(|p| !p.deleted)
            .cloned()
            .ok_or_else(|| StoreError::PersonaNotFound(persona_id.to_string()))?;
        profile.deleted = true;
        write_atomic(&self.root.join(PERSONAS), persona_id, &profile)?;
        personas.insert(persona_id.to_string(), profile);
        Ok(())
    }

    // ---- conversations ----

    fn conversation_handle(&self, conversation_id: &str) -> Result<Arc<Mutex<Conversation>>, StoreError> {
        self.conversations
            .read()
            .unwrap()
            .get(conversation_id)
            .cloned()
            .ok_or_else(|| StoreError::ConversationNotFound(conversation_id.to_string()))
    }

    fn conversation_ids_for(&self, persona_id: &str) -> Vec<String> {
        self.conversations
            .read()
            .unwrap()
            .iter()
            .filter(|(_, c)| c.lock().unwrap().persona_id == persona_id)
            .map(|(id, _)| id.clone())
            .collect()
    }

    /// Apply `f` to a copy of the conversation under its lock, persist, then
    /// publish the copy.
    fn mutate<R>(
        &self,
        conversation_id: &str,
        f: impl FnOnce(&mut Conversation) -> Result<R, StoreError>,
    ) -> Result<R, StoreError> {
        let handle = self.conversation_handle(conversation_id)?;
        let mut guard = handle.lock().unwrap();
        if guard.deleted {
            return Err(StoreError::ConversationNotFound(conversation_id.to_string()));
        }
        let mut next = guard.clone();
        let out = f(&mut next)?;
        if next != *guard {
            write_atomic(&self.root.join(CONVERSATIONS), conversation_id, &next)?;
            *guard = next;
        }
        Ok(out)
    }

    pub fn new_conversation(&self, persona_id: &str) -> Result<String, StoreError> {
        self.load_persona(persona_id)?;
        let conversation = Conversation {
            conversation_id: Uuid::new_v4().to_string(),
            persona_id: persona_id.to_string(),
            created_at: Utc::now(),
            turns: Vec::new(),
            marked: BTreeSet::new(),
            events: Vec::new(),
            deleted: false,
        };
        let id = conversation.conversation_id.clone();
        let mut conversations = self.conversations.write().unwrap();
        write_atomic(&self.root.join(CONVERSATIONS), &id, &conversation)?;
        conversations.insert(id.clone(), Arc::new(Mutex::new(conversation)));
        Ok(id)
    }

    pub fn conversation(&self, conversation_id: &str) -> Result<Conversation, StoreError> {
        let handle = self.conversation_handle(conversation_id)?;
        let c = handle.lock().unwrap();
        if c.deleted {
            return Err(StoreError::ConversationNotFound(conversation_id.to_string()));
        }
        Ok(c.clone())
    }

    /// Conversations of a persona, newest first.
    pub fn list_conversations(&self, persona_id: &str) -> Result<Vec<ConversationSummary>, StoreError> {
        self.load_persona(persona_id)?;
        let conversations = self.conversations.read().unwrap();
        let mut list: Vec<ConversationSummary> = conversations
            .values()
            .map(|c| c.lock().unwrap())
            .filter(|c| c.persona_id == persona_id && !c.deleted)
            .map(|c| ConversationSummary {
                conversation_id: c.conversation_id.clone(),
                persona_id: c.persona_id.clone(),
                created_at: c.created_at,
                turn_count: c.turns.len(),
                marked_count: c.marked.len(),
                first_question: c
                    .turns
                    .iter()
                    .find(|t| t.role == Role::User)
                    .map(|t| t.content.clone()),
            })
            .collect();
        list.sort_by(|a, b| {
            b.created_at
                .cmp(&a.created_at)
                .then_with(|| a.conversation_id.cmp(&b.conversation_id))
        });
        Ok(list)
    }

    pub fn append_turn(&self, conversation_id: &str, turn: &ChatTurn) -> Result<usize, StoreError> {
        Ok(self.append_turns(conversation_id, std::slice::from_ref(turn))?[0])
    }

    /// Append turns as one batch; user turns are logged as asked questions.
    pub fn append_turns(
        &self,
        conversation_id: &str,
        turns: &[ChatTurn],
    ) -> Result<Vec<usize>, StoreError> {
        if let Some(bad) = turns.iter().find(|t| t.content.trim().is_empty()) {
            return Err(StoreError::Invalid {
                field: "content".into(),
                message: format!("{} turn content must be non-empty", bad.role.as_str()),
            });
        }
        self.mutate(conversation_id, |c| {
            let mut indices = Vec::with_capacity(turns.len());
            for turn in turns {
                let turn_index = c.turns.len();
                let timestamp = c.next_timestamp();
                c.turns.push(StoredTurn {
                    turn_index,
                    role: turn.role,
                    content: turn.content.clone(),
                    timestamp,
                });
                if turn.role == Role::User {
                    c.push_event(EventKind::QuestionAsked, turn.content.clone());
                }
                indices.push(turn_index);
            }
            Ok(indices)
        })
    }

    fn set_mark(&self, conversation_id: &str, turn_index: usize, marked: bool) -> Result<(), StoreError> {
        self.mutate(conversation_id, |c| {
            let turn = c.turns.get(turn_index).ok_or_else(|| StoreError::TurnNotFound {
                conversation_id: conversation_id.to_string(),
                turn_index,
            })?;
            if turn.role != Role::User {
                return Err(StoreError::NotAUserTurn {
                    turn_index,
                    role: turn.role.as_str(),
                });
            }
            let changed = if marked {
                c.marked.insert(turn_index)
            } else {
                c.marked.remove(&turn_index)
            };
            if changed {
                let kind = if marked {
                    EventKind::QuestionMarked
                } else {
                    EventKind::QuestionUnmarked
                };
                c.push_event(kind, turn_index.to_string());
            }
            Ok(())
        })
    }

    pub fn mark_question(&self, conversation_id: &str, turn_index: usize) -> Result<(), StoreError> {
        self.set_mark(conversation_id, turn_index, true)
    }

    pub fn unmark_question(&self, conversation_id: &str, turn_index: usize) -> Result<(), StoreError> {
        self.set_mark(conversation_id, turn_index, false)
    }

    pub fn annotate(&self, conversation_id: &str, note: &str) -> Result<TimelineEvent, StoreError> {
        if note.trim().is_empty() {
            return Err(StoreError::Invalid {
                field: "note".into(),
                message: "note must be non-empty".into(),
            });
        }
        self.mutate(conversation_id, |c| Ok(c.push_event(EventKind::NoteAdded, note.to_string())))
    }

    pub fn timeline(&self, conversation_id: &str) -> Result<Vec<TimelineEvent>, StoreError> {
        Ok(self.conversation(conversation_id)?.events)
    }

    // ---- scripts ----

    pub fn export_interview_script(
        &self,
        conversation_id: &str,
        marked_only: bool,
    ) -> Result<InterviewScript, StoreError> {
        let conversation = self.conversation(conversation_id)?;
        let script = summarize_conversation(&conversation, marked_only);
        let mut scripts = self.scripts.write().unwrap();
        write_atomic(&self.root.join(SCRIPTS), conversation_id, &script)?;
        scripts.insert(conversation_id.to_string(), script.clone());
        Ok(script)
    }

    pub fn script(&self, conversation_id: &str) -> Option<InterviewScript> {
        self.scripts.read().unwrap().get(conversation_id).cloned()
    }

    pub fn snapshot(&self) -> StoreSnapshot {
        StoreSnapshot {
            personas: self.personas.read().unwrap().clone(),
            conversations: self
                .conversations
                .read()
                .unwrap()
                .iter()
                .map(|(id, c)| (id.clone(), c.lock().unwrap().clone()))
                .collect(),
            scripts: self.scripts.read().unwrap().clone(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::persona::{PersonaAttributes, PersonaProfile};
    use chrono::TimeZone;

    fn emily(id: &str, secs: i64) -> PersonaProfile {
        PersonaProfile {
            persona_id: id.into(),
            attributes: PersonaAttributes {
                theme: Theme::Employment,
                name: "Emily".into(),
                age: 34,
                occupation: "School assistant".into(),
                medical_condition: "Down Syndrome".into(),
            },
            selected_abilities: vec![],
            description: "Hi! I am Emily.".into(),
            system_prompt: "You are Emily.".into(),
            created_at: Utc.timestamp_opt(1_700_000_000 + secs, 0).unwrap(),
            deleted: false,
        }
    }

    fn store() -> (tempfile::TempDir, Store) {
        let dir = tempfile::tempdir().unwrap();
        let store = Store::open(dir.path()).unwrap();
        (dir, store)
    }

    #[test]
    fn persona_round_trip_and_not_found() {
        let (_dir, s) = store();
        let p = emily("p1", 0);
        assert_eq!(s.save_persona(&p).unwrap(), "p1");
        assert_eq!(s.load_persona("p1").unwrap(), p);
        assert!(matches!(s.load_persona("nope"), Err(StoreError::PersonaNotFound(_))));
        assert!(matches!(s.save_persona(&p), Err(StoreError::DuplicatePersona(_))));
    }

    #[test]
    fn personas_listed_newest_first() {
        let (_dir, s) = store();
        for (id, t) in [("a", 10), ("b", 30), ("c", 20)] {
            s.save_persona(&emily(id, t)).unwrap();
        }
        let ids: Vec<_> = s.list_personas().into_iter().map(|p| p.persona_id).collect();
        assert_eq!(ids, ["b", "c", "a"]);
    }

    #[test]
    fn soft_delete_hides_but_keeps_history() {
        let (dir, s) = store();
        s.save_persona(&emily("p", 0)).unwrap();
        let c = s.new_conversation("p").unwrap();
        s.append_turn(&c, &ChatTurn::user("Hi").unwrap()).unwrap();
        s.delete_persona("p").unwrap();
        assert!(s.list_personas().is_empty());
        assert!(s.load_persona("p").is_err());
        assert_eq!(s.conversation(&c).unwrap().turns.len(), 1);
        let reopened = Store::open(dir.path()).unwrap();
        assert!(reopened.snapshot().personas["p"].deleted);
    }

    #[test]
    fn conversations_are_isolated_and_dense() {
        let (_dir, s) = store();
        s.save_persona(&emily("p", 0)).unwrap();
        let a = s.new_conversation("p").unwrap();
        let b = s.new_conversation("p").unwrap();
        assert_ne!(a, b);
        assert_eq!(s.list_conversations("p").unwrap().len(), 2);
        let idx: Vec<usize> = (0..3)
            .map(|i| s.append_turn(&a, &ChatTurn::user(format!("q{i}")).unwrap()).unwrap())
            .collect();
        assert_eq!(idx, [0, 1, 2]);
        assert!(s.conversation(&b).unwrap().turns.is_empty());
        assert!(matches!(
            s.new_conversation("ghost"),
            Err(StoreError::PersonaNotFound(_))
        ));
        assert!(matches!(
            s.append_turn("ghost", &ChatTurn::user("x").unwrap()),
            Err(StoreError::ConversationNotFound(_))
        ));
    }

    #[test]
    fn marking_rules() {
        let (_dir, s) = store();
        s.save_persona(&emily("p", 0)).unwrap();
        let c = s.new_conversation("p").unwrap();
        s.append_turns(
            &c,
            &[
                ChatTurn::user("q0").unwrap(),
                ChatTurn::assistant("a1").unwrap(),
                ChatTurn::user("q2").unwrap(),
            ],
        )
        .unwrap();
        s.mark_question(&c, 2).unwrap();
        assert_eq!(s.conversation(&c).unwrap().marked, BTreeSet::from([2]));
        assert!(matches!(
            s.mark_question(&c, 1),
            Err(StoreError::NotAUserTurn { turn_index: 1, .. })
        ));
        assert!(matches!(s.mark_question(&c, 9), Err(StoreError::TurnNotFound { .. })));

        let before = s.timeline(&c).unwrap().len();
        s.unmark_question(&c, 2).unwrap();
        let conv = s.conversation(&c).unwrap();
        assert!(conv.marked.is_empty());
        let kinds: Vec<EventKind> = conv.events[before - 1..].iter().map(|e| e.kind).collect();
        assert_eq!(kinds, [EventKind::QuestionMarked, EventKind::QuestionUnmarked]);
    }

    #[test]
    fn annotations() {
        let (_dir, s) = store();
        s.save_persona(&emily("p", 0)).unwrap();
        let c = s.new_conversation("p").unwrap();
        assert!(matches!(s.annotate(&c, " "), Err(StoreError::Invalid { .. })));
        let note = "Follow up on job coach – ask about \"visual aids\" 🙂";
        let e1 = s.annotate(&c, note).unwrap();
        let e2 = s.annotate(&c, "second").unwrap();
        assert!(e1.timestamp <= e2.timestamp);
        let events = s.timeline(&c).unwrap();
        assert_eq!(events.len(), 2);
        assert_eq!(events[0].payload, note);
        assert!(matches!(s.annotate("ghost", "x"), Err(StoreError::ConversationNotFound(_))));
    }

    #[test]
    fn update_persona_logs_edit_on_conversations() {
        let (_dir, s) = store();
        s.save_persona(&emily("p", 0)).unwrap();
        let c = s.new_conversation("p").unwrap();
        let mut p = s.load_persona("p").unwrap();
        p.description = "changed".into();
        s.update_persona(&p, "description edited").unwrap();
        assert_eq!(s.load_persona("p").unwrap().description, "changed");
        let events = s.timeline(&c).unwrap();
        assert_eq!(events.last().unwrap().kind, EventKind::PersonaEdited);
    }

    #[test]
    fn script_export_persists() {
        let (dir, s) = store();
        s.save_persona(&emily("p", 0)).unwrap();
        let c = s.new_conversation("p").unwrap();
        s.append_turns(
            &c,
            &[ChatTurn::user("Q?").unwrap(), ChatTurn::assistant("A. B.").unwrap()],
        )
        .unwrap();
        let script = s.export_interview_script(&c, false).unwrap();
        assert_eq!(script.items.len(), 1);
        assert_eq!(script.items[0].answer, "A.");
        let reopened = Store::open(dir.path()).unwrap();
        assert_eq!(reopened.script(&c), Some(script));
        assert_eq!(reopened.snapshot(), s.snapshot());
    }

    #[test]
    fn rejects_unsafe_ids_and_bad_schema() {
        let (dir, s) = store();
        assert!(matches!(
            s.save_persona(&emily("../evil", 0)),
            Err(StoreError::Invalid { .. })
        ));
        fs::write(
            dir.path().join(PERSONAS).join("x.json"),
            r#"{"schema_version": 99}"#,
        )
        .unwrap();
        assert!(matches!(Store::open(dir.path()), Err(StoreError::Corrupt { .. })));
    }
}
