//! Test-only oracles and generators shared by the integration and acceptance suites.
#![allow(dead_code)]

use std::path::PathBuf;

use persona_core::{Passage, Theme};
use proptest::prelude::*;

pub fn data_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data")
}

/// Independent tokenizer: walk characters, cut on anything non-alphanumeric.
pub fn oracle_tokens(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut cur = String::new();
    for c in text.chars() {
        if c.is_alphanumeric() {
            cur.extend(c.to_lowercase());
        } else if !cur.is_empty() {
            out.push(std::mem::take(&mut cur));
        }
    }
    if !cur.is_empty() {
        out.push(cur);
    }
    out
}

/// Exhaustive BM25: score every passage of `theme` straight from its text,
/// recomputing document frequencies by scanning the whole collection.
pub fn brute_force_rank(
    passages: &[Passage],
    query: &str,
    theme: Theme,
    k: usize,
    k1: f64,
    b: f64,
) -> Vec<(usize, f64)> {
    let docs: Vec<Vec<String>> = passages.iter().map(|p| oracle_tokens(&p.text)).collect();
    let n = docs.len() as f64;
    let avgdl = if docs.is_empty() {
        0.0
    } else {
        docs.iter().map(Vec::len).sum::<usize>() as f64 / n
    };
    let query_terms = oracle_tokens(query);

    let mut scored = Vec::new();
    for (p, doc) in passages.iter().zip(&docs) {
        if p.theme != theme {
            continue;
        }
        let mut score = 0.0;
        for q in &query_terms {
            let tf = doc.iter().filter(|t| *t == q).count() as f64;
            if tf == 0.0 {
                continue;
            }
            let df = docs.iter().filter(|d| d.contains(q)).count() as f64;
            let idf = (1.0 + (n - df + 0.5) / (df + 0.5)).ln();
            let norm = if avgdl > 0.0 {
                1.0 - b + b * doc.len() as f64 / avgdl
            } else {
                1.0 - b
            };
            score += idf * tf * (k1 + 1.0) / (tf + k1 * norm);
        }
        if score > 0.0 {
            scored.push((p.passage_id, score));
        }
    }
    scored.sort_by(|x, y| y.1.partial_cmp(&x.1).unwrap().then(x.0.cmp(&y.0)));
    scored.truncate(k);
    scored
}

/// Compare one `retrieve` call against the exhaustive scorer: same ranking,
/// scores within 1e-9, every hit from `theme`, and repeatable.
pub fn check_retrieval(
    index: &persona_core::RetrievalIndex,
    passages: &[Passage],
    query: &str,
    theme: Theme,
    k: usize,
) -> Result<(), TestCaseError> {
    use persona_core::retrieval::{DEFAULT_B, DEFAULT_K1};
    let got = index.retrieve(query, theme, k).unwrap();
    let want = brute_force_rank(passages, query, theme, k, DEFAULT_K1, DEFAULT_B);
    let positive = brute_force_rank(passages, query, theme, usize::MAX, DEFAULT_K1, DEFAULT_B).len();
    prop_assert!(got.len() <= k.min(positive));
    prop_assert_eq!(got.len(), want.len());
    for ((p, s), (id, ws)) in got.iter().zip(&want) {
        prop_assert_eq!(p.theme, theme, "theme purity");
        prop_assert_eq!(p.passage_id, *id);
        prop_assert!((s - ws).abs() < 1e-9, "score {} vs oracle {}", s, ws);
        prop_assert!(*s > 0.0);
    }
    prop_assert_eq!(index.retrieve(query, theme, k).unwrap(), got);
    Ok(())
}

pub const VOCAB: &[&str] = &[
    "work", "job", "school", "family", "memory", "skills", "learn", "help", "coach", "labels",
    "sister", "brother", "teacher", "home", "routine", "friends", "read", "cook", "proud", "team",
];

pub fn theme_strategy() -> impl Strategy<Value = Theme> {
    prop_oneof![Just(Theme::Employment), Just(Theme::Education), Just(Theme::Family)]
}

pub fn text_strategy() -> impl Strategy<Value = String> {
    prop::collection::vec(prop::sample::select(VOCAB), 1..12).prop_map(|w| w.join(" "))
}

/// Up to 20 passages with unique, not necessarily contiguous ids.
pub fn corpus_strategy() -> impl Strategy<Value = Vec<Passage>> {
    prop::collection::vec((theme_strategy(), text_strategy()), 0..=20).prop_flat_map(|items| {
        let n = items.len();
        (Just(items), Just((0..n * 3).collect::<Vec<usize>>()).prop_shuffle()).prop_map(
            |(items, ids)| {
                items
                    .into_iter()
                    .zip(ids)
                    .map(|((theme, text), id)| {
                        Passage::new(id, format!("rec-{id}"), theme, text).unwrap()
                    })
                    .collect()
            },
        )
    })
}

pub fn query_strategy() -> impl Strategy<Value = String> {
    prop::collection::vec(
        prop_oneof![
            4 => prop::sample::select(VOCAB).prop_map(str::to_string),
            1 => "[a-z]{3,6}",
        ],
        1..6,
    )
    .prop_map(|w| w.join(" "))
}

pub fn fixture_engine(seed: u64) -> persona_core::Engine {
    use persona_core::engine::questions::QuestionBank;
    use persona_core::{load_catalog, load_corpus, passages_from_corpus, Engine, EngineSettings, StubProvider};
    use std::sync::Arc;

    let corpus = load_corpus(data_dir().join("corpus.jsonl")).unwrap();
    let index = persona_core::RetrievalIndex::build(passages_from_corpus(&corpus)).unwrap();
    let catalog = load_catalog(data_dir().join("abilities.jsonl")).unwrap();
    let questions = QuestionBank::load(data_dir().join("questions.jsonl")).unwrap();
    Engine::new(
        Arc::new(index),
        Arc::new(catalog),
        Arc::new(questions),
        Arc::new(StubProvider::new(seed)),
        EngineSettings::default(),
    )
}

pub fn emily() -> persona_core::PersonaAttributes {
    persona_core::PersonaAttributes {
        theme: Theme::Employment,
        name: "Emily".into(),
        age: 34,
        occupation: "School assistant".into(),
        medical_condition: "Down Syndrome".into(),
    }
}

pub const EMILY_SYSTEM: &str = "You are Emily, a school assistant with Down syndrome. Despite your condition, you are passionate about your job and dedicated to your responsibilities.";
pub const EMILY_GREETING: &str = "Hello, I'm Emily. How can I assist you today?";
pub const MOTIVATION_QUESTION: &str =
    "What motivates you to learn new skills, especially those related to your job?";

// ---- prompt assembly properties ----

#[derive(Debug, Clone)]
pub struct BundleCase {
    pub passages: Vec<Passage>,
    pub theme: Theme,
    pub query: String,
    pub history: Vec<persona_core::ChatTurn>,
    pub user_msg: String,
}

pub fn bundle_case_strategy() -> impl Strategy<Value = BundleCase> {
    use persona_core::{ChatTurn, Role};
    let turn = (any::<bool>(), "\\PC{1,40}").prop_filter_map("non-blank", |(user, text)| {
        let role = if user { Role::User } else { Role::Assistant };
        ChatTurn::new(role, text).ok()
    });
    (
        corpus_strategy(),
        theme_strategy(),
        query_strategy(),
        prop::collection::vec(turn, 0..10),
        "\\PC{0,30}[a-z]",
    )
        .prop_map(|(passages, theme, query, history, user_msg)| BundleCase {
            passages,
            theme,
            query,
            history,
            user_msg,
        })
}

pub fn check_bundle_case(case: &BundleCase) -> Result<(), TestCaseError> {
    use persona_core::engine::prompt::{assemble_chat_bundle, fence, PromptSettings};
    use persona_core::Role;

    let index = persona_core::RetrievalIndex::build(case.passages.clone()).unwrap();
    let grounding: Vec<Passage> = index
        .retrieve(&case.query, case.theme, 4)
        .unwrap()
        .into_iter()
        .map(|(p, _)| p)
        .collect();
    let history_before = case.history.clone();
    let bundle = assemble_chat_bundle(
        "You are Emily.",
        &case.history,
        &case.user_msg,
        &grounding,
        &PromptSettings::default(),
    )
    .map_err(|e| TestCaseError::fail(e.to_string()))?;

    prop_assert_eq!(&case.history, &history_before);
    prop_assert_eq!(bundle.turns.len(), case.history.len() + 2);
    prop_assert_eq!(bundle.turns[0].role, Role::System);
    prop_assert_eq!(&bundle.turns[1..=case.history.len()], &case.history[..]);
    let last = bundle.turns.last().unwrap();
    prop_assert_eq!(last.role, Role::User);
    prop_assert_eq!(&last.content, &case.user_msg);
    prop_assert!(bundle.turns[1..].iter().all(|t| t.role != Role::System));

    let system = &bundle.turns[0].content;
    prop_assert_eq!(&bundle.grounding, &grounding);
    for p in &bundle.grounding {
        prop_assert_eq!(p.theme, case.theme);
        prop_assert!(system.contains(&fence(p)));
        prop_assert!(system.contains(&p.text));
    }
    Ok(())
}

// ---- store operation sequences ----

#[derive(Debug, Clone)]
pub enum StoreOp {
    NewPersona,
    NewConversation(usize),
    Append(usize, bool, String),
    Mark(usize, usize),
    Unmark(usize, usize),
    Annotate(usize, String),
    Export(usize, bool),
    EditPersona(usize),
    Reopen,
}

pub fn store_op_strategy() -> impl Strategy<Value = StoreOp> {
    prop_oneof![
        1 => Just(StoreOp::NewPersona),
        2 => any::<usize>().prop_map(StoreOp::NewConversation),
        8 => (any::<usize>(), any::<bool>(), "\\PC{0,24}").prop_map(|(c, u, t)| StoreOp::Append(c, u, t)),
        3 => (any::<usize>(), 0usize..12).prop_map(|(c, t)| StoreOp::Mark(c, t)),
        2 => (any::<usize>(), 0usize..12).prop_map(|(c, t)| StoreOp::Unmark(c, t)),
        2 => (any::<usize>(), "\\PC{0,24}").prop_map(|(c, n)| StoreOp::Annotate(c, n)),
        1 => (any::<usize>(), any::<bool>()).prop_map(|(c, m)| StoreOp::Export(c, m)),
        1 => any::<usize>().prop_map(StoreOp::EditPersona),
        1 => Just(StoreOp::Reopen),
    ]
}

fn profile(i: usize) -> persona_core::PersonaProfile {
    persona_core::PersonaProfile {
        persona_id: format!("persona-{i}"),
        attributes: emily(),
        selected_abilities: vec![],
        description: format!("description {i}"),
        system_prompt: "You are Emily.".into(),
        created_at: chrono::Utc::now(),
        deleted: false,
    }
}

fn check_store_invariants(
    store: &persona_core::Store,
    previous: &persona_core::store::StoreSnapshot,
) -> Result<persona_core::store::StoreSnapshot, TestCaseError> {
    use persona_core::Role;
    let snap = store.snapshot();
    for (id, c) in &snap.conversations {
        for (i, t) in c.turns.iter().enumerate() {
            prop_assert_eq!(t.turn_index, i, "dense index in {}", id);
        }
        for m in &c.marked {
            prop_assert!(c.turns.get(*m).is_some_and(|t| t.role == Role::User));
        }
        prop_assert!(c.events.windows(2).all(|w| w[0].timestamp <= w[1].timestamp));
        prop_assert!(c.turns.windows(2).all(|w| w[0].timestamp <= w[1].timestamp));
        if let Some(before) = previous.conversations.get(id) {
            prop_assert!(c.turns.len() >= before.turns.len());
            prop_assert_eq!(&c.turns[..before.turns.len()], &before.turns[..]);
            prop_assert_eq!(&c.events[..before.events.len()], &before.events[..]);
        }
    }
    Ok(snap)
}

/// Apply `ops` to a fresh store, checking invariants after every step and
/// reopen-equality on every reopen and at the end.
pub fn run_store_ops(ops: &[StoreOp]) -> Result<(), TestCaseError> {
    use persona_core::store::StoreError;
    use persona_core::{ChatTurn, Role, Store};

    let dir = tempfile::tempdir().unwrap();
    let mut store = Store::open(dir.path()).unwrap();
    let mut personas: Vec<String> = Vec::new();
    let mut conversations: Vec<String> = Vec::new();
    let mut snap = store.snapshot();

    for op in ops {
        match op {
            StoreOp::NewPersona => {
                let p = profile(personas.len());
                personas.push(store.save_persona(&p).unwrap());
            }
            StoreOp::NewConversation(i) => {
                if !personas.is_empty() {
                    let pid = &personas[i % personas.len()];
                    conversations.push(store.new_conversation(pid).unwrap());
                }
            }
            StoreOp::Append(i, user, text) => {
                if !conversations.is_empty() {
                    let cid = &conversations[i % conversations.len()];
                    let role = if *user { Role::User } else { Role::Assistant };
                    let expected = store.conversation(cid).unwrap().turns.len();
                    match ChatTurn::new(role, text.clone()) {
                        Ok(turn) => prop_assert_eq!(store.append_turn(cid, &turn).unwrap(), expected),
                        Err(_) => prop_assert!(text.trim().is_empty()),
                    }
                }
            }
            StoreOp::Mark(i, t) | StoreOp::Unmark(i, t) => {
                if !conversations.is_empty() {
                    let cid = &conversations[i % conversations.len()];
                    let conv = store.conversation(cid).unwrap();
                    let result = if matches!(op, StoreOp::Mark(..)) {
                        store.mark_question(cid, *t)
                    } else {
                        store.unmark_question(cid, *t)
                    };
                    match conv.turns.get(*t) {
                        None => {
                            let ok = matches!(result, Err(StoreError::TurnNotFound { .. }));
                            prop_assert!(ok)
                        }
                        Some(turn) if turn.role != Role::User => {
                            let ok = matches!(result, Err(StoreError::NotAUserTurn { .. }));
                            prop_assert!(ok)
                        }
                        Some(_) => prop_assert!(result.is_ok()),
                    }
                }
            }
            StoreOp::Annotate(i, note) => {
                if !conversations.is_empty() {
                    let cid = &conversations[i % conversations.len()];
                    match store.annotate(cid, note) {
                        Ok(e) => prop_assert_eq!(&e.payload, note),
                        Err(_) => prop_assert!(note.trim().is_empty()),
                    }
                }
            }
            StoreOp::Export(i, marked_only) => {
                if !conversations.is_empty() {
                    let cid = &conversations[i % conversations.len()];
                    let script = store.export_interview_script(cid, *marked_only).unwrap();
                    let conv = store.conversation(cid).unwrap();
                    for item in &script.items {
                        prop_assert_eq!(conv.turns[item.turn_index].role, Role::User);
                        if *marked_only {
                            prop_assert!(conv.marked.contains(&item.turn_index));
                        }
                    }
                }
            }
            StoreOp::EditPersona(i) => {
                if !personas.is_empty() {
                    let mut p = store.load_persona(&personas[i % personas.len()]).unwrap();
                    p.description.push('!');
                    store.update_persona(&p, "description edited").unwrap();
                }
            }
            StoreOp::Reopen => {
                let before = store.snapshot();
                drop(store);
                store = Store::open(dir.path()).unwrap();
                prop_assert_eq!(store.snapshot(), before);
            }
        }
        snap = check_store_invariants(&store, &snap)?;
    }

    let before = store.snapshot();
    drop(store);
    let reopened = Store::open(dir.path()).unwrap();
    prop_assert_eq!(reopened.snapshot(), before);
    Ok(())
}
