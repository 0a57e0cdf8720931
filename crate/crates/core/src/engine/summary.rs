//! Extractive interview scripts built from stored conversations.

use chrono::Utc;

use crate::engine::prompt::Role;
use crate::store::{Conversation, InterviewScript, ScriptItem};

/// Text up to and including the first `.`, `!` or `?` that ends the string or
/// is followed by whitespace. Without such a terminator the whole (trimmed)
/// text is returned.
pub fn first_sentence(text: &str) -> &str {
    let text = text.trim();
    let mut iter = text.char_indices().peekable();
    while let Some((i, c)) = iter.next() {
        if matches!(c, '.' | '!' | '?') {
            let end = i + c.len_utf8();
            match iter.peek() {
                None => return text,
                Some((_, next)) if next.is_whitespace() => return &text[..end],
                _ => {}
            }
        }
    }
    text
}

/// Pair every user question with the first sentence of the assistant turn
/// that answers it, in turn order. Unanswered questions get an empty excerpt.
pub fn summarize_conversation(conversation: &Conversation, marked_only: bool) -> InterviewScript {
    let turns = &conversation.turns;
    let items = turns
        .iter()
        .enumerate()
        .filter(|(_, t)| t.role == Role::User)
        .filter(|(_, t)| !marked_only || conversation.marked.contains(&t.turn_index))
        .map(|(pos, t)| {
            let answer = turns
                .get(pos + 1)
                .filter(|next| next.role == Role::Assistant)
                .map(|next| first_sentence(&next.content).to_string())
                .unwrap_or_default();
            ScriptItem {
                turn_index: t.turn_index,
                question: t.content.clone(),
                answer,
            }
        })
        .collect();

    InterviewScript {
        persona_id: conversation.persona_id.clone(),
        conversation_id: conversation.conversation_id.clone(),
        generated_at: Utc::now(),
        marked_only,
        items,
    }
}
