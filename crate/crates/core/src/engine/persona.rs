use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::engine::EngineError;
use crate::theme::Theme;

/// User-entered attributes from the profile form.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PersonaAttributes {
    pub theme: Theme,
    pub name: String,
    pub age: u32,
    pub occupation: String,
    pub medical_condition: String,
}

impl PersonaAttributes {
    pub fn validate(&self) -> Result<(), EngineError> {
        let invalid = |field: &str, message: &str| {
            Err(EngineError::Invalid {
                field: field.into(),
                message: message.into(),
            })
        };
        if self.name.trim().is_empty() {
            return invalid("profile.name", "name must be non-empty");
        }
        if self.age == 0 {
            return invalid("profile.age", "age must be greater than zero");
        }
        if self.occupation.trim().is_empty() {
            return invalid("profile.occupation", "occupation must be non-empty");
        }
        if self.medical_condition.trim().is_empty() {
            return invalid("profile.Medical Condition", "medical condition must be non-empty");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AbilityRef {
    pub theme: Theme,
    pub name: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PersonaProfile {
    pub persona_id: String,
    #[serde(flatten)]
    pub attributes: PersonaAttributes,
    pub selected_abilities: Vec<AbilityRef>,
    pub description: String,
    pub system_prompt: String,
    pub created_at: DateTime<Utc>,
    #[serde(default)]
    pub deleted: bool,
}

/// Creation response; the first three keys are the creation contract,
/// `persona_id` is the library extension.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CreatedPersona {
    pub description: String,
    pub system_prompt: String,
    pub assistant_message: String,
    pub persona_id: String,
}

pub fn greeting(name: &str) -> String {
    format!("Hello, I'm {}. How can I assist you today?", name.trim())
}
