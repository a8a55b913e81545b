//! Text prompts with provenance and the instrument modifier algebra.
//!
//! A prompt is rendered as its base text followed by zero or more trailing
//! modifier clauses, each introduced by `", "`:
//!
//! ```text
//! calm piano, soft strings, with strong flute, with no drums
//! \______ base ___________/ \____ modifiers ___________/
//! ```
//!
//! Each instrument appears in at most one modifier. Re-applying an
//! instrument replaces its clause in place so toggling never reorders text.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ids::PromptId;

const AMPLIFY_PREFIX: &str = "with strong ";
const SUPPRESS_PREFIX: &str = "with no ";
const CLAUSE_SEPARATOR: &str = ", ";

/// Instruments offered by the interface. The engine accepts any token.
pub const INSTRUMENT_VOCABULARY: [&str; 9] = [
    "piano", "guitar", "drums", "bass", "strings", "flute", "trumpet", "synth", "vocals",
];

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PromptEditError {
    #[error("instrument name is empty")]
    EmptyInstrument,
    #[error("instrument name {0:?} contains a comma")]
    InvalidInstrument(String),
    #[error("prompt text is empty")]
    EmptyPrompt,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModifierMode {
    Amplify,
    Suppress,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Modifier {
    pub instrument: String,
    pub mode: ModifierMode,
}

impl Modifier {
    pub fn new(instrument: impl Into<String>, mode: ModifierMode) -> Self {
        Self {
            instrument: instrument.into(),
            mode,
        }
    }

    pub fn render(&self) -> String {
        match self.mode {
            ModifierMode::Amplify => format!("{AMPLIFY_PREFIX}{}", self.instrument),
            ModifierMode::Suppress => format!("{SUPPRESS_PREFIX}{}", self.instrument),
        }
    }

    fn parse_clause(clause: &str) -> Option<Self> {
        let (mode, rest) = if let Some(rest) = clause.strip_prefix(AMPLIFY_PREFIX) {
            (ModifierMode::Amplify, rest)
        } else if let Some(rest) = clause.strip_prefix(SUPPRESS_PREFIX) {
            (ModifierMode::Suppress, rest)
        } else {
            return None;
        };
        // Only accept the canonical (already normalized) spelling so that
        // stripping is the exact inverse of rendering.
        if rest.is_empty() || rest != normalize_instrument_name(rest) {
            return None;
        }
        Some(Self::new(rest, mode))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PromptOrigin {
    Derived,
    UserEdited,
    ModifierApplied,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TextPrompt {
    pub id: PromptId,
    pub text: String,
    pub base_text: String,
    pub modifiers: Vec<Modifier>,
    pub origin: PromptOrigin,
    pub parent_prompt: Option<PromptId>,
}

impl TextPrompt {
    /// A prompt produced by prompt derivation (no parent).
    pub fn derived(text: impl Into<String>) -> Self {
        Self::from_text(text.into(), PromptOrigin::Derived, None)
    }

    /// A prompt typed by the user without an existing prompt to edit.
    pub fn user(text: impl Into<String>) -> Self {
        Self::from_text(text.into(), PromptOrigin::UserEdited, None)
    }

    fn from_text(text: String, origin: PromptOrigin, parent_prompt: Option<PromptId>) -> Self {
        let (base_text, modifiers) = strip_modifiers(&text);
        Self {
            id: PromptId::new(),
            text,
            base_text,
            modifiers,
            origin,
            parent_prompt,
        }
    }

    pub fn modifier_for(&self, instrument: &str) -> Option<&Modifier> {
        self.modifiers.iter().find(|m| m.instrument == instrument)
    }
}

/// Lowercases and collapses internal whitespace.
pub fn normalize_instrument_name(instrument: &str) -> String {
    instrument
        .split_whitespace()
        .map(str::to_lowercase)
        .collect::<Vec<_>>()
        .join(" ")
}

/// Renders base text followed by each modifier clause in list order.
pub fn render(base: &str, modifiers: &[Modifier]) -> String {
    let mut text = base.to_string();
    for m in modifiers {
        if !text.is_empty() {
            text.push_str(CLAUSE_SEPARATOR);
        }
        text.push_str(&m.render());
    }
    text
}

/// Splits trailing modifier clauses off `text`, scanning right to left.
///
/// Stops at the first clause that is not a modifier, at a clause not preceded
/// by `", "`, or at a repeated instrument; everything left of that point is the
/// base.
pub fn strip_modifiers(text: &str) -> (String, Vec<Modifier>) {
    let mut base = text;
    let mut modifiers: Vec<Modifier> = Vec::new();

    while let Some(split) = base.rfind(CLAUSE_SEPARATOR) {
        let clause = &base[split + CLAUSE_SEPARATOR.len()..];
        let Some(modifier) = Modifier::parse_clause(clause) else {
            break;
        };
        if modifiers.iter().any(|m| m.instrument == modifier.instrument) {
            break;
        }
        modifiers.push(modifier);
        base = &base[..split];
    }

    modifiers.reverse();
    (base.to_string(), modifiers)
}

/// Amplifies or suppresses `instrument` in `prompt`, replacing an existing
/// modifier for the same instrument in place.
pub fn apply_instrument_modifier(
    prompt: &TextPrompt,
    instrument: &str,
    mode: ModifierMode,
) -> Result<TextPrompt, PromptEditError> {
    let instrument = normalize_instrument_name(instrument);
    if instrument.is_empty() {
        return Err(PromptEditError::EmptyInstrument);
    }
    if instrument.contains(',') {
        return Err(PromptEditError::InvalidInstrument(instrument));
    }

    let mut modifiers = prompt.modifiers.clone();
    match modifiers.iter_mut().find(|m| m.instrument == instrument) {
        Some(existing) => existing.mode = mode,
        None => modifiers.push(Modifier::new(instrument, mode)),
    }

    Ok(TextPrompt {
        id: PromptId::new(),
        text: render(&prompt.base_text, &modifiers),
        base_text: prompt.base_text.clone(),
        modifiers,
        origin: PromptOrigin::ModifierApplied,
        parent_prompt: Some(prompt.id),
    })
}

/// Replaces the prompt text with free text typed by the user.
pub fn edit_prompt(prompt: &TextPrompt, new_text: &str) -> Result<TextPrompt, PromptEditError> {
    if new_text.trim().is_empty() {
        return Err(PromptEditError::EmptyPrompt);
    }
    Ok(TextPrompt::from_text(
        new_text.to_string(),
        PromptOrigin::UserEdited,
        Some(prompt.id),
    ))
}
