//! Derives four initial text prompts from a loose theme phrase by asking a
//! language model for comma-separated phrase lists.
//!
//! Both the language model and the translator sit behind small async traits.
//! The HTTP implementations speak a plain-text contract: `POST <endpoint>`
//! with a `text/plain; charset=utf-8` body, answered by `200` and a plain
//! text body. The translator additionally sends the source language in the
//! `X-Source-Language` header and expects English back.

use std::collections::VecDeque;
use std::sync::Arc;
use std::time::Duration;

use async_trait::async_trait;
use parking_lot::Mutex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Number of prompt variants requested from the language model.
pub const PROMPT_VARIANTS: usize = 4;

const FALLBACK_VARIANTS: [&str; 3] = ["upbeat tempo", "slow tempo", "ambient mood"];

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ClientError {
    #[error("client unavailable: {0}")]
    Unavailable(String),
    #[error("client returned status {status}: {body}")]
    Status { status: u16, body: String },
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum DeriveError {
    #[error("theme phrase is empty")]
    EmptyTheme,
    #[error("response contained {found} phrase lists, expected {PROMPT_VARIANTS}")]
    TooFewLists { found: usize },
}

/// Text query in, text response out.
#[async_trait]
pub trait LanguageModelClient: Send + Sync {
    async fn complete(&self, query: &str) -> Result<String, ClientError>;
}

#[async_trait]
pub trait TranslationClient: Send + Sync {
    /// Translates `text` written in `source_locale` into English.
    async fn translate(&self, text: &str, source_locale: &str) -> Result<String, ClientError>;
}

/// Why a derivation fell back to template prompts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "reason", content = "detail", rename_all = "kebab-case")]
pub enum Degradation {
    /// The language model answered twice without four usable lists.
    Unparseable,
    /// A client could not be reached; the message is kept for diagnostics.
    ClientUnavailable(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DerivationResult {
    pub prompts: Vec<String>,
    pub raw_response: String,
    pub translated_theme: Option<String>,
    pub degraded: Option<Degradation>,
}

impl DerivationResult {
    pub fn is_degraded(&self) -> bool {
        self.degraded.is_some()
    }
}

/// Builds the language-model query for `theme`. Double quotes inside the
/// theme become single quotes because the template wraps it in double quotes.
pub fn build_derivation_query(theme: &str) -> String {
    assert!(!theme.trim().is_empty(), "theme phrase must not be empty");
    let theme = theme.replace('"', "'");
    format!(
        "Please give me four variational lists of comma-separated phrases describing what does a music clip of \"{theme}\" sound."
    )
}

fn strip_list_marker(line: &str) -> &str {
    let line = line.trim_start();
    for bullet in ['-', '*', '•'] {
        if let Some(rest) = line.strip_prefix(bullet) {
            return rest.trim_start();
        }
    }
    let digits = line.bytes().take_while(u8::is_ascii_digit).count();
    if digits > 0 {
        let rest = &line[digits..];
        if let Some(rest) = rest.strip_prefix('.').or_else(|| rest.strip_prefix(')')) {
            return rest.trim_start();
        }
    }
    line
}

fn strip_quotes(text: &str) -> &str {
    const QUOTES: [char; 5] = ['"', '\'', '“', '”', '`'];
    let mut text = text.trim();
    loop {
        let mut chars = text.chars();
        match (chars.next(), chars.next_back()) {
            (Some(a), Some(b)) if QUOTES.contains(&a) && QUOTES.contains(&b) => {
                text = chars.as_str().trim();
            }
            _ => return text,
        }
    }
}

fn clean_candidate(line: &str) -> Option<String> {
    let line = line.trim();
    // Headings such as "Here are four lists, one per mood:" introduce lists
    // rather than being one.
    if line.is_empty() || line.ends_with(':') {
        return None;
    }
    let mut body = strip_quotes(strip_list_marker(line));
    // "Dreamy and ethereal: soft pads, ..." carries a short title before the
    // actual list.
    if let Some((label, rest)) = body.split_once(':') {
        if !label.contains(',') && label.split_whitespace().count() <= 5 && !rest.trim().is_empty() {
            body = strip_quotes(rest);
        }
    }
    let body = strip_quotes(body.trim_end_matches('.'));
    let phrases: Vec<&str> = body
        .split(',')
        .map(str::trim)
        .filter(|p| !p.is_empty())
        .collect();
    if phrases.len() < 2 {
        return None;
    }
    Some(phrases.join(", "))
}

/// Extracts exactly four comma-separated phrase lists from a language-model
/// response, taking the first four when more are present.
pub fn parse_phrase_lists(response: &str) -> Result<Vec<String>, DeriveError> {
    let lists: Vec<String> = response
        .lines()
        .filter_map(clean_candidate)
        .take(PROMPT_VARIANTS)
        .collect();
    if lists.len() < PROMPT_VARIANTS {
        return Err(DeriveError::TooFewLists { found: lists.len() });
    }
    Ok(lists)
}

/// Template prompts used when the language model cannot provide usable lists.
pub fn fallback_prompts(theme: &str) -> Vec<String> {
    let base = format!("{} style music, melodic, instrumental", theme.trim());
    std::iter::once(base.clone())
        .chain(FALLBACK_VARIANTS.iter().map(|v| format!("{base}, {v}")))
        .collect()
}

fn is_english(locale: &str) -> bool {
    locale
        .split(['-', '_'])
        .next()
        .is_some_and(|primary| primary.eq_ignore_ascii_case("en"))
}

/// True when more than 30% of the characters fall outside printable ASCII.
pub fn mostly_non_ascii(text: &str) -> bool {
    let total = text.chars().count();
    if total == 0 {
        return false;
    }
    let outside = text.chars().filter(|c| !(' '..='~').contains(c)).count();
    outside as f64 / total as f64 > 0.3
}

pub fn needs_translation(theme: &str, locale: &str) -> bool {
    !is_english(locale) || mostly_non_ascii(theme)
}

/// Turns a theme phrase into four prompts. Never fails once the theme is
/// non-empty: unreachable clients and unusable responses produce template
/// prompts flagged as degraded.
pub async fn derive_initial_prompts(
    theme: &str,
    locale: &str,
    lm: &dyn LanguageModelClient,
    translator: &dyn TranslationClient,
) -> Result<DerivationResult, DeriveError> {
    let theme = theme.trim();
    if theme.is_empty() {
        return Err(DeriveError::EmptyTheme);
    }

    let mut translation_issue = None;
    let mut translated_theme = None;
    if needs_translation(theme, locale) {
        match translator.translate(theme, locale).await {
            Ok(text) if !text.trim().is_empty() => translated_theme = Some(text.trim().to_string()),
            Ok(_) => {}
            Err(err) => {
                tracing::warn!(%err, "translation failed; using the theme as typed");
                translation_issue = Some(Degradation::ClientUnavailable(err.to_string()));
            }
        }
    }
    let english_theme = translated_theme.as_deref().unwrap_or(theme);
    let query = build_derivation_query(english_theme);

    let mut raw_response = String::new();
    let mut degraded = None;
    for attempt in 0..2 {
        match lm.complete(&query).await {
            Ok(response) => match parse_phrase_lists(&response) {
                Ok(prompts) => {
                    return Ok(DerivationResult {
                        prompts,
                        raw_response: response,
                        translated_theme,
                        degraded: translation_issue,
                    })
                }
                Err(err) => {
                    tracing::debug!(attempt, %err, "unusable language model response");
                    raw_response = response;
                    degraded = Some(Degradation::Unparseable);
                }
            },
            Err(err) => {
                tracing::warn!(attempt, %err, "language model request failed");
                degraded = Some(Degradation::ClientUnavailable(err.to_string()));
            }
        }
    }

    Ok(DerivationResult {
        prompts: fallback_prompts(english_theme),
        raw_response,
        translated_theme,
        degraded,
    })
}

/// Language model reached over HTTP with the plain-text contract.
pub struct HttpLanguageModel {
    endpoint: String,
    client: reqwest::Client,
}

impl HttpLanguageModel {
    pub fn new(endpoint: impl Into<String>, timeout: Duration) -> Self {
        Self {
            endpoint: endpoint.into(),
            client: plain_client(timeout),
        }
    }
}

fn plain_client(timeout: Duration) -> reqwest::Client {
    reqwest::Client::builder()
        .timeout(timeout)
        .build()
        .expect("default TLS backend must initialize")
}

async fn post_plain(request: reqwest::RequestBuilder) -> Result<String, ClientError> {
    let response = request
        .header(reqwest::header::CONTENT_TYPE, "text/plain; charset=utf-8")
        .send()
        .await
        .map_err(|e| ClientError::Unavailable(e.to_string()))?;
    let status = response.status();
    let body = response
        .text()
        .await
        .map_err(|e| ClientError::Unavailable(e.to_string()))?;
    if !status.is_success() {
        return Err(ClientError::Status {
            status: status.as_u16(),
            body,
        });
    }
    Ok(body)
}

#[async_trait]
impl LanguageModelClient for HttpLanguageModel {
    async fn complete(&self, query: &str) -> Result<String, ClientError> {
        let request = self.client.post(&self.endpoint).body(query.to_string());
        post_plain(request).await
    }
}

pub struct HttpTranslator {
    endpoint: String,
    client: reqwest::Client,
}

impl HttpTranslator {
    pub fn new(endpoint: impl Into<String>, timeout: Duration) -> Self {
        Self {
            endpoint: endpoint.into(),
            client: plain_client(timeout),
        }
    }
}

#[async_trait]
impl TranslationClient for HttpTranslator {
    async fn translate(&self, text: &str, source_locale: &str) -> Result<String, ClientError> {
        let request = self
            .client
            .post(&self.endpoint)
            .header("X-Source-Language", source_locale)
            .body(text.to_string());
        post_plain(request).await
    }
}

/// Returns its input unchanged.
#[derive(Debug, Default, Clone, Copy)]
pub struct PassThroughTranslator;

#[async_trait]
impl TranslationClient for PassThroughTranslator {
    async fn translate(&self, text: &str, _source_locale: &str) -> Result<String, ClientError> {
        Ok(text.to_string())
    }
}

/// Deterministic language model for tests and offline demos.
///
/// Scripted responses are consumed in order; once the script runs out, the
/// default response (if any) is returned for every query.
#[derive(Default)]
pub struct FixtureLanguageModel {
    script: Mutex<VecDeque<Result<String, ClientError>>>,
    default: Option<String>,
    queries: Mutex<Vec<String>>,
}

impl FixtureLanguageModel {
    /// Always answers with `response`.
    pub fn constant(response: impl Into<String>) -> Self {
        Self {
            default: Some(response.into()),
            ..Self::default()
        }
    }

    /// Answers with each scripted result once, then fails as unavailable.
    pub fn scripted(script: impl IntoIterator<Item = Result<String, ClientError>>) -> Self {
        Self {
            script: Mutex::new(script.into_iter().collect()),
            ..Self::default()
        }
    }

    /// Answers every query with four generic phrase lists built from the
    /// quoted theme in the query.
    pub fn echo_theme() -> EchoThemeModel {
        EchoThemeModel
    }

    /// Queries received so far.
    pub fn queries(&self) -> Vec<String> {
        self.queries.lock().clone()
    }
}

#[async_trait]
impl LanguageModelClient for FixtureLanguageModel {
    async fn complete(&self, query: &str) -> Result<String, ClientError> {
        self.queries.lock().push(query.to_string());
        if let Some(next) = self.script.lock().pop_front() {
            return next;
        }
        self.default
            .clone()
            .ok_or_else(|| ClientError::Unavailable("fixture script exhausted".into()))
    }
}

/// See [`FixtureLanguageModel::echo_theme`].
#[derive(Debug, Default, Clone, Copy)]
pub struct EchoThemeModel;

#[async_trait]
impl LanguageModelClient for EchoThemeModel {
    async fn complete(&self, query: &str) -> Result<String, ClientError> {
        let theme = query
            .split('"')
            .nth(1)
            .ok_or_else(|| ClientError::Unavailable("query has no quoted theme".into()))?;
        Ok(format!(
            "1. {theme}, warm piano, soft strings\n\
             2. {theme}, punchy drums, synth bass\n\
             3. {theme}, ambient pads, slow tempo\n\
             4. {theme}, acoustic guitar, light percussion\n"
        ))
    }
}

/// A language model that is never reachable; every derivation degrades to the
/// template prompts.
#[derive(Debug, Default, Clone, Copy)]
pub struct OfflineLanguageModel;

#[async_trait]
impl LanguageModelClient for OfflineLanguageModel {
    async fn complete(&self, _query: &str) -> Result<String, ClientError> {
        Err(ClientError::Unavailable("no language model endpoint configured".into()))
    }
}

#[async_trait]
impl<T: LanguageModelClient + ?Sized> LanguageModelClient for Arc<T> {
    async fn complete(&self, query: &str) -> Result<String, ClientError> {
        (**self).complete(query).await
    }
}

#[async_trait]
impl<T: TranslationClient + ?Sized> TranslationClient for Arc<T> {
    async fn translate(&self, text: &str, source_locale: &str) -> Result<String, ClientError> {
        (**self).translate(text, source_locale).await
    }
}
