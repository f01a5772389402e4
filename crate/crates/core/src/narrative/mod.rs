//! Page summaries, page-level background instructions, and the bounded
//! instruction memory that carries style across pages.

mod openai;

use std::collections::VecDeque;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use openai::{OpenAiProvider, ProviderConfig, API_KEY_ENV};

/// System prompt for page summaries.
pub const SUMMARIZE_TEMPLATE: &str = include_str!("../../assets/prompts/summarize_v1.txt");
/// System prompt for page instructions.
pub const INSTRUCT_TEMPLATE: &str = include_str!("../../assets/prompts/instruct_v1.txt");

pub const MAX_SUMMARY_WORDS: usize = 5;
pub const DEFAULT_WINDOW: usize = 3;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("provider {provider_id} failed: {message}")]
pub struct ProviderError {
    pub provider_id: String,
    pub message: String,
    pub retriable: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum NarrativeError {
    #[error(transparent)]
    Provider(#[from] ProviderError),
    #[error("degenerate summary from provider {provider_id}")]
    DegenerateSummary { provider_id: String },
    #[error("empty instruction from provider {provider_id}")]
    EmptyInstruction { provider_id: String },
    #[error("no conditioning signal: need a page summary or a user prompt")]
    NoConditioningSignal,
    #[error("document run failed at page position {failed_at} (last completed: {last_completed:?}): {source}")]
    Document {
        failed_at: usize,
        last_completed: Option<usize>,
        #[source]
        source: Box<NarrativeError>,
    },
    #[error("bank file {path}: {message}")]
    BankFile { path: String, message: String },
}

impl NarrativeError {
    pub fn is_provider_error(&self) -> bool {
        match self {
            NarrativeError::Provider(_) => true,
            NarrativeError::Document { source, .. } => source.is_provider_error(),
            _ => false,
        }
    }
}

/// Text completion backend.
pub trait TextProvider: Send + Sync {
    fn id(&self) -> &str;
    fn complete(&self, system_prompt: &str, user_payload: &str) -> Result<String, ProviderError>;
}

/// Offline, deterministic provider.
///
/// Summaries: the first five whitespace tokens of the page text,
/// lowercased, punctuation stripped. Instructions:
/// `background: <summary>; style: <prompt>; continue: <newest prior instruction>`,
/// with `none` for anything missing.
#[derive(Debug, Clone, Default)]
pub struct StubProvider;

impl StubProvider {
    fn summarize(payload: &str) -> String {
        payload
            .split_whitespace()
            .map(|tok| {
                tok.chars()
                    .filter(|c| !c.is_ascii_punctuation())
                    .collect::<String>()
                    .to_lowercase()
            })
            .filter(|tok| !tok.is_empty())
            .take(MAX_SUMMARY_WORDS)
            .collect::<Vec<_>>()
            .join(" ")
    }

    fn instruct(payload: &str) -> String {
        let mut summary = None;
        let mut prompt = None;
        let mut last = None;
        for line in payload.lines() {
            if let Some(v) = line.strip_prefix("previous: ") {
                last = Some(v);
            } else if let Some(v) = line.strip_prefix("prompt: ") {
                prompt = Some(v);
            } else if let Some(v) = line.strip_prefix("summary: ") {
                summary = Some(v);
            }
        }
        format!(
            "background: {}; style: {}; continue: {}",
            summary.unwrap_or("none"),
            prompt.unwrap_or("none"),
            last.unwrap_or("none")
        )
    }
}

impl TextProvider for StubProvider {
    fn id(&self) -> &str {
        "stub"
    }

    fn complete(&self, system_prompt: &str, user_payload: &str) -> Result<String, ProviderError> {
        let header = system_prompt.lines().next().unwrap_or_default();
        if header.starts_with("template: summarize/") {
            Ok(Self::summarize(user_payload))
        } else if header.starts_with("template: instruct/") {
            Ok(Self::instruct(user_payload))
        } else {
            Err(ProviderError {
                provider_id: self.id().into(),
                message: format!("unknown template header {header:?}"),
                retriable: false,
            })
        }
    }
}

/// Collapses whitespace and strips one layer of surrounding quotes.
pub fn normalize_output(raw: &str) -> String {
    let collapsed = raw.split_whitespace().collect::<Vec<_>>().join(" ");
    let quotes: &[(char, char)] = &[('"', '"'), ('\'', '\''), ('“', '”'), ('‘', '’'), ('`', '`')];
    for &(open, close) in quotes {
        if let Some(inner) = collapsed.strip_prefix(open).and_then(|s| s.strip_suffix(close)) {
            return inner.trim().to_string();
        }
    }
    collapsed
}

fn first_sentence(s: &str) -> &str {
    let bytes = s.as_bytes();
    for (i, c) in s.char_indices() {
        if matches!(c, '.' | '!' | '?') {
            let end = i + c.len_utf8();
            if end == s.len() || bytes[end].is_ascii_whitespace() {
                return &s[..end];
            }
        }
    }
    s
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PageSummary {
    pub page_index: usize,
    pub words: Vec<String>,
    /// Provider output before normalization.
    pub raw: String,
}

impl PageSummary {
    pub fn phrase(&self) -> String {
        self.words.join(" ")
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }
}

/// Summarizes page text into at most five lowercase words.
pub fn summarize(
    page_index: usize,
    page_text: &str,
    provider: &dyn TextProvider,
) -> Result<PageSummary, NarrativeError> {
    if page_text.trim().is_empty() {
        return Ok(PageSummary {
            page_index,
            words: Vec::new(),
            raw: String::new(),
        });
    }
    let raw = provider.complete(SUMMARIZE_TEMPLATE, page_text)?;
    let words: Vec<String> = normalize_output(&raw)
        .to_lowercase()
        .split_whitespace()
        .take(MAX_SUMMARY_WORDS)
        .map(str::to_string)
        .collect();
    if words.is_empty() {
        return Err(NarrativeError::DegenerateSummary {
            provider_id: provider.id().into(),
        });
    }
    Ok(PageSummary { page_index, words, raw })
}

/// Which signals conditioned an instruction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Conditioning {
    PromptText,
    PromptOnly,
    TextOnly,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub provider_id: String,
    pub mode: Conditioning,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Instruction {
    pub page_index: usize,
    pub text: String,
    pub provenance: Provenance,
}

/// Provider payload for one instruction, in the order it is rendered.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InstructPayload {
    /// Prior instructions, oldest first.
    pub history: Vec<String>,
    pub prompt: Option<String>,
    pub summary: Option<String>,
}

impl InstructPayload {
    pub fn render(&self) -> String {
        let mut lines: Vec<String> = self.history.iter().map(|h| format!("previous: {h}")).collect();
        if let Some(p) = &self.prompt {
            lines.push(format!("prompt: {p}"));
        }
        if let Some(s) = &self.summary {
            lines.push(format!("summary: {s}"));
        }
        lines.join("\n")
    }

    pub fn conditioning(&self) -> Option<Conditioning> {
        match (&self.prompt, &self.summary) {
            (Some(_), Some(_)) => Some(Conditioning::PromptText),
            (Some(_), None) => Some(Conditioning::PromptOnly),
            (None, Some(_)) => Some(Conditioning::TextOnly),
            (None, None) => None,
        }
    }
}

/// Bounded FIFO of prior instructions, most recent last.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NarrativeBank {
    window: usize,
    entries: VecDeque<Instruction>,
}

impl NarrativeBank {
    pub fn new(window: usize) -> Self {
        Self {
            window,
            entries: VecDeque::with_capacity(window),
        }
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub fn entries(&self) -> impl Iterator<Item = &Instruction> {
        self.entries.iter()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn push(&mut self, instruction: Instruction) {
        if self.window == 0 {
            return;
        }
        self.entries.push_back(instruction);
        while self.entries.len() > self.window {
            self.entries.pop_front();
        }
    }

    pub fn load(path: &Path) -> Result<Self, NarrativeError> {
        let err = |message: String| NarrativeError::BankFile {
            path: path.display().to_string(),
            message,
        };
        let text = std::fs::read_to_string(path).map_err(|e| err(e.to_string()))?;
        let bank: Self = serde_json::from_str(&text).map_err(|e| err(e.to_string()))?;
        if bank.entries.len() > bank.window {
            return Err(err(format!(
                "{} entries exceed window {}",
                bank.entries.len(),
                bank.window
            )));
        }
        Ok(bank)
    }

    pub fn save(&self, path: &Path) -> Result<(), NarrativeError> {
        let text = serde_json::to_string_pretty(self).expect("bank serializes");
        std::fs::write(path, text + "\n").map_err(|e| NarrativeError::BankFile {
            path: path.display().to_string(),
            message: e.to_string(),
        })
    }
}

/// Appends `instruction`, evicting the oldest entries beyond the window.
pub fn bank_push(mut bank: NarrativeBank, instruction: Instruction) -> NarrativeBank {
    bank.push(instruction);
    bank
}

pub fn build_payload(
    summary: Option<&PageSummary>,
    user_prompt: Option<&str>,
    bank: &NarrativeBank,
) -> InstructPayload {
    InstructPayload {
        history: bank.entries().map(|u| u.text.clone()).collect(),
        prompt: user_prompt.map(str::trim).filter(|p| !p.is_empty()).map(str::to_string),
        summary: summary.filter(|s| !s.is_empty()).map(PageSummary::phrase),
    }
}

/// Produces the instruction for one page. The bank is read, not updated.
pub fn instruct(
    page_index: usize,
    summary: Option<&PageSummary>,
    user_prompt: Option<&str>,
    bank: &NarrativeBank,
    provider: &dyn TextProvider,
) -> Result<Instruction, NarrativeError> {
    let payload = build_payload(summary, user_prompt, bank);
    instruct_with_payload(page_index, &payload, provider)
}

fn instruct_with_payload(
    page_index: usize,
    payload: &InstructPayload,
    provider: &dyn TextProvider,
) -> Result<Instruction, NarrativeError> {
    let mode = payload.conditioning().ok_or(NarrativeError::NoConditioningSignal)?;
    let raw = provider.complete(INSTRUCT_TEMPLATE, &payload.render())?;
    let normalized = normalize_output(&raw);
    let text = first_sentence(&normalized).to_string();
    if text.is_empty() {
        return Err(NarrativeError::EmptyInstruction {
            provider_id: provider.id().into(),
        });
    }
    Ok(Instruction {
        page_index,
        text,
        provenance: Provenance {
            provider_id: provider.id().into(),
            mode,
        },
    })
}

/// Outcome of a sequential multi-page run.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DocumentRun {
    pub instructions: Vec<Instruction>,
    /// Payload sent for each page, in page order.
    pub payloads: Vec<InstructPayload>,
    /// Bank contents before each page was instructed.
    pub banks_before: Vec<NarrativeBank>,
    pub bank: NarrativeBank,
}

/// Instructs pages in order, pushing each instruction into the bank before
/// moving on. `summaries[i]` may be `None` for prompt-only operation.
pub fn run_document(
    summaries: &[Option<PageSummary>],
    page_indices: &[usize],
    user_prompt: Option<&str>,
    bank: NarrativeBank,
    provider: &dyn TextProvider,
) -> Result<DocumentRun, NarrativeError> {
    assert_eq!(summaries.len(), page_indices.len(), "one page index per summary");
    let mut bank = bank;
    let mut run = DocumentRun {
        instructions: Vec::with_capacity(summaries.len()),
        payloads: Vec::with_capacity(summaries.len()),
        banks_before: Vec::with_capacity(summaries.len()),
        bank: NarrativeBank::new(bank.window()),
    };
    for (pos, (summary, &page_index)) in summaries.iter().zip(page_indices).enumerate() {
        let payload = build_payload(summary.as_ref(), user_prompt, &bank);
        let instruction =
            instruct_with_payload(page_index, &payload, provider).map_err(|e| NarrativeError::Document {
                failed_at: pos,
                last_completed: pos.checked_sub(1),
                source: Box::new(e),
            })?;
        run.banks_before.push(bank.clone());
        run.payloads.push(payload);
        bank.push(instruction.clone());
        run.instructions.push(instruction);
    }
    run.bank = bank;
    Ok(run)
}
