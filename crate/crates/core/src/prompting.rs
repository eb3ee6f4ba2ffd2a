//! Prompt templates and rendering by placeholder substitution.
//!
//! Payloads are spliced in verbatim; no escaping is applied.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub const FULL_SOURCE_V1: &str = include_str!("../templates/full_source_v1.txt");
pub const DIFF_ONLY_V1: &str = include_str!("../templates/diff_only_v1.txt");

const CODE1: &str = "{code1}";
const CODE2: &str = "{code2}";
const DIFF: &str = "{diff}";
const JSON_RULE: &str = "Return ONLY valid JSON";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptKind {
    FullSource,
    DiffOnly,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PromptError {
    #[error("program text is empty")]
    EmptyProgram,
    #[error("diff is empty")]
    EmptyDiff,
    #[error("diff has no added or removed lines")]
    NoChangeLines,
    #[error("template must contain `{0}` exactly once (found {1})")]
    Placeholder(&'static str, usize),
    #[error("template lacks the instruction \"Return ONLY valid JSON\"")]
    MissingJsonInstruction,
    #[error("cannot read template {path}: {detail}")]
    Io { path: String, detail: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptTemplate {
    pub kind: PromptKind,
    pub body: String,
    /// `full-source-v1`, `diff-only-v1`, or `file:<sha256 prefix>` for overrides.
    pub version: String,
}

fn placeholders(kind: PromptKind) -> &'static [&'static str] {
    match kind {
        PromptKind::FullSource => &[CODE1, CODE2],
        PromptKind::DiffOnly => &[DIFF],
    }
}

impl PromptTemplate {
    pub fn full_source() -> Self {
        Self { kind: PromptKind::FullSource, body: FULL_SOURCE_V1.to_string(), version: "full-source-v1".into() }
    }

    pub fn diff_only() -> Self {
        Self { kind: PromptKind::DiffOnly, body: DIFF_ONLY_V1.to_string(), version: "diff-only-v1".into() }
    }

    pub fn builtin(kind: PromptKind) -> Self {
        match kind {
            PromptKind::FullSource => Self::full_source(),
            PromptKind::DiffOnly => Self::diff_only(),
        }
    }

    pub fn from_text(kind: PromptKind, body: String, version: String) -> Result<Self, PromptError> {
        for p in placeholders(kind) {
            let n = body.matches(p).count();
            if n != 1 {
                return Err(PromptError::Placeholder(p, n));
            }
        }
        if !body.contains(JSON_RULE) {
            return Err(PromptError::MissingJsonInstruction);
        }
        Ok(Self { kind, body, version })
    }

    /// Loads an override template; its version is derived from the content.
    pub fn from_file(kind: PromptKind, path: &Path) -> Result<Self, PromptError> {
        let body = fs::read_to_string(path)
            .map_err(|e| PromptError::Io { path: path.display().to_string(), detail: e.to_string() })?;
        let digest = hex::encode(Sha256::digest(body.as_bytes()));
        Self::from_text(kind, body, format!("file:{}", &digest[..12]))
    }

    /// Splices payloads into the placeholders in body order. Each payload
    /// is paired with its placeholder.
    fn splice(&self, payloads: &[(&str, &str)]) -> String {
        let mut positions: Vec<(usize, &str, &str)> = payloads
            .iter()
            .map(|(ph, text)| (self.body.find(ph).expect("validated placeholder"), *ph, *text))
            .collect();
        positions.sort_by_key(|p| p.0);
        let mut out = String::with_capacity(self.body.len() + payloads.iter().map(|p| p.1.len()).sum::<usize>());
        let mut last = 0;
        for (pos, ph, text) in positions {
            out.push_str(&self.body[last..pos]);
            out.push_str(text);
            last = pos + ph.len();
        }
        out.push_str(&self.body[last..]);
        out
    }

    pub fn render_full(&self, code1: &str, code2: &str) -> Result<String, PromptError> {
        assert_eq!(self.kind, PromptKind::FullSource, "template kind mismatch");
        if code1.is_empty() || code2.is_empty() {
            return Err(PromptError::EmptyProgram);
        }
        Ok(self.splice(&[(CODE1, code1), (CODE2, code2)]))
    }

    pub fn render_diff(&self, diff: &str) -> Result<String, PromptError> {
        assert_eq!(self.kind, PromptKind::DiffOnly, "template kind mismatch");
        if diff.is_empty() {
            return Err(PromptError::EmptyDiff);
        }
        if !has_change_lines(diff) {
            return Err(PromptError::NoChangeLines);
        }
        Ok(self.splice(&[(DIFF, diff)]))
    }
}

/// True when the diff adds or removes at least one line (file headers
/// `---`/`+++` do not count).
pub fn has_change_lines(diff: &str) -> bool {
    diff.lines().any(|l| {
        (l.starts_with('+') && !l.starts_with("+++")) || (l.starts_with('-') && !l.starts_with("---"))
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RenderedPrompt {
    pub kind: PromptKind,
    pub text: String,
    pub instance_id: String,
    pub variant_tag: Option<String>,
    pub template_version: String,
}

impl RenderedPrompt {
    /// Hex SHA-256 of the prompt text.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.text.as_bytes()))
    }

    pub fn with_context(mut self, instance_id: &str, variant_tag: Option<&str>) -> Self {
        self.instance_id = instance_id.to_string();
        self.variant_tag = variant_tag.map(str::to_string);
        self
    }
}

/// Renders the built-in full-source prompt.
pub fn render_full_prompt(code1: &str, code2: &str) -> Result<RenderedPrompt, PromptError> {
    render_full_with(&PromptTemplate::full_source(), code1, code2)
}

pub fn render_full_with(t: &PromptTemplate, code1: &str, code2: &str) -> Result<RenderedPrompt, PromptError> {
    Ok(RenderedPrompt {
        kind: PromptKind::FullSource,
        text: t.render_full(code1, code2)?,
        instance_id: String::new(),
        variant_tag: None,
        template_version: t.version.clone(),
    })
}

/// Renders the built-in diff-only prompt.
pub fn render_diff_prompt(diff: &str) -> Result<RenderedPrompt, PromptError> {
    render_diff_with(&PromptTemplate::diff_only(), diff)
}

pub fn render_diff_with(t: &PromptTemplate, diff: &str) -> Result<RenderedPrompt, PromptError> {
    Ok(RenderedPrompt {
        kind: PromptKind::DiffOnly,
        text: t.render_diff(diff)?,
        instance_id: String::new(),
        variant_tag: None,
        template_version: t.version.clone(),
    })
}
