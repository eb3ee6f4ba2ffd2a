//! Turning raw model text into a structured verdict.

use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::dataset::JavaSource;
use crate::metamorph::index::index_file;
use crate::prompting::PromptKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum VerdictCategory {
    Yes,
    NoCompilationError,
    NoBehaviorChange,
    Unknown,
}

impl VerdictCategory {
    /// The exact string the prompt asks for.
    pub fn as_wire(self) -> &'static str {
        match self {
            VerdictCategory::Yes => "YES",
            VerdictCategory::NoCompilationError => "NO - COMPILATION ERROR",
            VerdictCategory::NoBehaviorChange => "NO - BEHAVIOR CHANGE",
            VerdictCategory::Unknown => "UNKNOWN",
        }
    }

    /// Case-sensitive match; the hyphen may carry zero or one space on
    /// either side.
    pub fn from_wire(s: &str) -> Option<Self> {
        match s {
            "YES" => return Some(VerdictCategory::Yes),
            "UNKNOWN" => return Some(VerdictCategory::Unknown),
            _ => {}
        }
        let rest = s.strip_prefix("NO")?;
        let rest = rest.strip_prefix(' ').unwrap_or(rest);
        let rest = rest.strip_prefix('-')?;
        let rest = rest.strip_prefix(' ').unwrap_or(rest);
        match rest {
            "COMPILATION ERROR" => Some(VerdictCategory::NoCompilationError),
            "BEHAVIOR CHANGE" => Some(VerdictCategory::NoBehaviorChange),
            _ => None,
        }
    }
}

impl fmt::Display for VerdictCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_wire())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelVerdict {
    pub category: VerdictCategory,
    pub explanation: String,
    pub junit_test: Option<String>,
    /// Prose or fences around the JSON object were removed before parsing.
    pub stripped_noise: bool,
    /// Schema deviations that do not invalidate the verdict.
    pub schema_violations: Vec<String>,
}

impl ModelVerdict {
    /// Canonical JSON as requested by the prompt schema.
    pub fn to_canonical_json(&self, mode: PromptKind) -> String {
        let v = match mode {
            PromptKind::FullSource => serde_json::json!({
                "verdict": self.category.as_wire(),
                "explanation": self.explanation,
                "junit_test": self.junit_test,
            }),
            PromptKind::DiffOnly => serde_json::json!({
                "verdict": self.category.as_wire(),
                "explanation": self.explanation,
            }),
        };
        v.to_string()
    }

    pub fn explanation_chars(&self) -> usize {
        self.explanation.chars().count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ParseFailureReason {
    NotJson,
    MissingField,
    IllegalVerdictString,
    IllegalUnknownInFullMode,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParseFailure {
    pub reason: ParseFailureReason,
    /// First 200 characters of the offending text.
    pub excerpt: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ParsedResponse {
    Verdict(ModelVerdict),
    Failure(ParseFailure),
}

impl ParsedResponse {
    pub fn verdict(&self) -> Option<&ModelVerdict> {
        match self {
            ParsedResponse::Verdict(v) => Some(v),
            ParsedResponse::Failure(_) => None,
        }
    }
}

fn excerpt(text: &str) -> String {
    text.chars().take(200).collect()
}

fn fail(reason: ParseFailureReason, text: &str) -> ParsedResponse {
    ParsedResponse::Failure(ParseFailure { reason, excerpt: excerpt(text) })
}

/// Finds the JSON object, stripping surrounding prose and markdown fences.
fn locate_object(text: &str) -> Option<(serde_json::Map<String, Value>, bool)> {
    if let Ok(Value::Object(m)) = serde_json::from_str::<Value>(text.trim()) {
        return Some((m, false));
    }
    let start = text.find('{')?;
    let end = text.rfind('}')?;
    if end < start {
        return None;
    }
    match serde_json::from_str::<Value>(&text[start..=end]) {
        Ok(Value::Object(m)) => Some((m, true)),
        _ => None,
    }
}

/// Parses a model response. Total: every input yields a verdict or a
/// failure value.
pub fn parse_response(text: &str, mode: PromptKind) -> ParsedResponse {
    let Some((obj, stripped_noise)) = locate_object(text) else {
        return fail(ParseFailureReason::NotJson, text);
    };
    let verdict = match obj.get("verdict") {
        None | Some(Value::Null) => return fail(ParseFailureReason::MissingField, text),
        Some(Value::String(s)) => s,
        Some(_) => return fail(ParseFailureReason::IllegalVerdictString, text),
    };
    let Some(category) = VerdictCategory::from_wire(verdict) else {
        return fail(ParseFailureReason::IllegalVerdictString, text);
    };
    if category == VerdictCategory::Unknown && mode == PromptKind::FullSource {
        return fail(ParseFailureReason::IllegalUnknownInFullMode, text);
    }
    let explanation = match obj.get("explanation") {
        Some(Value::String(s)) => s.clone(),
        _ => return fail(ParseFailureReason::MissingField, text),
    };

    let mut schema_violations = Vec::new();
    let junit_test = match obj.get("junit_test") {
        Some(Value::String(s)) if !s.trim().is_empty() => Some(s.clone()),
        Some(Value::String(_)) | Some(Value::Null) => None,
        Some(_) => {
            schema_violations.push("junit_test is neither a string nor null".into());
            None
        }
        None => {
            if mode == PromptKind::FullSource {
                schema_violations.push("junit_test field absent".into());
            }
            None
        }
    };
    if mode == PromptKind::FullSource {
        match (category, &junit_test) {
            (VerdictCategory::NoBehaviorChange, None) => {
                schema_violations.push("NO - BEHAVIOR CHANGE without junit_test".into())
            }
            (VerdictCategory::Yes | VerdictCategory::NoCompilationError, Some(_)) => {
                schema_violations.push("junit_test must be null for this verdict".into())
            }
            _ => {}
        }
    }

    ParsedResponse::Verdict(ModelVerdict { category, explanation, junit_test, stripped_noise, schema_violations })
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MalformedTest {
    #[error("test source does not scan: {0}")]
    Unscannable(String),
    #[error("expected exactly one top-level public class, found {0}")]
    PublicClassCount(usize),
}

/// Name of the single top-level public class in `text`.
pub fn public_class_name(text: &str) -> Result<String, MalformedTest> {
    let fi = index_file("Test.java", text).map_err(|e| MalformedTest::Unscannable(e.to_string()))?;
    let public: Vec<_> = fi.types.iter().filter(|t| t.top_level && t.is_public).collect();
    match public.as_slice() {
        [one] => Ok(one.name.clone()),
        other => Err(MalformedTest::PublicClassCount(other.len())),
    }
}

/// Package declared by a compilation unit, if any.
pub fn package_of(text: &str) -> Option<String> {
    index_file("X.java", text).ok().and_then(|fi| fi.package)
}

fn strip_fences(text: &str) -> &str {
    let trimmed = text.trim();
    let Some(rest) = trimmed.strip_prefix("```") else {
        return text;
    };
    // drop the info string (e.g. "java") on the opening line
    let body = rest.split_once('\n').map_or("", |(_, b)| b);
    body.trim_end().strip_suffix("```").unwrap_or(body)
}

/// The model-provided test as a compilable unit. Markdown fences are
/// removed; the result must hold exactly one top-level public class.
pub fn extract_test_source(v: &ModelVerdict) -> Result<Option<JavaSource>, MalformedTest> {
    let Some(raw) = &v.junit_test else {
        return Ok(None);
    };
    let text = strip_fences(raw).to_string();
    let class_name = public_class_name(&text)?;
    Ok(Some(JavaSource { class_name, text }))
}
