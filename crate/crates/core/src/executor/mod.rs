//! Compiling programs and running single JUnit tests against them.
//!
//! [`JavaToolchain`] is implemented by [`JdkToolchain`] (external `javac` /
//! `java` processes in throwaway workspaces) and by [`MockToolchain`]
//! (a content-hash lookup table for machines without a JDK).

mod jdk;
mod mock;

use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{JavaSource, SourceSet};

pub use jdk::{JdkConfig, JdkToolchain};
pub use mock::{content_hash, test_key, MockToolchain};

#[derive(Debug, Error)]
pub enum ExecError {
    #[error("java toolchain unavailable: {0}")]
    ToolchainUnavailable(String),
    #[error("cannot create workspace: {0}")]
    WorkspaceCreationFailed(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompileResult {
    pub success: bool,
    pub diagnostics: String,
    #[serde(with = "duration_ms")]
    pub elapsed: Duration,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum TestOutcome {
    Pass,
    Fail,
    Error,
    Timeout,
    DidNotCompile,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestRunResult {
    pub outcome: TestOutcome,
    pub runner_output: String,
    #[serde(with = "duration_ms")]
    pub elapsed: Duration,
}

/// Which version the discriminating test passed on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PassingSide {
    Original,
    Resulting,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiscriminationResult {
    pub on_original: TestRunResult,
    pub on_resulting: TestRunResult,
    pub discriminates: bool,
    pub passing_side: Option<PassingSide>,
}

impl DiscriminationResult {
    pub fn from_runs(on_original: TestRunResult, on_resulting: TestRunResult) -> Self {
        let compiled = on_original.outcome != TestOutcome::DidNotCompile
            && on_resulting.outcome != TestOutcome::DidNotCompile;
        let orig_pass = on_original.outcome == TestOutcome::Pass;
        let res_pass = on_resulting.outcome == TestOutcome::Pass;
        let discriminates = compiled && (orig_pass != res_pass);
        let passing_side = match (discriminates, orig_pass) {
            (false, _) => None,
            (true, true) => Some(PassingSide::Original),
            (true, false) => Some(PassingSide::Resulting),
        };
        Self { on_original, on_resulting, discriminates, passing_side }
    }

    pub fn compiled_on_both(&self) -> bool {
        self.on_original.outcome != TestOutcome::DidNotCompile
            && self.on_resulting.outcome != TestOutcome::DidNotCompile
    }
}

pub trait JavaToolchain: Send + Sync {
    /// Compiles all files of `src` together. `tag` names the workspace and
    /// log file so concurrent tasks stay apart.
    fn compile(&self, src: &SourceSet, tag: &str) -> Result<CompileResult, ExecError>;

    /// Compiles `program` plus `test` and runs the test's single test method.
    fn run_test(&self, program: &SourceSet, test: &JavaSource, tag: &str) -> Result<TestRunResult, ExecError>;

    /// Toolchain identification recorded in reports.
    fn version(&self) -> String;
}

/// Runs `test` against both versions in separate workspaces.
pub fn check_discriminating(
    exec: &dyn JavaToolchain,
    test: &JavaSource,
    original: &SourceSet,
    resulting: &SourceSet,
    tag: &str,
) -> Result<DiscriminationResult, ExecError> {
    let on_original = exec.run_test(original, test, &format!("{tag}-test-orig"))?;
    let on_resulting = exec.run_test(resulting, test, &format!("{tag}-test-res"))?;
    Ok(DiscriminationResult::from_runs(on_original, on_resulting))
}

const REFLECTION_MARKERS: &[&str] = &[
    "java.lang.reflect",
    ".getDeclaredMethod(",
    ".getDeclaredField(",
    ".getDeclaredConstructor(",
    ".setAccessible(",
    "Class.forName(",
];

/// Lexical check for reflective access in a test.
pub fn uses_reflection(test: &str) -> bool {
    REFLECTION_MARKERS.iter().any(|m| test.contains(m))
}

/// An executor that has no JDK; every call reports the toolchain missing.
#[derive(Debug, Default, Clone)]
pub struct NoToolchain;

impl JavaToolchain for NoToolchain {
    fn compile(&self, _src: &SourceSet, _tag: &str) -> Result<CompileResult, ExecError> {
        Err(ExecError::ToolchainUnavailable("no compiler configured".into()))
    }

    fn run_test(&self, _p: &SourceSet, _t: &JavaSource, _tag: &str) -> Result<TestRunResult, ExecError> {
        Err(ExecError::ToolchainUnavailable("no compiler configured".into()))
    }

    fn version(&self) -> String {
        "none".into()
    }
}

pub(crate) mod duration_ms {
    use std::time::Duration;

    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u64(d.as_millis() as u64)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        Ok(Duration::from_millis(u64::deserialize(d)?))
    }
}
