use std::collections::HashMap;
use std::sync::Mutex;
use std::time::Duration;

use sha2::{Digest, Sha256};

use super::{CompileResult, ExecError, JavaToolchain, TestOutcome, TestRunResult};
use crate::dataset::{JavaSource, SourceSet};

/// Stable hash of a source set's paths and contents.
pub fn content_hash(src: &SourceSet) -> String {
    let mut h = Sha256::new();
    for f in src.files() {
        h.update((f.path.len() as u64).to_le_bytes());
        h.update(f.path.as_bytes());
        h.update((f.content.len() as u64).to_le_bytes());
        h.update(f.content.as_bytes());
    }
    hex::encode(h.finalize())
}

/// Key for a scripted test run: program hash plus test hash.
pub fn test_key(program: &SourceSet, test: &JavaSource) -> String {
    let mut h = Sha256::new();
    h.update(test.text.as_bytes());
    format!("{}:{}", content_hash(program), hex::encode(h.finalize()))
}

/// Scripted toolchain: results are looked up by content hash. Unscripted
/// inputs fall back to the configured defaults, or report the toolchain as
/// unavailable when no default is set.
#[derive(Debug, Default)]
pub struct MockToolchain {
    compiles: HashMap<String, CompileResult>,
    tests: HashMap<String, TestOutcome>,
    default_compile: Option<bool>,
    default_test: Option<TestOutcome>,
    calls: Mutex<Vec<String>>,
}

impl MockToolchain {
    pub fn new() -> Self {
        Self::default()
    }

    /// Every unscripted program compiles; unscripted tests get `outcome`.
    pub fn permissive(outcome: TestOutcome) -> Self {
        Self { default_compile: Some(true), default_test: Some(outcome), ..Self::default() }
    }

    pub fn script_compile(&mut self, src: &SourceSet, success: bool, diagnostics: &str) -> &mut Self {
        self.compiles.insert(
            content_hash(src),
            CompileResult { success, diagnostics: diagnostics.into(), elapsed: Duration::ZERO },
        );
        self
    }

    pub fn script_test(&mut self, program: &SourceSet, test: &JavaSource, outcome: TestOutcome) -> &mut Self {
        self.tests.insert(test_key(program, test), outcome);
        self
    }

    /// Tags of every call made so far, in order.
    pub fn calls(&self) -> Vec<String> {
        self.calls.lock().unwrap().clone()
    }

    fn compile_lookup(&self, src: &SourceSet) -> Result<CompileResult, ExecError> {
        if let Some(r) = self.compiles.get(&content_hash(src)) {
            return Ok(r.clone());
        }
        match self.default_compile {
            Some(success) => Ok(CompileResult { success, diagnostics: String::new(), elapsed: Duration::ZERO }),
            None => Err(ExecError::ToolchainUnavailable("mock: unscripted program".into())),
        }
    }
}

impl JavaToolchain for MockToolchain {
    fn compile(&self, src: &SourceSet, tag: &str) -> Result<CompileResult, ExecError> {
        if src.is_empty() {
            return Err(ExecError::WorkspaceCreationFailed("source set is empty".into()));
        }
        self.calls.lock().unwrap().push(format!("compile:{tag}"));
        self.compile_lookup(src)
    }

    fn run_test(&self, program: &SourceSet, test: &JavaSource, tag: &str) -> Result<TestRunResult, ExecError> {
        if program.is_empty() {
            return Err(ExecError::WorkspaceCreationFailed("source set is empty".into()));
        }
        self.calls.lock().unwrap().push(format!("test:{tag}"));
        let outcome = match self.tests.get(&test_key(program, test)) {
            Some(o) => *o,
            None => {
                if !self.compile_lookup(program)?.success {
                    TestOutcome::DidNotCompile
                } else {
                    self.default_test
                        .ok_or_else(|| ExecError::ToolchainUnavailable("mock: unscripted test".into()))?
                }
            }
        };
        Ok(TestRunResult { outcome, runner_output: format!("mock: {outcome:?}"), elapsed: Duration::ZERO })
    }

    fn version(&self) -> String {
        "mock".into()
    }
}
