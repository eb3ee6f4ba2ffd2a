use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::sync::{Condvar, Mutex, OnceLock};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use wait_timeout::ChildExt;

use super::{CompileResult, ExecError, JavaToolchain, TestOutcome, TestRunResult};
use crate::dataset::{JavaSource, SourceSet};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct JdkConfig {
    pub javac: PathBuf,
    pub java: PathBuf,
    /// JUnit jars (JUnit 4, or JUnit 5 with the vintage engine).
    pub junit_classpath: Vec<PathBuf>,
    /// Main class of the test runner.
    pub runner_main: String,
    pub timeout: Duration,
    /// Parent for per-task workspaces; the system temp dir when unset.
    pub workspace_root: Option<PathBuf>,
    /// Per-task logs of every process invocation.
    pub log_dir: Option<PathBuf>,
    /// Upper bound on concurrently running JDK processes.
    pub max_processes: usize,
}

impl Default for JdkConfig {
    fn default() -> Self {
        Self {
            javac: PathBuf::from("javac"),
            java: PathBuf::from("java"),
            junit_classpath: Vec::new(),
            runner_main: "org.junit.runner.JUnitCore".into(),
            timeout: Duration::from_secs(30),
            workspace_root: None,
            log_dir: None,
            max_processes: 4,
        }
    }
}

impl JdkConfig {
    /// Builds a config from `JAVA_HOME` / `PATH` and `JUNIT_CLASSPATH`, or
    /// `None` when no `javac` can be found.
    pub fn detect() -> Option<Self> {
        let mut cfg = JdkConfig::default();
        if let Ok(home) = std::env::var("JAVA_HOME") {
            let bin = Path::new(&home).join("bin");
            if bin.join("javac").is_file() {
                cfg.javac = bin.join("javac");
                cfg.java = bin.join("java");
            }
        }
        if let Ok(cp) = std::env::var("JUNIT_CLASSPATH") {
            cfg.junit_classpath = std::env::split_paths(&cp).collect();
        }
        let probe = Command::new(&cfg.javac).arg("-version").output().ok()?;
        probe.status.success().then_some(cfg)
    }
}

/// Counting semaphore bounding concurrent external processes.
#[derive(Debug)]
struct ProcessPool {
    free: Mutex<usize>,
    cv: Condvar,
}

impl ProcessPool {
    fn acquire(&self) -> PoolGuard<'_> {
        let mut free = self.free.lock().unwrap();
        while *free == 0 {
            free = self.cv.wait(free).unwrap();
        }
        *free -= 1;
        PoolGuard { pool: self }
    }
}

struct PoolGuard<'a> {
    pool: &'a ProcessPool,
}

impl Drop for PoolGuard<'_> {
    fn drop(&mut self) {
        *self.pool.free.lock().unwrap() += 1;
        self.pool.cv.notify_one();
    }
}

#[derive(Debug)]
pub struct JdkToolchain {
    cfg: JdkConfig,
    pool: ProcessPool,
    version: OnceLock<String>,
}

struct ProcOutput {
    exit_ok: bool,
    timed_out: bool,
    output: String,
}

fn sanitize(tag: &str) -> String {
    tag.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect()
}

impl JdkToolchain {
    pub fn new(cfg: JdkConfig) -> Self {
        let pool = ProcessPool { free: Mutex::new(cfg.max_processes.max(1)), cv: Condvar::new() };
        Self { cfg, pool, version: OnceLock::new() }
    }

    pub fn config(&self) -> &JdkConfig {
        &self.cfg
    }

    fn workspace(&self, tag: &str) -> Result<tempfile::TempDir, ExecError> {
        let mut builder = tempfile::Builder::new();
        let prefix = format!("{}-", sanitize(tag));
        builder.prefix(&prefix);
        let dir = match &self.cfg.workspace_root {
            Some(root) => {
                fs::create_dir_all(root).map_err(|e| ExecError::WorkspaceCreationFailed(e.to_string()))?;
                builder.tempdir_in(root)
            }
            None => builder.tempdir(),
        };
        dir.map_err(|e| ExecError::WorkspaceCreationFailed(e.to_string()))
    }

    fn write_sources(ws: &Path, src: &SourceSet) -> Result<Vec<PathBuf>, ExecError> {
        let mut paths = Vec::new();
        for f in src.files() {
            let p = ws.join("src").join(&f.path);
            if let Some(parent) = p.parent() {
                fs::create_dir_all(parent).map_err(|e| ExecError::WorkspaceCreationFailed(e.to_string()))?;
            }
            fs::write(&p, &f.content).map_err(|e| ExecError::WorkspaceCreationFailed(e.to_string()))?;
            paths.push(p);
        }
        Ok(paths)
    }

    fn classpath(&self, extra: Option<&Path>) -> String {
        let mut entries: Vec<PathBuf> = extra.into_iter().map(Path::to_path_buf).collect();
        entries.extend(self.cfg.junit_classpath.iter().cloned());
        std::env::join_paths(entries)
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default()
    }

    fn log(&self, tag: &str, cmd: &Command, out: &ProcOutput) {
        let Some(dir) = &self.cfg.log_dir else { return };
        if fs::create_dir_all(dir).is_err() {
            return;
        }
        let path = dir.join(format!("{}.log", sanitize(tag)));
        if let Ok(mut f) = OpenOptions::new().create(true).append(true).open(path) {
            let _ = writeln!(
                f,
                "$ {:?}\n# exit_ok={} timed_out={}\n{}",
                cmd, out.exit_ok, out.timed_out, out.output
            );
        }
    }

    fn run(&self, mut cmd: Command, ws: &Path, tag: &str) -> Result<ProcOutput, ExecError> {
        let out_path = ws.join("process.out");
        let out_file = File::create(&out_path).map_err(|e| ExecError::WorkspaceCreationFailed(e.to_string()))?;
        let err_file = out_file.try_clone().map_err(|e| ExecError::WorkspaceCreationFailed(e.to_string()))?;
        cmd.current_dir(ws).stdin(Stdio::null()).stdout(out_file).stderr(err_file);
        let _slot = self.pool.acquire();
        let mut child = cmd.spawn().map_err(|e| {
            ExecError::ToolchainUnavailable(format!("{:?}: {e}", cmd.get_program()))
        })?;
        let status = child
            .wait_timeout(self.cfg.timeout)
            .map_err(|e| ExecError::ToolchainUnavailable(e.to_string()))?;
        let (exit_ok, timed_out) = match status {
            Some(s) => (s.success(), false),
            None => {
                let _ = child.kill();
                let _ = child.wait();
                (false, true)
            }
        };
        let output = fs::read_to_string(&out_path).unwrap_or_default();
        let result = ProcOutput { exit_ok, timed_out, output };
        self.log(tag, &cmd, &result);
        Ok(result)
    }

    fn javac(&self, ws: &Path, files: &[PathBuf], tag: &str) -> Result<ProcOutput, ExecError> {
        let classes = ws.join("classes");
        fs::create_dir_all(&classes).map_err(|e| ExecError::WorkspaceCreationFailed(e.to_string()))?;
        let mut cmd = Command::new(&self.cfg.javac);
        cmd.arg("-encoding").arg("UTF-8").arg("-nowarn").arg("-d").arg(&classes);
        let cp = self.classpath(None);
        if !cp.is_empty() {
            cmd.arg("-cp").arg(cp);
        }
        cmd.args(files);
        self.run(cmd, ws, tag)
    }
}

fn classify_run(out: &ProcOutput) -> TestOutcome {
    if out.timed_out {
        TestOutcome::Timeout
    } else if out.exit_ok {
        TestOutcome::Pass
    } else if out.output.contains("FAILURES!!!") || out.output.contains("tests failed") {
        TestOutcome::Fail
    } else {
        TestOutcome::Error
    }
}

impl JavaToolchain for JdkToolchain {
    fn compile(&self, src: &SourceSet, tag: &str) -> Result<CompileResult, ExecError> {
        if src.is_empty() {
            return Err(ExecError::WorkspaceCreationFailed("source set is empty".into()));
        }
        let ws = self.workspace(tag)?;
        let files = Self::write_sources(ws.path(), src)?;
        let start = Instant::now();
        let out = self.javac(ws.path(), &files, tag)?;
        Ok(CompileResult {
            success: out.exit_ok,
            diagnostics: if out.timed_out { format!("compiler timed out\n{}", out.output) } else { out.output },
            elapsed: start.elapsed(),
        })
    }

    fn run_test(&self, program: &SourceSet, test: &JavaSource, tag: &str) -> Result<TestRunResult, ExecError> {
        if program.is_empty() {
            return Err(ExecError::WorkspaceCreationFailed("source set is empty".into()));
        }
        let ws = self.workspace(tag)?;
        let mut files = Self::write_sources(ws.path(), program)?;
        let test_path = ws.path().join("test").join(test.file_name());
        fs::create_dir_all(ws.path().join("test")).map_err(|e| ExecError::WorkspaceCreationFailed(e.to_string()))?;
        fs::write(&test_path, &test.text).map_err(|e| ExecError::WorkspaceCreationFailed(e.to_string()))?;
        files.push(test_path);

        let start = Instant::now();
        let compiled = self.javac(ws.path(), &files, tag)?;
        if !compiled.exit_ok {
            return Ok(TestRunResult {
                outcome: if compiled.timed_out { TestOutcome::Timeout } else { TestOutcome::DidNotCompile },
                runner_output: compiled.output,
                elapsed: start.elapsed(),
            });
        }
        let fqcn = match crate::verdict::package_of(&test.text) {
            Some(pkg) => format!("{pkg}.{}", test.class_name),
            None => test.class_name.clone(),
        };
        let mut cmd = Command::new(&self.cfg.java);
        cmd.arg("-cp").arg(self.classpath(Some(&ws.path().join("classes"))));
        cmd.arg(&self.cfg.runner_main).arg(fqcn);
        let out = self.run(cmd, ws.path(), tag)?;
        Ok(TestRunResult { outcome: classify_run(&out), runner_output: out.output, elapsed: start.elapsed() })
    }

    fn version(&self) -> String {
        self.version
            .get_or_init(|| {
                Command::new(&self.cfg.javac)
                    .arg("-version")
                    .output()
                    .map(|o| {
                        let text = String::from_utf8_lossy(&o.stdout).into_owned() + &String::from_utf8_lossy(&o.stderr);
                        text.trim().to_string()
                    })
                    .unwrap_or_else(|_| "unavailable".into())
            })
            .clone()
    }
}
