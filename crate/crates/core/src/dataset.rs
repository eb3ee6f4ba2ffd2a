//! Corpus of refactoring scenarios: loading, validation against a Java
//! toolchain, and filtering.
//!
//! On-disk layout:
//!
//! ```text
//! <root>/instances/<id>/meta            key=value lines: id, tool, refactoring, label
//! <root>/instances/<id>/original/**.java
//! <root>/instances/<id>/resulting/**.java
//! <root>/instances/<id>/test/Test.java  only when label=BC
//! <root>/instances/<id>/logs/           optional stored logs
//! ```

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::executor::{ExecError, JavaToolchain, TestOutcome};
use crate::metamorph::index::strip_comments;

pub const JAVA_SUFFIX: &str = ".java";

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Tool {
    Eclipse,
    NetBeans,
    IntelliJ,
    Other,
}

impl FromStr for Tool {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let lower = s.trim().to_ascii_lowercase();
        Ok(match lower.as_str() {
            "eclipse" => Tool::Eclipse,
            "netbeans" => Tool::NetBeans,
            "intellij" | "intellij-idea" | "intellij idea" | "idea" => Tool::IntelliJ,
            "" => return Err("empty tool".into()),
            _ => Tool::Other,
        })
    }
}

impl fmt::Display for Tool {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Tool::Eclipse => "Eclipse",
            Tool::NetBeans => "NetBeans",
            Tool::IntelliJ => "IntelliJ",
            Tool::Other => "Other",
        })
    }
}

/// Ground-truth label of an instance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Label {
    /// Behavioral change: both versions compile, a test tells them apart.
    #[serde(rename = "BC")]
    Bc,
    /// Compilation error: the resulting program does not compile.
    #[serde(rename = "CE")]
    Ce,
    #[serde(rename = "PRESERVING")]
    Preserving,
}

impl FromStr for Label {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "BC" => Ok(Label::Bc),
            "CE" => Ok(Label::Ce),
            "PRESERVING" => Ok(Label::Preserving),
            other => Err(format!("unknown label `{other}`")),
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Label::Bc => "BC",
            Label::Ce => "CE",
            Label::Preserving => "PRESERVING",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SourceFile {
    pub path: String,
    pub content: String,
}

/// Ordered set of Java files making up one program version.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SourceSet {
    files: Vec<SourceFile>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SourceSetError {
    #[error("duplicate path `{0}`")]
    DuplicatePath(String),
    #[error("`{0}` is not a Java source file")]
    NotJava(String),
    #[error("`{0}` is empty")]
    EmptyContent(String),
}

impl SourceSet {
    pub fn new(files: Vec<SourceFile>) -> Result<Self, SourceSetError> {
        let mut seen = HashSet::new();
        for f in &files {
            if !f.path.ends_with(JAVA_SUFFIX) {
                return Err(SourceSetError::NotJava(f.path.clone()));
            }
            if f.content.is_empty() {
                return Err(SourceSetError::EmptyContent(f.path.clone()));
            }
            if !seen.insert(f.path.as_str()) {
                return Err(SourceSetError::DuplicatePath(f.path.clone()));
            }
        }
        Ok(Self { files })
    }

    /// Convenience for a single-file program.
    pub fn single(path: impl Into<String>, content: impl Into<String>) -> Result<Self, SourceSetError> {
        Self::new(vec![SourceFile { path: path.into(), content: content.into() }])
    }

    pub fn files(&self) -> &[SourceFile] {
        &self.files
    }

    pub fn is_empty(&self) -> bool {
        self.files.is_empty()
    }

    pub fn len(&self) -> usize {
        self.files.len()
    }

    pub fn get(&self, path: &str) -> Option<&SourceFile> {
        self.files.iter().find(|f| f.path == path)
    }

    /// All files concatenated in order, separated by a blank line. This is the
    /// text shown to a model for multi-file programs.
    pub fn concatenated(&self) -> String {
        let mut out = String::new();
        for (i, f) in self.files.iter().enumerate() {
            if i > 0 {
                out.push('\n');
            }
            out.push_str(&f.content);
            if !f.content.ends_with('\n') {
                out.push('\n');
            }
        }
        out
    }

    /// Non-blank lines after removing comments.
    pub fn loc(&self) -> usize {
        self.files
            .iter()
            .map(|f| strip_comments(&f.content).lines().filter(|l| !l.trim().is_empty()).count())
            .sum()
    }

    pub(crate) fn replace_contents(&self, contents: Vec<String>) -> SourceSet {
        let files = self
            .files
            .iter()
            .zip(contents)
            .map(|(f, content)| SourceFile { path: f.path.clone(), content })
            .collect();
        SourceSet { files }
    }
}

/// A single Java compilation unit (used for tests).
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct JavaSource {
    /// Simple name of the public class; determines the file name.
    pub class_name: String,
    pub text: String,
}

impl JavaSource {
    pub fn file_name(&self) -> String {
        format!("{}{JAVA_SUFFIX}", self.class_name)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BugInstance {
    pub id: String,
    pub tool: Tool,
    pub refactoring_type: String,
    pub label: Label,
    pub original: SourceSet,
    pub resulting: SourceSet,
    pub exposing_test: Option<JavaSource>,
    pub loc_original: usize,
    /// Optional stored unified diff; computed from the sources when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diff: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum InstanceError {
    #[error("label BC requires an exposing test")]
    MissingTestForBC,
    #[error("label {0} must not carry an exposing test")]
    UnexpectedTest(Label),
    #[error("{0} program has no source files")]
    EmptySourceSet(&'static str),
}

impl BugInstance {
    pub fn new(
        id: impl Into<String>,
        tool: Tool,
        refactoring_type: impl Into<String>,
        label: Label,
        original: SourceSet,
        resulting: SourceSet,
        exposing_test: Option<JavaSource>,
    ) -> Result<Self, InstanceError> {
        match (label, &exposing_test) {
            (Label::Bc, None) => return Err(InstanceError::MissingTestForBC),
            (Label::Ce | Label::Preserving, Some(_)) => return Err(InstanceError::UnexpectedTest(label)),
            _ => {}
        }
        if original.is_empty() {
            return Err(InstanceError::EmptySourceSet("original"));
        }
        if resulting.is_empty() {
            return Err(InstanceError::EmptySourceSet("resulting"));
        }
        let loc_original = original.loc();
        Ok(Self {
            id: id.into(),
            tool,
            refactoring_type: refactoring_type.into(),
            label,
            original,
            resulting,
            exposing_test,
            loc_original,
            diff: None,
        })
    }

    /// Unified diff from the original to the resulting program.
    pub fn unified_diff(&self) -> String {
        if let Some(d) = &self.diff {
            return d.clone();
        }
        unified_diff(&self.original, &self.resulting)
    }
}

/// Per-file unified diff with `a/` and `b/` headers. Files present on one
/// side only diff against `/dev/null`.
pub fn unified_diff(original: &SourceSet, resulting: &SourceSet) -> String {
    let mut paths: Vec<&str> = original.files().iter().map(|f| f.path.as_str()).collect();
    for f in resulting.files() {
        if !paths.contains(&f.path.as_str()) {
            paths.push(&f.path);
        }
    }
    let mut out = String::new();
    for path in paths {
        let old = original.get(path).map_or("", |f| f.content.as_str());
        let new = resulting.get(path).map_or("", |f| f.content.as_str());
        if old == new {
            continue;
        }
        let old_header = if original.get(path).is_some() { format!("a/{path}") } else { "/dev/null".into() };
        let new_header = if resulting.get(path).is_some() { format!("b/{path}") } else { "/dev/null".into() };
        let diff = similar::TextDiff::from_lines(old, new);
        let text = diff
            .unified_diff()
            .context_radius(3)
            .header(&old_header, &new_header)
            .to_string();
        out.push_str(&text);
    }
    out
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusCounts {
    pub total: usize,
    pub n_bc: usize,
    pub n_ce: usize,
    pub n_preserving: usize,
}

/// Immutable collection of instances. Counts are derived on demand.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BugCorpus {
    instances: Vec<BugInstance>,
}

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("{dir}: missing or incomplete metadata ({detail})")]
    MissingMetadata { dir: PathBuf, detail: String },
    #[error("{dir}: duplicate instance id `{id}`")]
    DuplicateId { dir: PathBuf, id: String },
    #[error("{dir}: label BC requires test/Test.java")]
    MissingTestForBC { dir: PathBuf },
    #[error("{dir}: {which} program has no .java files")]
    EmptySourceSet { dir: PathBuf, which: &'static str },
    #[error("{dir}: {detail}")]
    Malformed { dir: PathBuf, detail: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl DatasetError {
    fn io(path: &Path, source: std::io::Error) -> Self {
        DatasetError::Io { path: path.to_path_buf(), source }
    }
}

impl BugCorpus {
    pub fn new(instances: Vec<BugInstance>) -> Result<Self, DatasetError> {
        let mut seen = HashSet::new();
        for inst in &instances {
            if !seen.insert(inst.id.as_str()) {
                return Err(DatasetError::DuplicateId { dir: PathBuf::from(&inst.id), id: inst.id.clone() });
            }
        }
        Ok(Self { instances })
    }

    pub fn instances(&self) -> &[BugInstance] {
        &self.instances
    }

    pub fn get(&self, id: &str) -> Option<&BugInstance> {
        self.instances.iter().find(|i| i.id == id)
    }

    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    pub fn counts(&self) -> CorpusCounts {
        let mut c = CorpusCounts { total: self.instances.len(), ..Default::default() };
        for inst in &self.instances {
            match inst.label {
                Label::Bc => c.n_bc += 1,
                Label::Ce => c.n_ce += 1,
                Label::Preserving => c.n_preserving += 1,
            }
        }
        c
    }

    /// Keeps instances for which `pred(label, tool, refactoring_type)` holds,
    /// preserving order.
    pub fn filter<F>(&self, pred: F) -> BugCorpus
    where
        F: Fn(Label, &Tool, &str) -> bool,
    {
        BugCorpus {
            instances: self
                .instances
                .iter()
                .filter(|i| pred(i.label, &i.tool, &i.refactoring_type))
                .cloned()
                .collect(),
        }
    }
}

pub fn filter_corpus<F>(corpus: &BugCorpus, pred: F) -> BugCorpus
where
    F: Fn(Label, &Tool, &str) -> bool,
{
    corpus.filter(pred)
}

/// Result of a lenient load: well-formed instances plus one error per
/// rejected instance directory.
#[derive(Debug)]
pub struct CorpusLoad {
    pub corpus: BugCorpus,
    pub rejected: Vec<DatasetError>,
}

fn parse_meta(text: &str) -> BTreeMap<String, String> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .filter_map(|l| l.split_once('='))
        .map(|(k, v)| (k.trim().to_string(), v.trim().trim_matches('"').to_string()))
        .collect()
}

fn collect_java(root: &Path, dir: &Path, out: &mut Vec<SourceFile>) -> Result<(), DatasetError> {
    let mut entries: Vec<_> = fs::read_dir(dir)
        .map_err(|e| DatasetError::io(dir, e))?
        .collect::<Result<_, _>>()
        .map_err(|e| DatasetError::io(dir, e))?;
    entries.sort_by_key(|e| e.file_name());
    for entry in entries {
        let path = entry.path();
        if path.is_dir() {
            collect_java(root, &path, out)?;
        } else if path.extension().is_some_and(|e| e == "java") {
            let content = fs::read_to_string(&path).map_err(|e| DatasetError::io(&path, e))?;
            let rel = path
                .strip_prefix(root)
                .unwrap_or(&path)
                .components()
                .map(|c| c.as_os_str().to_string_lossy().into_owned())
                .collect::<Vec<_>>()
                .join("/");
            out.push(SourceFile { path: rel, content });
        }
    }
    Ok(())
}

fn read_source_set(dir: &Path, which: &'static str, inst_dir: &Path) -> Result<SourceSet, DatasetError> {
    let mut files = Vec::new();
    if dir.is_dir() {
        collect_java(dir, dir, &mut files)?;
    }
    if files.is_empty() {
        return Err(DatasetError::EmptySourceSet { dir: inst_dir.to_path_buf(), which });
    }
    SourceSet::new(files).map_err(|e| DatasetError::Malformed { dir: inst_dir.to_path_buf(), detail: e.to_string() })
}

/// Reads one instance directory.
pub fn load_instance(dir: &Path) -> Result<BugInstance, DatasetError> {
    let meta_path = dir.join("meta");
    let meta_text = fs::read_to_string(&meta_path).map_err(|e| DatasetError::MissingMetadata {
        dir: dir.to_path_buf(),
        detail: format!("cannot read meta: {e}"),
    })?;
    let meta = parse_meta(&meta_text);
    let field = |key: &str| {
        meta.get(key).filter(|v| !v.is_empty()).cloned().ok_or_else(|| DatasetError::MissingMetadata {
            dir: dir.to_path_buf(),
            detail: format!("key `{key}` absent"),
        })
    };
    let id = field("id")?;
    let tool: Tool = field("tool")?
        .parse()
        .map_err(|detail| DatasetError::MissingMetadata { dir: dir.to_path_buf(), detail })?;
    let refactoring = field("refactoring")?;
    let label: Label = field("label")?
        .parse()
        .map_err(|detail| DatasetError::MissingMetadata { dir: dir.to_path_buf(), detail })?;

    let original = read_source_set(&dir.join("original"), "original", dir)?;
    let resulting = read_source_set(&dir.join("resulting"), "resulting", dir)?;

    let test_path = dir.join("test").join("Test.java");
    let exposing_test = if test_path.is_file() {
        let text = fs::read_to_string(&test_path).map_err(|e| DatasetError::io(&test_path, e))?;
        let class_name = crate::verdict::public_class_name(&text).map_err(|e| DatasetError::Malformed {
            dir: dir.to_path_buf(),
            detail: format!("test/Test.java: {e}"),
        })?;
        Some(JavaSource { class_name, text })
    } else {
        None
    };

    let mut inst = BugInstance::new(id, tool, refactoring, label, original, resulting, exposing_test).map_err(
        |e| match e {
            InstanceError::MissingTestForBC => DatasetError::MissingTestForBC { dir: dir.to_path_buf() },
            InstanceError::EmptySourceSet(which) => DatasetError::EmptySourceSet { dir: dir.to_path_buf(), which },
            other => DatasetError::Malformed { dir: dir.to_path_buf(), detail: other.to_string() },
        },
    )?;
    let diff_path = dir.join("diff");
    if diff_path.is_file() {
        inst.diff = Some(fs::read_to_string(&diff_path).map_err(|e| DatasetError::io(&diff_path, e))?);
    }
    Ok(inst)
}

fn instance_dirs(root: &Path) -> Result<Vec<PathBuf>, DatasetError> {
    let base = root.join("instances");
    let mut dirs: Vec<PathBuf> = fs::read_dir(&base)
        .map_err(|e| DatasetError::io(&base, e))?
        .filter_map(Result::ok)
        .map(|e| e.path())
        .filter(|p| p.is_dir())
        .collect();
    dirs.sort();
    Ok(dirs)
}

/// Loads every instance, collecting per-directory failures instead of
/// aborting on the first one.
pub fn load_corpus_report(root: &Path) -> Result<CorpusLoad, DatasetError> {
    let mut instances = Vec::new();
    let mut rejected = Vec::new();
    let mut seen = HashSet::new();
    for dir in instance_dirs(root)? {
        match load_instance(&dir) {
            Ok(inst) => {
                if seen.insert(inst.id.clone()) {
                    instances.push(inst);
                } else {
                    rejected.push(DatasetError::DuplicateId { dir, id: inst.id });
                }
            }
            Err(e) => rejected.push(e),
        }
    }
    Ok(CorpusLoad { corpus: BugCorpus { instances }, rejected })
}

/// Strict load: the first malformed instance directory fails the call.
pub fn load_corpus(root: &Path) -> Result<BugCorpus, DatasetError> {
    let mut load = load_corpus_report(root)?;
    if !load.rejected.is_empty() {
        return Err(load.rejected.remove(0));
    }
    Ok(load.corpus)
}

/// Writes an instance in the on-disk layout.
pub fn write_instance(root: &Path, inst: &BugInstance) -> std::io::Result<PathBuf> {
    let dir = root.join("instances").join(&inst.id);
    write_instance_dir(&dir, inst)?;
    Ok(dir)
}

/// Writes an instance's files directly into `dir`.
pub fn write_instance_dir(dir: &Path, inst: &BugInstance) -> std::io::Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(
        dir.join("meta"),
        format!(
            "id={}\ntool={}\nrefactoring={}\nlabel={}\n",
            inst.id, inst.tool, inst.refactoring_type, inst.label
        ),
    )?;
    for (sub, set) in [("original", &inst.original), ("resulting", &inst.resulting)] {
        for f in set.files() {
            let p = dir.join(sub).join(&f.path);
            if let Some(parent) = p.parent() {
                fs::create_dir_all(parent)?;
            }
            fs::write(p, &f.content)?;
        }
    }
    if let Some(test) = &inst.exposing_test {
        fs::create_dir_all(dir.join("test"))?;
        fs::write(dir.join("test").join("Test.java"), &test.text)?;
    }
    if let Some(diff) = &inst.diff {
        fs::write(dir.join("diff"), diff)?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub instance_id: String,
    pub label: Label,
    pub original_compiles: bool,
    pub resulting_compiles: bool,
    pub test_compiles_on_both: Option<bool>,
    pub test_discriminates: Option<bool>,
    pub ground_truth_confirmed: bool,
    /// Set when validation could not confirm the label; the instance should
    /// be excluded from runs rather than aborting them.
    pub quarantined: bool,
    pub timed_out: bool,
    pub toolchain_version: String,
    pub logs: String,
}

/// Compiles both versions (and runs the exposing test for BC instances) and
/// checks the observations against the label.
pub fn validate_instance(inst: &BugInstance, exec: &dyn JavaToolchain) -> Result<ValidationReport, ExecError> {
    let mut logs = String::new();
    let orig = exec.compile(&inst.original, &format!("{}-orig", inst.id))?;
    logs.push_str(&format!("== compile original (success={})\n{}\n", orig.success, orig.diagnostics));
    let res = exec.compile(&inst.resulting, &format!("{}-res", inst.id))?;
    logs.push_str(&format!("== compile resulting (success={})\n{}\n", res.success, res.diagnostics));

    let mut test_compiles_on_both = None;
    let mut test_discriminates = None;
    let mut timed_out = false;
    let mut test_confirms = false;
    if let Some(test) = &inst.exposing_test {
        let d = crate::executor::check_discriminating(exec, test, &inst.original, &inst.resulting, &inst.id)?;
        logs.push_str(&format!(
            "== test on original: {:?}\n{}\n== test on resulting: {:?}\n{}\n",
            d.on_original.outcome, d.on_original.runner_output, d.on_resulting.outcome, d.on_resulting.runner_output
        ));
        timed_out = d.on_original.outcome == TestOutcome::Timeout || d.on_resulting.outcome == TestOutcome::Timeout;
        test_compiles_on_both = Some(d.compiled_on_both());
        test_discriminates = Some(d.discriminates);
        test_confirms = d.on_original.outcome == TestOutcome::Pass && d.on_resulting.outcome == TestOutcome::Fail;
    }

    let ground_truth_confirmed = match inst.label {
        Label::Ce => orig.success && !res.success,
        Label::Bc => orig.success && res.success && test_confirms,
        Label::Preserving => orig.success && res.success,
    };
    Ok(ValidationReport {
        instance_id: inst.id.clone(),
        label: inst.label,
        original_compiles: orig.success,
        resulting_compiles: res.success,
        test_compiles_on_both,
        test_discriminates,
        ground_truth_confirmed,
        quarantined: !ground_truth_confirmed,
        timed_out,
        toolchain_version: exec.version(),
        logs,
    })
}
