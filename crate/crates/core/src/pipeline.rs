//! End-to-end runs (render, query, parse, assess), resumable outcome files,
//! and summary tables.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{mpsc, Arc};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analytics::{union_coverage, MetricReport, RunMatrix};
use crate::assessor::{assess, AnswerLabel, AssessmentOutcome};
use crate::dataset::{BugCorpus, BugInstance, Label};
use crate::executor::JavaToolchain;
use crate::metamorph::{persist_variants, transform_corpus};
use crate::model_client::{
    Backend, BackendConfig, ClientError, ModelClient, StoreMode, Telemetry, Temperature, TranscriptStore,
};
use crate::prompting::{render_diff_with, render_full_with, PromptError, PromptKind, PromptTemplate, RenderedPrompt};
use crate::stats::{cochran_q, holm_correct, mcnemar_exact, wilson_ci, PairedCounts, TestResult};
use crate::verdict::{parse_response, ParseFailureReason, ParsedResponse};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunMode {
    FullSource,
    DiffOnly,
    Preserving,
    Metamorphic,
}

impl std::str::FromStr for RunMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "full" | "full_source" => Ok(RunMode::FullSource),
            "diff" | "diff_only" => Ok(RunMode::DiffOnly),
            "preserving" => Ok(RunMode::Preserving),
            "metamorphic" => Ok(RunMode::Metamorphic),
            _ => Err(format!("unknown mode `{s}` (full, diff, preserving, metamorphic)")),
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub backends: Vec<BackendConfig>,
    pub attempts: u32,
    pub mode: RunMode,
    pub master_seed: Option<u64>,
    /// Temperatures to sweep; empty means each backend's own setting.
    pub temperatures: Vec<Temperature>,
    pub replay: Option<PathBuf>,
    pub record: Option<PathBuf>,
    pub out_dir: PathBuf,
    pub jobs: usize,
    /// Prompt template override.
    pub template: Option<PathBuf>,
    /// Stop after this many new outcome records (simulates an interrupted run).
    pub stop_after: Option<usize>,
}

impl RunConfig {
    pub fn new(out_dir: impl Into<PathBuf>, backends: Vec<BackendConfig>) -> Self {
        Self {
            backends,
            attempts: 1,
            mode: RunMode::FullSource,
            master_seed: None,
            temperatures: Vec::new(),
            replay: None,
            record: None,
            out_dir: out_dir.into(),
            jobs: 1,
            template: None,
            stop_after: None,
        }
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |m: String| Err(PipelineError::Config(m));
        if self.attempts == 0 {
            return bad("attempts must be >= 1".into());
        }
        if self.backends.is_empty() {
            return bad("no backend configured".into());
        }
        if self.mode == RunMode::Metamorphic && self.master_seed.is_none() {
            return bad("metamorphic mode needs --seed".into());
        }
        if self.jobs == 0 {
            return bad("jobs must be >= 1".into());
        }
        if let (Some(a), Some(b)) = (&self.replay, &self.record) {
            if a != b {
                return bad("--replay and --record must name the same store when both are given".into());
            }
        }
        for b in &self.backends {
            b.validate().map_err(PipelineError::Config)?;
        }
        Ok(())
    }

    fn prompt_kind(&self) -> PromptKind {
        match self.mode {
            RunMode::DiffOnly => PromptKind::DiffOnly,
            _ => PromptKind::FullSource,
        }
    }

    fn store_mode(&self) -> Option<(PathBuf, StoreMode)> {
        match (&self.replay, &self.record) {
            (Some(p), Some(_)) => Some((p.clone(), StoreMode::ReplayOrRecord)),
            (Some(p), None) => Some((p.clone(), StoreMode::Replay)),
            (None, Some(p)) => Some((p.clone(), StoreMode::Record)),
            (None, None) => None,
        }
    }

    /// One backend config per (backend, temperature) pair.
    pub fn expanded_backends(&self) -> Vec<BackendConfig> {
        if self.temperatures.is_empty() {
            return self.backends.clone();
        }
        self.backends.iter().flat_map(|b| self.temperatures.iter().map(|t| b.with_temperature(*t))).collect()
    }
}

/// Builds the live backend for one configured model.
pub type BackendFactory = dyn Fn(&BackendConfig) -> Result<Arc<dyn Backend>, String>;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("corpus load failure: {0}")]
    CorpusLoadFailure(String),
    #[error("{path}: {detail}")]
    Io { path: String, detail: String },
    #[error("{path}:{line}: schema mismatch: {detail}")]
    SchemaMismatch { path: String, line: usize, detail: String },
    #[error(transparent)]
    Client(#[from] ClientError),
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> PipelineError {
    PipelineError::Io { path: path.display().to_string(), detail: e.to_string() }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub prompt_hash: Option<String>,
    pub template_version: String,
    pub toolchain_version: String,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CallFailure {
    pub kind: String,
    pub detail: String,
}

/// One line of the outcomes file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutcomeRecord {
    pub schema: u32,
    pub model: String,
    pub temperature: Temperature,
    pub tool: String,
    pub refactoring_type: String,
    #[serde(flatten)]
    pub outcome: AssessmentOutcome,
    pub explanation: Option<String>,
    pub parse_failure: Option<ParseFailureReason>,
    /// Set when the model call itself failed; such records are retried on resume.
    pub error: Option<CallFailure>,
    pub provenance: Provenance,
    pub created_at: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct OutcomeKey {
    pub backend: String,
    pub instance_id: String,
    pub variant_tag: Option<String>,
    pub attempt: u32,
}

impl OutcomeRecord {
    pub fn key(&self) -> OutcomeKey {
        OutcomeKey {
            backend: self.outcome.backend_name.clone(),
            instance_id: self.outcome.instance_id.clone(),
            variant_tag: self.outcome.variant_tag.clone(),
            attempt: self.outcome.attempt_index,
        }
    }

    /// Copy with volatile fields (timestamps, latencies) cleared, for
    /// comparing runs.
    pub fn normalized(&self) -> OutcomeRecord {
        let mut r = self.clone();
        r.created_at = DateTime::<Utc>::UNIX_EPOCH;
        if let Some(e) = r.outcome.evidence.as_mut() {
            e.on_original.elapsed = Default::default();
            e.on_resulting.elapsed = Default::default();
        }
        r
    }
}

/// Reads every record of an outcomes file, in file order.
pub fn read_outcomes(path: &Path) -> Result<Vec<OutcomeRecord>, PipelineError> {
    if !path.exists() {
        return Ok(Vec::new());
    }
    let reader = BufReader::new(File::open(path).map_err(|e| io_err(path, e))?);
    let mut out = Vec::new();
    for (n, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| io_err(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let schema_err = |detail: String| PipelineError::SchemaMismatch {
            path: path.display().to_string(),
            line: n + 1,
            detail,
        };
        let rec: OutcomeRecord = serde_json::from_str(&line).map_err(|e| schema_err(e.to_string()))?;
        if rec.schema != SCHEMA_VERSION {
            return Err(schema_err(format!("schema {} (expected {SCHEMA_VERSION})", rec.schema)));
        }
        out.push(rec);
    }
    Ok(out)
}

fn dedup_last(records: Vec<OutcomeRecord>) -> Vec<OutcomeRecord> {
    let mut pos: HashMap<OutcomeKey, usize> = HashMap::new();
    let mut out: Vec<OutcomeRecord> = Vec::new();
    for r in records {
        match pos.get(&r.key()) {
            Some(&i) => out[i] = r,
            None => {
                pos.insert(r.key(), out.len());
                out.push(r);
            }
        }
    }
    out
}

/// Aggregate latency, token and cost numbers.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TelemetrySummary {
    pub calls: usize,
    pub total_latency_s: f64,
    pub mean_latency_s: f64,
    pub median_latency_s: f64,
    pub min_latency_s: f64,
    pub max_latency_s: f64,
    pub tokens_in: u64,
    pub tokens_out: u64,
    pub tokens_reasoning: u64,
    pub cost: f64,
}

impl TelemetrySummary {
    pub fn from_calls<'a>(calls: impl IntoIterator<Item = &'a Telemetry>) -> Self {
        let calls: Vec<&Telemetry> = calls.into_iter().collect();
        if calls.is_empty() {
            return Self::default();
        }
        let mut lat: Vec<u64> = calls.iter().map(|t| t.latency_us).collect();
        lat.sort_unstable();
        let secs = |us: u64| us as f64 / 1e6;
        let total_us: u64 = lat.iter().sum();
        let n = lat.len();
        let median_us = if n % 2 == 1 { lat[n / 2] as f64 } else { (lat[n / 2 - 1] + lat[n / 2]) as f64 / 2.0 };
        Self {
            calls: n,
            total_latency_s: secs(total_us),
            mean_latency_s: secs(total_us) / n as f64,
            median_latency_s: median_us / 1e6,
            min_latency_s: secs(lat[0]),
            max_latency_s: secs(lat[n - 1]),
            tokens_in: calls.iter().filter_map(|t| t.tokens_in).sum(),
            tokens_out: calls.iter().filter_map(|t| t.tokens_out).sum(),
            tokens_reasoning: calls.iter().filter_map(|t| t.tokens_reasoning).sum(),
            cost: calls.iter().filter_map(|t| t.cost).sum(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunArtifacts {
    pub outcomes: PathBuf,
    pub metrics: Option<PathBuf>,
    pub stats: Option<PathBuf>,
    pub telemetry: BTreeMap<String, TelemetrySummary>,
    pub new_records: usize,
    pub resumed_records: usize,
    pub call_errors: usize,
    pub complete: bool,
}

struct Task {
    client: usize,
    inst: Arc<BugInstance>,
    variant_tag: Option<String>,
    attempt: u32,
}

/// Runs every (backend, temperature, instance, attempt) task not already in
/// the outcomes file, then rewrites the file in task order and computes
/// metrics and statistics.
pub fn run_benchmark(
    cfg: &RunConfig,
    corpus: &BugCorpus,
    exec: &dyn JavaToolchain,
    backend_for: &BackendFactory,
) -> Result<RunArtifacts, PipelineError> {
    cfg.validate()?;
    if corpus.is_empty() {
        return Err(PipelineError::CorpusLoadFailure("corpus is empty".into()));
    }
    fs::create_dir_all(&cfg.out_dir).map_err(|e| io_err(&cfg.out_dir, e))?;
    let template = match &cfg.template {
        Some(p) => PromptTemplate::from_file(cfg.prompt_kind(), p).map_err(|e| PipelineError::Config(e.to_string()))?,
        None => PromptTemplate::builtin(cfg.prompt_kind()),
    };

    let store = match cfg.store_mode() {
        Some((path, mode)) => Some((Arc::new(TranscriptStore::open(&path)?), mode)),
        None => None,
    };
    let mut clients = Vec::new();
    for b in cfg.expanded_backends() {
        let backend = backend_for(&b).map_err(PipelineError::Config)?;
        let mut c = ModelClient::new(b, backend);
        if let Some((s, mode)) = &store {
            c = c.with_store(s.clone(), *mode);
        }
        clients.push(c);
    }

    // Instances to evaluate, paired with their variant tag.
    let mut items: Vec<(Arc<BugInstance>, Option<String>)> = Vec::new();
    match cfg.mode {
        RunMode::Metamorphic => {
            let seed = cfg.master_seed.expect("validated");
            let t = transform_corpus(corpus, seed);
            persist_variants(&cfg.out_dir, corpus, &t).map_err(|e| io_err(&cfg.out_dir, e))?;
            fs::write(
                cfg.out_dir.join("variants").join(seed.to_string()).join("operator_counts.json"),
                serde_json::to_string_pretty(&t.operator_counts).unwrap(),
            )
            .map_err(|e| io_err(&cfg.out_dir, e))?;
            for v in &t.variants {
                let inst = corpus.get(&v.base_instance_id).expect("variant of a corpus instance");
                items.push((Arc::new(v.apply_to(inst)), Some(v.tag())));
            }
        }
        RunMode::Preserving => items.extend(
            corpus.instances().iter().filter(|i| i.label == Label::Preserving).map(|i| (Arc::new(i.clone()), None)),
        ),
        _ => items.extend(corpus.instances().iter().map(|i| (Arc::new(i.clone()), None))),
    }
    if items.is_empty() {
        return Err(PipelineError::CorpusLoadFailure(format!("no instances for mode {:?}", cfg.mode)));
    }

    let mut tasks = Vec::new();
    for (ci, _) in clients.iter().enumerate() {
        for (inst, tag) in &items {
            for attempt in 1..=cfg.attempts {
                tasks.push(Task { client: ci, inst: inst.clone(), variant_tag: tag.clone(), attempt });
            }
        }
    }
    let task_key = |t: &Task| OutcomeKey {
        backend: clients[t.client].cfg.key_name(),
        instance_id: t.inst.id.clone(),
        variant_tag: t.variant_tag.clone(),
        attempt: t.attempt,
    };

    let outcomes_path = cfg.out_dir.join("outcomes.jsonl");
    let existing = dedup_last(read_outcomes(&outcomes_path)?);
    let done: HashSet<OutcomeKey> = existing.iter().filter(|r| r.error.is_none()).map(|r| r.key()).collect();
    let pending: Vec<&Task> = tasks.iter().filter(|t| !done.contains(&task_key(t))).collect();
    let resumed_records = tasks.len() - pending.len();
    let limit = cfg.stop_after.unwrap_or(usize::MAX).min(pending.len());
    log::info!("{} tasks, {} already done, running {}", tasks.len(), resumed_records, limit);

    let mut file = OpenOptions::new()
        .create(true)
        .append(true)
        .open(&outcomes_path)
        .map_err(|e| io_err(&outcomes_path, e))?;
    let toolchain_version = exec.version();
    let next = AtomicUsize::new(0);
    let (tx, rx) = mpsc::channel::<OutcomeRecord>();
    let mut new_records = 0;
    let mut call_errors = 0;
    std::thread::scope(|s| -> Result<(), PipelineError> {
        for _ in 0..cfg.jobs.min(limit.max(1)) {
            let tx = tx.clone();
            let (next, pending, clients, template, toolchain_version) =
                (&next, &pending, &clients, &template, &toolchain_version);
            s.spawn(move || loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= limit {
                    break;
                }
                let t = pending[i];
                let rec = run_task(t, &clients[t.client], template, exec, toolchain_version, cfg.master_seed);
                if tx.send(rec).is_err() {
                    break;
                }
            });
        }
        drop(tx);
        for rec in rx {
            let line = serde_json::to_string(&rec).expect("records serialize");
            writeln!(file, "{line}").and_then(|_| file.flush()).map_err(|e| io_err(&outcomes_path, e))?;
            new_records += 1;
            if rec.error.is_some() {
                call_errors += 1;
            }
        }
        Ok(())
    })?;

    // Canonical order: task order, last record per key.
    let all = dedup_last(read_outcomes(&outcomes_path)?);
    let order: HashMap<OutcomeKey, usize> = tasks.iter().enumerate().map(|(i, t)| (task_key(t), i)).collect();
    let mut sorted = all;
    sorted.sort_by_key(|r| order.get(&r.key()).copied().unwrap_or(usize::MAX));
    write_outcomes(&outcomes_path, &sorted)?;

    let ok: HashSet<OutcomeKey> = sorted.iter().filter(|r| r.error.is_none()).map(|r| r.key()).collect();
    let complete = tasks.iter().all(|t| ok.contains(&task_key(t)));
    let mut telemetry = BTreeMap::new();
    for c in &clients {
        let name = c.cfg.key_name();
        let calls: Vec<&Telemetry> = sorted
            .iter()
            .filter(|r| r.outcome.backend_name == name && r.error.is_none())
            .map(|r| &r.outcome.telemetry)
            .collect();
        telemetry.insert(name, TelemetrySummary::from_calls(calls));
    }
    fs::write(cfg.out_dir.join("telemetry.json"), serde_json::to_string_pretty(&telemetry).unwrap())
        .map_err(|e| io_err(&cfg.out_dir, e))?;

    let (metrics, stats) = if complete {
        let order: Vec<(String, Label)> = items.iter().map(|(i, _)| (i.id.clone(), i.label)).collect();
        let backends: Vec<String> = clients.iter().map(|c| c.cfg.key_name()).collect();
        let outcomes: Vec<AssessmentOutcome> = sorted.iter().map(|r| r.outcome.clone()).collect();
        let (m, s) = write_reports(&cfg.out_dir, &backends, &order, cfg.attempts as usize, &outcomes)?;
        (Some(m), s)
    } else {
        log::warn!("run incomplete; metrics skipped");
        (None, None)
    };

    Ok(RunArtifacts {
        outcomes: outcomes_path,
        metrics,
        stats,
        telemetry,
        new_records,
        resumed_records,
        call_errors,
        complete,
    })
}

fn write_outcomes(path: &Path, records: &[OutcomeRecord]) -> Result<(), PipelineError> {
    let tmp = path.with_extension("jsonl.tmp");
    let mut f = File::create(&tmp).map_err(|e| io_err(&tmp, e))?;
    for r in records {
        writeln!(f, "{}", serde_json::to_string(r).unwrap()).map_err(|e| io_err(&tmp, e))?;
    }
    f.flush().map_err(|e| io_err(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| io_err(path, e))
}

fn render(t: &Task, template: &PromptTemplate) -> Result<RenderedPrompt, PromptError> {
    let p = match template.kind {
        PromptKind::FullSource => {
            render_full_with(template, &t.inst.original.concatenated(), &t.inst.resulting.concatenated())?
        }
        PromptKind::DiffOnly => render_diff_with(template, &t.inst.unified_diff())?,
    };
    Ok(p.with_context(&t.inst.id, t.variant_tag.as_deref()))
}

fn run_task(
    t: &Task,
    client: &ModelClient,
    template: &PromptTemplate,
    exec: &dyn JavaToolchain,
    toolchain_version: &str,
    seed: Option<u64>,
) -> OutcomeRecord {
    let backend = client.cfg.key_name();
    let mut rec = OutcomeRecord {
        schema: SCHEMA_VERSION,
        model: client.cfg.name.clone(),
        temperature: client.cfg.temperature,
        tool: t.inst.tool.to_string(),
        refactoring_type: t.inst.refactoring_type.clone(),
        outcome: AssessmentOutcome {
            instance_id: t.inst.id.clone(),
            attempt_index: t.attempt,
            backend_name: backend.clone(),
            variant_tag: t.variant_tag.clone(),
            label: t.inst.label,
            correct: false,
            answer_label: None,
            inconclusive: None,
            claimed: None,
            evidence: None,
            reflective: false,
            schema_violations: Vec::new(),
            telemetry: Telemetry::default(),
        },
        explanation: None,
        parse_failure: None,
        error: None,
        provenance: Provenance {
            prompt_hash: None,
            template_version: template.version.clone(),
            toolchain_version: toolchain_version.to_string(),
            seed,
        },
        created_at: Utc::now(),
    };
    let prompt = match render(t, template) {
        Ok(p) => p,
        Err(e) => {
            rec.error = Some(CallFailure { kind: "PromptError".into(), detail: e.to_string() });
            rec.outcome.inconclusive = Some(format!("prompt: {e}"));
            return rec;
        }
    };
    rec.provenance.prompt_hash = Some(prompt.hash());
    let resp = match client.query(&prompt, t.attempt) {
        Ok(r) => r,
        Err(e) => {
            log::warn!("{e}");
            rec.error = Some(CallFailure { kind: e.kind().into(), detail: e.to_string() });
            rec.outcome.inconclusive = Some(format!("query: {}", e.kind()));
            return rec;
        }
    };
    let parsed = parse_response(&resp.text, template.kind);
    let ws_tag = format!("{}-{}-{}", sanitize(&backend), t.inst.id, t.attempt);
    let outcome = assess(&t.inst, &parsed, exec, &ws_tag).with_context(
        &backend,
        t.attempt,
        t.variant_tag.as_deref(),
        resp.telemetry(),
    );
    match &parsed {
        ParsedResponse::Verdict(v) => rec.explanation = Some(v.explanation.clone()),
        ParsedResponse::Failure(f) => rec.parse_failure = Some(f.reason),
    }
    rec.outcome = outcome;
    rec
}

fn sanitize(s: &str) -> String {
    s.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '.' { c } else { '_' }).collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelInterval {
    pub backend: String,
    pub correct: u64,
    pub n: u64,
    pub accuracy: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PairwiseTest {
    pub a: String,
    pub b: String,
    pub counts: PairedCounts,
    pub delta: f64,
    pub p: f64,
    pub p_holm: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StatsReport {
    /// Instances evaluated (rows with inconclusive first attempts removed).
    pub n: usize,
    pub intervals: Vec<ModelInterval>,
    pub pairwise: Vec<PairwiseTest>,
    pub cochran: Option<TestResult>,
    pub union: Option<crate::analytics::UnionReport>,
}

/// First-attempt statistics across backends over instances conclusive for all.
pub fn stats_report(matrices: &[RunMatrix]) -> StatsReport {
    let conclusive: BTreeSet<usize> = (0..matrices.first().map_or(0, RunMatrix::rows))
        .filter(|&i| matrices.iter().all(|m| m.cells[i][0].answer.is_some()))
        .collect();
    let cols: Vec<Vec<bool>> =
        matrices.iter().map(|m| conclusive.iter().map(|&i| m.cells[i][0].correct).collect()).collect();
    let n = conclusive.len();
    let intervals = matrices
        .iter()
        .zip(&cols)
        .filter(|_| n > 0)
        .map(|(m, c)| {
            let k = c.iter().filter(|x| **x).count() as u64;
            let (lo, hi) = wilson_ci(k, n as u64, 0.95).expect("n >= 1");
            ModelInterval { backend: m.backend_name.clone(), correct: k, n: n as u64, accuracy: k as f64 / n as f64, ci_low: lo, ci_high: hi }
        })
        .collect();
    let mut pairwise = Vec::new();
    for a in 0..matrices.len() {
        for b in a + 1..matrices.len() {
            let counts = PairedCounts::from_outcomes(&cols[a], &cols[b]);
            let r = mcnemar_exact(counts);
            pairwise.push(PairwiseTest {
                a: matrices[a].backend_name.clone(),
                b: matrices[b].backend_name.clone(),
                counts,
                delta: r.delta.unwrap_or(0.0),
                p: r.p_value,
                p_holm: r.p_value,
            });
        }
    }
    let adj = holm_correct(&pairwise.iter().map(|p| p.p).collect::<Vec<_>>()).expect("p-values in [0,1]");
    for (p, a) in pairwise.iter_mut().zip(adj) {
        p.p_holm = a;
    }
    let cochran = (matrices.len() >= 2 && n > 0).then(|| {
        let rows: Vec<Vec<bool>> = (0..n).map(|i| cols.iter().map(|c| c[i]).collect()).collect();
        cochran_q(&rows).expect("rectangular")
    });
    let union = (!matrices.is_empty()).then(|| {
        let universe: BTreeSet<String> = conclusive.iter().map(|&i| matrices[0].instance_ids[i].clone()).collect();
        let sets: Vec<(String, BTreeSet<String>)> = matrices
            .iter()
            .map(|m| (m.backend_name.clone(), m.solved_in_attempt(1).intersection(&universe).cloned().collect()))
            .collect();
        union_coverage(&sets, &universe).expect("sets drawn from the universe")
    });
    StatsReport { n, intervals, pairwise, cochran, union }
}

/// Writes `metrics.json`, `metrics.csv` and (for two or more backends)
/// `stats.json`.
pub fn write_reports(
    dir: &Path,
    backends: &[String],
    order: &[(String, Label)],
    attempts: usize,
    outcomes: &[AssessmentOutcome],
) -> Result<(PathBuf, Option<PathBuf>), PipelineError> {
    let mut reports = BTreeMap::new();
    let mut matrices = Vec::new();
    let mut csv = String::from("backend,metric,k,value\n");
    for b in backends {
        let m = RunMatrix::from_outcomes(b, order, attempts, outcomes)
            .map_err(|e| PipelineError::Config(e.to_string()))?;
        match MetricReport::compute(&m) {
            Ok(r) => {
                for (name, k, v) in r.rows() {
                    csv.push_str(&format!("{b},{name},{k},{v:.6}\n"));
                }
                reports.insert(b.clone(), r);
            }
            Err(e) => log::warn!("{b}: {e}"),
        }
        matrices.push(m);
    }
    let metrics = dir.join("metrics.json");
    fs::write(&metrics, serde_json::to_string_pretty(&reports).unwrap()).map_err(|e| io_err(&metrics, e))?;
    fs::write(dir.join("metrics.csv"), csv).map_err(|e| io_err(dir, e))?;
    let stats = if matrices.len() >= 2 {
        let path = dir.join("stats.json");
        fs::write(&path, serde_json::to_string_pretty(&stats_report(&matrices)).unwrap())
            .map_err(|e| io_err(&path, e))?;
        Some(path)
    } else {
        None
    };
    Ok((metrics, stats))
}

/// Recomputes `metrics.*` and `stats.json` in `out_dir` from an outcomes
/// file. Row order and backend order follow first appearance in the file.
pub fn reports_from_outcomes(
    outcomes: &Path,
    out_dir: &Path,
) -> Result<(PathBuf, Option<PathBuf>), PipelineError> {
    let records = dedup_last(read_outcomes(outcomes)?);
    if records.is_empty() {
        return Err(PipelineError::Config(format!("{}: no outcome records", outcomes.display())));
    }
    let mut backends: Vec<String> = Vec::new();
    let mut order: Vec<(String, Label)> = Vec::new();
    let mut seen = HashSet::new();
    for r in &records {
        if !backends.contains(&r.outcome.backend_name) {
            backends.push(r.outcome.backend_name.clone());
        }
        if seen.insert(r.outcome.instance_id.clone()) {
            order.push((r.outcome.instance_id.clone(), r.outcome.label));
        }
    }
    let attempts = records.iter().map(|r| r.outcome.attempt_index).max().unwrap_or(1) as usize;
    fs::create_dir_all(out_dir).map_err(|e| io_err(out_dir, e))?;
    let outcomes: Vec<AssessmentOutcome> = records.into_iter().map(|r| r.outcome).collect();
    write_reports(out_dir, &backends, &order, attempts, &outcomes)
}

/// Files written by [`summarize`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SummaryTables {
    pub accuracy: PathBuf,
    pub heatmap: PathBuf,
    pub failure_modes: PathBuf,
    pub telemetry: PathBuf,
    pub unknown_worksheet: PathBuf,
    pub records: usize,
    pub inconclusive: usize,
}

fn werr(p: &Path) -> impl Fn(csv::Error) -> PipelineError + '_ {
    move |e| io_err(p, e)
}

fn csv_writer(path: &Path) -> Result<csv::Writer<File>, PipelineError> {
    csv::Writer::from_path(path).map_err(|e| io_err(path, e))
}

/// Per-model accuracy, per-refactoring-type heatmap data, failure-mode
/// counts, telemetry, and an UNKNOWN adjudication worksheet, as CSV files in
/// `out_dir`. Inconclusive records are left out of accuracy denominators.
pub fn summarize(outcomes: &Path, out_dir: &Path) -> Result<SummaryTables, PipelineError> {
    let records = dedup_last(read_outcomes(outcomes)?);
    if records.is_empty() {
        log::warn!("{}: no outcome records", outcomes.display());
    }
    fs::create_dir_all(out_dir).map_err(|e| io_err(out_dir, e))?;
    let t = SummaryTables {
        accuracy: out_dir.join("accuracy.csv"),
        heatmap: out_dir.join("heatmap.csv"),
        failure_modes: out_dir.join("failure_modes.csv"),
        telemetry: out_dir.join("telemetry.csv"),
        unknown_worksheet: out_dir.join("unknown_worksheet.csv"),
        records: records.len(),
        inconclusive: records.iter().filter(|r| r.outcome.is_inconclusive()).count(),
    };

    #[derive(Default)]
    struct Tally {
        n: usize,
        correct: usize,
        inconclusive: usize,
    }
    impl Tally {
        fn add(&mut self, r: &OutcomeRecord) {
            if r.outcome.is_inconclusive() {
                self.inconclusive += 1;
            } else {
                self.n += 1;
                self.correct += r.outcome.correct as usize;
            }
        }
        fn rate(&self) -> String {
            if self.n == 0 {
                String::new()
            } else {
                format!("{:.6}", self.correct as f64 / self.n as f64)
            }
        }
    }

    // accuracy per (backend, attempt) with label splits
    type ByLabel = BTreeMap<Option<Label>, Tally>;
    let mut acc: BTreeMap<(String, u32), (String, ByLabel)> = BTreeMap::new();
    for r in &records {
        let e = acc
            .entry((r.outcome.backend_name.clone(), r.outcome.attempt_index))
            .or_insert_with(|| (r.temperature.to_string(), BTreeMap::new()));
        e.1.entry(None).or_default().add(r);
        e.1.entry(Some(r.outcome.label)).or_default().add(r);
    }
    let mut w = csv_writer(&t.accuracy)?;
    w.write_record([
        "backend", "temperature", "attempt", "n", "correct", "accuracy", "bc_accuracy", "ce_accuracy",
        "preserving_accuracy", "inconclusive",
    ])
    .map_err(werr(&t.accuracy))?;
    for ((b, a), (temp, m)) in &acc {
        let all = &m[&None];
        let split = |l: Label| m.get(&Some(l)).map_or(String::new(), Tally::rate);
        w.write_record([
            b.clone(),
            temp.clone(),
            a.to_string(),
            all.n.to_string(),
            all.correct.to_string(),
            all.rate(),
            split(Label::Bc),
            split(Label::Ce),
            split(Label::Preserving),
            all.inconclusive.to_string(),
        ])
        .map_err(werr(&t.accuracy))?;
    }
    w.flush().map_err(|e| io_err(&t.accuracy, e))?;

    let mut heat: BTreeMap<(String, String, String), Tally> = BTreeMap::new();
    for r in &records {
        heat.entry((r.outcome.backend_name.clone(), r.refactoring_type.clone(), r.tool.clone()))
            .or_default()
            .add(r);
    }
    let mut w = csv_writer(&t.heatmap)?;
    w.write_record(["backend", "refactoring_type", "tool", "n", "correct", "accuracy", "inconclusive"])
        .map_err(werr(&t.heatmap))?;
    for ((b, rt, tool), x) in &heat {
        w.write_record([b, rt, tool, &x.n.to_string(), &x.correct.to_string(), &x.rate(), &x.inconclusive.to_string()])
            .map_err(werr(&t.heatmap))?;
    }
    w.flush().map_err(|e| io_err(&t.heatmap, e))?;

    let mut modes: BTreeMap<(String, Label, String), usize> = BTreeMap::new();
    for r in &records {
        let a = r.outcome.answer_label.map_or("INCONCLUSIVE", AnswerLabel::as_str).to_string();
        *modes.entry((r.outcome.backend_name.clone(), r.outcome.label, a)).or_default() += 1;
    }
    let mut w = csv_writer(&t.failure_modes)?;
    w.write_record(["backend", "label", "answer_label", "count"]).map_err(werr(&t.failure_modes))?;
    for ((b, l, a), n) in &modes {
        w.write_record([b.as_str(), &l.to_string(), a, &n.to_string()]).map_err(werr(&t.failure_modes))?;
    }
    w.flush().map_err(|e| io_err(&t.failure_modes, e))?;

    let mut by_backend: BTreeMap<String, Vec<&Telemetry>> = BTreeMap::new();
    for r in records.iter().filter(|r| r.error.is_none()) {
        by_backend.entry(r.outcome.backend_name.clone()).or_default().push(&r.outcome.telemetry);
    }
    let mut w = csv_writer(&t.telemetry)?;
    w.write_record([
        "backend", "calls", "total_latency_s", "mean_latency_s", "median_latency_s", "min_latency_s",
        "max_latency_s", "tokens_in", "tokens_out", "tokens_reasoning", "cost",
    ])
    .map_err(werr(&t.telemetry))?;
    for (b, calls) in by_backend {
        let s = TelemetrySummary::from_calls(calls);
        w.write_record([
            b,
            s.calls.to_string(),
            format!("{:.3}", s.total_latency_s),
            format!("{:.3}", s.mean_latency_s),
            format!("{:.3}", s.median_latency_s),
            format!("{:.3}", s.min_latency_s),
            format!("{:.3}", s.max_latency_s),
            s.tokens_in.to_string(),
            s.tokens_out.to_string(),
            s.tokens_reasoning.to_string(),
            format!("{:.4}", s.cost),
        ])
        .map_err(werr(&t.telemetry))?;
    }
    w.flush().map_err(|e| io_err(&t.telemetry, e))?;

    let mut w = csv_writer(&t.unknown_worksheet)?;
    w.write_record(["backend", "instance_id", "variant_tag", "attempt", "label", "explanation", "adjudication"])
        .map_err(werr(&t.unknown_worksheet))?;
    for r in records.iter().filter(|r| r.outcome.answer_label == Some(AnswerLabel::SaidUnknown)) {
        w.write_record([
            r.outcome.backend_name.as_str(),
            &r.outcome.instance_id,
            r.outcome.variant_tag.as_deref().unwrap_or(""),
            &r.outcome.attempt_index.to_string(),
            &r.outcome.label.to_string(),
            r.explanation.as_deref().unwrap_or(""),
            "",
        ])
        .map_err(werr(&t.unknown_worksheet))?;
    }
    w.flush().map_err(|e| io_err(&t.unknown_worksheet, e))?;
    Ok(t)
}
