use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Deserialize;

use refbench_core::dataset::{load_corpus, load_corpus_report, validate_instance, BugCorpus};
use refbench_core::executor::{JavaToolchain, JdkConfig, JdkToolchain, NoToolchain};
use refbench_core::metamorph::{persist_variants, transform_corpus};
use refbench_core::model_client::{
    Backend, BackendConfig, ChatCompletionBackend, MockBackend, OfflineBackend, Temperature, TranscriptKey,
    TranscriptStore,
};
use refbench_core::pipeline::{reports_from_outcomes, run_benchmark, summarize, RunConfig, RunMode};
use refbench_core::prompting::{render_diff_prompt, render_full_prompt};

const MOCK_RESPONSE: &str =
    r#"{"verdict": "NO - COMPILATION ERROR", "explanation": "mock backend", "junit_test": null}"#;

#[derive(Parser)]
#[command(name = "refbench", version, about = "Benchmark foundation models as refactoring oracles")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Check every instance's ground truth with a Java toolchain.
    Validate {
        #[arg(long)]
        corpus: PathBuf,
        #[command(flatten)]
        java: JavaArgs,
        /// Write reports (JSON lines) here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Query backends over the corpus and assess every answer.
    Run(RunArgs),
    /// Generate one metamorphic variant per instance.
    Metamorph {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Recompute metrics.json / metrics.csv from an outcomes file.
    Metrics {
        #[arg(long)]
        outcomes: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Recompute stats.json (Wilson, McNemar, Cochran, union) from an outcomes file.
    Stats {
        #[arg(long)]
        outcomes: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write summary CSV tables from an outcomes file.
    Summarize {
        #[arg(long)]
        outcomes: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Add a hand-pasted model response to a transcript store.
    Import {
        #[arg(long)]
        store: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        backend: String,
        #[arg(long)]
        instance: String,
        #[arg(long, default_value_t = 1)]
        attempt: u32,
        #[arg(long, default_value = "full")]
        mode: RunMode,
        #[arg(long)]
        temperature: Option<Temperature>,
        /// File holding the response text.
        #[arg(long)]
        response: PathBuf,
        #[arg(long)]
        overwrite: bool,
    },
}

#[derive(Args, Clone)]
struct JavaArgs {
    /// Path to javac (java is taken from the same directory).
    #[arg(long)]
    compiler: Option<PathBuf>,
    /// JUnit classpath.
    #[arg(long = "junit-cp")]
    junit_cp: Option<String>,
    /// Per-process timeout in seconds.
    #[arg(long, default_value_t = 30)]
    java_timeout: u64,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    corpus: PathBuf,
    /// Backend names (repeatable or comma separated); `mock` is built in.
    #[arg(long, value_delimiter = ',', required = true)]
    backend: Vec<String>,
    #[arg(long, default_value_t = 1)]
    attempts: u32,
    /// Temperature list for a sweep, e.g. 0.0,0.5,1.0.
    #[arg(long, value_delimiter = ',')]
    temperature: Vec<Temperature>,
    #[arg(long, default_value = "full")]
    mode: RunMode,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    replay: Option<PathBuf>,
    #[arg(long)]
    record: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// TOML file with `[[backend]]` tables.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Prompt template override.
    #[arg(long)]
    template: Option<PathBuf>,
    /// Stop after this many new records.
    #[arg(long)]
    stop_after: Option<usize>,
    #[command(flatten)]
    java: JavaArgs,
}

#[derive(Deserialize, Default)]
struct ConfigFile {
    #[serde(default)]
    backend: Vec<BackendConfig>,
}

fn load_config(path: Option<&Path>) -> Result<ConfigFile> {
    let Some(path) = path else {
        return Ok(ConfigFile::default());
    };
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn toolchain(java: &JavaArgs) -> Result<Box<dyn JavaToolchain>> {
    let cfg = match &java.compiler {
        Some(javac) => {
            let dir = javac.parent().unwrap_or(Path::new(""));
            JdkConfig {
                javac: javac.clone(),
                java: dir.join("java"),
                ..JdkConfig::default()
            }
        }
        None => match JdkConfig::detect() {
            Some(c) => c,
            None => {
                log::warn!("no javac found; behavioral-change claims will be inconclusive");
                return Ok(Box::new(NoToolchain));
            }
        },
    };
    let mut cfg = cfg;
    if let Some(cp) = &java.junit_cp {
        cfg.junit_classpath = std::env::split_paths(cp).collect();
    }
    cfg.timeout = Duration::from_secs(java.java_timeout);
    Ok(Box::new(JdkToolchain::new(cfg)))
}

fn resolve_backends(names: &[String], file: &ConfigFile, replay: bool) -> Result<Vec<BackendConfig>> {
    names
        .iter()
        .map(|n| {
            if let Some(b) = file.backend.iter().find(|b| &b.name == n) {
                return Ok(b.clone());
            }
            if n == "mock" {
                return Ok(BackendConfig::new("mock", "mock"));
            }
            if replay {
                return Ok(BackendConfig::new(n.clone(), "replay"));
            }
            bail!("backend `{n}` is not defined (use --config, `mock`, or --replay)")
        })
        .collect()
}

fn backend_for(cfg: &BackendConfig) -> Result<Arc<dyn Backend>, String> {
    match cfg.endpoint.as_str() {
        "mock" => Ok(Arc::new(MockBackend::fixed(MOCK_RESPONSE))),
        "replay" => Ok(Arc::new(OfflineBackend)),
        _ => Ok(Arc::new(ChatCompletionBackend::new(cfg.timeout)?)),
    }
}

fn load(corpus: &Path) -> Result<BugCorpus> {
    let load = load_corpus_report(corpus).with_context(|| format!("loading corpus {}", corpus.display()))?;
    for e in &load.rejected {
        log::warn!("rejected: {e}");
    }
    if load.corpus.is_empty() {
        bail!("corpus {} has no valid instances", corpus.display());
    }
    Ok(load.corpus)
}

fn run(args: RunArgs) -> Result<()> {
    let file = load_config(args.config.as_deref())?;
    let backends = resolve_backends(&args.backend, &file, args.replay.is_some())?;
    let corpus = load(&args.corpus)?;
    let exec = toolchain(&args.java)?;
    let cfg = RunConfig {
        backends,
        attempts: args.attempts,
        mode: args.mode,
        master_seed: args.seed,
        temperatures: args.temperature,
        replay: args.replay,
        record: args.record,
        out_dir: args.out,
        jobs: args.jobs,
        template: args.template,
        stop_after: args.stop_after,
    };
    let art = run_benchmark(&cfg, &corpus, exec.as_ref(), &backend_for)?;
    println!("{}", serde_json::to_string_pretty(&art)?);
    if art.call_errors > 0 {
        log::warn!("{} calls failed; rerun to retry them", art.call_errors);
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.cmd {
        Cmd::Validate { corpus, java, out } => {
            let corpus = load(&corpus)?;
            let exec = toolchain(&java)?;
            let mut lines = String::new();
            let mut unconfirmed = 0;
            for inst in corpus.instances() {
                let r = validate_instance(inst, exec.as_ref())?;
                if !r.ground_truth_confirmed {
                    unconfirmed += 1;
                    log::warn!("{}: ground truth not confirmed", inst.id);
                }
                lines.push_str(&serde_json::to_string(&r)?);
                lines.push('\n');
            }
            match out {
                Some(p) => fs::write(&p, lines).with_context(|| format!("writing {}", p.display()))?,
                None => print!("{lines}"),
            }
            log::info!("{} instances, {unconfirmed} not confirmed", corpus.len());
            Ok(())
        }
        Cmd::Run(args) => run(args),
        Cmd::Metamorph { corpus, seed, out } => {
            let corpus = load(&corpus)?;
            let t = transform_corpus(&corpus, seed);
            let dir = persist_variants(&out, &corpus, &t)?;
            fs::write(dir.join("operator_counts.json"), serde_json::to_string_pretty(&t.operator_counts)?)?;
            println!("{}", serde_json::to_string_pretty(&t.operator_counts)?);
            if !t.unchanged.is_empty() {
                log::warn!("left unchanged: {}", t.unchanged.join(", "));
            }
            Ok(())
        }
        Cmd::Metrics { outcomes, out } => {
            let (metrics, _) = reports_from_outcomes(&outcomes, &out)?;
            println!("{}", fs::read_to_string(metrics)?);
            Ok(())
        }
        Cmd::Stats { outcomes, out } => {
            match reports_from_outcomes(&outcomes, &out)? {
                (_, Some(stats)) => println!("{}", fs::read_to_string(stats)?),
                (_, None) => bail!("statistics need outcomes from at least two backends"),
            }
            Ok(())
        }
        Cmd::Summarize { outcomes, out } => {
            let t = summarize(&outcomes, &out)?;
            if t.inconclusive > 0 {
                eprintln!("note: {} inconclusive records excluded from accuracy denominators", t.inconclusive);
            }
            println!("{}", serde_json::to_string_pretty(&t)?);
            Ok(())
        }
        Cmd::Import { store, corpus, backend, instance, attempt, mode, temperature, response, overwrite } => {
            let corpus = load_corpus(&corpus)?;
            let inst = corpus.get(&instance).with_context(|| format!("no instance `{instance}`"))?;
            let prompt = match mode {
                RunMode::DiffOnly => render_diff_prompt(&inst.unified_diff())?,
                _ => render_full_prompt(&inst.original.concatenated(), &inst.resulting.concatenated())?,
            }
            .with_context(&inst.id, None);
            let mut cfg = BackendConfig::new(backend, "replay");
            if let Some(t) = temperature {
                cfg.temperature = t;
            }
            let text = fs::read_to_string(&response)?;
            let store = TranscriptStore::open(&store)?;
            store.import_manual(TranscriptKey::new(&cfg, &prompt, attempt), text, overwrite)?;
            Ok(())
        }
    }
}
