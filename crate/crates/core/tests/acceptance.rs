//! Acceptance suite: one PASS / FAIL / SKIP line per criterion.

mod common;

use std::collections::{BTreeMap, BTreeSet};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use refbench_core::analytics::{
    acc_at, accuracy_spread, cons_at, mean_accuracy, per_attempt_accuracy, tar_at, union_coverage, Cell, RunMatrix,
};
use refbench_core::assessor::{assess, AnswerLabel};
use refbench_core::dataset::{BugInstance, Label, Tool};
use refbench_core::executor::{
    check_discriminating, JavaToolchain, JdkConfig, JdkToolchain, MockToolchain, TestOutcome,
};
use refbench_core::metamorph::{apply_operator, index_structure, is_applicable, restore_original, OperatorId};
use refbench_core::model_client::{Backend, BackendConfig, MockBackend, OfflineBackend};
use refbench_core::pipeline::{read_outcomes, run_benchmark, OutcomeKey, RunConfig};
use refbench_core::prompting::PromptKind;
use refbench_core::stats::{cochran_q, holm_correct, mcnemar_exact, wilson_ci, PairedCounts};
use refbench_core::verdict::{parse_response, ParsedResponse, VerdictCategory};

use common::*;

enum Status {
    Pass(String),
    Skip(String),
}

type Check = Result<Status, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn close(got: f64, want: f64, tol: f64, what: &str) -> Result<(), String> {
    ensure((got - want).abs() <= tol, || format!("{what}: got {got}, want {want} ± {tol}"))
}

fn rel_close(got: f64, want: f64, rel: f64, what: &str) -> Result<(), String> {
    ensure(((got - want) / want).abs() <= rel, || format!("{what}: got {got:e}, want {want:e} within {rel}"))
}

fn jdk() -> Option<JdkConfig> {
    JdkConfig::detect()
}

fn c1_statistics() -> Check {
    let table8 = [(182, 0.749, 0.852), (212, 0.899, 0.963), (214, 0.909, 0.969), (225, 0.975, 0.999)];
    for (s, lo, hi) in table8 {
        let (l, h) = wilson_ci(s, 226, 0.95).map_err(|e| e.to_string())?;
        close(l, lo, 0.001, &format!("wilson({s},226) low"))?;
        close(h, hi, 0.001, &format!("wilson({s},226) high"))?;
    }
    let table9 = [(13u64, 43u64, 7.33e-5, -0.133), (8, 40, 3.31e-6, -0.142), (10, 12, 0.832, -0.009)];
    let mut ps = Vec::new();
    for (b, c, p, delta) in table9 {
        let counts = PairedCounts { n11: 150, n10: b, n01: c, n00: 226 - 150 - b - c };
        let r = mcnemar_exact(counts);
        rel_close(r.p_value, p, 0.01, &format!("mcnemar({b},{c}) p"))?;
        close(r.delta.unwrap(), delta, 0.001, &format!("mcnemar({b},{c}) delta"))?;
        ps.push(r.p_value);
    }
    let holm = holm_correct(&ps).map_err(|e| e.to_string())?;
    for (got, want) in holm.iter().zip([1.47e-4, 9.92e-6, 0.832]) {
        rel_close(*got, want, 0.01, "holm")?;
    }
    Ok(Status::Pass("Wilson x4, McNemar x3, Holm x3 within tolerance".into()))
}

/// Cochran's Q as k(k-1) Σ (C_j - C̄)² / (k Σ R_i - Σ R_i²).
fn cochran_oracle(rows: &[Vec<bool>]) -> Option<f64> {
    let k = rows[0].len();
    let cols: Vec<f64> = (0..k).map(|j| rows.iter().filter(|r| r[j]).count() as f64).collect();
    let mean = cols.iter().sum::<f64>() / k as f64;
    let ss: f64 = cols.iter().map(|c| (c - mean).powi(2)).sum();
    let r: Vec<f64> = rows.iter().map(|r| r.iter().filter(|x| **x).count() as f64).collect();
    let denom = k as f64 * r.iter().sum::<f64>() - r.iter().map(|x| x * x).sum::<f64>();
    (denom != 0.0).then(|| k as f64 * (k as f64 - 1.0) * ss / denom)
}

fn c2_cochran() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut nondegenerate = 0;
    for case in 0..200 {
        let n = rng.gen_range(1..=8);
        let k = rng.gen_range(2..=4);
        let rows: Vec<Vec<bool>> = (0..n).map(|_| (0..k).map(|_| rng.gen()).collect()).collect();
        let got = cochran_q(&rows).map_err(|e| e.to_string())?;
        match cochran_oracle(&rows) {
            Some(q) => {
                nondegenerate += 1;
                close(got.statistic, q, 1e-9, &format!("case {case}"))?;
            }
            None => ensure(got.degenerate && got.statistic == 0.0, || format!("case {case}: expected degenerate"))?,
        }
        let mut perm = rows.clone();
        perm.shuffle(&mut rng);
        let mut order: Vec<usize> = (0..k).collect();
        order.shuffle(&mut rng);
        let perm: Vec<Vec<bool>> = perm.iter().map(|r| order.iter().map(|&j| r[j]).collect()).collect();
        let q2 = cochran_q(&perm).map_err(|e| e.to_string())?;
        close(q2.statistic, got.statistic, 1e-9, &format!("case {case} permuted"))?;
    }
    Ok(Status::Pass(format!(
        "200 matrices ({nondegenerate} non-degenerate) match the oracle; Q=30.60 not reproducible without per-instance data"
    )))
}

fn random_matrix(rng: &mut ChaCha8Rng) -> RunMatrix {
    let n = rng.gen_range(1..=30);
    let k = rng.gen_range(1..=5);
    let labels: Vec<Label> = (0..n).map(|_| *[Label::Bc, Label::Ce, Label::Preserving].choose(rng).unwrap()).collect();
    let cells = labels
        .iter()
        .map(|&l| {
            (0..k)
                .map(|_| {
                    let a = *AnswerLabel::ALL.choose(rng).unwrap();
                    Cell::new(a, a.is_correct_for(l))
                })
                .collect()
        })
        .collect();
    RunMatrix::new("m", (0..n).map(|i| i.to_string()).collect(), labels, cells).unwrap()
}

fn brute(m: &RunMatrix, k: usize) -> (f64, f64, f64) {
    let n = m.cells.len() as f64;
    let mut acc = 0.0;
    let mut tar = 0.0;
    let mut cons = 0.0;
    for row in &m.cells {
        let first = &row[..k];
        if first.iter().any(|c| c.correct) {
            acc += 1.0;
        }
        if first.windows(2).all(|w| w[0].answer == w[1].answer) {
            tar += 1.0;
        }
        for a in AnswerLabel::ALL {
            let hits: Vec<&Cell> = first.iter().filter(|c| c.answer == Some(a)).collect();
            if 2 * hits.len() > k && hits[0].correct {
                cons += 1.0;
            }
        }
    }
    (acc / n, tar / n, cons / n)
}

fn c3_metrics_oracle() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for case in 0..500 {
        let m = random_matrix(&mut rng);
        let k_max = m.attempts;
        let n = m.cells.len() as f64;
        let per: Vec<f64> =
            (0..k_max).map(|j| m.cells.iter().filter(|r| r[j].correct).count() as f64 / n).collect();
        let mean = per.iter().sum::<f64>() / k_max as f64;
        let spread = per.iter().cloned().fold(f64::MIN, f64::max) - per.iter().cloned().fold(f64::MAX, f64::min);
        ensure(per_attempt_accuracy(&m) == per, || format!("case {case}: per-attempt"))?;
        close(mean_accuracy(&m).unwrap(), mean, 1e-12, &format!("case {case}: mean"))?;
        close(accuracy_spread(&m).unwrap(), spread, 1e-12, &format!("case {case}: spread"))?;
        let mut prev: Option<(f64, f64)> = None;
        for k in 1..=k_max {
            let (acc, tar, cons) = brute(&m, k);
            let got = (acc_at(&m, k).unwrap(), tar_at(&m, k).unwrap(), cons_at(&m, k).unwrap());
            ensure(got == (acc, tar, cons), || format!("case {case} k={k}: got {got:?}, want {:?}", (acc, tar, cons)))?;
            if let Some((pa, pt)) = prev {
                ensure(got.0 >= pa && got.1 <= pt, || format!("case {case} k={k}: monotonicity"))?;
            }
            prev = Some((got.0, got.1));
        }
        ensure(cons_at(&m, 1).unwrap() == acc_at(&m, 1).unwrap(), || format!("case {case}: cons@1 != acc@1"))?;
    }
    Ok(Status::Pass("500 random matrices agree with brute force; monotonicity holds".into()))
}

fn c4_published_curve() -> Check {
    // First-success attempt counts consistent with the published curve;
    // rows stay correct after their first success.
    let first_success = [182usize, 12, 12, 3, 1];
    let mut grid = Vec::new();
    for (j, &count) in first_success.iter().enumerate() {
        for _ in 0..count {
            grid.push((0..5).map(|a| a >= j).collect::<Vec<bool>>());
        }
    }
    while grid.len() < 226 {
        grid.push(vec![false; 5]);
    }
    let labels = (0..226).map(|i| if i % 6 == 0 { Label::Bc } else { Label::Ce }).collect();
    let m = RunMatrix::from_bools("oss", labels, &grid).map_err(|e| e.to_string())?;
    let published = [0.805, 0.858, 0.912, 0.925, 0.929];
    for (k, want) in (1..=5).zip(published) {
        close(acc_at(&m, k).unwrap(), want, 0.001, &format!("acc@{k}"))?;
    }
    Ok(Status::Pass("acc@1..5 = 0.805/0.858/0.912/0.925/0.929 within ±0.001".into()))
}

fn c5_union() -> Check {
    let regions: [(&[&str], usize); 8] = [
        (&["claude", "gpt", "gemini", "oss"], 163),
        (&["claude", "gpt", "gemini"], 39),
        (&["claude", "gemini", "oss"], 10),
        (&["gpt", "gemini", "oss"], 6),
        (&["gpt", "gemini"], 4),
        (&["gemini", "oss"], 2),
        (&["claude", "gemini"], 1),
        (&["claude", "oss"], 1),
    ];
    let names = ["claude", "gpt", "gemini", "oss"];
    let mut solved: BTreeMap<&str, BTreeSet<String>> = names.iter().map(|n| (*n, BTreeSet::new())).collect();
    let mut next = 0;
    for (members, count) in regions {
        for _ in 0..count {
            for m in members {
                solved.get_mut(m).unwrap().insert(format!("{next:03}"));
            }
            next += 1;
        }
    }
    let universe: BTreeSet<String> = (0..226).map(|i| format!("{i:03}")).collect();
    let models: Vec<(String, BTreeSet<String>)> = names.iter().map(|n| (n.to_string(), solved[n].clone())).collect();
    let r = union_coverage(&models, &universe).map_err(|e| e.to_string())?;
    for (members, count) in regions {
        ensure(r.region(members) == count, || format!("region {members:?}: {} != {count}", r.region(members)))?;
    }
    let total: usize = r.regions.values().sum();
    ensure(r.union_size == 226 && total == 226, || format!("union {} / sum {}", r.union_size, total))?;
    let want = [("claude", 214), ("gpt", 212), ("gemini", 225), ("oss", 182)];
    for (m, n) in want {
        ensure(r.solved[m] == n, || format!("{m} solved {}", r.solved[m]))?;
    }
    Ok(Status::Pass("all 8 regions exact, union 226".into()))
}

fn c6_metamorph() -> Check {
    let programs = fixture_programs();
    let mut variants = 0;
    let mut compiled = 0;
    let jdk = jdk().map(JdkToolchain::new);
    for (name, src) in &programs {
        let idx = index_structure(src).map_err(|e| format!("{name}: {e}"))?;
        let orig_words: BTreeSet<String> = src.files().iter().flat_map(|f| words(&f.content)).collect();
        for op in OperatorId::ALL.into_iter().filter(|o| is_applicable(&idx, *o)) {
            for seed in 0..5u64 {
                let v = apply_operator(src, op, seed).map_err(|e| format!("{name}/{op}/{seed}: {e}"))?;
                variants += 1;
                let back = restore_original(&v).map_err(|e| format!("{name}/{op}/{seed}: {e}"))?;
                ensure(&back == src, || format!("{name}/{op}/{seed}: restore differs"))?;
                ensure(v.transformed_original != *src, || format!("{name}/{op}/{seed}: no change"))?;
                for id in v.injected_identifiers() {
                    ensure(!orig_words.contains(id), || format!("{name}/{op}/{seed}: `{id}` not fresh"))?;
                }
                if let Some(j) = &jdk {
                    let base_ok = j.compile(src, "mm-base").map_err(|e| e.to_string())?.success;
                    let var_ok = j.compile(&v.transformed_original, "mm-var").map_err(|e| e.to_string())?.success;
                    ensure(!base_ok || var_ok, || format!("{name}/{op}/{seed}: variant does not compile"))?;
                    compiled += 1;
                }
            }
        }
    }
    let detail = format!("{} programs, {variants} variants restore byte-for-byte with fresh names", programs.len());
    match jdk {
        Some(_) => {
            let bc = push_down_instance();
            let test = bc.exposing_test.clone().unwrap();
            let j = JdkToolchain::new(jdk_config_with_junit().ok_or("JUNIT_CLASSPATH not set")?);
            let base = check_discriminating(&j, &test, &bc.original, &bc.resulting, "mm-bc").map_err(|e| e.to_string())?;
            for op in OperatorId::ALL {
                let Ok(v) = apply_operator(&bc.original, op, 1) else { continue };
                let r = check_discriminating(&j, &test, &v.transformed_original, &bc.resulting, "mm-bc-v")
                    .map_err(|e| e.to_string())?;
                ensure(
                    r.on_original.outcome == base.on_original.outcome
                        && r.on_resulting.outcome == base.on_resulting.outcome,
                    || format!("{op}: exposing test pattern changed"),
                )?;
            }
            Ok(Status::Pass(format!("{detail}; {compiled} compiled with javac")))
        }
        None => Ok(Status::Skip(format!("{detail}; no JDK, (a) and (d) not run"))),
    }
}

fn jdk_config_with_junit() -> Option<JdkConfig> {
    jdk().filter(|c| !c.junit_classpath.is_empty())
}

fn truth(label: Label, answer: AnswerLabel) -> bool {
    match label {
        Label::Bc => answer == AnswerLabel::SaidBcValid,
        Label::Ce => answer == AnswerLabel::SaidCe,
        Label::Preserving => answer == AnswerLabel::SaidYes,
    }
}

fn c7_assessor() -> Check {
    for label in [Label::Bc, Label::Ce, Label::Preserving] {
        for a in AnswerLabel::ALL {
            ensure(a.is_correct_for(label) == truth(label, a), || format!("{label} x {}", a.as_str()))?;
        }
        ensure(!AnswerLabel::SaidYes.is_correct_for(label) || label == Label::Preserving, || "YES on bug".into())?;
    }

    let bc = push_down_instance();
    let test = bc.exposing_test.clone().unwrap();
    let vacuous = java_test("VacuousTest", VACUOUS_TEST);
    let broken = java_test("BrokenTest", "public class BrokenTest { @org.junit.Test public void t() { nope(); } }");
    let mut exec = MockToolchain::new();
    exec.script_test(&bc.original, &test, TestOutcome::Pass)
        .script_test(&bc.resulting, &test, TestOutcome::Fail)
        .script_test(&bc.original, &vacuous, TestOutcome::Pass)
        .script_test(&bc.resulting, &vacuous, TestOutcome::Pass)
        .script_test(&bc.original, &broken, TestOutcome::DidNotCompile)
        .script_test(&bc.resulting, &broken, TestOutcome::DidNotCompile);
    let bc_json = |t: &str| {
        serde_json::json!({"verdict": "NO - BEHAVIOR CHANGE", "explanation": "x", "junit_test": t}).to_string()
    };
    let yes = r#"{"verdict":"YES","explanation":"x","junit_test":null}"#.to_string();
    let ce = r#"{"verdict":"NO - COMPILATION ERROR","explanation":"x","junit_test":null}"#.to_string();
    let unknown = r#"{"verdict":"UNKNOWN","explanation":"x"}"#.to_string();
    let cases: Vec<(String, PromptKind, AnswerLabel)> = vec![
        (yes.clone(), PromptKind::FullSource, AnswerLabel::SaidYes),
        (ce.clone(), PromptKind::FullSource, AnswerLabel::SaidCe),
        (bc_json(PUSH_DOWN_TEST), PromptKind::FullSource, AnswerLabel::SaidBcValid),
        (bc_json(VACUOUS_TEST), PromptKind::FullSource, AnswerLabel::SaidBcTestNotDiscriminating),
        (bc_json(&broken.text), PromptKind::FullSource, AnswerLabel::SaidBcTestNotCompiling),
        (unknown.clone(), PromptKind::DiffOnly, AnswerLabel::SaidUnknown),
        ("not json".into(), PromptKind::FullSource, AnswerLabel::ParseError),
    ];
    let ce_inst = inline_instance();
    let pres = BugInstance::new("p", Tool::Other, "Rename", Label::Preserving, bc.original.clone(), bc.original.clone(), None)
        .unwrap();
    for (text, mode, want_bc) in &cases {
        let parsed = parse_response(text, *mode);
        let o = assess(&bc, &parsed, &exec, "c7");
        ensure(o.answer_label == Some(*want_bc), || format!("BC: {text} -> {:?}", o.answer_label))?;
        ensure(o.correct == truth(Label::Bc, *want_bc), || format!("BC correctness for {text}"))?;
        if o.correct {
            ensure(o.evidence.as_ref().is_some_and(|e| e.discriminates), || "BC correct without evidence".into())?;
        }
        for inst in [&ce_inst, &pres] {
            let o = assess(inst, &parsed, &exec, "c7");
            let a = o.answer_label.ok_or("unexpected inconclusive")?;
            ensure(o.correct == truth(inst.label, a), || format!("{}: {text} -> {a:?}", inst.label))?;
            let is_yes = parsed.verdict().is_some_and(|v| v.category == VerdictCategory::Yes);
            if inst.label == Label::Preserving {
                ensure(o.correct == is_yes, || "PRESERVING correct iff YES".into())?;
            } else {
                ensure(!(is_yes && o.correct), || "YES correct on a bug".into())?;
            }
        }
    }
    Ok(Status::Pass("3 labels x 7 answers agree; BC correctness carries discriminating evidence".into()))
}

fn c8_executor() -> Check {
    let Some(cfg) = jdk() else {
        return Ok(Status::Skip("no javac on PATH or JAVA_HOME".into()));
    };
    let j = JdkToolchain::new(cfg.clone());
    let ce = inline_instance();
    ensure(j.compile(&ce.original, "c8-orig").map_err(|e| e.to_string())?.success, || "CE fixture original".into())?;
    ensure(!j.compile(&ce.resulting, "c8-res").map_err(|e| e.to_string())?.success, || "CE fixture resulting".into())?;
    if cfg.junit_classpath.is_empty() {
        return Ok(Status::Skip("compile check passed; JUNIT_CLASSPATH unset, test runs not attempted".into()));
    }
    let bc = push_down_instance();
    let test = bc.exposing_test.clone().unwrap();
    let r = check_discriminating(&j, &test, &bc.original, &bc.resulting, "c8").map_err(|e| e.to_string())?;
    ensure(r.discriminates, || format!("push-down test: {:?} / {:?}", r.on_original.outcome, r.on_resulting.outcome))?;
    let vac = java_test("VacuousTest", VACUOUS_TEST);
    let r = check_discriminating(&j, &vac, &bc.original, &bc.resulting, "c8v").map_err(|e| e.to_string())?;
    ensure(!r.discriminates, || "vacuous test discriminates".into())?;
    Ok(Status::Pass("push-down pair discriminates, CE fixture fails to compile, vacuous test does not discriminate".into()))
}

fn mock_exec() -> MockToolchain {
    let bc = push_down_instance();
    let test = java_test("RefactoringBehaviorTest", PUSH_DOWN_TEST);
    let mut exec = MockToolchain::new();
    exec.script_test(&bc.original, &test, TestOutcome::Pass).script_test(&bc.resulting, &test, TestOutcome::Fail);
    exec
}

fn normalized(path: &std::path::Path) -> Result<Vec<String>, String> {
    let recs = read_outcomes(path).map_err(|e| e.to_string())?;
    Ok(recs.iter().map(|r| serde_json::to_string(&r.normalized()).unwrap()).collect())
}

fn c9_determinism() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let corpus = small_corpus(10);
    let exec = mock_exec();
    let store = dir.path().join("store.jsonl");
    let attempts = 3;

    let recorder = |_: &BackendConfig| -> Result<Arc<dyn Backend>, String> {
        Ok(Arc::new(MockBackend::from_fn(|p, a| canned_response(&p.instance_id, a))))
    };
    let mut rec = RunConfig::new(dir.path().join("rec"), vec![BackendConfig::new("m", "mock")]);
    rec.attempts = attempts;
    rec.record = Some(store.clone());
    run_benchmark(&rec, &corpus, &exec, &recorder).map_err(|e| e.to_string())?;

    let offline = |_: &BackendConfig| -> Result<Arc<dyn Backend>, String> { Ok(Arc::new(OfflineBackend)) };
    let replay = |out: &str, stop: Option<usize>| {
        let mut c = RunConfig::new(dir.path().join(out), vec![BackendConfig::new("m", "replay")]);
        c.attempts = attempts;
        c.replay = Some(store.clone());
        c.jobs = 3;
        c.stop_after = stop;
        run_benchmark(&c, &corpus, &exec, &offline)
    };
    let a = replay("a", None).map_err(|e| e.to_string())?;
    let b = replay("b", None).map_err(|e| e.to_string())?;
    ensure(a.complete && b.complete && a.call_errors == 0, || "replay run incomplete".into())?;
    let na = normalized(&a.outcomes)?;
    ensure(na.len() == 30, || format!("{} records", na.len()))?;
    ensure(na == normalized(&b.outcomes)?, || "replay runs differ".into())?;

    let half = replay("c", Some(15)).map_err(|e| e.to_string())?;
    ensure(!half.complete && half.new_records == 15, || format!("interrupted run wrote {}", half.new_records))?;
    let resumed = replay("c", None).map_err(|e| e.to_string())?;
    ensure(resumed.resumed_records == 15 && resumed.new_records == 15, || "resume counts".into())?;
    let keys = |p: &std::path::Path| -> Result<BTreeSet<OutcomeKey>, String> {
        Ok(read_outcomes(p).map_err(|e| e.to_string())?.iter().map(|r| r.key()).collect())
    };
    ensure(keys(&resumed.outcomes)? == keys(&a.outcomes)?, || "resumed key set differs".into())?;
    ensure(normalized(&resumed.outcomes)? == na, || "resumed records differ".into())?;
    Ok(Status::Pass("two replay runs identical; 50% interrupt + resume gives the same 30 keyed records".into()))
}

fn c10_parser() -> Check {
    let boxes = [
        (
            serde_json::json!({
                "verdict": "NO - BEHAVIOR CHANGE",
                "explanation": "The refactoring moved method m() from class B to class C. In the original program, m() calls super.k(), which invokes A.k() and returns 10. In the refactored program, super refers to B, so m() calls B.k() and returns 20, changing the observable output.",
                "junit_test": PUSH_DOWN_TEST,
            }),
            VerdictCategory::NoBehaviorChange,
        ),
        (
            serde_json::json!({
                "verdict": "NO - COMPILATION ERROR",
                "explanation": "The expression (flag ? 1 : 2) has type int. In Java, primitives do not have methods, so calling .byteValue() on an int is a compile-time error. The original code relies on autoboxing to Integer, which is not applied in the refactored form.",
                "junit_test": null,
            }),
            VerdictCategory::NoCompilationError,
        ),
        (
            serde_json::json!({
                "verdict": "YES",
                "explanation": "The refactored code compiles: the conditional expression (flag ? 1 : 2) has type Integer due to boxing, so calling .byteValue() is valid.",
                "junit_test": null,
            }),
            VerdictCategory::Yes,
        ),
    ];
    let mut seeds = Vec::new();
    for (json, want) in &boxes {
        let text = json.to_string();
        match parse_response(&text, PromptKind::FullSource) {
            ParsedResponse::Verdict(v) => ensure(v.category == *want, || format!("{want} parsed as {}", v.category))?,
            ParsedResponse::Failure(f) => return Err(format!("{want}: {:?}", f.reason)),
        }
        seeds.push(text);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let alphabet: Vec<char> = "{}[]\":,\\ \nYESNO-abc".chars().collect();
    let (mut verdicts, mut failures) = (0, 0);
    for _ in 0..100 {
        let mut chars: Vec<char> = seeds.choose(&mut rng).unwrap().chars().collect();
        for _ in 0..rng.gen_range(1..=6) {
            let at = rng.gen_range(0..chars.len());
            match rng.gen_range(0..3) {
                0 => {
                    chars.remove(at);
                }
                1 => chars.insert(at, *alphabet.choose(&mut rng).unwrap()),
                _ => chars[at] = *alphabet.choose(&mut rng).unwrap(),
            }
        }
        let text: String = chars.into_iter().collect();
        let mode = if rng.gen() { PromptKind::FullSource } else { PromptKind::DiffOnly };
        match catch_unwind(AssertUnwindSafe(|| parse_response(&text, mode))) {
            Ok(ParsedResponse::Verdict(_)) => verdicts += 1,
            Ok(ParsedResponse::Failure(_)) => failures += 1,
            Err(_) => return Err(format!("parser panicked on {text:?}")),
        }
    }
    Ok(Status::Pass(format!("3 output boxes parse; 100 fuzz inputs -> {verdicts} verdicts, {failures} failures")))
}

fn main() -> ExitCode {
    type Criterion = (&'static str, fn() -> Check);
    let criteria: [Criterion; 10] = [
        ("1 statistics exact reproduction", c1_statistics),
        ("2 cochran q oracle and permutation invariance", c2_cochran),
        ("3 metrics engine definitional oracle", c3_metrics_oracle),
        ("4 metrics engine published acc@ curve", c4_published_curve),
        ("5 mixture-of-experts regions", c5_union),
        ("6 metamorphic operators", c6_metamorph),
        ("7 assessor truth table", c7_assessor),
        ("8 executor end-to-end", c8_executor),
        ("9 pipeline determinism and resume", c9_determinism),
        ("10 verdict parser", c10_parser),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        let start = Instant::now();
        let result = catch_unwind(check).unwrap_or_else(|_| Err("panicked".into()));
        let ms = start.elapsed().as_millis();
        match result {
            Ok(Status::Pass(d)) => println!("PASS criterion {name} ({ms} ms): {d}"),
            Ok(Status::Skip(d)) => println!("SKIP criterion {name} ({ms} ms): {d}"),
            Err(e) => {
                failed += 1;
                println!("FAIL criterion {name} ({ms} ms): {e}");
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

