//! Per-attempt correctness of a model verdict against ground truth.
//!
//! A behavioral-change claim only counts when the model's own test compiles
//! against both versions and passes on exactly one of them.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::dataset::{BugInstance, Label};
use crate::executor::{check_discriminating, uses_reflection, DiscriminationResult, JavaToolchain};
use crate::model_client::Telemetry;
use crate::verdict::{extract_test_source, ParsedResponse, VerdictCategory};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum AnswerLabel {
    SaidYes,
    SaidCe,
    SaidBcValid,
    SaidBcTestNotCompiling,
    SaidBcTestNotDiscriminating,
    SaidUnknown,
    ParseError,
}

impl AnswerLabel {
    pub const ALL: [AnswerLabel; 7] = [
        AnswerLabel::SaidYes,
        AnswerLabel::SaidCe,
        AnswerLabel::SaidBcValid,
        AnswerLabel::SaidBcTestNotCompiling,
        AnswerLabel::SaidBcTestNotDiscriminating,
        AnswerLabel::SaidUnknown,
        AnswerLabel::ParseError,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            AnswerLabel::SaidYes => "SAID_YES",
            AnswerLabel::SaidCe => "SAID_CE",
            AnswerLabel::SaidBcValid => "SAID_BC_VALID",
            AnswerLabel::SaidBcTestNotCompiling => "SAID_BC_TEST_NOT_COMPILING",
            AnswerLabel::SaidBcTestNotDiscriminating => "SAID_BC_TEST_NOT_DISCRIMINATING",
            AnswerLabel::SaidUnknown => "SAID_UNKNOWN",
            AnswerLabel::ParseError => "PARSE_ERROR",
        }
    }

    /// Whether this answer is correct for an instance with ground truth `label`.
    pub fn is_correct_for(self, label: Label) -> bool {
        matches!(
            (label, self),
            (Label::Ce, AnswerLabel::SaidCe)
                | (Label::Bc, AnswerLabel::SaidBcValid)
                | (Label::Preserving, AnswerLabel::SaidYes)
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssessmentOutcome {
    pub instance_id: String,
    pub attempt_index: u32,
    pub backend_name: String,
    pub variant_tag: Option<String>,
    pub label: Label,
    pub correct: bool,
    /// `None` when the outcome is inconclusive.
    pub answer_label: Option<AnswerLabel>,
    /// Reason the toolchain could not decide, if any.
    pub inconclusive: Option<String>,
    /// Category the model claimed, when the response parsed.
    pub claimed: Option<VerdictCategory>,
    pub evidence: Option<DiscriminationResult>,
    /// The model's test uses reflection.
    pub reflective: bool,
    pub schema_violations: Vec<String>,
    pub telemetry: Telemetry,
}

impl AssessmentOutcome {
    fn new(inst: &BugInstance, claimed: Option<VerdictCategory>, answer: AnswerLabel) -> Self {
        Self {
            instance_id: inst.id.clone(),
            attempt_index: 1,
            backend_name: String::new(),
            variant_tag: None,
            label: inst.label,
            correct: answer.is_correct_for(inst.label),
            answer_label: Some(answer),
            inconclusive: None,
            claimed,
            evidence: None,
            reflective: false,
            schema_violations: Vec::new(),
            telemetry: Telemetry::default(),
        }
    }

    pub fn is_inconclusive(&self) -> bool {
        self.answer_label.is_none()
    }

    pub fn with_context(mut self, backend: &str, attempt_index: u32, variant_tag: Option<&str>, t: Telemetry) -> Self {
        self.backend_name = backend.to_string();
        self.attempt_index = attempt_index;
        self.variant_tag = variant_tag.map(str::to_string);
        self.telemetry = t;
        self
    }
}

/// Assesses a response for any ground-truth label. PRESERVING instances are
/// delegated to [`assess_preserving`]; `tag` names executor workspaces.
pub fn assess(inst: &BugInstance, parsed: &ParsedResponse, exec: &dyn JavaToolchain, tag: &str) -> AssessmentOutcome {
    if inst.label == Label::Preserving {
        return assess_preserving(inst, parsed);
    }
    let v = match parsed {
        ParsedResponse::Failure(_) => return AssessmentOutcome::new(inst, None, AnswerLabel::ParseError),
        ParsedResponse::Verdict(v) => v,
    };
    let mut out = match (v.category, inst.label) {
        (VerdictCategory::Yes, _) => AssessmentOutcome::new(inst, Some(v.category), AnswerLabel::SaidYes),
        (VerdictCategory::Unknown, _) => AssessmentOutcome::new(inst, Some(v.category), AnswerLabel::SaidUnknown),
        (VerdictCategory::NoCompilationError, _) => AssessmentOutcome::new(inst, Some(v.category), AnswerLabel::SaidCe),
        // The resulting program of a CE instance does not compile, so no
        // test can compile against both versions.
        (VerdictCategory::NoBehaviorChange, Label::Ce) => {
            let mut o = AssessmentOutcome::new(inst, Some(v.category), AnswerLabel::SaidBcTestNotCompiling);
            o.reflective = v.junit_test.as_deref().is_some_and(uses_reflection);
            o
        }
        (VerdictCategory::NoBehaviorChange, _) => assess_bc_claim(inst, v, exec, tag),
    };
    out.schema_violations = v.schema_violations.clone();
    out
}

fn assess_bc_claim(
    inst: &BugInstance,
    v: &crate::verdict::ModelVerdict,
    exec: &dyn JavaToolchain,
    tag: &str,
) -> AssessmentOutcome {
    let claimed = Some(v.category);
    let test = match extract_test_source(v) {
        Ok(Some(t)) => t,
        Ok(None) | Err(_) => return AssessmentOutcome::new(inst, claimed, AnswerLabel::SaidBcTestNotCompiling),
    };
    let reflective = uses_reflection(&test.text);
    let evidence = match check_discriminating(exec, &test, &inst.original, &inst.resulting, tag) {
        Ok(e) => e,
        Err(e) => {
            let mut o = AssessmentOutcome::new(inst, claimed, AnswerLabel::SaidBcTestNotCompiling);
            o.answer_label = None;
            o.correct = false;
            o.inconclusive = Some(e.to_string());
            o.reflective = reflective;
            return o;
        }
    };
    let answer = if !evidence.compiled_on_both() {
        AnswerLabel::SaidBcTestNotCompiling
    } else if reflective || !evidence.discriminates {
        AnswerLabel::SaidBcTestNotDiscriminating
    } else {
        AnswerLabel::SaidBcValid
    };
    let mut o = AssessmentOutcome::new(inst, claimed, answer);
    o.reflective = reflective;
    o.evidence = Some(evidence);
    o
}

/// Assesses a response for a behavior-preserving instance: correct iff the
/// model answered YES. Claimed BC tests are not executed.
pub fn assess_preserving(inst: &BugInstance, parsed: &ParsedResponse) -> AssessmentOutcome {
    let v = match parsed {
        ParsedResponse::Failure(_) => return AssessmentOutcome::new(inst, None, AnswerLabel::ParseError),
        ParsedResponse::Verdict(v) => v,
    };
    let answer = match v.category {
        VerdictCategory::Yes => AnswerLabel::SaidYes,
        VerdictCategory::NoCompilationError => AnswerLabel::SaidCe,
        VerdictCategory::Unknown => AnswerLabel::SaidUnknown,
        VerdictCategory::NoBehaviorChange => match extract_test_source(v) {
            Ok(Some(_)) => AnswerLabel::SaidBcTestNotDiscriminating,
            _ => AnswerLabel::SaidBcTestNotCompiling,
        },
    };
    let mut o = AssessmentOutcome::new(inst, Some(v.category), answer);
    o.reflective = v.junit_test.as_deref().is_some_and(uses_reflection);
    o.schema_violations = v.schema_violations.clone();
    o
}

/// Answer-label counts of a run plus the number of inconclusive outcomes.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub by_label: BTreeMap<Label, BTreeMap<AnswerLabel, usize>>,
    pub inconclusive: usize,
    pub total: usize,
}

impl ConfusionCounts {
    pub fn from_outcomes<'a>(outcomes: impl IntoIterator<Item = &'a AssessmentOutcome>) -> Self {
        let mut c = ConfusionCounts::default();
        for o in outcomes {
            c.total += 1;
            match o.answer_label {
                Some(a) => *c.by_label.entry(o.label).or_default().entry(a).or_default() += 1,
                None => c.inconclusive += 1,
            }
        }
        c
    }

    pub fn conclusive(&self) -> usize {
        self.by_label.values().flat_map(|m| m.values()).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{JavaSource, SourceSet, Tool};
    use crate::executor::{MockToolchain, TestOutcome};
    use crate::verdict::{ModelVerdict, ParseFailure, ParseFailureReason};

    const TEST: &str = "import org.junit.Test;\npublic class T { @Test public void t() {} }\n";

    fn inst(label: Label) -> BugInstance {
        let test = (label == Label::Bc).then(|| JavaSource { class_name: "X".into(), text: "public class X {}".into() });
        BugInstance::new(
            "i",
            Tool::Eclipse,
            "Pull Up Method",
            label,
            SourceSet::single("A.java", "class A { int m() { return 1; } }").unwrap(),
            SourceSet::single("A.java", "class A { int m() { return 2; } }").unwrap(),
            test,
        )
        .unwrap()
    }

    fn verdict(cat: VerdictCategory, test: Option<&str>) -> ParsedResponse {
        ParsedResponse::Verdict(ModelVerdict {
            category: cat,
            explanation: "e".into(),
            junit_test: test.map(str::to_string),
            stripped_noise: false,
            schema_violations: vec![],
        })
    }

    fn script(a: &BugInstance, orig: TestOutcome, res: TestOutcome, text: &str) -> MockToolchain {
        let t = JavaSource { class_name: "T".into(), text: text.into() };
        let mut m = MockToolchain::new();
        m.script_test(&a.original, &t, orig).script_test(&a.resulting, &t, res);
        m
    }

    #[test]
    fn yes_and_parse_errors_are_wrong() {
        let m = MockToolchain::new();
        for label in [Label::Bc, Label::Ce] {
            let o = assess(&inst(label), &verdict(VerdictCategory::Yes, None), &m, "t");
            assert_eq!((o.answer_label, o.correct), (Some(AnswerLabel::SaidYes), false));
            let f = ParsedResponse::Failure(ParseFailure { reason: ParseFailureReason::NotJson, excerpt: String::new() });
            let o = assess(&inst(label), &f, &m, "t");
            assert_eq!((o.answer_label, o.correct), (Some(AnswerLabel::ParseError), false));
        }
    }

    #[test]
    fn bc_claim_outcomes() {
        let a = inst(Label::Bc);
        let cases = [
            (TestOutcome::Pass, TestOutcome::Fail, AnswerLabel::SaidBcValid),
            (TestOutcome::Fail, TestOutcome::Pass, AnswerLabel::SaidBcValid),
            (TestOutcome::Pass, TestOutcome::Pass, AnswerLabel::SaidBcTestNotDiscriminating),
            (TestOutcome::DidNotCompile, TestOutcome::Fail, AnswerLabel::SaidBcTestNotCompiling),
        ];
        for (o1, o2, want) in cases {
            let m = script(&a, o1, o2, TEST);
            let o = assess(&a, &verdict(VerdictCategory::NoBehaviorChange, Some(TEST)), &m, "t");
            assert_eq!(o.answer_label, Some(want));
            assert_eq!(o.correct, want == AnswerLabel::SaidBcValid);
            assert!(o.evidence.is_some());
        }
        let m = MockToolchain::new();
        let o = assess(&a, &verdict(VerdictCategory::NoBehaviorChange, None), &m, "t");
        assert_eq!(o.answer_label, Some(AnswerLabel::SaidBcTestNotCompiling));
        let o = assess(&a, &verdict(VerdictCategory::NoBehaviorChange, Some("class NotPublic {}")), &m, "t");
        assert_eq!(o.answer_label, Some(AnswerLabel::SaidBcTestNotCompiling));
    }

    #[test]
    fn reflective_test_does_not_count() {
        let a = inst(Label::Bc);
        let text = "import org.junit.Test;\npublic class T { @Test public void t() throws Exception { A.class.getDeclaredMethod(\"m\").setAccessible(true); } }\n";
        let m = script(&a, TestOutcome::Pass, TestOutcome::Fail, text);
        let o = assess(&a, &verdict(VerdictCategory::NoBehaviorChange, Some(text)), &m, "t");
        assert_eq!(o.answer_label, Some(AnswerLabel::SaidBcTestNotDiscriminating));
        assert!(o.reflective && !o.correct);
    }

    #[test]
    fn toolchain_failure_is_inconclusive() {
        let a = inst(Label::Bc);
        let o = assess(&a, &verdict(VerdictCategory::NoBehaviorChange, Some(TEST)), &MockToolchain::new(), "t");
        assert!(o.is_inconclusive() && !o.correct && o.inconclusive.is_some());
    }

    #[test]
    fn ce_and_preserving() {
        let m = MockToolchain::new();
        let o = assess(&inst(Label::Ce), &verdict(VerdictCategory::NoCompilationError, None), &m, "t");
        assert!(o.correct);
        let o = assess(&inst(Label::Ce), &verdict(VerdictCategory::NoBehaviorChange, Some(TEST)), &m, "t");
        assert!(!o.correct);
        let p = inst(Label::Preserving);
        assert!(assess_preserving(&p, &verdict(VerdictCategory::Yes, None)).correct);
        let o = assess_preserving(&p, &verdict(VerdictCategory::NoCompilationError, None));
        assert_eq!((o.claimed, o.correct), (Some(VerdictCategory::NoCompilationError), false));
    }

    #[test]
    fn confusion_sums() {
        let m = MockToolchain::new();
        let a = inst(Label::Bc);
        let outs = vec![
            assess(&a, &verdict(VerdictCategory::Yes, None), &m, "t"),
            assess(&a, &verdict(VerdictCategory::NoBehaviorChange, Some(TEST)), &m, "t"),
            assess(&a, &verdict(VerdictCategory::NoCompilationError, None), &m, "t"),
        ];
        let c = ConfusionCounts::from_outcomes(&outs);
        assert_eq!(c.inconclusive, 1);
        assert_eq!(c.conclusive() + c.inconclusive, c.total);
    }
}
