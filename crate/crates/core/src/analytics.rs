//! Accuracy and stability metrics over run matrices, category splits, and
//! OR-union coverage across models.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::assessor::{AnswerLabel, AssessmentOutcome};
use crate::dataset::Label;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AnalyticsError {
    #[error("run matrix has no cells")]
    EmptyMatrix,
    #[error("k = {k} outside 1..={max}")]
    KOutOfRange { k: usize, max: usize },
    #[error("row {row} has {got} attempts, expected {want}")]
    Ragged { row: usize, got: usize, want: usize },
    #[error("solved set of {model} contains ids outside the corpus: {sample}")]
    MismatchedCorpus { model: String, sample: String },
    #[error("outcomes for {0} do not cover every attempt")]
    MissingCells(String),
}

/// One attempt on one instance. `answer` is `None` for inconclusive cells.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Cell {
    pub answer: Option<AnswerLabel>,
    pub correct: bool,
}

impl Cell {
    pub fn new(answer: AnswerLabel, correct: bool) -> Self {
        Self { answer: Some(answer), correct }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMatrix {
    pub backend_name: String,
    pub instance_ids: Vec<String>,
    pub labels: Vec<Label>,
    pub attempts: usize,
    /// `cells[i][j]`: instance i, attempt j + 1.
    pub cells: Vec<Vec<Cell>>,
}

impl RunMatrix {
    pub fn new(
        backend_name: impl Into<String>,
        instance_ids: Vec<String>,
        labels: Vec<Label>,
        cells: Vec<Vec<Cell>>,
    ) -> Result<Self, AnalyticsError> {
        let attempts = cells.first().map_or(0, Vec::len);
        if cells.is_empty() || attempts == 0 {
            return Err(AnalyticsError::EmptyMatrix);
        }
        for (row, r) in cells.iter().enumerate() {
            if r.len() != attempts {
                return Err(AnalyticsError::Ragged { row, got: r.len(), want: attempts });
            }
        }
        assert_eq!(instance_ids.len(), cells.len(), "one id per row");
        assert_eq!(labels.len(), cells.len(), "one label per row");
        Ok(Self { backend_name: backend_name.into(), instance_ids, labels, attempts, cells })
    }

    /// Matrix from a boolean grid; correct cells get the answer that is
    /// correct for `label`, incorrect ones `SAID_YES` (or `SAID_CE` for
    /// PRESERVING rows).
    pub fn from_bools(backend: &str, labels: Vec<Label>, grid: &[Vec<bool>]) -> Result<Self, AnalyticsError> {
        let ids = (0..grid.len()).map(|i| format!("i{i:04}")).collect();
        let cells = grid
            .iter()
            .zip(&labels)
            .map(|(row, &l)| row.iter().map(|&c| Cell::new(label_answer(l, c), c)).collect())
            .collect();
        Self::new(backend, ids, labels, cells)
    }

    /// Builds the matrix for one backend from assessment outcomes. Every
    /// (instance, attempt 1..=K) pair must be present.
    pub fn from_outcomes(
        backend: &str,
        order: &[(String, Label)],
        attempts: usize,
        outcomes: &[AssessmentOutcome],
    ) -> Result<Self, AnalyticsError> {
        let mut by_key: HashMap<(&str, u32), &AssessmentOutcome> = HashMap::new();
        for o in outcomes.iter().filter(|o| o.backend_name == backend) {
            by_key.insert((o.instance_id.as_str(), o.attempt_index), o);
        }
        let mut cells = Vec::with_capacity(order.len());
        for (id, _) in order {
            let row: Option<Vec<Cell>> = (1..=attempts as u32)
                .map(|a| by_key.get(&(id.as_str(), a)).map(|o| Cell { answer: o.answer_label, correct: o.correct }))
                .collect();
            cells.push(row.ok_or_else(|| AnalyticsError::MissingCells(format!("{backend}/{id}")))?);
        }
        Self::new(
            backend,
            order.iter().map(|p| p.0.clone()).collect(),
            order.iter().map(|p| p.1).collect(),
            cells,
        )
    }

    pub fn rows(&self) -> usize {
        self.cells.len()
    }

    /// Drops rows with any inconclusive cell; returns the matrix and the
    /// number of rows dropped. `None` when nothing remains.
    pub fn conclusive(&self) -> (Option<RunMatrix>, usize) {
        let keep: Vec<usize> =
            (0..self.rows()).filter(|&i| self.cells[i].iter().all(|c| c.answer.is_some())).collect();
        let dropped = self.rows() - keep.len();
        if keep.is_empty() {
            return (None, dropped);
        }
        let m = RunMatrix {
            backend_name: self.backend_name.clone(),
            instance_ids: keep.iter().map(|&i| self.instance_ids[i].clone()).collect(),
            labels: keep.iter().map(|&i| self.labels[i]).collect(),
            attempts: self.attempts,
            cells: keep.iter().map(|&i| self.cells[i].clone()).collect(),
        };
        (Some(m), dropped)
    }

    fn restrict(&self, label: Label) -> Option<RunMatrix> {
        let keep: Vec<usize> = (0..self.rows()).filter(|&i| self.labels[i] == label).collect();
        if keep.is_empty() {
            return None;
        }
        Some(RunMatrix {
            backend_name: self.backend_name.clone(),
            instance_ids: keep.iter().map(|&i| self.instance_ids[i].clone()).collect(),
            labels: keep.iter().map(|&i| self.labels[i]).collect(),
            attempts: self.attempts,
            cells: keep.iter().map(|&i| self.cells[i].clone()).collect(),
        })
    }

    fn check_k(&self, k: usize) -> Result<(), AnalyticsError> {
        if k == 0 || k > self.attempts {
            Err(AnalyticsError::KOutOfRange { k, max: self.attempts })
        } else {
            Ok(())
        }
    }

    /// Instance ids with a correct answer in the given attempt (1-based).
    pub fn solved_in_attempt(&self, attempt: usize) -> BTreeSet<String> {
        (0..self.rows())
            .filter(|&i| self.cells[i][attempt - 1].correct)
            .map(|i| self.instance_ids[i].clone())
            .collect()
    }

    pub fn attempt_outcomes(&self, attempt: usize) -> Vec<bool> {
        self.cells.iter().map(|r| r[attempt - 1].correct).collect()
    }
}

fn label_answer(label: Label, correct: bool) -> AnswerLabel {
    match (label, correct) {
        (Label::Bc, true) => AnswerLabel::SaidBcValid,
        (Label::Ce, true) => AnswerLabel::SaidCe,
        (Label::Preserving, true) => AnswerLabel::SaidYes,
        (Label::Preserving, false) => AnswerLabel::SaidCe,
        (_, false) => AnswerLabel::SaidYes,
    }
}

fn rate(num: usize, den: usize) -> f64 {
    num as f64 / den as f64
}

pub fn per_attempt_accuracy(m: &RunMatrix) -> Vec<f64> {
    (0..m.attempts).map(|j| rate(m.cells.iter().filter(|r| r[j].correct).count(), m.rows())).collect()
}

pub fn mean_accuracy(m: &RunMatrix) -> Result<f64, AnalyticsError> {
    if m.rows() == 0 {
        return Err(AnalyticsError::EmptyMatrix);
    }
    let correct = m.cells.iter().flatten().filter(|c| c.correct).count();
    Ok(rate(correct, m.rows() * m.attempts))
}

pub fn accuracy_spread(m: &RunMatrix) -> Result<f64, AnalyticsError> {
    if m.rows() == 0 {
        return Err(AnalyticsError::EmptyMatrix);
    }
    let acc = per_attempt_accuracy(m);
    let max = acc.iter().cloned().fold(f64::MIN, f64::max);
    let min = acc.iter().cloned().fold(f64::MAX, f64::min);
    Ok(max - min)
}

/// Fraction of instances with at least one correct answer in the first k.
pub fn acc_at(m: &RunMatrix, k: usize) -> Result<f64, AnalyticsError> {
    m.check_k(k)?;
    Ok(rate(m.cells.iter().filter(|r| r[..k].iter().any(|c| c.correct)).count(), m.rows()))
}

/// Fraction of instances whose first k answer labels are identical.
pub fn tar_at(m: &RunMatrix, k: usize) -> Result<f64, AnalyticsError> {
    m.check_k(k)?;
    Ok(rate(m.cells.iter().filter(|r| r[..k].iter().all(|c| c.answer == r[0].answer)).count(), m.rows()))
}

/// tar@k over binary correctness instead of answer labels.
pub fn tar_at_binary(m: &RunMatrix, k: usize) -> Result<f64, AnalyticsError> {
    m.check_k(k)?;
    Ok(rate(m.cells.iter().filter(|r| r[..k].iter().all(|c| c.correct == r[0].correct)).count(), m.rows()))
}

/// Fraction of instances whose strict-majority answer label among the first
/// k is a correct one. Ties and pluralities score zero.
pub fn cons_at(m: &RunMatrix, k: usize) -> Result<f64, AnalyticsError> {
    m.check_k(k)?;
    let hits = m
        .cells
        .iter()
        .filter(|r| {
            let mut counts: BTreeMap<Option<AnswerLabel>, (usize, bool)> = BTreeMap::new();
            for c in &r[..k] {
                let e = counts.entry(c.answer).or_default();
                e.0 += 1;
                e.1 |= c.correct;
            }
            counts.values().any(|&(n, correct)| 2 * n > k && correct)
        })
        .count();
    Ok(rate(hits, m.rows()))
}

/// cons@k over binary correctness: a strict majority of the first k is correct.
pub fn cons_at_binary(m: &RunMatrix, k: usize) -> Result<f64, AnalyticsError> {
    m.check_k(k)?;
    Ok(rate(m.cells.iter().filter(|r| 2 * r[..k].iter().filter(|c| c.correct).count() > k).count(), m.rows()))
}

/// acc@k restricted to BC rows and to CE rows; `None` for an empty category.
pub fn category_split(m: &RunMatrix, k: usize) -> Result<(Option<f64>, Option<f64>), AnalyticsError> {
    m.check_k(k)?;
    let bc = m.restrict(Label::Bc).map(|s| acc_at(&s, k)).transpose()?;
    let ce = m.restrict(Label::Ce).map(|s| acc_at(&s, k)).transpose()?;
    Ok((bc, ce))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub backend_name: String,
    pub rows: usize,
    pub attempts: usize,
    /// Rows removed because some attempt was inconclusive.
    pub dropped_rows: usize,
    pub mean_accuracy: f64,
    pub accuracy_spread: f64,
    pub per_attempt: Vec<f64>,
    pub acc_at: BTreeMap<usize, f64>,
    pub tar_at: BTreeMap<usize, f64>,
    pub cons_at: BTreeMap<usize, f64>,
    pub tar_at_binary: BTreeMap<usize, f64>,
    pub cons_at_binary: BTreeMap<usize, f64>,
    pub bc_at: BTreeMap<usize, f64>,
    pub ce_at: BTreeMap<usize, f64>,
}

impl MetricReport {
    /// Computes every metric after dropping inconclusive rows.
    pub fn compute(m: &RunMatrix) -> Result<Self, AnalyticsError> {
        let (kept, dropped_rows) = m.conclusive();
        let m = kept.ok_or(AnalyticsError::EmptyMatrix)?;
        let ks = 1..=m.attempts;
        let curve = |f: fn(&RunMatrix, usize) -> Result<f64, AnalyticsError>| -> Result<BTreeMap<usize, f64>, AnalyticsError> {
            ks.clone().map(|k| Ok((k, f(&m, k)?))).collect()
        };
        let mut bc_at = BTreeMap::new();
        let mut ce_at = BTreeMap::new();
        for k in ks.clone() {
            let (bc, ce) = category_split(&m, k)?;
            if let Some(v) = bc {
                bc_at.insert(k, v);
            }
            if let Some(v) = ce {
                ce_at.insert(k, v);
            }
        }
        Ok(Self {
            backend_name: m.backend_name.clone(),
            rows: m.rows(),
            attempts: m.attempts,
            dropped_rows,
            mean_accuracy: mean_accuracy(&m)?,
            accuracy_spread: accuracy_spread(&m)?,
            per_attempt: per_attempt_accuracy(&m),
            acc_at: curve(acc_at)?,
            tar_at: curve(tar_at)?,
            cons_at: curve(cons_at)?,
            tar_at_binary: curve(tar_at_binary)?,
            cons_at_binary: curve(cons_at_binary)?,
            bc_at,
            ce_at,
        })
    }

    /// Rows of (metric, k, value); scalar metrics use k = 0.
    pub fn rows(&self) -> Vec<(String, usize, f64)> {
        let mut out = vec![
            ("mean_accuracy".to_string(), 0, self.mean_accuracy),
            ("accuracy_spread".to_string(), 0, self.accuracy_spread),
        ];
        for (j, a) in self.per_attempt.iter().enumerate() {
            out.push(("attempt_accuracy".into(), j + 1, *a));
        }
        for (name, map) in [
            ("acc_at", &self.acc_at),
            ("tar_at", &self.tar_at),
            ("cons_at", &self.cons_at),
            ("tar_at_binary", &self.tar_at_binary),
            ("cons_at_binary", &self.cons_at_binary),
            ("bc_at", &self.bc_at),
            ("ce_at", &self.ce_at),
        ] {
            out.extend(map.iter().map(|(k, v)| (name.to_string(), *k, *v)));
        }
        out
    }

    /// CSV with columns `metric,k,value`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("metric,k,value\n");
        for (m, k, v) in self.rows() {
            s.push_str(&format!("{m},{k},{v:.6}\n"));
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UnionReport {
    pub models: Vec<String>,
    pub solved: BTreeMap<String, usize>,
    pub union_size: usize,
    /// Exclusive region counts keyed by the set of models that solved the
    /// instance (every non-empty subset is present). Serialized as a list of
    /// `{models, count}` objects.
    #[serde(with = "region_list")]
    pub regions: BTreeMap<Vec<String>, usize>,
}

mod region_list {
    use std::collections::BTreeMap;

    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    struct Region {
        models: Vec<String>,
        count: usize,
    }

    pub fn serialize<S: Serializer>(m: &BTreeMap<Vec<String>, usize>, s: S) -> Result<S::Ok, S::Error> {
        let v: Vec<Region> = m.iter().map(|(k, c)| Region { models: k.clone(), count: *c }).collect();
        v.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<BTreeMap<Vec<String>, usize>, D::Error> {
        Ok(Vec::<Region>::deserialize(d)?.into_iter().map(|r| (r.models, r.count)).collect())
    }
}

impl UnionReport {
    pub fn region(&self, models: &[&str]) -> usize {
        let mut key: Vec<String> = models.iter().map(|s| s.to_string()).collect();
        key.sort_by_key(|m| self.models.iter().position(|x| x == m));
        self.regions.get(&key).copied().unwrap_or(0)
    }
}

/// OR-union of per-model solved sets with exact Venn region counts.
pub fn union_coverage(
    models: &[(String, BTreeSet<String>)],
    universe: &BTreeSet<String>,
) -> Result<UnionReport, AnalyticsError> {
    for (name, set) in models {
        if let Some(stray) = set.difference(universe).next() {
            return Err(AnalyticsError::MismatchedCorpus { model: name.clone(), sample: stray.clone() });
        }
    }
    let names: Vec<String> = models.iter().map(|m| m.0.clone()).collect();
    let mut regions: BTreeMap<Vec<String>, usize> = BTreeMap::new();
    for mask in 1u32..(1u32 << models.len()) {
        let key = (0..models.len()).filter(|i| mask & (1 << i) != 0).map(|i| names[i].clone()).collect();
        regions.insert(key, 0);
    }
    let mut union_size = 0;
    for id in universe {
        let key: Vec<String> = models.iter().filter(|m| m.1.contains(id)).map(|m| m.0.clone()).collect();
        if !key.is_empty() {
            union_size += 1;
            *regions.get_mut(&key).expect("every subset present") += 1;
        }
    }
    Ok(UnionReport {
        models: names,
        solved: models.iter().map(|m| (m.0.clone(), m.1.len())).collect(),
        union_size,
        regions,
    })
}
