//! Randomized behavior-preserving program transformations.
//!
//! Each operator injects exactly one element into the original program of an
//! instance. The resulting program is never touched. All choices derive from
//! the seed passed in, so a variant is a pure function of (source, operator,
//! seed).

pub mod index;

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::dataset::{write_instance_dir, BugCorpus, BugInstance, SourceSet};
pub use index::{index_structure, FileIndex, InsertionPoint, ScanError, StructuralIndex, TypeKind, TypeSpan};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum OperatorId {
    AF,
    CO,
    IC,
    JI,
    LVD,
    TLC,
}

impl OperatorId {
    pub const ALL: [OperatorId; 6] =
        [OperatorId::AF, OperatorId::CO, OperatorId::IC, OperatorId::JI, OperatorId::LVD, OperatorId::TLC];

    pub fn as_str(self) -> &'static str {
        match self {
            OperatorId::AF => "AF",
            OperatorId::CO => "CO",
            OperatorId::IC => "IC",
            OperatorId::JI => "JI",
            OperatorId::LVD => "LVD",
            OperatorId::TLC => "TLC",
        }
    }
}

impl fmt::Display for OperatorId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for OperatorId {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        OperatorId::ALL
            .into_iter()
            .find(|o| o.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown operator `{s}`"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InjectedKind {
    Field,
    Comment,
    InnerClass,
    Import,
    LocalVariable,
    TopLevelClass,
}

/// One injected element. `text` is the exact inserted byte sequence and
/// `offset` its position in the transformed file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InjectedElement {
    pub kind: InjectedKind,
    /// Identifiers introduced (empty for comments; the type name for imports).
    pub names: Vec<String>,
    pub file: String,
    /// 1-based line of the first inserted non-newline character.
    pub line: usize,
    pub offset: usize,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MetamorphicVariant {
    pub base_instance_id: String,
    pub operator: OperatorId,
    pub seed: u64,
    pub transformed_original: SourceSet,
    pub manifest: Vec<InjectedElement>,
    pub resulting_unchanged: bool,
}

impl MetamorphicVariant {
    /// Tag used to key transcripts and outcomes for this variant.
    pub fn tag(&self) -> String {
        format!("mm-{}-{:016x}", self.operator, self.seed)
    }

    /// Identifiers introduced by the transformation (imported type names excluded).
    pub fn injected_identifiers(&self) -> Vec<&str> {
        self.manifest
            .iter()
            .filter(|e| e.kind != InjectedKind::Import)
            .flat_map(|e| e.names.iter().map(String::as_str))
            .collect()
    }

    /// The instance with its original program replaced by the variant.
    pub fn apply_to(&self, inst: &BugInstance) -> BugInstance {
        let mut out = inst.clone();
        out.original = self.transformed_original.clone();
        out.diff = None;
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MetamorphError {
    #[error("operator {0} has no legal insertion point")]
    NoInsertionPoint(OperatorId),
    #[error(transparent)]
    Scan(#[from] ScanError),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RestoreError {
    #[error("manifest refers to unknown file {0}")]
    UnknownFile(String),
    #[error("{file}: injected text not found at offset {offset}")]
    TextMismatch { file: String, offset: usize },
}

const JI_POOL: [&str; 12] = [
    "java.util.ArrayList",
    "java.util.LinkedList",
    "java.util.HashMap",
    "java.util.TreeMap",
    "java.util.HashSet",
    "java.util.TreeSet",
    "java.util.ArrayDeque",
    "java.util.PriorityQueue",
    "java.util.Optional",
    "java.util.Objects",
    "java.util.StringJoiner",
    "java.util.BitSet",
];

const COMMENTS: [&str; 8] = [
    "TODO: review this section",
    "helper logic follows",
    "NOTE: keep in sync with callers",
    "cached value",
    "simple accessor",
    "legacy code path",
    "see issue tracker",
    "performance-sensitive",
];

const FIELD_TYPES: [&str; 12] =
    ["int", "long", "boolean", "char", "double", "float", "String", "Integer", "Long", "Boolean", "Double", "Character"];

const FIELD_MODIFIERS: [&str; 5] = ["", "private ", "protected ", "final ", "private final "];
const CLASS_MODIFIERS: [&str; 3] = ["", "private ", "protected "];

/// A literal whose static type is exactly `ty`.
fn literal_for(ty: &str, rng: &mut ChaCha8Rng) -> String {
    let n: u32 = rng.gen_range(0..1000);
    let d: u32 = rng.gen_range(0..10);
    match ty {
        "int" | "Integer" => n.to_string(),
        "long" | "Long" => format!("{n}L"),
        "boolean" | "Boolean" => rng.gen_bool(0.5).to_string(),
        "char" | "Character" => format!("'{}'", (b'a' + rng.gen_range(0..26)) as char),
        "double" | "Double" => format!("{n}.{d}"),
        "float" => format!("{n}.{d}f"),
        "String" => format!("\"{}{n}\"", ["value", "item", "data", "text"].choose(rng).unwrap()),
        other => unreachable!("no literal for {other}"),
    }
}

fn declaration(rng: &mut ChaCha8Rng, name: &str) -> String {
    let ty = *FIELD_TYPES.choose(rng).unwrap();
    let lit = literal_for(ty, rng);
    format!("{ty} {name} = {lit};")
}

/// Draws `prefix` plus a four-character `[a-z0-9]` suffix that does not occur
/// in the index, and reserves it.
pub fn fresh_identifier<R: Rng + ?Sized>(index: &mut StructuralIndex, prefix: &str, rng: &mut R) -> String {
    const ALPHABET: &[u8] = b"abcdefghijklmnopqrstuvwxyz0123456789";
    loop {
        let suffix: String = (0..4).map(|_| ALPHABET[rng.gen_range(0..ALPHABET.len())] as char).collect();
        let name = format!("{prefix}{suffix}");
        if index.identifiers.insert(name.clone()) {
            return name;
        }
    }
}

fn line_at(text: &str, offset: usize) -> usize {
    text[..offset].bytes().filter(|b| *b == b'\n').count() + 1
}

struct Insertion {
    file_idx: usize,
    offset: usize,
    text: String,
    kind: InjectedKind,
    names: Vec<String>,
}

/// Text for a declaration spliced at `p`, either on its own line or inline.
fn at_point(p: &InsertionPoint, decl: &str) -> String {
    if p.line_start {
        format!("{}{decl}\n", p.indent)
    } else {
        format!(" {decl}")
    }
}

fn member_points(idx: &StructuralIndex) -> Vec<(usize, &InsertionPoint)> {
    idx.files
        .iter()
        .enumerate()
        .flat_map(|(i, f)| f.member_points.iter().map(move |p| (i, p)))
        .collect()
}

fn body_points(idx: &StructuralIndex) -> Vec<(usize, &InsertionPoint)> {
    idx.files
        .iter()
        .enumerate()
        .flat_map(|(i, f)| f.body_points.iter().map(move |p| (i, p)))
        .collect()
}

fn import_candidates(idx: &StructuralIndex) -> Vec<&'static str> {
    JI_POOL
        .iter()
        .copied()
        .filter(|fq| {
            let simple = fq.rsplit('.').next().unwrap();
            !idx.identifiers.contains(simple)
                && !idx.files.iter().any(|f| f.imports.iter().any(|i| i == fq || i.ends_with(&format!(".{simple}"))))
        })
        .collect()
}

/// Whether `op` has at least one legal insertion point in `src`.
pub fn is_applicable(idx: &StructuralIndex, op: OperatorId) -> bool {
    match op {
        OperatorId::AF | OperatorId::IC => !member_points(idx).is_empty(),
        OperatorId::LVD => !body_points(idx).is_empty(),
        OperatorId::JI => !import_candidates(idx).is_empty(),
        OperatorId::CO => idx.files.iter().any(|f| !f.line_boundaries.is_empty()),
        OperatorId::TLC => !idx.files.is_empty(),
    }
}

fn plan(src: &SourceSet, idx: &mut StructuralIndex, op: OperatorId, rng: &mut ChaCha8Rng) -> Option<Insertion> {
    match op {
        OperatorId::AF => {
            let (fi, p) = member_points(idx).choose(rng).map(|(i, p)| (*i, (*p).clone()))?;
            let name = fresh_identifier(idx, ["field", "aux", "cache", "extra"].choose(rng).unwrap(), rng);
            let mods = if p.owner_kind == TypeKind::Interface { "" } else { FIELD_MODIFIERS.choose(rng).unwrap() };
            let decl = format!("{mods}{}", declaration(rng, &name));
            Some(Insertion { file_idx: fi, offset: p.offset, text: at_point(&p, &decl), kind: InjectedKind::Field, names: vec![name] })
        }
        OperatorId::IC => {
            let (fi, p) = member_points(idx).choose(rng).map(|(i, p)| (*i, (*p).clone()))?;
            let class = fresh_identifier(idx, ["Inner", "Helper", "Holder", "Nested"].choose(rng).unwrap(), rng);
            let field = fresh_identifier(idx, ["value", "data", "item"].choose(rng).unwrap(), rng);
            let mods = if p.owner_kind == TypeKind::Interface { "" } else { CLASS_MODIFIERS.choose(rng).unwrap() };
            let decl = format!("{mods}class {class} {{ {} }}", declaration(rng, &field));
            Some(Insertion {
                file_idx: fi,
                offset: p.offset,
                text: at_point(&p, &decl),
                kind: InjectedKind::InnerClass,
                names: vec![class, field],
            })
        }
        OperatorId::LVD => {
            let (fi, p) = body_points(idx).choose(rng).map(|(i, p)| (*i, (*p).clone()))?;
            let name = fresh_identifier(idx, ["local", "tmp", "unused", "temp"].choose(rng).unwrap(), rng);
            let decl = declaration(rng, &name);
            Some(Insertion {
                file_idx: fi,
                offset: p.offset,
                text: at_point(&p, &decl),
                kind: InjectedKind::LocalVariable,
                names: vec![name],
            })
        }
        OperatorId::JI => {
            let fq = *import_candidates(idx).choose(rng)?;
            let fi = rng.gen_range(0..idx.files.len());
            let p = idx.files[fi].import_point.clone();
            let decl = format!("import {fq};");
            let simple = fq.rsplit('.').next().unwrap().to_string();
            idx.identifiers.insert(simple.clone());
            Some(Insertion { file_idx: fi, offset: p.offset, text: at_point(&p, &decl), kind: InjectedKind::Import, names: vec![simple] })
        }
        OperatorId::CO => {
            let files: Vec<usize> = (0..idx.files.len()).filter(|&i| !idx.files[i].line_boundaries.is_empty()).collect();
            let fi = *files.choose(rng)?;
            let offset = *idx.files[fi].line_boundaries.choose(rng)?;
            let content = &src.files()[fi].content;
            let line = &content[offset..];
            let indent: String = line.chars().take_while(|c| *c == ' ' || *c == '\t').collect();
            let comment = format!("// {} {}", COMMENTS.choose(rng).unwrap(), rng.gen_range(0..1000));
            let text = if offset == content.len() && !content.is_empty() && !content.ends_with('\n') {
                format!("\n{comment}")
            } else {
                format!("{indent}{comment}\n")
            };
            Some(Insertion { file_idx: fi, offset, text, kind: InjectedKind::Comment, names: vec![] })
        }
        OperatorId::TLC => {
            if idx.files.is_empty() {
                return None;
            }
            let fi = rng.gen_range(0..idx.files.len());
            let class = fresh_identifier(idx, ["Aux", "Extra", "Support", "Util"].choose(rng).unwrap(), rng);
            let field = fresh_identifier(idx, ["field", "value", "count"].choose(rng).unwrap(), rng);
            let content = &src.files()[fi].content;
            let lead = if content.ends_with('\n') { "\n" } else { "\n\n" };
            let text = format!("{lead}class {class} {{\n  {}\n}}\n", declaration(rng, &field));
            Some(Insertion {
                file_idx: fi,
                offset: content.len(),
                text,
                kind: InjectedKind::TopLevelClass,
                names: vec![class, field],
            })
        }
    }
}

/// Applies one operator to a program. Errors with `NoInsertionPoint` when the
/// operator has nowhere to go; the caller may pick another one.
pub fn apply_operator(src: &SourceSet, op: OperatorId, seed: u64) -> Result<MetamorphicVariant, MetamorphError> {
    let mut idx = index_structure(src)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ins = plan(src, &mut idx, op, &mut rng).ok_or(MetamorphError::NoInsertionPoint(op))?;

    let mut contents: Vec<String> = src.files().iter().map(|f| f.content.clone()).collect();
    let target = &mut contents[ins.file_idx];
    target.insert_str(ins.offset, &ins.text);
    let lead = ins.text.len() - ins.text.trim_start_matches('\n').len();
    let line = line_at(target, ins.offset + lead);
    let element = InjectedElement {
        kind: ins.kind,
        names: ins.names,
        file: src.files()[ins.file_idx].path.clone(),
        line,
        offset: ins.offset,
        text: ins.text,
    };
    Ok(MetamorphicVariant {
        base_instance_id: String::new(),
        operator: op,
        seed,
        transformed_original: src.replace_contents(contents),
        manifest: vec![element],
        resulting_unchanged: true,
    })
}

/// Removes every manifest element from the variant, recovering the base
/// program. Fails if an element's text is not where the manifest says.
pub fn restore_original(v: &MetamorphicVariant) -> Result<SourceSet, RestoreError> {
    let files = v.transformed_original.files();
    let mut contents: Vec<String> = files.iter().map(|f| f.content.clone()).collect();
    let mut elems: Vec<&InjectedElement> = v.manifest.iter().collect();
    elems.sort_by_key(|e| std::cmp::Reverse(e.offset));
    for e in elems {
        let i = files.iter().position(|f| f.path == e.file).ok_or_else(|| RestoreError::UnknownFile(e.file.clone()))?;
        let c = &mut contents[i];
        if c.get(e.offset..e.offset + e.text.len()) != Some(e.text.as_str()) {
            return Err(RestoreError::TextMismatch { file: e.file.clone(), offset: e.offset });
        }
        c.replace_range(e.offset..e.offset + e.text.len(), "");
    }
    Ok(v.transformed_original.replace_contents(contents))
}

/// Per-instance generator keyed by SHA-256 of the master seed and instance id.
pub fn instance_rng(master_seed: u64, instance_id: &str) -> ChaCha8Rng {
    let mut h = Sha256::new();
    h.update(master_seed.to_le_bytes());
    h.update(instance_id.as_bytes());
    ChaCha8Rng::from_seed(h.finalize().into())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusTransform {
    pub master_seed: u64,
    pub variants: Vec<MetamorphicVariant>,
    pub operator_counts: BTreeMap<OperatorId, usize>,
    /// Instances for which no operator applied (left untransformed).
    pub unchanged: Vec<String>,
}

/// Picks one operator per instance uniformly among the applicable ones.
pub fn transform_instance(inst: &BugInstance, master_seed: u64) -> Option<MetamorphicVariant> {
    let mut rng = instance_rng(master_seed, &inst.id);
    let mut ops: Vec<OperatorId> = match index_structure(&inst.original) {
        Ok(idx) => OperatorId::ALL.into_iter().filter(|o| is_applicable(&idx, *o)).collect(),
        Err(_) => return None,
    };
    while !ops.is_empty() {
        let pick = rng.gen_range(0..ops.len());
        let op = ops[pick];
        let seed: u64 = rng.gen();
        match apply_operator(&inst.original, op, seed) {
            Ok(mut v) => {
                v.base_instance_id = inst.id.clone();
                return Some(v);
            }
            Err(_) => {
                ops.remove(pick);
            }
        }
    }
    None
}

pub fn transform_corpus(corpus: &BugCorpus, master_seed: u64) -> CorpusTransform {
    let mut out = CorpusTransform {
        master_seed,
        variants: Vec::with_capacity(corpus.len()),
        operator_counts: OperatorId::ALL.into_iter().map(|o| (o, 0)).collect(),
        unchanged: Vec::new(),
    };
    for inst in corpus.instances() {
        match transform_instance(inst, master_seed) {
            Some(v) => {
                *out.operator_counts.entry(v.operator).or_default() += 1;
                out.variants.push(v);
            }
            None => {
                log::warn!("{}: no operator applicable, left unchanged", inst.id);
                out.unchanged.push(inst.id.clone());
            }
        }
    }
    out
}

/// Writes variants under `<root>/variants/<master_seed>/<id>/` in the dataset
/// layout, each with a JSON `manifest` file.
pub fn persist_variants(root: &Path, corpus: &BugCorpus, t: &CorpusTransform) -> std::io::Result<PathBuf> {
    let base = root.join("variants").join(t.master_seed.to_string());
    for v in &t.variants {
        let Some(inst) = corpus.get(&v.base_instance_id) else { continue };
        let dir = base.join(&v.base_instance_id);
        write_instance_dir(&dir, &v.apply_to(inst))?;
        let manifest = serde_json::json!({
            "operator": v.operator,
            "seed": v.seed,
            "tag": v.tag(),
            "resulting_unchanged": v.resulting_unchanged,
            "injected": v.manifest,
        });
        fs::write(dir.join("manifest"), serde_json::to_string_pretty(&manifest)? + "\n")?;
    }
    Ok(base)
}
