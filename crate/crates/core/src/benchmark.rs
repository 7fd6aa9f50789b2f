//! Goal-directed benchmark tasks: rediscovery, similarity, median similarity
//! and isomer generation, scored with ECFP6 Tanimoto similarity.

use std::collections::HashSet;
use std::fmt::{self, Write as _};
use std::str::FromStr;

use thiserror::Error;

use crate::chemclass::AmineType;
use crate::fingerprint::{ecfp6, tanimoto, FingerprintBits};
use crate::molgraph::{canonical_smiles, parse_smiles, MolecularFormula, Molecule};

pub const DEFAULT_TOP_N: usize = 100;
pub const DEFAULT_SIM_THRESHOLD: f64 = 0.7;

/// The 23 reference amines as `name,smiles,amine_type,molecular_weight`.
pub const REFERENCE_AMINES_CSV: &str = include_str!("../data/reference_amines.csv");
/// The standard 27-task suite in task-file format.
pub const STANDARD_TASKS: &str = include_str!("../data/benchmark_tasks.txt");

#[derive(Debug, Error, PartialEq)]
pub enum BenchmarkError {
    #[error("line {line}: {msg}")]
    TaskFile { line: usize, msg: String },
    #[error("invalid target '{0}'")]
    Target(String),
    #[error("{kind} task needs {need} target(s), got {got}")]
    TargetCount { kind: TaskKind, need: usize, got: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceAmine {
    pub name: String,
    pub smiles: String,
    pub amine_type: AmineType,
    pub molecular_weight: f64,
}

impl ReferenceAmine {
    pub fn molecule(&self) -> Molecule {
        parse_smiles(&self.smiles).expect("reference amines parse")
    }
}

pub fn reference_amines() -> Vec<ReferenceAmine> {
    REFERENCE_AMINES_CSV
        .lines()
        .filter(|l| !l.starts_with('#') && !l.trim().is_empty())
        .skip(1)
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            ReferenceAmine {
                name: f[0].to_string(),
                smiles: f[1].to_string(),
                amine_type: f[2].parse().expect("reference amine type"),
                molecular_weight: f[3].parse().expect("reference amine weight"),
            }
        })
        .collect()
}

pub fn reference_amine(name: &str) -> Option<ReferenceAmine> {
    reference_amines().into_iter().find(|r| r.name == name)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TaskKind {
    Rediscovery,
    Similarity,
    MedianSimilarity,
    Isomer,
}

impl TaskKind {
    pub fn keyword(self) -> &'static str {
        match self {
            TaskKind::Rediscovery => "rediscovery",
            TaskKind::Similarity => "similarity",
            TaskKind::MedianSimilarity => "median",
            TaskKind::Isomer => "isomer",
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            TaskKind::Rediscovery => "Rediscovery",
            TaskKind::Similarity => "Similarity",
            TaskKind::MedianSimilarity => "Median Similarity",
            TaskKind::Isomer => "Isomers",
        }
    }
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.keyword())
    }
}

impl FromStr for TaskKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "rediscovery" => Ok(TaskKind::Rediscovery),
            "similarity" => Ok(TaskKind::Similarity),
            "median" | "median_similarity" => Ok(TaskKind::MedianSimilarity),
            "isomer" => Ok(TaskKind::Isomer),
            _ => Err(format!("unknown task kind '{s}'")),
        }
    }
}

#[derive(Debug, Clone)]
struct Target {
    smiles: String,
    fp: FingerprintBits,
}

#[derive(Debug, Clone)]
pub struct BenchmarkTask {
    pub kind: TaskKind,
    pub name: String,
    pub amine_type: Option<AmineType>,
    targets: Vec<Target>,
    formula: Option<MolecularFormula>,
    pub top_n: usize,
    pub sim_threshold: f64,
}

fn resolve_target(t: &str) -> Result<(String, Option<ReferenceAmine>), BenchmarkError> {
    let t = t.trim();
    if let Some(r) = reference_amine(t) {
        return Ok((r.smiles.clone(), Some(r)));
    }
    let mol = parse_smiles(t).map_err(|_| BenchmarkError::Target(t.to_string()))?;
    Ok((canonical_smiles(&mol), None))
}

impl BenchmarkTask {
    /// Targets are reference names or SMILES (a formula for isomer tasks).
    /// Median tasks default to no similarity threshold; see `sim_threshold`.
    pub fn new(kind: TaskKind, targets: &[&str]) -> Result<Self, BenchmarkError> {
        let need = match kind {
            TaskKind::MedianSimilarity => 2,
            _ => 1,
        };
        if targets.len() != need {
            return Err(BenchmarkError::TargetCount {
                kind,
                need,
                got: targets.len(),
            });
        }
        let mut task = BenchmarkTask {
            kind,
            name: String::new(),
            amine_type: None,
            targets: Vec::new(),
            formula: None,
            top_n: DEFAULT_TOP_N,
            sim_threshold: match kind {
                TaskKind::MedianSimilarity => 0.0,
                _ => DEFAULT_SIM_THRESHOLD,
            },
        };
        if kind == TaskKind::Isomer {
            let f: MolecularFormula = targets[0]
                .parse()
                .map_err(|_| BenchmarkError::Target(targets[0].to_string()))?;
            task.name = f.to_string();
            task.formula = Some(f);
            return Ok(task);
        }
        let mut names = Vec::new();
        for t in targets {
            let (smiles, reference) = resolve_target(t)?;
            let mol = parse_smiles(&smiles).map_err(|_| BenchmarkError::Target(smiles.clone()))?;
            match &reference {
                Some(r) => {
                    names.push(r.name.clone());
                    task.amine_type = Some(r.amine_type);
                }
                None => names.push(canonical_smiles(&mol)),
            }
            task.targets.push(Target {
                smiles: canonical_smiles(&mol),
                fp: ecfp6(&mol),
            });
        }
        if kind == TaskKind::MedianSimilarity {
            task.amine_type = None;
        }
        task.name = names.join(" and ");
        Ok(task)
    }

    pub fn targets(&self) -> Vec<&str> {
        self.targets.iter().map(|t| t.smiles.as_str()).collect()
    }

    pub fn formula(&self) -> Option<&MolecularFormula> {
        self.formula.as_ref()
    }

    /// Per-molecule score in [0, 1].
    pub fn molecule_score(&self, c: &Candidate) -> f64 {
        match self.kind {
            TaskKind::Rediscovery | TaskKind::Similarity => {
                let t = &self.targets[0];
                if c.smiles == t.smiles {
                    1.0
                } else {
                    tanimoto(&c.fp, &t.fp).unwrap_or(0.0)
                }
            }
            TaskKind::MedianSimilarity => {
                let s: f64 = self
                    .targets
                    .iter()
                    .map(|t| {
                        if c.smiles == t.smiles {
                            1.0
                        } else {
                            tanimoto(&c.fp, &t.fp).unwrap_or(0.0)
                        }
                    })
                    .sum();
                s / self.targets.len() as f64
            }
            TaskKind::Isomer => {
                let f = self.formula.as_ref().expect("isomer task has a formula");
                if c.formula == *f {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    pub fn score_molecule(&self, mol: &Molecule) -> f64 {
        self.molecule_score(&Candidate::new(mol))
    }

    pub fn score(&self, pool: &CandidatePool) -> TaskScore {
        match self.kind {
            TaskKind::Rediscovery => score_rediscovery(self, pool),
            TaskKind::Similarity | TaskKind::MedianSimilarity => score_similarity(self, pool),
            TaskKind::Isomer => score_isomer(self, pool),
        }
    }
}

/// A distinct, parsed candidate with its fingerprint and formula.
#[derive(Debug, Clone)]
pub struct Candidate {
    pub smiles: String,
    pub fp: FingerprintBits,
    pub formula: MolecularFormula,
}

impl Candidate {
    pub fn new(mol: &Molecule) -> Self {
        Candidate {
            smiles: canonical_smiles(mol),
            fp: ecfp6(mol),
            formula: mol.molecular_formula(),
        }
    }
}

/// Candidates deduplicated by canonical SMILES, in first-seen order.
#[derive(Debug, Clone, Default)]
pub struct CandidatePool {
    candidates: Vec<Candidate>,
    seen: HashSet<String>,
    pub invalid: usize,
}

impl CandidatePool {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_smiles<'a>(smiles: impl IntoIterator<Item = &'a str>) -> Self {
        let mut pool = Self::new();
        for s in smiles {
            pool.push_smiles(s);
        }
        pool
    }

    pub fn from_molecules<'a>(mols: impl IntoIterator<Item = &'a Molecule>) -> Self {
        let mut pool = Self::new();
        for m in mols {
            pool.push(m);
        }
        pool
    }

    pub fn push_smiles(&mut self, s: &str) -> bool {
        match parse_smiles(s) {
            Ok(m) => self.push(&m),
            Err(_) => {
                self.invalid += 1;
                false
            }
        }
    }

    /// Returns false for a duplicate.
    pub fn push(&mut self, mol: &Molecule) -> bool {
        let c = Candidate::new(mol);
        if !self.seen.insert(c.smiles.clone()) {
            return false;
        }
        self.candidates.push(c);
        true
    }

    pub fn len(&self) -> usize {
        self.candidates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.candidates.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Candidate> {
        self.candidates.iter()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TaskScore {
    pub value: f64,
    pub contributors: Vec<(String, f64)>,
}

impl TaskScore {
    fn zero() -> Self {
        TaskScore {
            value: 0.0,
            contributors: Vec::new(),
        }
    }
}

fn ranked(task: &BenchmarkTask, pool: &CandidatePool) -> Vec<(String, f64)> {
    let mut scored: Vec<(String, f64)> = pool
        .iter()
        .map(|c| (c.smiles.clone(), task.molecule_score(c)))
        .collect();
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    scored
}

/// Best single-candidate similarity to the target.
pub fn score_rediscovery(task: &BenchmarkTask, pool: &CandidatePool) -> TaskScore {
    match ranked(task, pool).into_iter().next() {
        Some(best) => TaskScore {
            value: best.1,
            contributors: vec![best],
        },
        None => TaskScore::zero(),
    }
}

/// Mean over the top `top_n` candidates scoring above the threshold; the
/// mean of what is available when fewer qualify, zero when none do.
pub fn score_similarity(task: &BenchmarkTask, pool: &CandidatePool) -> TaskScore {
    let contributors: Vec<(String, f64)> = ranked(task, pool)
        .into_iter()
        .filter(|c| c.1 > task.sim_threshold)
        .take(task.top_n)
        .collect();
    if contributors.is_empty() {
        return TaskScore::zero();
    }
    let value = contributors.iter().map(|c| c.1).sum::<f64>() / contributors.len() as f64;
    TaskScore { value, contributors }
}

pub fn score_median_similarity(task: &BenchmarkTask, pool: &CandidatePool) -> TaskScore {
    score_similarity(task, pool)
}

/// Fraction of the `top_n` slots filled by exact formula matches.
pub fn score_isomer(task: &BenchmarkTask, pool: &CandidatePool) -> TaskScore {
    let contributors: Vec<(String, f64)> = ranked(task, pool).into_iter().take(task.top_n).collect();
    let hits: f64 = contributors.iter().map(|c| c.1).sum();
    TaskScore {
        value: hits / task.top_n as f64,
        contributors,
    }
}

/// Parses a task file: one `kind;targets;params` line per task, targets
/// comma-separated, params `key=value` comma-separated (`top_n`,
/// `threshold`, `name`). Blank and `#` lines are skipped.
pub fn parse_tasks(text: &str) -> Result<Vec<BenchmarkTask>, BenchmarkError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let l = raw.trim();
        if l.is_empty() || l.starts_with('#') {
            continue;
        }
        let err = |msg: String| BenchmarkError::TaskFile { line, msg };
        let mut fields = l.splitn(3, ';');
        let kind: TaskKind = fields.next().unwrap_or("").parse().map_err(err)?;
        let targets: Vec<&str> = fields
            .next()
            .unwrap_or("")
            .split(',')
            .map(str::trim)
            .filter(|t| !t.is_empty())
            .collect();
        let mut task = BenchmarkTask::new(kind, &targets).map_err(|e| err(e.to_string()))?;
        for p in fields.next().unwrap_or("").split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (k, v) = p.split_once('=').ok_or_else(|| err(format!("bad param '{p}'")))?;
            match k.trim() {
                "top_n" => {
                    task.top_n = v
                        .trim()
                        .parse()
                        .ok()
                        .filter(|&n| n > 0)
                        .ok_or_else(|| err(format!("bad top_n '{v}'")))?
                }
                "threshold" => {
                    task.sim_threshold = v
                        .trim()
                        .parse()
                        .map_err(|_| err(format!("bad threshold '{v}'")))?
                }
                "name" => task.name = v.trim().to_string(),
                other => return Err(err(format!("unknown param '{other}'"))),
            }
        }
        out.push(task);
    }
    Ok(out)
}

pub fn standard_tasks() -> Vec<BenchmarkTask> {
    parse_tasks(STANDARD_TASKS).expect("standard task file parses")
}

/// Produces candidate SMILES for a task under a molecule budget.
pub trait CandidateGenerator {
    fn generate(&mut self, task: &BenchmarkTask, budget: usize) -> Vec<String>;
}

/// Replays a fixed list, ignoring the task; truncated to the budget.
#[derive(Debug, Clone)]
pub struct Replay(pub Vec<String>);

impl CandidateGenerator for Replay {
    fn generate(&mut self, _task: &BenchmarkTask, budget: usize) -> Vec<String> {
        self.0.iter().take(budget).cloned().collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteRow {
    pub kind: TaskKind,
    pub name: String,
    pub amine_type: Option<AmineType>,
    pub score: TaskScore,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteReport {
    pub rows: Vec<SuiteRow>,
}

fn capitalized(t: AmineType) -> String {
    let n = t.name();
    let mut c = n.chars();
    c.next()
        .map(|f| f.to_ascii_uppercase().to_string() + c.as_str())
        .unwrap_or_default()
}

impl SuiteReport {
    pub fn total(&self) -> f64 {
        self.rows.iter().map(|r| r.score.value).sum()
    }

    pub fn subtotal(&self, kind: TaskKind) -> f64 {
        self.rows
            .iter()
            .filter(|r| r.kind == kind)
            .map(|r| r.score.value)
            .sum()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("Task,Name,AmineType,Score\n");
        let quote = |s: &str| {
            if s.contains(',') || s.contains('"') {
                format!("\"{}\"", s.replace('"', "\"\""))
            } else {
                s.to_string()
            }
        };
        for r in &self.rows {
            writeln!(
                out,
                "{},{},{},{:.3}",
                quote(r.kind.label()),
                quote(&r.name),
                r.amine_type.map(capitalized).unwrap_or_default(),
                r.score.value
            )
            .unwrap();
        }
        writeln!(out, "Total,,,{:.3}", self.total()).unwrap();
        out
    }
}

/// Scores every task on the generator's candidates for that task.
pub fn run_suite(tasks: &[BenchmarkTask], generator: &mut dyn CandidateGenerator, budget: usize) -> SuiteReport {
    let rows = tasks
        .iter()
        .map(|t| {
            let smiles = generator.generate(t, budget);
            let pool = CandidatePool::from_smiles(smiles.iter().map(String::as_str));
            SuiteRow {
                kind: t.kind,
                name: t.name.clone(),
                amine_type: t.amine_type,
                score: t.score(&pool),
            }
        })
        .collect();
    SuiteReport { rows }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_set_is_consistent() {
        let refs = reference_amines();
        assert_eq!(refs.len(), 23);
        for r in &refs {
            let m = r.molecule();
            assert!(
                (m.molecular_weight() - r.molecular_weight).abs() < 0.02,
                "{} weight {} vs {}",
                r.name,
                m.molecular_weight(),
                r.molecular_weight
            );
        }
    }

    #[test]
    fn standard_suite_layout() {
        let tasks = standard_tasks();
        assert_eq!(tasks.len(), 27);
        let count = |k| tasks.iter().filter(|t| t.kind == k).count();
        assert_eq!(count(TaskKind::Rediscovery), 10);
        assert_eq!(count(TaskKind::Similarity), 10);
        assert_eq!(count(TaskKind::MedianSimilarity), 3);
        assert_eq!(count(TaskKind::Isomer), 4);
        assert_eq!(tasks[20].name, "DEAE-EO and 1M-2PPE");
    }

    #[test]
    fn rediscovery_examples() {
        let t = BenchmarkTask::new(TaskKind::Rediscovery, &["MEA"]).unwrap();
        assert_eq!(t.score(&CandidatePool::new()).value, 0.0);
        let pool = CandidatePool::from_smiles(["CCO", "OCCN"]);
        let s = t.score(&pool);
        assert_eq!(s.value, 1.0);
        assert_eq!(s.contributors[0].0, t.targets()[0]);
    }

    #[test]
    fn similarity_rules() {
        let t = BenchmarkTask::new(TaskKind::Similarity, &["NCCO"]).unwrap();
        let pool = CandidatePool::from_smiles(vec!["NCCO"; 100]);
        assert_eq!(pool.len(), 1);
        assert_eq!(t.score(&pool).value, 1.0);
        let far = CandidatePool::from_smiles(["C", "CCCC", "O"]);
        assert_eq!(t.score(&far).value, 0.0);
    }

    #[test]
    fn median_identity_on_one_side() {
        let a = BenchmarkTask::new(TaskKind::MedianSimilarity, &["DEAE-EO", "1M-2PPE"]).unwrap();
        let b = BenchmarkTask::new(TaskKind::MedianSimilarity, &["1M-2PPE", "DEAE-EO"]).unwrap();
        let t12 = tanimoto(
            &ecfp6(&reference_amine("DEAE-EO").unwrap().molecule()),
            &ecfp6(&reference_amine("1M-2PPE").unwrap().molecule()),
        )
        .unwrap();
        let m = reference_amine("DEAE-EO").unwrap().molecule();
        assert_eq!(a.score_molecule(&m), (1.0 + t12) / 2.0);
        assert_eq!(a.score_molecule(&m), b.score_molecule(&m));
        assert!(BenchmarkTask::new(TaskKind::MedianSimilarity, &["MEA"]).is_err());
    }

    #[test]
    fn isomer_examples() {
        let t = BenchmarkTask::new(TaskKind::Isomer, &["C4H11NO"]).unwrap();
        assert_eq!(t.score_molecule(&parse_smiles("CC(C)(N)CO").unwrap()), 1.0);
        assert_eq!(t.score_molecule(&parse_smiles("NCCO").unwrap()), 0.0);
        let pool = CandidatePool::from_smiles(["CC(C)(N)CO", "NCCCCO"]);
        assert_eq!(t.score(&pool).value, 0.02);
    }

    #[test]
    fn task_file_errors() {
        assert!(matches!(
            parse_tasks("similarity;NCCO;top_n=0"),
            Err(BenchmarkError::TaskFile { line: 1, .. })
        ));
        assert!(parse_tasks("\n# c\nbogus;NCCO;").is_err());
        assert!(parse_tasks("isomer;C4H11NO;colour=red").is_err());
        let t = parse_tasks("similarity;NCCO;top_n=10,threshold=0.5,name=x").unwrap();
        assert_eq!((t[0].top_n, t[0].sim_threshold, t[0].name.as_str()), (10, 0.5, "x"));
    }

    #[test]
    fn empty_generator_scores_zero() {
        let report = run_suite(&standard_tasks(), &mut Replay(vec![]), 1000);
        assert_eq!(report.total(), 0.0);
        assert!(report.to_csv().ends_with("Total,,,0.000\n"));
    }
}
