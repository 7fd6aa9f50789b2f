//! The generate, diversify, gate, score and fine-tune loop with a global
//! top-K buffer, run statistics, reports and checkpoints.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt::{self, Write as _};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::benchmark::{BenchmarkTask, CandidateGenerator, TaskKind};
use crate::chemclass::{classify_amine, matches_restriction, AmineType, Restriction};
use crate::genops::{diversify_batch, MutationConfig, MutationKind};
use crate::molgraph::{canonical_smiles, parse_valid, Element, Molecule};
use crate::ngramgen::{self, GeneratorModel, NgramError};
use crate::scoring::{
    default_scalers, file_sha256, load_predictor, mpo_score, scale, PredictorSet, PredictorSpec, Property,
    ScalerSpec, Scalers, ScoringError, SpoObjective, RESTRICTION_PENALTY,
};

pub const CHECKPOINT_FORMAT: &str = "SAGC1";
pub const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: expected key = value")]
    Syntax { line: usize },
    #[error("line {line}: unknown key '{key}'")]
    UnknownKey { line: usize, key: String },
    #[error("invalid value for {key}: {msg}")]
    Invalid { key: String, msg: String },
}

#[derive(Debug, Error)]
pub enum ExploreError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("predictor: {0}")]
    PredictorLoad(#[from] ScoringError),
    #[error("generator model: {0}")]
    Model(#[from] NgramError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("corrupt checkpoint: {0}")]
    CorruptCheckpoint(String),
    #[error("input file {0} changed since the checkpoint was written")]
    InputChanged(String),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ExploreError + '_ {
    move |source| ExploreError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// What a run maximizes.
#[derive(Debug, Clone)]
pub enum Objective {
    Spo(SpoObjective),
    Mpo,
    /// Per-molecule score of a benchmark task, e.g. `similarity:MEA`.
    Task(Box<BenchmarkTask>),
}

impl Objective {
    pub fn parse(s: &str) -> Result<Self, String> {
        let s = s.trim();
        if s == "mpo" {
            return Ok(Objective::Mpo);
        }
        if let Ok(o) = s.parse::<SpoObjective>() {
            return Ok(Objective::Spo(o));
        }
        let (kind, targets) = s.split_once(':').ok_or_else(|| format!("unknown objective '{s}'"))?;
        let kind: TaskKind = kind.parse()?;
        let targets: Vec<&str> = targets.split(',').map(str::trim).collect();
        let task = BenchmarkTask::new(kind, &targets).map_err(|e| e.to_string())?;
        Ok(Objective::Task(Box::new(task)))
    }

    pub fn properties(&self) -> Vec<Property> {
        match self {
            Objective::Spo(o) => vec![o.property()],
            Objective::Mpo => Property::ALL.to_vec(),
            Objective::Task(_) => Vec::new(),
        }
    }

    /// Column names of the per-molecule component breakdown.
    pub fn component_names(&self) -> Vec<String> {
        match self {
            Objective::Spo(o) => vec![o.property().name().to_string(), format!("{}_scaled", o.property().name())],
            Objective::Mpo => Property::ALL
                .iter()
                .map(|p| p.name().to_string())
                .chain(Property::ALL.iter().map(|p| format!("{}_scaled", p.name())))
                .collect(),
            Objective::Task(_) => vec!["task_score".to_string()],
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub profile: String,
    pub iterations: usize,
    pub generator_batch: usize,
    pub ga_batch: usize,
    pub buffer_size: usize,
    pub restriction: Restriction,
    objective_text: String,
    pub objective: Objective,
    /// Fine-tune weight: buffer counts are added with this multiplier.
    pub lambda: f64,
    pub seed: u64,
    pub model: Option<PathBuf>,
    pub corpus: Option<PathBuf>,
    pub order: usize,
    pub alpha: f64,
    pub max_len: usize,
    pub predictors: BTreeMap<Property, PredictorSpec>,
    pub scalers: Scalers,
    pub mutation: MutationConfig,
    pub threads: usize,
}

impl RunConfig {
    /// 2,048 molecules per iteration, buffer 256, 30 iterations.
    pub fn desk() -> Self {
        RunConfig {
            profile: "desk".into(),
            iterations: 30,
            generator_batch: 1024,
            ga_batch: 1024,
            buffer_size: 256,
            restriction: Restriction::None,
            objective_text: "mpo".into(),
            objective: Objective::Mpo,
            lambda: 1.0,
            seed: 0,
            model: None,
            corpus: None,
            order: ngramgen::DEFAULT_ORDER,
            alpha: ngramgen::DEFAULT_ALPHA,
            max_len: ngramgen::DEFAULT_MAX_LEN,
            predictors: BTreeMap::new(),
            scalers: default_scalers(),
            mutation: MutationConfig::default(),
            threads: 1,
        }
    }

    /// 16,384 molecules per iteration, buffer 1,024, 100 iterations.
    pub fn full() -> Self {
        RunConfig {
            profile: "full".into(),
            iterations: 100,
            generator_batch: 8192,
            ga_batch: 8192,
            buffer_size: 1024,
            ..Self::desk()
        }
    }

    pub fn batch_total(&self) -> usize {
        self.generator_batch + self.ga_batch
    }

    pub fn objective_text(&self) -> &str {
        &self.objective_text
    }

    pub fn set_objective(&mut self, text: &str) -> Result<(), ConfigError> {
        self.objective = Objective::parse(text).map_err(|msg| ConfigError::Invalid {
            key: "objective".into(),
            msg,
        })?;
        self.objective_text = text.trim().to_string();
        Ok(())
    }

    /// Parses flat `key = value` text; relative paths resolve against
    /// `base`. A `profile` line selects the defaults wherever it appears.
    pub fn parse(text: &str, base: &Path) -> Result<Self, ConfigError> {
        let mut entries = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let l = raw.trim();
            if l.is_empty() || l.starts_with('#') {
                continue;
            }
            let (k, v) = l.split_once('=').ok_or(ConfigError::Syntax { line: i + 1 })?;
            entries.push((i + 1, k.trim().to_string(), v.trim().to_string()));
        }
        let mut cfg = match entries.iter().find(|e| e.1 == "profile").map(|e| e.2.as_str()) {
            None | Some("desk") => Self::desk(),
            Some("full") => Self::full(),
            Some(other) => {
                return Err(ConfigError::Invalid {
                    key: "profile".into(),
                    msg: format!("unknown profile '{other}'"),
                })
            }
        };
        let mut batch_total = None;
        for (line, k, v) in &entries {
            cfg.set(*line, k, v, base, &mut batch_total)?;
        }
        if let Some(t) = batch_total {
            if t != cfg.batch_total() {
                return Err(ConfigError::Invalid {
                    key: "batch_total".into(),
                    msg: format!("{t} != generator_batch + ga_batch = {}", cfg.batch_total()),
                });
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn set(&mut self, line: usize, key: &str, v: &str, base: &Path, batch_total: &mut Option<usize>) -> Result<(), ConfigError> {
        fn num<T: FromStr>(key: &str, v: &str) -> Result<T, ConfigError> {
            v.parse().map_err(|_| ConfigError::Invalid {
                key: key.into(),
                msg: format!("'{v}' is not a valid number"),
            })
        }
        let invalid = |msg: String| ConfigError::Invalid { key: key.into(), msg };
        let path = |v: &str| base.join(v);
        match key {
            "profile" => {}
            "iterations" => self.iterations = num(key, v)?,
            "batch_total" => *batch_total = Some(num(key, v)?),
            "generator_batch" => self.generator_batch = num(key, v)?,
            "ga_batch" => self.ga_batch = num(key, v)?,
            "buffer_size" => self.buffer_size = num(key, v)?,
            "restriction" => self.restriction = v.parse().map_err(invalid)?,
            "objective" => self.set_objective(v)?,
            "lambda" => self.lambda = num(key, v)?,
            "seed" => self.seed = num(key, v)?,
            "model" => self.model = Some(path(v)),
            "corpus" => self.corpus = Some(path(v)),
            "order" => self.order = num(key, v)?,
            "alpha" => self.alpha = num(key, v)?,
            "max_len" => self.max_len = num(key, v)?,
            "p_cross" => self.mutation.p_cross = num(key, v)?,
            "max_heavy_atoms" => self.mutation.max_heavy_atoms = num(key, v)?,
            "retry_budget" => self.mutation.retry_budget = num(key, v)?,
            "threads" => self.threads = num(key, v)?,
            _ => {
                if let Some(p) = key.strip_prefix("predictor.") {
                    let prop: Property = p.parse().map_err(invalid)?;
                    let mut spec: PredictorSpec = v.parse().map_err(|e: ScoringError| invalid(e.to_string()))?;
                    spec.path = path(&spec.path.to_string_lossy());
                    self.predictors.insert(prop, spec);
                } else if let Some(p) = key.strip_prefix("scaler.") {
                    let prop: Property = p.parse().map_err(invalid)?;
                    let spec: ScalerSpec = v.parse().map_err(|e: ScoringError| invalid(e.to_string()))?;
                    self.scalers.insert(prop, spec);
                } else if let Some(m) = key.strip_prefix("weight.") {
                    let kind = MutationKind::ALL
                        .into_iter()
                        .find(|k| k.name() == m)
                        .ok_or_else(|| ConfigError::UnknownKey { line, key: key.into() })?;
                    self.mutation.set_weight(kind, num(key, v)?);
                } else if key == "alphabet" {
                    self.mutation.alphabet = v
                        .split(',')
                        .map(|s| Element::from_symbol(s.trim()).ok_or_else(|| invalid(format!("unknown element '{s}'"))))
                        .collect::<Result<_, _>>()?;
                } else {
                    return Err(ConfigError::UnknownKey { line, key: key.into() });
                }
            }
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |key: &str, msg: &str| {
            Err(ConfigError::Invalid {
                key: key.into(),
                msg: msg.into(),
            })
        };
        if self.buffer_size == 0 {
            return bad("buffer_size", "must be positive");
        }
        if self.batch_total() == 0 && self.iterations > 0 {
            return bad("batch_total", "must be positive");
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return bad("lambda", "must be a finite non-negative number");
        }
        if !(0.0..=1.0).contains(&self.mutation.p_cross) {
            return bad("p_cross", "must lie in [0, 1]");
        }
        if self.order == 0 {
            return bad("order", "must be positive");
        }
        if self.alpha < 0.0 {
            return bad("alpha", "must be non-negative");
        }
        if self.mutation.weights.iter().any(|w| *w < 0.0) || self.mutation.weights.iter().all(|w| *w == 0.0) {
            return bad("weight", "weights must be non-negative and not all zero");
        }
        Ok(())
    }

    /// Every key in a fixed order; parses back to an equal configuration.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let mut kv = |k: &str, v: &dyn fmt::Display| writeln!(out, "{k} = {v}").unwrap();
        kv("profile", &self.profile);
        kv("iterations", &self.iterations);
        kv("generator_batch", &self.generator_batch);
        kv("ga_batch", &self.ga_batch);
        kv("buffer_size", &self.buffer_size);
        kv("restriction", &self.restriction.name());
        kv("objective", &self.objective_text);
        kv("lambda", &self.lambda);
        kv("seed", &self.seed);
        if let Some(p) = &self.model {
            kv("model", &p.display());
        }
        if let Some(p) = &self.corpus {
            kv("corpus", &p.display());
        }
        kv("order", &self.order);
        kv("alpha", &self.alpha);
        kv("max_len", &self.max_len);
        kv("p_cross", &self.mutation.p_cross);
        kv("max_heavy_atoms", &self.mutation.max_heavy_atoms);
        kv("retry_budget", &self.mutation.retry_budget);
        let alphabet: Vec<&str> = self.mutation.alphabet.iter().map(|e| e.symbol()).collect();
        kv("alphabet", &alphabet.join(","));
        for k in MutationKind::ALL {
            kv(&format!("weight.{}", k.name()), &self.mutation.weight(k));
        }
        for (p, s) in &self.predictors {
            kv(&format!("predictor.{}", p.name()), s);
        }
        for (p, s) in &self.scalers {
            kv(&format!("scaler.{}", p.name()), s);
        }
        kv("threads", &self.threads);
        out
    }
}

/// Reads one SMILES per line (first comma or whitespace separated field);
/// `#` lines, blank lines and a `smiles` header are skipped.
pub fn read_smiles_list(text: &str) -> Vec<String> {
    text.lines()
        .filter_map(|l| {
            let f = l.split(|c: char| c == ',' || c.is_whitespace()).next()?.trim();
            (!f.is_empty() && !f.starts_with('#') && !f.eq_ignore_ascii_case("smiles")).then(|| f.to_string())
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BufferEntry {
    pub smiles: String,
    pub score: f64,
    pub amine_type: AmineType,
    pub components: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationStats {
    pub iteration: usize,
    pub generated: usize,
    pub valid: usize,
    pub amine: usize,
    pub restriction_pass: usize,
    pub scored: usize,
    pub score_failed: usize,
    /// min, q1, median, q3, max of this iteration's scores.
    pub quartiles: Option<[f64; 5]>,
    pub buffer_best: Option<f64>,
    pub buffer_len: usize,
    pub ga_attempted: u64,
    pub ga_succeeded: u64,
}

impl IterationStats {
    pub const CSV_HEADER: &'static str = "iteration,generated,valid,amine,restriction_pass,scored,score_failed,min,q1,median,q3,max,buffer_best,buffer_len,ga_attempted,ga_succeeded";

    pub fn csv_row(&self) -> String {
        let opt = |x: Option<f64>| x.map(|v| v.to_string()).unwrap_or_default();
        let q: Vec<String> = match self.quartiles {
            Some(q) => q.iter().map(f64::to_string).collect(),
            None => vec![String::new(); 5],
        };
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            self.iteration,
            self.generated,
            self.valid,
            self.amine,
            self.restriction_pass,
            self.scored,
            self.score_failed,
            q.join(","),
            opt(self.buffer_best),
            self.buffer_len,
            self.ga_attempted,
            self.ga_succeeded
        )
    }
}

/// Linear-interpolation quantiles at 0, ¼, ½, ¾ and 1.
pub fn quartiles(values: &[f64]) -> Option<[f64; 5]> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let q = |p: f64| {
        let h = p * (v.len() - 1) as f64;
        let (lo, hi) = (h.floor() as usize, h.ceil() as usize);
        v[lo] + (h - lo as f64) * (v[hi] - v[lo])
    };
    Some([q(0.0), q(0.25), q(0.5), q(0.75), q(1.0)])
}

#[derive(Debug, Clone)]
pub struct RunState {
    pub iteration: usize,
    pub buffer: Vec<BufferEntry>,
    pub model: GeneratorModel,
    pub stats: Vec<IterationStats>,
}

impl RunState {
    pub fn best(&self) -> Option<f64> {
        self.buffer.first().map(|e| e.score)
    }
}

#[derive(Debug, Clone)]
struct Scored {
    score: f64,
    amine_type: AmineType,
    components: Vec<f64>,
}

pub struct Explorer {
    config: RunConfig,
    predictors: PredictorSet,
    corpus: Vec<Molecule>,
    inputs: BTreeMap<String, String>,
    cache: HashMap<String, Option<Scored>>,
    state: RunState,
}

fn load_corpus(path: &Path) -> Result<(Vec<String>, String), ExploreError> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    let hash = file_sha256(path).map_err(io_err(path))?;
    Ok((read_smiles_list(&text), hash))
}

impl Explorer {
    /// In-memory construction. `corpus` seeds the GA when nothing else is
    /// available; non-amines in it are dropped.
    pub fn new(config: RunConfig, model: GeneratorModel, predictors: PredictorSet, corpus: Vec<Molecule>) -> Result<Self, ExploreError> {
        config.validate()?;
        for p in config.objective.properties() {
            if predictors.get(p).is_none() {
                return Err(ScoringError::MissingPredictor(p).into());
            }
        }
        let corpus = corpus.into_iter().filter(|m| classify_amine(m) != AmineType::NotAmine).collect();
        Ok(Explorer {
            config,
            predictors,
            corpus,
            inputs: BTreeMap::new(),
            cache: HashMap::new(),
            state: RunState {
                iteration: 0,
                buffer: Vec::new(),
                model,
                stats: Vec::new(),
            },
        })
    }

    /// Loads predictors, corpus and model named by the configuration. With
    /// no model file the generator is trained on the corpus.
    pub fn from_config(config: RunConfig) -> Result<Self, ExploreError> {
        let (predictors, corpus, inputs) = load_inputs(&config)?;
        let model = match &config.model {
            Some(p) => {
                let mut f = std::fs::File::open(p).map_err(io_err(p))?;
                ngramgen::read_model(&mut f)?
            }
            None => match &corpus {
                Some(c) if !c.is_empty() => ngramgen::train(c, config.order, config.alpha)?,
                // never sampled
                _ if config.generator_batch == 0 => ngramgen::train(&["N"], config.order, config.alpha)?,
                _ => {
                    return Err(ConfigError::Invalid {
                        key: "model".into(),
                        msg: "a model or a non-empty corpus is required when generator_batch > 0".into(),
                    }
                    .into())
                }
            },
        };
        let corpus_mols = corpus.unwrap_or_default().iter().filter_map(|s| parse_valid(s)).collect();
        let mut ex = Explorer::new(config, model, predictors, corpus_mols)?;
        ex.inputs = inputs;
        Ok(ex)
    }

    pub fn config(&self) -> &RunConfig {
        &self.config
    }

    pub fn state(&self) -> &RunState {
        &self.state
    }

    pub fn inputs(&self) -> &BTreeMap<String, String> {
        &self.inputs
    }

    pub fn set_iterations(&mut self, n: usize) {
        self.config.iterations = n;
    }

    pub fn is_finished(&self) -> bool {
        self.state.iteration >= self.config.iterations
    }

    pub fn run(&mut self) -> &RunState {
        while !self.is_finished() {
            self.step();
        }
        &self.state
    }

    fn evaluate(&self, mol: &Molecule, amine_type: AmineType) -> Option<Scored> {
        let factor = if matches_restriction(amine_type, self.config.restriction) {
            1.0
        } else {
            RESTRICTION_PENALTY
        };
        let (score, components) = match &self.config.objective {
            Objective::Spo(o) => {
                let p = o.property();
                let raw = self.predictors.predict(p, mol).ok()?;
                let s = scale(raw, &self.config.scalers[&p]);
                (s * factor, vec![raw, s])
            }
            Objective::Mpo => {
                let m = mpo_score(mol, self.config.restriction, &self.predictors, &self.config.scalers).ok()?;
                let comps = Property::ALL
                    .iter()
                    .map(|&p| m.raw.get(p))
                    .chain(m.components.values().copied())
                    .collect();
                (m.value, comps)
            }
            Objective::Task(t) => {
                let s = t.score_molecule(mol);
                (s * factor, vec![s])
            }
        };
        Some(Scored {
            score,
            amine_type,
            components,
        })
    }

    fn iteration_rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.config.seed);
        rng.set_stream(self.state.iteration as u64);
        rng
    }

    fn ga_pool(&self, samples: &[(Molecule, AmineType)], rng: &mut ChaCha8Rng) -> Vec<Molecule> {
        let mut pool: Vec<Molecule> = self
            .state
            .buffer
            .iter()
            .filter_map(|e| parse_valid(&e.smiles))
            .chain(
                samples
                    .iter()
                    .filter(|(_, t)| *t != AmineType::NotAmine)
                    .map(|(m, _)| m.clone()),
            )
            .collect();
        if pool.is_empty() {
            pool = self
                .corpus
                .choose_multiple(rng, self.config.ga_batch.min(self.corpus.len()))
                .cloned()
                .collect();
        }
        pool
    }

    /// Runs one iteration and returns its statistics.
    pub fn step(&mut self) -> &IterationStats {
        let mut rng = self.iteration_rng();
        let raw = if self.config.generator_batch > 0 {
            ngramgen::sample(&self.state.model, self.config.generator_batch, &mut rng, self.config.max_len)
        } else {
            Vec::new()
        };
        let samples: Vec<(Molecule, AmineType)> = raw
            .iter()
            .filter_map(|s| parse_valid(s))
            .map(|m| {
                let t = classify_amine(&m);
                (m, t)
            })
            .collect();
        let (offspring, ga) = if self.config.ga_batch > 0 {
            let pool = self.ga_pool(&samples, &mut rng);
            diversify_batch(&pool, self.config.ga_batch, &mut rng, &self.config.mutation)
        } else {
            (Vec::new(), Default::default())
        };
        let generated = raw.len() + offspring.len();
        let valid = samples.len() + offspring.len();
        let batch = samples.into_iter().chain(offspring.into_iter().map(|m| {
            let t = classify_amine(&m);
            (m, t)
        }));

        let (mut amine, mut restriction_pass, mut failed) = (0, 0, 0);
        let mut scores = Vec::new();
        let mut fresh: BTreeMap<String, Scored> = BTreeMap::new();
        for (mol, t) in batch {
            if t == AmineType::NotAmine {
                continue;
            }
            amine += 1;
            if matches_restriction(t, self.config.restriction) {
                restriction_pass += 1;
            }
            let key = canonical_smiles(&mol);
            let scored = match self.cache.get(&key) {
                Some(s) => s.clone(),
                None => {
                    let s = self.evaluate(&mol, t);
                    self.cache.insert(key.clone(), s.clone());
                    s
                }
            };
            match scored {
                Some(s) => {
                    scores.push(s.score);
                    fresh.entry(key).or_insert(s);
                }
                None => failed += 1,
            }
        }
        self.merge(fresh);

        if self.config.lambda > 0.0 && self.config.generator_batch > 0 && !self.state.buffer.is_empty() {
            let buffer: Vec<(String, f64)> = self.state.buffer.iter().map(|e| (e.smiles.clone(), e.score)).collect();
            if let Ok(m) = ngramgen::fine_tune(&self.state.model, &buffer, self.config.lambda) {
                self.state.model = m;
            }
        }

        self.state.iteration += 1;
        self.state.stats.push(IterationStats {
            iteration: self.state.iteration,
            generated,
            valid,
            amine,
            restriction_pass,
            scored: scores.len(),
            score_failed: failed,
            quartiles: quartiles(&scores),
            buffer_best: self.state.best(),
            buffer_len: self.state.buffer.len(),
            ga_attempted: ga.attempted,
            ga_succeeded: ga.succeeded,
        });
        self.state.stats.last().unwrap()
    }

    /// Global top-K merge; candidates arrive sorted by canonical SMILES.
    fn merge(&mut self, fresh: BTreeMap<String, Scored>) {
        let present: HashSet<String> = self.state.buffer.iter().map(|e| e.smiles.clone()).collect();
        for (smiles, s) in fresh {
            if !present.contains(&smiles) {
                self.state.buffer.push(BufferEntry {
                    smiles,
                    score: s.score,
                    amine_type: s.amine_type,
                    components: s.components,
                });
            }
        }
        self.state
            .buffer
            .sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| a.smiles.cmp(&b.smiles)));
        self.state.buffer.truncate(self.config.buffer_size);
    }

    pub fn stats_csv(&self) -> String {
        let mut out = String::from(IterationStats::CSV_HEADER);
        out.push('\n');
        for s in &self.state.stats {
            out.push_str(&s.csv_row());
            out.push('\n');
        }
        out
    }

    pub fn buffer_csv(&self) -> String {
        let mut out = String::from("rank,smiles,score,amine_type");
        for c in self.config.objective.component_names() {
            out.push(',');
            out.push_str(&c);
        }
        out.push('\n');
        for (i, e) in self.state.buffer.iter().enumerate() {
            write!(out, "{},{},{},{}", i + 1, e.smiles, e.score, e.amine_type).unwrap();
            for c in &e.components {
                write!(out, ",{c}").unwrap();
            }
            out.push('\n');
        }
        out
    }

    /// Hash over the configuration text and every input file hash.
    pub fn run_hash(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.config.to_text().as_bytes());
        for (k, v) in &self.inputs {
            h.update(format!("{k}={v}\n").as_bytes());
        }
        hex::encode(h.finalize())
    }

    pub fn manifest(&self) -> serde_json::Value {
        let config: BTreeMap<String, String> = self
            .config
            .to_text()
            .lines()
            .filter_map(|l| l.split_once(" = "))
            .map(|(k, v)| (k.to_string(), v.to_string()))
            .collect();
        serde_json::json!({
            "manifest_version": MANIFEST_VERSION,
            "formats": {
                "model": ngramgen::FORMAT_VERSION,
                "checkpoint": CHECKPOINT_FORMAT,
            },
            "config": config,
            "config_sha256": hex::encode(Sha256::digest(self.config.to_text().as_bytes())),
            "inputs": self.inputs,
            "run_hash": self.run_hash(),
            "iterations_completed": self.state.iteration,
            "fine_tune": format!(
                "after each iteration the n-gram counts gain lambda ({}) times the counts of the buffer SMILES; this stands in for the neural fine-tune schedule (learning rate 0.001, 8 epochs)",
                self.config.lambda
            ),
        })
    }

    pub fn checkpoint(&self) -> Result<String, ExploreError> {
        let mut model = Vec::new();
        ngramgen::write_model(&self.state.model, &mut model).expect("in-memory write");
        let payload = CheckpointPayload {
            format: CHECKPOINT_FORMAT.into(),
            config: self.config.to_text(),
            inputs: self.inputs.clone(),
            iteration: self.state.iteration,
            buffer: self.state.buffer.clone(),
            stats: self.state.stats.clone(),
            model: hex::encode(model),
        };
        let body = serde_json::to_string(&payload).expect("checkpoint serializes");
        let digest = hex::encode(Sha256::digest(body.as_bytes()));
        Ok(format!("{digest}\n{body}\n"))
    }

    /// Rebuilds an explorer from checkpoint text. Input files are reloaded
    /// and must hash as they did when the checkpoint was written.
    pub fn resume_from_text(text: &str) -> Result<Self, ExploreError> {
        let payload = parse_checkpoint(text)?;
        let config = RunConfig::parse(&payload.config, Path::new("/"))?;
        let (predictors, corpus, inputs) = load_inputs(&config)?;
        for (k, v) in &payload.inputs {
            if inputs.get(k) != Some(v) {
                return Err(ExploreError::InputChanged(k.clone()));
            }
        }
        let corpus_mols = corpus.unwrap_or_default().iter().filter_map(|s| parse_valid(s)).collect();
        Self::restore_payload(payload, config, predictors, corpus_mols, inputs)
    }

    /// In-memory counterpart of [`Explorer::resume_from_text`].
    pub fn restore(text: &str, predictors: PredictorSet, corpus: Vec<Molecule>) -> Result<Self, ExploreError> {
        let payload = parse_checkpoint(text)?;
        let config = RunConfig::parse(&payload.config, Path::new("/"))?;
        let inputs = payload.inputs.clone();
        Self::restore_payload(payload, config, predictors, corpus, inputs)
    }

    fn restore_payload(
        payload: CheckpointPayload,
        config: RunConfig,
        predictors: PredictorSet,
        corpus: Vec<Molecule>,
        inputs: BTreeMap<String, String>,
    ) -> Result<Self, ExploreError> {
        let bytes = hex::decode(&payload.model).map_err(|e| ExploreError::CorruptCheckpoint(e.to_string()))?;
        let model = ngramgen::read_model(&mut bytes.as_slice()).map_err(|e| ExploreError::CorruptCheckpoint(e.to_string()))?;
        let mut ex = Explorer::new(config, model, predictors, corpus)?;
        ex.inputs = inputs;
        ex.state.iteration = payload.iteration;
        ex.state.buffer = payload.buffer;
        ex.state.stats = payload.stats;
        Ok(ex)
    }

    /// Writes stats.csv, buffer.csv, manifest.json and checkpoint.json.
    pub fn emit_reports(&self, out_dir: &Path) -> Result<(), ExploreError> {
        std::fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
        let write = |name: &str, body: String| {
            let p = out_dir.join(name);
            std::fs::write(&p, body).map_err(io_err(&p))
        };
        write("stats.csv", self.stats_csv())?;
        write("buffer.csv", self.buffer_csv())?;
        write(
            "manifest.json",
            serde_json::to_string_pretty(&self.manifest()).expect("manifest serializes") + "\n",
        )?;
        write("checkpoint.json", self.checkpoint()?)?;
        Ok(())
    }
}

type Inputs = (PredictorSet, Option<Vec<String>>, BTreeMap<String, String>);

fn load_inputs(config: &RunConfig) -> Result<Inputs, ExploreError> {
    let mut inputs = BTreeMap::new();
    let mut predictors = PredictorSet::new();
    for (p, spec) in &config.predictors {
        let (pred, hash) = load_predictor(spec)?;
        predictors.insert(*p, pred);
        inputs.insert(format!("predictor.{}", p.name()), hash);
    }
    let corpus = match &config.corpus {
        Some(path) => {
            let (smiles, hash) = load_corpus(path)?;
            inputs.insert("corpus".into(), hash);
            Some(smiles)
        }
        None => None,
    };
    if let Some(p) = &config.model {
        inputs.insert("model".into(), file_sha256(p).map_err(io_err(p))?);
    }
    Ok((predictors, corpus, inputs))
}

#[derive(Debug, Serialize, Deserialize)]
struct CheckpointPayload {
    format: String,
    config: String,
    inputs: BTreeMap<String, String>,
    iteration: usize,
    buffer: Vec<BufferEntry>,
    stats: Vec<IterationStats>,
    model: String,
}

fn parse_checkpoint(text: &str) -> Result<CheckpointPayload, ExploreError> {
    let corrupt = |m: &str| ExploreError::CorruptCheckpoint(m.to_string());
    let (digest, body) = text.split_once('\n').ok_or_else(|| corrupt("missing digest line"))?;
    let body = body.strip_suffix('\n').ok_or_else(|| corrupt("truncated"))?;
    if hex::encode(Sha256::digest(body.as_bytes())) != digest.trim() {
        return Err(corrupt("digest mismatch"));
    }
    let payload: CheckpointPayload = serde_json::from_str(body).map_err(|e| corrupt(&e.to_string()))?;
    if payload.format != CHECKPOINT_FORMAT {
        return Err(corrupt(&format!("unknown format '{}'", payload.format)));
    }
    Ok(payload)
}

/// Runs the loop per benchmark task with the task's per-molecule score as
/// the objective and returns every distinct amine it scored (buffer first).
pub struct LoopGenerator {
    pub config: RunConfig,
    pub model: GeneratorModel,
    pub corpus: Vec<Molecule>,
}

impl CandidateGenerator for LoopGenerator {
    fn generate(&mut self, task: &BenchmarkTask, budget: usize) -> Vec<String> {
        let mut cfg = self.config.clone();
        cfg.objective = Objective::Task(Box::new(task.clone()));
        cfg.objective_text = format!("{}:{}", task.kind.keyword(), task.name);
        cfg.iterations = budget / cfg.batch_total().max(1);
        let Ok(mut ex) = Explorer::new(cfg, self.model.clone(), PredictorSet::new(), self.corpus.clone()) else {
            return Vec::new();
        };
        ex.run();
        let mut out: Vec<String> = ex.state.buffer.iter().map(|e| e.smiles.clone()).collect();
        let seen: HashSet<String> = out.iter().cloned().collect();
        let mut rest: Vec<&String> = ex.cache.keys().filter(|k| !seen.contains(*k)).collect();
        rest.sort();
        out.extend(rest.into_iter().cloned());
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::molgraph::parse_smiles;

    fn small_config(objective: &str) -> RunConfig {
        let mut c = RunConfig::desk();
        c.iterations = 3;
        c.generator_batch = 64;
        c.ga_batch = 64;
        c.buffer_size = 16;
        c.corpus = Some(PathBuf::from("unused"));
        c.set_objective(objective).unwrap();
        c
    }

    fn model() -> GeneratorModel {
        ngramgen::train(&["NCCO", "CCNCC", "NCCCO", "CN(C)CCO", "NCCN"], 4, 0.01).unwrap()
    }

    #[test]
    fn config_roundtrip_and_errors() {
        let text = "profile = desk\niterations = 5\nobjective = max_pka\nrestriction = primary-secondary\nscaler.pka = 6:12:inc\nweight.bridge = 0.5\npredictor.pka = knn:pka.csv:k=3\n";
        let c = RunConfig::parse(text, Path::new("/data")).unwrap();
        assert_eq!(c.iterations, 5);
        assert_eq!(c.predictors[&Property::Pka].path, PathBuf::from("/data/pka.csv"));
        let again = RunConfig::parse(&c.to_text(), Path::new("/")).unwrap();
        assert_eq!(again.to_text(), c.to_text());
        assert!(matches!(
            RunConfig::parse("iterationz = 3\n", Path::new(".")),
            Err(ConfigError::UnknownKey { line: 1, .. })
        ));
        assert!(matches!(RunConfig::parse("just words\n", Path::new(".")), Err(ConfigError::Syntax { line: 1 })));
        assert!(RunConfig::parse("batch_total = 10\n", Path::new(".")).is_err());
        let full = RunConfig::parse("corpus = c.txt\nprofile = full\n", Path::new(".")).unwrap();
        assert_eq!((full.batch_total(), full.buffer_size, full.iterations), (16384, 1024, 100));
    }

    #[test]
    fn zero_iterations_is_empty() {
        let mut c = small_config("similarity:MEA");
        c.iterations = 0;
        let mut ex = Explorer::new(c, model(), PredictorSet::new(), vec![]).unwrap();
        ex.run();
        assert!(ex.state().stats.is_empty());
        assert!(ex.state().buffer.is_empty());
        assert_eq!(ex.stats_csv().lines().count(), 1);
    }

    #[test]
    fn gate_chain_and_buffer_invariants() {
        let mut ex = Explorer::new(small_config("similarity:MEA"), model(), PredictorSet::new(), vec![]).unwrap();
        ex.run();
        let st = ex.state();
        assert_eq!(st.stats.len(), 3);
        for s in &st.stats {
            assert!(s.generated >= s.valid && s.valid >= s.amine && s.amine >= s.restriction_pass);
        }
        let mut seen = HashSet::new();
        for w in st.buffer.windows(2) {
            assert!(w[0].score >= w[1].score);
        }
        for e in &st.buffer {
            assert!(seen.insert(e.smiles.clone()));
        }
        assert!(st.buffer.len() <= 16);
        assert_eq!(ex.buffer_csv().lines().count(), st.buffer.len() + 1);
    }

    #[test]
    fn ga_only_uses_corpus() {
        let mut c = small_config("similarity:MEA");
        c.generator_batch = 0;
        let corpus = vec![parse_smiles("CCNCC").unwrap(), parse_smiles("CCO").unwrap()];
        let mut ex = Explorer::new(c, model(), PredictorSet::new(), corpus).unwrap();
        let s = ex.step().clone();
        assert!(s.generated > 0);
        assert!(ex.state().best().is_some());
    }

    #[test]
    fn checkpoint_rejects_damage() {
        let mut ex = Explorer::new(small_config("similarity:MEA"), model(), PredictorSet::new(), vec![]).unwrap();
        ex.step();
        let text = ex.checkpoint().unwrap();
        let restored = Explorer::restore(&text, PredictorSet::new(), vec![]).unwrap();
        assert_eq!(restored.state().buffer, ex.state().buffer);
        let truncated = &text[..text.len() / 2];
        assert!(matches!(
            Explorer::restore(truncated, PredictorSet::new(), vec![]),
            Err(ExploreError::CorruptCheckpoint(_))
        ));
        let tampered = text.replacen("\"iteration\":1", "\"iteration\":2", 1);
        assert!(Explorer::restore(&tampered, PredictorSet::new(), vec![]).is_err());
    }

    #[test]
    fn missing_predictor_is_reported() {
        let c = small_config("max_pka");
        assert!(matches!(
            Explorer::new(c, model(), PredictorSet::new(), vec![]),
            Err(ExploreError::PredictorLoad(ScoringError::MissingPredictor(Property::Pka)))
        ));
    }

    #[test]
    fn quartile_values() {
        assert_eq!(quartiles(&[4.0, 1.0, 3.0, 2.0, 5.0]), Some([1.0, 2.0, 3.0, 4.0, 5.0]));
        assert_eq!(quartiles(&[1.0, 2.0]).unwrap()[2], 1.5);
        assert_eq!(quartiles(&[]), None);
    }
}
