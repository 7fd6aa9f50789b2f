use std::collections::HashSet;
use std::fmt::Display;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, CommandFactory, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use sage_core::benchmark::{self, parse_tasks, run_suite, CandidateGenerator, Replay};
use sage_core::chemclass::classify_amine;
use sage_core::explore::{self, Explorer, LoopGenerator, RunConfig};
use sage_core::fingerprint::{ecfp, ecfp6};
use sage_core::molgraph::{canonical_smiles, parse_smiles, parse_valid};
use sage_core::ngramgen;
use sage_core::qspr::{self, grid_search, load_dataset, parse_grid, quintile_stratified_folds, CvReport};
use sage_core::scoring::{load_predictor, PredictorKind, PredictorSpec};

#[derive(Parser)]
#[command(name = "sage", about = "Amine generation, scoring and benchmarking", disable_version_flag = true)]
struct Cli {
    /// Print the version and file format tags.
    #[arg(short = 'V', long, global = true)]
    version: bool,
    /// Master seed for every stochastic step; overrides a run config's seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker cap; work runs on one thread regardless.
    #[arg(long, global = true, default_value_t = 1)]
    threads: usize,
    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Subcommand)]
enum Command {
    /// Canonical SMILES for each input.
    #[command(alias = "parse")]
    Canonical { smiles: Vec<String> },
    /// Amine class for each input.
    Classify { smiles: Vec<String> },
    /// On-bit indices of the circular fingerprint.
    Fingerprint {
        smiles: Vec<String>,
        #[arg(long, default_value_t = 3)]
        radius: usize,
        #[arg(long, default_value_t = 1024)]
        width: usize,
    },
    /// Validity, uniqueness, novelty, diversity and amine ratios of samples.
    Metrics {
        #[arg(long)]
        samples: PathBuf,
        /// Training SMILES used for novelty.
        #[arg(long)]
        train: Option<PathBuf>,
    },
    /// Train an n-gram generator on a SMILES corpus.
    Pretrain {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long, default_value_t = ngramgen::DEFAULT_ORDER)]
        order: usize,
        #[arg(long, default_value_t = ngramgen::DEFAULT_ALPHA)]
        alpha: f64,
        #[command(flatten)]
        out: OutDir,
    },
    /// Sample raw strings from a generator model.
    Sample {
        #[arg(long)]
        model: PathBuf,
        #[arg(short, long, default_value_t = 100)]
        n: usize,
        #[arg(long, default_value_t = ngramgen::DEFAULT_MAX_LEN)]
        max_len: usize,
    },
    /// Drop heavy molecules and those too similar to benchmark targets.
    Reduce {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long, default_value_t = 250.0)]
        max_mw: f64,
        /// Target SMILES file; the reference amines when omitted.
        #[arg(long)]
        targets: Option<PathBuf>,
        #[arg(long, default_value_t = qspr::SIMILARITY_CUTOFF)]
        cutoff: f64,
        #[command(flatten)]
        out: OutDir,
    },
    /// Stratified cross-validation and grid search for a property model.
    QsprTrain {
        #[arg(long)]
        data: PathBuf,
        /// knn or ridge.
        #[arg(long)]
        model: String,
        /// `k=1,3,5` or `lambda=0.1,1,10`.
        #[arg(long, default_value = "")]
        grid: String,
        #[arg(long, default_value_t = qspr::DEFAULT_FOLDS)]
        folds: usize,
        #[command(flatten)]
        out: OutDir,
    },
    /// Predict a property with `kind:path[:k=..][:lambda=..]`.
    QsprPredict {
        #[arg(long)]
        predictor: String,
        smiles: Vec<String>,
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Score the benchmark tasks.
    Benchmark {
        /// Candidate SMILES to replay for every task.
        #[arg(long, conflicts_with = "config")]
        candidates: Option<PathBuf>,
        /// Run configuration whose loop generates candidates per task.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Task file; the standard suite when omitted.
        #[arg(long)]
        tasks: Option<PathBuf>,
        #[arg(long, default_value_t = 10_000)]
        budget: usize,
        #[command(flatten)]
        out: OutDir,
    },
    /// Run the optimization loop from a configuration file.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        iterations: Option<usize>,
        #[command(flatten)]
        out: OutDir,
    },
    /// Continue a run from its checkpoint.
    Resume {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        iterations: Option<usize>,
        #[command(flatten)]
        out: OutDir,
    },
    /// Rewrite the reports of a checkpoint.
    Report {
        #[arg(long)]
        checkpoint: PathBuf,
        #[command(flatten)]
        out: OutDir,
    },
}

#[derive(Args)]
struct OutDir {
    #[arg(long)]
    out: PathBuf,
}

enum Failure {
    Data(String),
    Runtime(String),
}

fn data(e: impl Display) -> Failure {
    Failure::Data(e.to_string())
}

fn runtime(e: impl Display) -> Failure {
    Failure::Runtime(e.to_string())
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        runtime(e)
    }
}

impl From<explore::ExploreError> for Failure {
    fn from(e: explore::ExploreError) -> Self {
        match e {
            explore::ExploreError::Io { .. } => runtime(e),
            _ => data(e),
        }
    }
}

type Result<T> = std::result::Result<T, Failure>;

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| runtime(format!("{}: {e}", path.display())))
}

fn write_file(dir: &Path, name: &str, body: &[u8]) -> Result<PathBuf> {
    std::fs::create_dir_all(dir).map_err(|e| runtime(format!("{}: {e}", dir.display())))?;
    let p = dir.join(name);
    std::fs::write(&p, body).map_err(|e| runtime(format!("{}: {e}", p.display())))?;
    Ok(p)
}

fn inputs(args: &[String]) -> Result<&[String]> {
    if args.is_empty() {
        return Err(data("no SMILES given"));
    }
    Ok(args)
}

fn version_text() -> String {
    format!(
        "sage {} (model {}, checkpoint {}, manifest v{})",
        env!("CARGO_PKG_VERSION"),
        ngramgen::FORMAT_VERSION,
        explore::CHECKPOINT_FORMAT,
        explore::MANIFEST_VERSION
    )
}

fn run_loop(mut ex: Explorer, out: &Path) -> Result<()> {
    if ex.is_finished() {
        eprintln!(
            "warning: run already finished at iteration {}; nothing to do",
            ex.state().iteration
        );
    }
    while !ex.is_finished() {
        let s = ex.step();
        eprintln!(
            "iteration {}: generated {} valid {} amine {} best {}",
            s.iteration,
            s.generated,
            s.valid,
            s.amine,
            s.buffer_best.map_or("-".to_string(), |b| format!("{b:.4}"))
        );
    }
    ex.emit_reports(out)?;
    Ok(())
}

fn dispatch(cli: &Cli, command: Command, stdout: &mut impl Write) -> Result<()> {
    match command {
        Command::Canonical { smiles } => {
            for s in inputs(&smiles)? {
                let m = parse_smiles(s).map_err(|e| data(format!("{s}: {e}")))?;
                writeln!(stdout, "{}", canonical_smiles(&m))?;
            }
        }
        Command::Classify { smiles } => {
            for s in inputs(&smiles)? {
                let m = parse_smiles(s).map_err(|e| data(format!("{s}: {e}")))?;
                writeln!(stdout, "{}", classify_amine(&m))?;
            }
        }
        Command::Fingerprint { smiles, radius, width } => {
            if width == 0 {
                return Err(data("width must be positive"));
            }
            for s in inputs(&smiles)? {
                let m = parse_smiles(s).map_err(|e| data(format!("{s}: {e}")))?;
                let bits: Vec<String> = ecfp(&m, radius, width).ones().map(|b| b.to_string()).collect();
                writeln!(stdout, "{}", bits.join(","))?;
            }
        }
        Command::Metrics { samples, train } => {
            let samples = explore::read_smiles_list(&read(&samples)?);
            let training: HashSet<String> = match train {
                Some(p) => explore::read_smiles_list(&read(&p)?)
                    .iter()
                    .filter_map(|s| parse_valid(s))
                    .map(|m| canonical_smiles(&m))
                    .collect(),
                None => HashSet::new(),
            };
            let mut rng = ChaCha8Rng::seed_from_u64(cli.seed.unwrap_or(0));
            let m = ngramgen::distribution_metrics(&samples, &training, &mut rng);
            writeln!(stdout, "{}\n{}", ngramgen::GenMetrics::HEADER, m.csv_row())?;
        }
        Command::Pretrain { corpus, order, alpha, out } => {
            let smiles = explore::read_smiles_list(&read(&corpus)?);
            let model = ngramgen::train(&smiles, order, alpha).map_err(data)?;
            let mut bin = Vec::new();
            ngramgen::write_model(&model, &mut bin)?;
            let p = write_file(&out.out, "model.bin", &bin)?;
            let mut txt = Vec::new();
            ngramgen::dump_text(&model, &mut txt)?;
            write_file(&out.out, "model.txt", &txt)?;
            let ppl = ngramgen::perplexity(&model, &smiles).map_err(data)?;
            eprintln!("trained on {} strings, perplexity {ppl:.4}", smiles.len());
            writeln!(stdout, "{}", p.display())?;
        }
        Command::Sample { model, n, max_len } => {
            let mut f = std::fs::File::open(&model).map_err(|e| runtime(format!("{}: {e}", model.display())))?;
            let m = ngramgen::read_model(&mut f).map_err(data)?;
            let mut rng = ChaCha8Rng::seed_from_u64(cli.seed.unwrap_or(0));
            for s in ngramgen::sample(&m, n, &mut rng, max_len) {
                writeln!(stdout, "{s}")?;
            }
        }
        Command::Reduce {
            corpus,
            max_mw,
            targets,
            cutoff,
            out,
        } => {
            let smiles = explore::read_smiles_list(&read(&corpus)?);
            let mols: Vec<_> = smiles.iter().filter_map(|s| parse_valid(s)).collect();
            let targets = match targets {
                Some(p) => explore::read_smiles_list(&read(&p)?)
                    .iter()
                    .map(|s| parse_smiles(s).map_err(|e| data(format!("{s}: {e}"))))
                    .collect::<Result<Vec<_>>>()?,
                None => benchmark::reference_amines().iter().map(|r| r.molecule()).collect(),
            };
            let kept = qspr::filter_corpus(&mols, max_mw, &targets, cutoff);
            let body: String = kept.iter().map(|m| canonical_smiles(m) + "\n").collect();
            let p = write_file(&out.out, "reduced.smi", body.as_bytes())?;
            eprintln!("kept {} of {} valid molecules", kept.len(), mols.len());
            writeln!(stdout, "{}", p.display())?;
        }
        Command::QsprTrain {
            data: path,
            model,
            grid,
            folds,
            out,
        } => {
            let kind: PredictorKind = model.parse().map_err(data)?;
            let ds = load_dataset(&path).map_err(data)?;
            for w in &ds.warnings {
                eprintln!("warning: {w}");
            }
            let grid = parse_grid(kind, &grid).map_err(data)?;
            let assignment = quintile_stratified_folds(&ds.values(), folds, cli.seed.unwrap_or(0)).map_err(data)?;
            let (best, results) = grid_search(&ds, kind, &grid, &ecfp6, &assignment).map_err(data)?;
            let task = if ds.property.is_empty() { "property" } else { ds.property.as_str() };
            let mut body = String::from(CvReport::CSV_HEADER);
            body.push('\n');
            for (h, r) in &results {
                let label = match kind {
                    PredictorKind::Knn => format!("knn k={}", h.k),
                    _ => format!("ridge lambda={}", h.lambda),
                };
                body.extend(r.to_csv(task, &label).lines().skip(1).map(|l| l.to_string() + "\n"));
            }
            write_file(&out.out, "cv_report.csv", body.as_bytes())?;
            let spec = PredictorSpec {
                kind,
                path: path.clone(),
                k: best.k,
                lambda: best.lambda,
            };
            write_file(&out.out, "predictor.txt", format!("{spec}\n").as_bytes())?;
            writeln!(stdout, "{spec}")?;
        }
        Command::QsprPredict { predictor, smiles, input } => {
            let spec: PredictorSpec = predictor.parse().map_err(data)?;
            let (pred, _) = load_predictor(&spec).map_err(data)?;
            let mut all = smiles;
            if let Some(p) = input {
                all.extend(explore::read_smiles_list(&read(&p)?));
            }
            writeln!(stdout, "smiles,value")?;
            for s in inputs(&all)? {
                let m = parse_smiles(s).map_err(|e| data(format!("{s}: {e}")))?;
                let v = pred.predict(&m).map_err(data)?;
                writeln!(stdout, "{},{v}", canonical_smiles(&m))?;
            }
        }
        Command::Benchmark {
            candidates,
            config,
            tasks,
            budget,
            out,
        } => {
            let tasks = match tasks {
                Some(p) => parse_tasks(&read(&p)?).map_err(data)?,
                None => benchmark::standard_tasks(),
            };
            let mut generator: Box<dyn CandidateGenerator> = match (candidates, config) {
                (Some(p), _) => Box::new(Replay(explore::read_smiles_list(&read(&p)?))),
                (None, Some(c)) => {
                    let base = c.parent().map(Path::to_path_buf).unwrap_or_default();
                    let mut cfg = RunConfig::parse(&read(&c)?, &base).map_err(data)?;
                    if let Some(seed) = cli.seed {
                        cfg.seed = seed;
                    }
                    let ex = Explorer::from_config(cfg.clone())?;
                    let corpus = cfg
                        .corpus
                        .as_deref()
                        .map(read)
                        .transpose()?
                        .map(|t| explore::read_smiles_list(&t).iter().filter_map(|s| parse_valid(s)).collect())
                        .unwrap_or_default();
                    Box::new(LoopGenerator {
                        config: cfg,
                        model: ex.state().model.clone(),
                        corpus,
                    })
                }
                (None, None) => return Err(data("give --candidates or --config")),
            };
            let report = run_suite(&tasks, generator.as_mut(), budget);
            let csv = report.to_csv();
            write_file(&out.out, "benchmark.csv", csv.as_bytes())?;
            write!(stdout, "{csv}")?;
        }
        Command::Run { config, iterations, out } => {
            let base = config.parent().map(Path::to_path_buf).unwrap_or_default();
            let mut cfg = RunConfig::parse(&read(&config)?, &base).map_err(data)?;
            if let Some(seed) = cli.seed {
                cfg.seed = seed;
            }
            if let Some(n) = iterations {
                cfg.iterations = n;
            }
            cfg.threads = cli.threads;
            run_loop(Explorer::from_config(cfg)?, &out.out)?;
            writeln!(stdout, "{}", out.out.join("buffer.csv").display())?;
        }
        Command::Resume {
            checkpoint,
            iterations,
            out,
        } => {
            let mut ex = Explorer::resume_from_text(&read(&checkpoint)?)?;
            if let Some(n) = iterations {
                ex.set_iterations(n);
            }
            run_loop(ex, &out.out)?;
            writeln!(stdout, "{}", out.out.join("buffer.csv").display())?;
        }
        Command::Report { checkpoint, out } => {
            let ex = Explorer::resume_from_text(&read(&checkpoint)?)?;
            ex.emit_reports(&out.out)?;
            writeln!(stdout, "{}", out.out.join("stats.csv").display())?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if cli.version {
        println!("{}", version_text());
        return ExitCode::SUCCESS;
    }
    let mut cli = cli;
    let Some(command) = cli.command.take() else {
        eprint!("{}", Cli::command().render_help());
        return ExitCode::from(1);
    };
    let stdout = io::stdout();
    let mut out = BufWriter::new(stdout.lock());
    let result = dispatch(&cli, command, &mut out);
    let flushed = out.flush();
    match (result, flushed) {
        (Ok(()), Ok(())) => ExitCode::SUCCESS,
        (Err(Failure::Data(m)), _) => {
            eprintln!("error: {}", m.replace('\n', " "));
            ExitCode::from(2)
        }
        (Err(Failure::Runtime(m)), _) => {
            eprintln!("error: {}", m.replace('\n', " "));
            ExitCode::from(3)
        }
        (Ok(()), Err(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(3)
        }
    }
}
