use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rlabc::abc::{self, AbcError, RunResult};
use rlabc::bench::{self, BenchError, ResultPaths};
use rlabc::config::{self, ConfigError, MatrixSettings, RunSettings};
use rlabc::credit::{read_experience_file, CreditModel, DistanceMode, ExperienceError};
use rlabc::problem::{generate_seeded, GeneratorParams, ProblemError};
use rlabc::selection::SelectionError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Io(String),
    #[error("{0}")]
    Mismatch(String),
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        match e {
            ConfigError::Io { .. } => CliError::Io(e.to_string()),
            ConfigError::UnknownName(m) => CliError::Usage(m),
            ConfigError::Parse { .. } | ConfigError::Invalid(_) => CliError::Mismatch(e.to_string()),
        }
    }
}

impl From<AbcError> for CliError {
    fn from(e: AbcError) -> Self {
        match &e {
            AbcError::Experience(ExperienceError::Io(_)) => CliError::Io(e.to_string()),
            AbcError::Selection(SelectionError::UnknownScheme(_)) => CliError::Usage(e.to_string()),
            _ => CliError::Mismatch(e.to_string()),
        }
    }
}

impl From<BenchError> for CliError {
    fn from(e: BenchError) -> Self {
        match &e {
            BenchError::Io { .. } => CliError::Io(e.to_string()),
            BenchError::Csv(c) if c.is_io_error() => CliError::Io(e.to_string()),
            _ => CliError::Mismatch(e.to_string()),
        }
    }
}

fn write_file(path: &Path, contents: &[u8]) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

/// Adaptive operator selection for the set-union knapsack problem.
#[derive(Debug, Parser)]
#[command(name = "rlabc", version)]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Solve one instance.
    ///
    /// Settings come from the library defaults, then the --config file,
    /// then the flags given here: a flag always overrides the same key in
    /// the config file.
    Solve(SolveArgs),
    /// Run a comparison matrix described by a TOML file.
    ///
    /// Flags override the corresponding keys of the matrix file.
    Bench(BenchArgs),
    /// Report an optimal solution by exhaustive search (at most 24 items).
    Oracle(OracleArgs),
    /// Write a random instance.
    Gen(GenArgs),
    /// Print the contents of an experience file.
    ExperienceInspect(InspectArgs),
}

#[derive(Debug, Args)]
struct SolveArgs {
    /// Instance file; overrides `instance` in the config file.
    instance: Option<PathBuf>,
    /// TOML file with run settings.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Selection scheme: random, pm, ap, ucb or rl.
    #[arg(long)]
    scheme: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Evaluations after initialization.
    #[arg(long)]
    budget: Option<usize>,
    #[arg(long)]
    colony_size: Option<usize>,
    #[arg(long)]
    limit: Option<usize>,
    /// Comma-separated operator pool, e.g. `flip1,flipk:3,bestmix:0.3,exchange`.
    #[arg(long, value_delimiter = ',')]
    operators: Option<Vec<String>>,
    /// Comma-separated objective weights summing to one.
    #[arg(long, value_delimiter = ',')]
    weights: Option<Vec<f64>>,
    /// fresh, frozen or continue.
    #[arg(long)]
    transfer: Option<String>,
    /// Experience file loaded in frozen and continue modes.
    #[arg(long)]
    experience: Option<PathBuf>,
    /// Write the final credit model here (rl only).
    #[arg(long)]
    save_experience: Option<PathBuf>,
    /// Write `summary.txt`, `history.csv` and `archive.csv` into this directory.
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Summary path; without one the summary goes to standard output.
    #[arg(long)]
    summary: Option<PathBuf>,
    #[arg(long)]
    history: Option<PathBuf>,
    #[arg(long)]
    archive: Option<PathBuf>,
    /// Scalarized fitness whose first attainment is reported.
    #[arg(long)]
    target: Option<f64>,
}

#[derive(Debug, Args)]
struct BenchArgs {
    /// Matrix file.
    config: PathBuf,
    /// Maximum number of runs executing at once.
    #[arg(long)]
    parallel: Option<usize>,
    /// Directory for outputs not named in the matrix file or by flags.
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
    #[arg(long)]
    records: Option<PathBuf>,
    #[arg(long)]
    ranks: Option<PathBuf>,
    #[arg(long)]
    plot: Option<PathBuf>,
    #[arg(long)]
    report: Option<PathBuf>,
    #[arg(long, value_enum)]
    rank_by: Option<RankBy>,
    /// Record wall-clock time per run (makes the records CSV machine dependent).
    #[arg(long)]
    timing: bool,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum RankBy {
    Fitness,
    Evals,
}

#[derive(Debug, Args)]
struct OracleArgs {
    instance: PathBuf,
    /// Comma-separated objective weights; equal weights by default.
    #[arg(long, value_delimiter = ',')]
    weights: Option<Vec<f64>>,
}

#[derive(Debug, Args)]
struct GenArgs {
    #[arg(long)]
    items: usize,
    #[arg(long)]
    elements: usize,
    #[arg(long, default_value_t = 1)]
    objectives: usize,
    /// Probability of each item-element membership.
    #[arg(long, default_value_t = 0.1)]
    density: f64,
    /// Capacity as a share of the total element weight.
    #[arg(long, default_value_t = 0.75)]
    capacity_ratio: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output path; standard output by default.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct InspectArgs {
    file: PathBuf,
}

pub fn dispatch(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Solve(a) => solve(a),
        Command::Bench(a) => bench_cmd(a),
        Command::Oracle(a) => oracle(a),
        Command::Gen(a) => gen(a),
        Command::ExperienceInspect(a) => inspect(a),
    }
}

fn solve(a: SolveArgs) -> Result<(), CliError> {
    let file = match &a.config {
        Some(p) => RunSettings::load(p)?,
        None => RunSettings::default(),
    };
    let flags = RunSettings {
        instance: a.instance,
        scheme: a.scheme,
        operators: a.operators,
        weights: a.weights,
        colony_size: a.colony_size,
        limit: a.limit,
        budget: a.budget,
        seed: a.seed,
        transfer: a.transfer,
        experience: a.experience,
        target_fitness: a.target,
        summary: a.summary,
        history: a.history,
        archive: a.archive,
        save_experience: a.save_experience,
        ..RunSettings::default()
    };
    let mut s = file.overlay(flags);
    if let Some(dir) = &a.out_dir {
        s.summary.get_or_insert_with(|| dir.join("summary.txt"));
        s.history.get_or_insert_with(|| dir.join("history.csv"));
        s.archive.get_or_insert_with(|| dir.join("archive.csv"));
    }
    let Some(instance_path) = s.instance.clone() else {
        return Err(CliError::Usage("no instance given (argument or `instance` key)".into()));
    };
    // Fail on unknown names before touching the file system.
    let probe = s.to_config(1);
    if let Err(ConfigError::UnknownName(m)) = probe {
        return Err(CliError::Usage(m));
    }
    let instance = config::load_instance(&instance_path)?;
    let cfg = s.to_config(instance.objective_count())?;
    if s.save_experience.is_some() && cfg.scheme != rlabc::selection::SchemeKind::Rl {
        return Err(CliError::Mismatch("--save-experience needs the rl scheme".into()));
    }
    if let Some(dir) = &a.out_dir {
        fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
    }
    let result = abc::run(&instance, &cfg)?;

    let summary = summary_text(&instance_path, &cfg, &instance, &result);
    match &s.summary {
        Some(p) => write_file(p, summary.as_bytes())?,
        None => print!("{summary}"),
    }
    if let Some(p) = &s.history {
        let mut h = String::from("evaluations,best_fitness\n");
        for (e, f) in &result.history {
            let _ = writeln!(h, "{e},{f:?}");
        }
        write_file(p, h.as_bytes())?;
    }
    if let Some(p) = &s.archive {
        let mut buf = Vec::new();
        result
            .archive
            .write_csv(&mut buf, instance.objective_count())
            .expect("writing to memory");
        write_file(p, &buf)?;
    }
    if let Some(p) = &s.save_experience {
        let model = result.model.as_ref().expect("rl runs keep their model");
        model.save_experience(p).map_err(|e| match e {
            ExperienceError::Io(io) => CliError::Io(format!("{}: {io}", p.display())),
            other => CliError::Mismatch(other.to_string()),
        })?;
    }
    Ok(())
}

fn summary_text(
    path: &Path,
    cfg: &abc::AbcConfig,
    instance: &rlabc::problem::SukpInstance,
    r: &RunResult,
) -> String {
    let mut s = String::new();
    let join = |v: &[f64]| v.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(",");
    let _ = writeln!(s, "instance {}", path.display());
    let _ = writeln!(s, "scheme {}", cfg.scheme);
    let _ = writeln!(s, "transfer {}", cfg.transfer);
    let _ = writeln!(s, "seed {}", cfg.seed);
    let _ = writeln!(s, "budget {}", cfg.budget);
    let _ = writeln!(s, "best_fitness {:?}", r.best_fitness);
    let _ = writeln!(s, "objectives {}", join(&r.best_evaluation.objectives));
    let _ = writeln!(
        s,
        "union_weight {:?} of {:?}",
        r.best_evaluation.union_weight,
        instance.capacity()
    );
    let _ = writeln!(s, "solution {}", r.best_solution);
    let _ = writeln!(s, "evaluations {}", r.evaluations);
    match r.evals_to_target {
        Some(e) => {
            let _ = writeln!(s, "evals_to_target {e}");
        }
        None => {
            let _ = writeln!(s, "evals_to_target -");
        }
    }
    let _ = writeln!(s, "archive_size {}", r.archive.len());
    let counts: Vec<String> = cfg
        .operators
        .names()
        .iter()
        .zip(&r.operator_counts)
        .map(|(n, c)| format!("{n}={c}"))
        .collect();
    let _ = writeln!(s, "operator_counts {}", counts.join(","));
    s
}

fn bench_cmd(a: BenchArgs) -> Result<(), CliError> {
    let mut m = MatrixSettings::load(&a.config)?;
    if a.parallel.is_some() {
        m.parallel = a.parallel;
    }
    if a.timing {
        m.timing = Some(true);
    }
    if let Some(r) = a.rank_by {
        m.rank_by = Some(match r {
            RankBy::Fitness => "fitness".into(),
            RankBy::Evals => "evals".into(),
        });
    }
    let pick = |flag: Option<PathBuf>, key: &Option<PathBuf>, name: &str| {
        flag.or_else(|| key.clone()).unwrap_or_else(|| a.out_dir.join(name))
    };
    let paths = ResultPaths {
        records: pick(a.records, &m.records, "records.csv"),
        ranks: pick(a.ranks, &m.ranks, "ranks.csv"),
        plot: pick(a.plot, &m.plot, "plot.csv"),
    };
    let report_path = a.report.or_else(|| m.report.clone());
    let key = m.rank_key()?;
    // All instance files are read before any run starts.
    let instances = m.load_instances()?;
    let matrix = m.to_matrix(instances[0].instance.objective_count())?;
    let outcome = bench::run_matrix(&instances, &matrix)?;

    let complete = outcome.complete_records();
    let table = bench::rank_table(&complete, key)?;
    let groups: BTreeMap<String, String> = instances
        .iter()
        .map(|b| (b.id.clone(), b.group.clone()))
        .collect();
    bench::emit_results(&outcome.records, &table, &groups, &paths)?;
    let text = bench::report(&outcome, key)?;
    match report_path {
        Some(p) => write_file(&p, text.as_bytes())?,
        None => print!("{text}"),
    }
    if !outcome.failures.is_empty() {
        return Err(CliError::Mismatch(format!(
            "{} runs failed; their cells are left out of the rank table",
            outcome.failures.len()
        )));
    }
    Ok(())
}

fn oracle(a: OracleArgs) -> Result<(), CliError> {
    let instance = config::load_instance(&a.instance)?;
    let weights = match a.weights {
        Some(w) => w,
        None => {
            let n = instance.objective_count();
            vec![1.0 / n as f64; n]
        }
    };
    let (x, eval) = instance
        .brute_force_optimum(&weights)
        .map_err(|e: ProblemError| CliError::Mismatch(e.to_string()))?;
    println!("fitness {}", eval.weighted(&weights));
    println!("solution {x}");
    Ok(())
}

fn gen(a: GenArgs) -> Result<(), CliError> {
    let instance = generate_seeded(
        a.seed,
        GeneratorParams {
            items: a.items,
            elements: a.elements,
            objectives: a.objectives,
            density: a.density,
            capacity_ratio: a.capacity_ratio,
        },
    )
    .map_err(|e| CliError::Usage(e.to_string()))?;
    let text = instance.to_text();
    match &a.out {
        Some(p) => write_file(p, text.as_bytes()),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn inspect(a: InspectArgs) -> Result<(), CliError> {
    let file = read_experience_file(&a.file).map_err(|e| match e {
        ExperienceError::Io(io) => CliError::Io(format!("{}: {io}", a.file.display())),
        other => CliError::Mismatch(format!("{}: {other}", a.file.display())),
    })?;
    let model = CreditModel::from_experience(file.clone(), DistanceMode::default())
        .map_err(|e| CliError::Mismatch(format!("{}: {e}", a.file.display())))?;
    println!("version {}", file.version);
    println!(
        "operators {} objectives {} solution_length {}",
        file.operators, file.objectives, file.solution_length
    );
    println!("learning_rate {:?} discount {:?}", file.beta, file.gamma);
    for op in 0..model.operators() {
        for j in 0..model.objectives() {
            let center = &file.centers[op][j];
            let mean = if center.is_empty() {
                0.0
            } else {
                center.iter().sum::<f64>() / center.len() as f64
            };
            println!(
                "op {op} objective {j}: q {:?} successes {} center_mean {:.4}",
                file.q_table[op][j], file.counters[op][j], mean
            );
        }
    }
    Ok(())
}
