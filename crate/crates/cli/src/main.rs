use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};

use featlearn::data::{append_noise_features, generate_synthetic, load_csv, save_csv, SyntheticSpec, DEFAULT_LABEL_COLUMN};
use featlearn::harness::{
    parse_results_csv, render_table, repeat_split, results_to_csv, run_experiment_with_jobs, run_pipeline, ExperimentConfig,
    PipelineSpec, TableFormat, FOLD_SEED_OFFSET, SAE_SEED_OFFSET,
};
use featlearn::sae::HEAD_SEED_OFFSET;
use featlearn::verify::{run_suite, Suite};
use featlearn::Dataset64;

/// Seed of the appended noise columns is `--seed` plus this.
const NOISE_SEED_OFFSET: u64 = 30_000;

fn seed_help() -> String {
    format!(
        "Seeds: every random choice derives from --seed. gen-data draws rows with the seed itself and \
         noise columns with seed + {NOISE_SEED_OFFSET}. Repeat r of an experiment splits with seed + r; \
         inside that repeat the CV folds use (seed + r) + {FOLD_SEED_OFFSET}, SAE layer k is initialized \
         with (seed + r) + {SAE_SEED_OFFSET} + k and the softmax head with (seed + r) + {SAE_SEED_OFFSET} + {HEAD_SEED_OFFSET}."
    )
}

fn config_help() -> String {
    format!(
        "Config files hold `key = value` lines; missing keys keep these defaults \
         (SAE learning rate 0.01 and 150 iterations for pretraining and fine-tuning):\n\n{}\n{}",
        ExperimentConfig::default().to_text(),
        seed_help()
    )
}

#[derive(Parser)]
#[command(name = "featlearn", version, about = "Feature learning and selection for two-class problems, evaluated by linear SVM")]
#[command(after_help = seed_help())]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic two-class data set as CSV.
    GenData(GenDataArgs),
    /// Run one pipeline on one train/test split.
    #[command(after_help = config_help())]
    Run(RunArgs),
    /// Run pipelines over repeated splits and write results and the accuracy table.
    #[command(after_help = config_help())]
    Experiment(ExperimentArgs),
    /// Render a table from a results CSV written by `experiment`.
    Report(ReportArgs),
    /// Check gradients and solvers against independent oracles.
    Verify(VerifyArgs),
}

#[derive(Args)]
struct GenDataArgs {
    /// Start from a preset: adni-like is 144 / 179 labeled, 309 unlabeled, p 56, s 6, delta 0.8, rho 0.2.
    #[arg(long)]
    preset: Option<String>,
    /// Class-0 rows [default: 100, or the preset's]
    #[arg(long)]
    n0: Option<usize>,
    /// Class-1 rows [default: 100, or the preset's]
    #[arg(long)]
    n1: Option<usize>,
    /// Unlabeled rows [default: 0, or the preset's]
    #[arg(long)]
    n_unlabeled: Option<usize>,
    /// Features [default: 20, or the preset's]
    #[arg(long)]
    p: Option<usize>,
    /// Informative leading features [default: 5, or the preset's]
    #[arg(long)]
    s: Option<usize>,
    /// Class-1 mean shift of informative features [default: 1, or the preset's]
    #[arg(long)]
    delta: Option<f64>,
    /// Common correlation between features [default: 0, or the preset's]
    #[arg(long)]
    rho: Option<f64>,
    /// Independent standard-normal columns appended after the generated ones.
    #[arg(long, default_value_t = 0)]
    noise: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct DataArgs {
    /// CSV with one column per feature and a label column (0, 1, or -1 / empty for unlabeled).
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value = DEFAULT_LABEL_COLUMN)]
    label_column: String,
    /// Experiment config file; see below for keys and defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Split seed; overrides the config's base_seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Draw test rows without regard to class.
    #[arg(long)]
    no_stratify: bool,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    data: DataArgs,
    /// method[:selector], methods llf, llf-saef, llf-semi-saef, saef, semi-saef; selectors none, lasso, ttest, pca.
    #[arg(long, default_value = "llf")]
    pipeline: String,
}

#[derive(Args)]
struct ExperimentArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Directory for results.csv, table.txt, table.csv and config.txt (created if missing).
    #[arg(long)]
    out: PathBuf,
    /// Comma-separated pipelines as in `run --pipeline` [default: all ten table cells]
    #[arg(long)]
    pipelines: Option<String>,
    /// Overrides the config's repeat count.
    #[arg(long)]
    repeats: Option<usize>,
    /// Worker threads for repeats. Results do not depend on it.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
}

#[derive(Args)]
struct ReportArgs {
    #[arg(long)]
    results: PathBuf,
    /// text or csv
    #[arg(long, default_value = "text")]
    format: String,
}

#[derive(Args)]
struct VerifyArgs {
    /// gradients, oracles or all
    #[arg(long, default_value = "all")]
    suite: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

enum Failure {
    /// Bad flags or flag values; nothing was run.
    Usage(String),
    Runtime(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Runtime(e)
    }
}

fn usage(e: impl std::fmt::Display) -> Failure {
    Failure::Usage(e.to_string())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let outcome = match cli.command {
        Command::GenData(a) => gen_data(a),
        Command::Run(a) => run(a),
        Command::Experiment(a) => experiment(a),
        Command::Report(a) => report(a),
        Command::Verify(a) => verify(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {}", describe(&e));
            ExitCode::from(2)
        }
    }
}

/// The error chain joined by `: `. Library errors already embed their cause, so a
/// cause whose text the previous message contains is skipped.
fn describe(e: &anyhow::Error) -> String {
    let mut parts: Vec<String> = Vec::new();
    for cause in e.chain() {
        let msg = cause.to_string();
        if !parts.last().is_some_and(|prev| prev.contains(&msg)) {
            parts.push(msg);
        }
    }
    parts.join(": ")
}

fn gen_data(a: GenDataArgs) -> Result<(), Failure> {
    let mut spec = match a.preset.as_deref() {
        None => SyntheticSpec {
            n0: 100,
            n1: 100,
            n_unlabeled: 0,
            p: 20,
            s: 5,
            delta: 1.0,
            rho: 0.0,
            seed: a.seed,
        },
        Some("adni-like") => SyntheticSpec::adni_like(a.seed),
        Some(other) => return Err(usage(format!("unknown preset {other:?} (expected adni-like)"))),
    };
    spec.n0 = a.n0.unwrap_or(spec.n0);
    spec.n1 = a.n1.unwrap_or(spec.n1);
    spec.n_unlabeled = a.n_unlabeled.unwrap_or(spec.n_unlabeled);
    spec.p = a.p.unwrap_or(spec.p);
    spec.s = a.s.unwrap_or(spec.s);
    spec.delta = a.delta.unwrap_or(spec.delta);
    spec.rho = a.rho.unwrap_or(spec.rho);
    spec.validate().map_err(usage)?;
    let ds: Dataset64 = generate_synthetic(&spec).context("generating data")?;
    let ds = append_noise_features(&ds, a.noise, a.seed.wrapping_add(NOISE_SEED_OFFSET)).context("adding noise columns")?;
    save_csv(&ds, &a.out).context("writing data")?;
    let (n0, n1, nu) = ds.class_counts();
    println!(
        "wrote {} ({} rows: {n0} class 0, {n1} class 1, {nu} unlabeled; {} features)",
        a.out.display(),
        ds.n_rows(),
        ds.n_features()
    );
    Ok(())
}

/// Config from file (or defaults) with the flag overrides applied.
fn load_config(a: &DataArgs) -> Result<ExperimentConfig, Failure> {
    let mut cfg = match &a.config {
        Some(path) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
            ExperimentConfig::from_text(&text).map_err(|e| usage(format!("config {}: {e}", path.display())))?
        }
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = a.seed {
        cfg.base_seed = seed;
    }
    if a.no_stratify {
        cfg.stratify = false;
    }
    Ok(cfg)
}

fn load_data(a: &DataArgs) -> Result<Dataset64, Failure> {
    Ok(load_csv(&a.data, &a.label_column).with_context(|| format!("loading data {}", a.data.display()))?)
}

fn run(a: RunArgs) -> Result<(), Failure> {
    let spec: PipelineSpec = a.pipeline.parse().map_err(usage)?;
    let cfg = load_config(&a.data)?;
    cfg.validate().map_err(usage)?;
    let ds = load_data(&a.data)?;
    let split = repeat_split(&ds, &cfg, 0).context("stage split")?;
    let run = run_pipeline(&ds, spec, &split, &ds.unlabeled_indices(), &cfg, cfg.base_seed).with_context(|| format!("running {spec}"))?;
    let h = &run.hyper;
    println!("pipeline   {spec}");
    println!("split      {} train / {} test rows, seed {}", split.train.len(), split.test.len(), cfg.base_seed);
    println!("inputs     {} features into the SVM", run.n_inputs());
    println!("C          {}", h.c);
    if let Some(l) = h.lambda {
        println!("lambda     {l:.6e}");
    }
    if let Some(m) = h.m {
        println!("m          {m}");
    }
    if let Some(r) = h.n_pcs {
        println!("PCs        {r}");
    }
    if let Some(l2) = h.l2 {
        println!("SAE l2     {l2}");
    }
    if let Some(dims) = &h.sae_dims {
        println!("SAE dims   {dims:?}");
    }
    println!("accuracy   {:.2}%", 100.0 * run.accuracy);
    Ok(())
}

fn parse_pipelines(list: Option<&str>) -> Result<Vec<PipelineSpec>, Failure> {
    match list {
        None => Ok(PipelineSpec::table1()),
        Some(text) => text
            .split(',')
            .map(str::trim)
            .filter(|t| !t.is_empty())
            .map(|t| t.parse().map_err(usage))
            .collect(),
    }
}

fn write(path: &Path, text: &str) -> Result<(), Failure> {
    Ok(fs::write(path, text).with_context(|| format!("writing {}", path.display()))?)
}

fn experiment(a: ExperimentArgs) -> Result<(), Failure> {
    let specs = parse_pipelines(a.pipelines.as_deref())?;
    if a.jobs == 0 {
        return Err(usage("--jobs must be at least 1"));
    }
    let mut cfg = load_config(&a.data)?;
    if let Some(r) = a.repeats {
        cfg.repeats = r;
    }
    cfg.validate().map_err(usage)?;
    let ds = load_data(&a.data)?;
    let results = run_experiment_with_jobs(&ds, &specs, &cfg, a.jobs).context("experiment failed")?;
    fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    let text = render_table(&results, TableFormat::Text);
    write(&a.out.join("results.csv"), &results_to_csv(&results))?;
    write(&a.out.join("table.txt"), &text)?;
    write(&a.out.join("table.csv"), &render_table(&results, TableFormat::Csv))?;
    write(&a.out.join("config.txt"), &cfg.to_text())?;
    print!("{text}");
    Ok(())
}

fn report(a: ReportArgs) -> Result<(), Failure> {
    let format = match a.format.as_str() {
        "text" => TableFormat::Text,
        "csv" => TableFormat::Csv,
        other => return Err(usage(format!("unknown format {other:?} (expected text or csv)"))),
    };
    let text = fs::read_to_string(&a.results).with_context(|| format!("reading {}", a.results.display()))?;
    let results = parse_results_csv(&text).with_context(|| format!("parsing {}", a.results.display()))?;
    print!("{}", render_table(&results, format));
    Ok(())
}

fn verify(a: VerifyArgs) -> Result<(), Failure> {
    let suite: Suite = a.suite.parse().map_err(usage)?;
    let checks = run_suite(suite, a.seed).context("verification could not run")?;
    for c in &checks {
        println!("{c}");
    }
    let failed: Vec<&str> = checks.iter().filter(|c| !c.passed()).map(|c| c.name).collect();
    if failed.is_empty() {
        println!("all {} checks passed", checks.len());
        Ok(())
    } else {
        Err(Failure::Runtime(anyhow::anyhow!("failed checks: {}", failed.join(", "))))
    }
}
