use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use chrono::{DateTime, NaiveDate, NaiveDateTime};
use clap::{Args, Parser, Subcommand};
use log::info;

use nutripipe::model::{FeatureSet, Task};
use nutripipe::pipeline::synthetic::{write_synthetic, SyntheticConfig};
use nutripipe::pipeline::{run_until, write_report, PipelineConfig, PipelineError, RunSummary, StageKind};

#[derive(Parser)]
#[command(name = "nutripipe", version, about = "Nutrition estimation and engagement modeling for food posts")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Load and validate the food database.
    IngestDb(RunArgs),
    /// Parse, clean and deduplicate posts.
    IngestPosts(RunArgs),
    /// Calibrate the similarity threshold.
    Calibrate(RunArgs),
    /// Estimate nutrition for every post.
    Estimate(RunArgs),
    /// Build labels and feature rows.
    Featurize(RunArgs),
    /// Split each task and mine discriminator words on the training part.
    MineDiscriminators(RunArgs),
    /// Hyperparameter search per task.
    Tune(RunArgs),
    /// Train the feature-set models.
    Train(RunArgs),
    /// Train if needed and print the ROC-AUC table.
    Evaluate(RunArgs),
    /// Shapley explanations of the trained models.
    Explain(RunArgs),
    /// Rebuild the report of a completed run.
    Report {
        /// Run directory.
        #[arg(long)]
        run_dir: PathBuf,
    },
    /// Run every stage.
    Run(RunArgs),
    /// Write a synthetic corpus and food database.
    GenSynthetic {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 5000)]
        n_posts: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        /// Logit change per standard deviation of estimated kcal.
        #[arg(long)]
        kcal_effect: Option<f64>,
    },
}

#[derive(Args, Clone)]
struct RunArgs {
    /// TOML configuration; command-line flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    posts: Option<PathBuf>,
    #[arg(long)]
    food_db: Option<PathBuf>,
    /// EMBV1 vector file; the hashed fallback embedder is used without it.
    #[arg(long)]
    vectors: Option<PathBuf>,
    /// Run directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Pandemic period as `<start>,<end>` dates or datetimes (UTC).
    #[arg(long)]
    covid_bounds: Option<String>,
    /// Restrict to these tasks (engagement, resonance).
    #[arg(long = "task", value_delimiter = ',')]
    tasks: Vec<Task>,
    /// Restrict to these feature sets, e.g. C+N+E.
    #[arg(long = "features", value_delimiter = ',')]
    features: Vec<FeatureSet>,
    /// Skip the search and use the configured model parameters.
    #[arg(long)]
    no_tune: bool,
    /// Fixed similarity threshold instead of calibration.
    #[arg(long)]
    threshold: Option<f64>,
}

fn parse_time(s: &str) -> anyhow::Result<i64> {
    let s = s.trim();
    if let Ok(t) = DateTime::parse_from_rfc3339(s) {
        return Ok(t.timestamp());
    }
    if let Ok(t) = NaiveDateTime::parse_from_str(s, "%Y-%m-%dT%H:%M:%S") {
        return Ok(t.and_utc().timestamp());
    }
    let d = NaiveDate::parse_from_str(s, "%Y-%m-%d").with_context(|| format!("cannot parse time {s:?}"))?;
    Ok(d.and_hms_opt(0, 0, 0).expect("midnight").and_utc().timestamp())
}

impl RunArgs {
    fn config(&self) -> Result<PipelineConfig, PipelineError> {
        let mut cfg = match &self.config {
            Some(p) => PipelineConfig::load(p)?,
            None => PipelineConfig::default(),
        };
        if let Some(p) = &self.posts {
            cfg.paths.posts = p.clone();
        }
        if let Some(p) = &self.food_db {
            cfg.paths.food_db = p.clone();
        }
        if let Some(p) = &self.vectors {
            cfg.paths.vectors = Some(p.clone());
        }
        if let Some(p) = &self.out {
            cfg.paths.output = p.clone();
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(b) = &self.covid_bounds {
            let (a, z) = b
                .split_once(',')
                .ok_or_else(|| PipelineError::Config(format!("covid bounds {b:?} need the form <start>,<end>")))?;
            cfg.covid.start = parse_time(a).map_err(|e| PipelineError::Config(e.to_string()))?;
            cfg.covid.end = parse_time(z).map_err(|e| PipelineError::Config(e.to_string()))?;
        }
        if !self.tasks.is_empty() {
            cfg.model.tasks = self.tasks.clone();
        }
        if !self.features.is_empty() {
            cfg.model.feature_sets = self.features.clone();
        }
        if self.no_tune {
            cfg.model.tuning.enabled = false;
        }
        if self.threshold.is_some() {
            cfg.calibration.threshold = self.threshold;
        }
        Ok(cfg)
    }
}

fn run_stage(args: &RunArgs, last: StageKind) -> Result<(PipelineConfig, RunSummary), PipelineError> {
    let cfg = args.config()?;
    let summary = run_until(&cfg, last)?;
    info!(
        "{} stages executed, {} reused ({})",
        summary.executed.len(),
        summary.cache_hits.len(),
        summary.dir.display()
    );
    Ok((cfg, summary))
}

fn print_results(cfg: &PipelineConfig, dir: &Path) -> anyhow::Result<()> {
    for task in &cfg.model.tasks {
        let path = dir.join(format!("{task}/results.csv"));
        let text = std::fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
        println!("# {task}");
        print!("{text}");
    }
    Ok(())
}

fn init_threads() -> Result<(), PipelineError> {
    if let Ok(v) = std::env::var("NUTRIPIPE_THREADS") {
        let n: usize = v
            .trim()
            .parse()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| PipelineError::Config(format!("NUTRIPIPE_THREADS must be a positive integer, got {v:?}")))?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| PipelineError::Config(e.to_string()))?;
    }
    Ok(())
}

fn dispatch(cli: Cli) -> anyhow::Result<()> {
    init_threads()?;
    let stage = |a: &RunArgs, k| run_stage(a, k).map(|_| ()).map_err(anyhow::Error::from);
    match &cli.command {
        Command::IngestDb(a) => stage(a, StageKind::FoodDb),
        Command::IngestPosts(a) => stage(a, StageKind::Posts),
        Command::Calibrate(a) => stage(a, StageKind::Calibrate),
        Command::Estimate(a) => stage(a, StageKind::Estimate),
        Command::Featurize(a) => stage(a, StageKind::Features),
        Command::MineDiscriminators(a) => stage(a, StageKind::Mine),
        Command::Tune(a) => stage(a, StageKind::Tune),
        Command::Train(a) => stage(a, StageKind::Train),
        Command::Evaluate(a) => {
            let (cfg, summary) = run_stage(a, StageKind::Train)?;
            print_results(&cfg, &summary.dir)
        }
        Command::Explain(a) => stage(a, StageKind::Explain),
        Command::Run(a) => {
            let (_, summary) = run_stage(a, StageKind::Report)?;
            println!("{}", summary.dir.join("report/report.md").display());
            Ok(())
        }
        Command::Report { run_dir } => {
            let files = write_report(run_dir)?;
            for f in files {
                println!("{}", run_dir.join(f).display());
            }
            Ok(())
        }
        Command::GenSynthetic {
            out,
            n_posts,
            seed,
            kcal_effect,
        } => {
            let mut cfg = SyntheticConfig {
                n_posts: *n_posts,
                seed: *seed,
                ..Default::default()
            };
            if let Some(k) = kcal_effect {
                cfg.kcal_effect = *k;
            }
            let corpus = write_synthetic(out, &cfg)?;
            info!("{} lines, planting threshold {:.2}", corpus.lines.len(), corpus.threshold);
            Ok(())
        }
    }
}

fn exit_code(e: &anyhow::Error) -> u8 {
    match e.downcast_ref::<PipelineError>() {
        Some(p) => p.exit_code() as u8,
        None => 4,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            e.print().ok();
            return ExitCode::from(code);
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
