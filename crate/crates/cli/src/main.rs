use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use cab_core::environments::{load_dataset, DatasetEnv, Environment};
use cab_core::harness::{
    format_table, read_summary, run_experiment, sweep, write_outputs, EnvironmentConfig, ExperimentConfig,
    ExperimentSummary, PolicyConfig, SummaryRow, SweepParam,
};
use cab_core::Variant;

/// Context-attentive bandit simulator.
#[derive(Parser)]
#[command(name = "cab", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every policy and budget of a config file.
    Run {
        #[command(flatten)]
        exp: ExperimentArgs,
    },
    /// Run a config once per value of one parameter.
    Sweep {
        #[command(flatten)]
        exp: ExperimentArgs,
        /// U, T' (CATS-fix cutoff fraction) or alpha.
        #[arg(long)]
        param: SweepParam,
        /// Comma-separated values, e.g. 0.2,0.4,0.6.
        #[arg(long, value_delimiter = ',', num_args = 1..)]
        values: Vec<f64>,
    },
    /// Run policies on a generated synthetic environment.
    Synth(SynthArgs),
    /// Normalize a dataset CSV and draw its known columns.
    Convert(ConvertArgs),
    /// Print the summary table of a finished run.
    Report {
        #[arg(long = "in", value_name = "DIR")]
        input: PathBuf,
    },
}

#[derive(Args)]
struct ExperimentArgs {
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config's base seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the config's output directory.
    #[arg(long, env = "CAB_OUT_DIR")]
    out: Option<PathBuf>,
    /// Worker threads; 0 uses every core.
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Args)]
struct SynthArgs {
    /// Number of features N.
    #[arg(long)]
    n: usize,
    /// Number of arms K.
    #[arg(long)]
    k: usize,
    /// Known features V.
    #[arg(long)]
    v: usize,
    /// Budget U.
    #[arg(long)]
    u: usize,
    #[arg(long, default_value_t = 0.1)]
    noise: f64,
    /// Horizon T.
    #[arg(long)]
    t: usize,
    #[arg(long, default_value_t = 1)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 0.25)]
    alpha: f64,
    /// Comma-separated policy variants.
    #[arg(
        long,
        value_delimiter = ',',
        default_value = "cats,tsrc,random-fix,random-ei,known-only,oracle-full"
    )]
    policies: Vec<Variant>,
    #[arg(long, env = "CAB_OUT_DIR", default_value = "cab-out")]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    jobs: usize,
}

#[derive(Args)]
struct ConvertArgs {
    #[arg(long)]
    csv: PathBuf,
    /// Name of the label column.
    #[arg(long)]
    label: String,
    #[arg(long, default_value_t = 0.1)]
    known_frac: f64,
    /// Seed for drawing the known columns.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, env = "CAB_OUT_DIR", default_value = "cab-out")]
    out: PathBuf,
}

impl ExperimentArgs {
    fn load(&self) -> Result<ExperimentConfig> {
        if !self.config.is_file() {
            bail!("config file {} not found", self.config.display());
        }
        let mut config = ExperimentConfig::from_file(&self.config)?;
        if let Some(seed) = self.seed {
            config.seed = seed;
        }
        if let Some(out) = &self.out {
            config.out_dir = out.clone();
        }
        if let Some(jobs) = self.jobs {
            config.jobs = jobs;
        }
        Ok(config)
    }
}

fn finish(config: &ExperimentConfig, summary: &ExperimentSummary) -> Result<()> {
    write_outputs(&config.out_dir, config, summary)
        .with_context(|| format!("cannot write results to {}", config.out_dir.display()))?;
    if summary.rejected_rows > 0 {
        eprintln!("rejected {} dataset rows", summary.rejected_rows);
    }
    for cell in &summary.cells {
        for (trial, err) in &cell.failures {
            eprintln!("{} U={} trial {trial} failed: {err}", cell.label, cell.budget_label);
        }
    }
    let rows: Vec<SummaryRow> = summary.cells.iter().map(SummaryRow::from).collect();
    print!("{}", format_table(&rows));
    if summary.cells.iter().any(|c| !c.is_complete()) {
        bail!("some trials failed; see runlog.txt");
    }
    Ok(())
}

fn synth_config(args: &SynthArgs) -> ExperimentConfig {
    let policies = args
        .policies
        .iter()
        .map(|&variant| {
            let mut p = PolicyConfig::new(variant);
            p.alpha = Some(args.alpha);
            p.budgets = match variant {
                Variant::OracleFull | Variant::KnownOnly => vec![0],
                _ => vec![args.u],
            };
            if variant == Variant::CatsFix {
                p.stop_fraction = Some(0.5);
            }
            p
        })
        .collect();
    ExperimentConfig {
        horizon: args.t,
        trials: args.trials,
        seed: args.seed,
        out_dir: args.out.clone(),
        mean_scale: Default::default(),
        factor_update: Default::default(),
        jobs: args.jobs,
        environment: EnvironmentConfig::Synthetic {
            n_features: args.n,
            n_arms: args.k,
            n_known: args.v,
            noise: args.noise,
        },
        policies,
    }
}

fn convert(args: &ConvertArgs) -> Result<()> {
    let data = load_dataset(&args.csv, &args.label)?;
    let rows = data.len();
    let data = Arc::new(data);
    let env = DatasetEnv::new(data.clone(), args.known_frac, None, rows, args.seed)?;
    let known: Vec<&str> = env
        .known_set()
        .iter()
        .map(|&i| data.feature_names[i].as_str())
        .collect();

    std::fs::create_dir_all(&args.out)?;
    let normalized = args.out.join("normalized.csv");
    write_atomic(&normalized, |tmp| Ok(data.write_csv(tmp)?))?;
    let mut listing = known.join("\n");
    listing.push('\n');
    write_atomic(&args.out.join("known.txt"), |tmp| Ok(std::fs::write(tmp, &listing)?))?;

    if data.rejected_rows > 0 {
        eprintln!("rejected {} rows with non-numeric cells", data.rejected_rows);
    }
    println!(
        "{} rows, {} features, {} classes, {} known",
        rows,
        data.n_features(),
        data.n_classes(),
        known.len()
    );
    Ok(())
}

fn write_atomic(path: &Path, write: impl FnOnce(&Path) -> Result<()>) -> Result<()> {
    let tmp = path.with_extension("partial");
    if let Err(e) = write(&tmp) {
        let _ = std::fs::remove_file(&tmp);
        return Err(e);
    }
    std::fs::rename(&tmp, path)?;
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run { exp } => {
            let config = exp.load()?;
            let summary = run_experiment(&config)?;
            finish(&config, &summary)
        }
        Command::Sweep { exp, param, values } => {
            let config = exp.load()?;
            let summary = sweep(&config, param, &values)?;
            finish(&config, &summary)
        }
        Command::Synth(args) => {
            let config = synth_config(&args);
            let summary = run_experiment(&config)?;
            finish(&config, &summary)
        }
        Command::Convert(args) => convert(&args),
        Command::Report { input } => {
            let rows = read_summary(&input)?;
            print!("{}", format_table(&rows));
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", format!("{e:#}").replace('\n', " "));
            ExitCode::FAILURE
        }
    }
}
