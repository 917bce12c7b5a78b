//! `hmm-overfit` command-line tool.
//!
//! Subcommands: `simulate`, `bound`, `fit`, `replicate`, `report`. Failures
//! print a JSON object `{"error": <kind>, "message": <text>}` on stderr (and
//! into `error.json` when an output directory is known) and exit with code 1.

use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use hmm_overfit::analysis::fit_report;
use hmm_overfit::data::{dataset_to_json, read_dataset_csv, write_dataset_csv};
use hmm_overfit::experiment::{
    bound_table, preset_simulation, replicate_study, run_experiment, write_bound_table, write_report,
    DataSource, ExperimentConfig, Hyper, Preset, StudyCell, StudyConfig,
};
use hmm_overfit::sampler::Initialization;
use hmm_overfit::tempering::SwapRateCheck;
use hmm_overfit::{McmcTrace, PriorKind};

#[derive(Parser)]
#[command(name = "hmm-overfit", version, about = "Overfitted Gaussian HMMs with asymmetric Dirichlet priors")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a dataset from a preset.
    Simulate {
        #[arg(long)]
        preset: Preset,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// CSV output (`t,y,x`); stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write the dataset as JSON.
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Conservative hyperparameter thresholds over a grid of K and alpha_low.
    Bound {
        #[arg(long, value_delimiter = ',', default_values_t = [2usize, 3, 5, 10])]
        k: Vec<usize>,
        #[arg(long = "alpha-low", value_delimiter = ',', default_values_t = [0.001])]
        alpha_low: Vec<f64>,
        #[arg(long, default_value_t = 1)]
        d: usize,
        #[arg(long, default_value_t = 1)]
        p: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fit one model with prior parallel tempering and write all artifacts.
    Fit(FitArgs),
    /// Replicate study over prior cells.
    Replicate(ReplicateArgs),
    /// Recompute the report of an existing run directory.
    Report {
        #[arg(long)]
        run: PathBuf,
        #[arg(long, default_value_t = 10_000)]
        replicates: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Args, Clone)]
struct ConfigArgs {
    /// JSON experiment config; flags below override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Dataset CSV with header `t,y` (optional `x`).
    #[arg(long, conflicts_with = "preset")]
    data: Option<PathBuf>,
    #[arg(long)]
    preset: Option<Preset>,
    /// Length of the simulated series.
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    data_seed: Option<u64>,
    /// Number of states fitted.
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    prior: Option<PriorKind>,
    /// Number or symbol: n, K, 1, theory.
    #[arg(long = "alpha-bar")]
    alpha_bar: Option<Hyper>,
    /// Number or symbol: 1/n, 1/10n.
    #[arg(long = "alpha-low")]
    alpha_low: Option<Hyper>,
    #[arg(long)]
    chains: Option<usize>,
    #[arg(long)]
    iterations: Option<u64>,
    #[arg(long = "burn-in")]
    burn_in: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Start from rank-sliced allocations instead of uniform labels.
    #[arg(long)]
    quantile_init: bool,
    /// Keep every allocation vector instead of every 10th.
    #[arg(long)]
    full_trace: bool,
    /// Posterior-predictive replicate datasets.
    #[arg(long = "predictive-replicates")]
    predictive_replicates: Option<usize>,
    /// Fail instead of warning when an adjacent swap rate falls below the floor.
    #[arg(long)]
    swap_abort: bool,
}

impl ConfigArgs {
    fn build(&self) -> anyhow::Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(path) => {
                let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
                ExperimentConfig::from_json(&text)?
            }
            None => {
                let data = match (&self.data, self.preset) {
                    (Some(p), _) => DataSource::Csv { path: p.clone() },
                    (None, Some(name)) => DataSource::Preset {
                        name,
                        n: self.n.context("--n is required with --preset")?,
                        seed: self.data_seed,
                    },
                    (None, None) => bail!("give --config, --data or --preset"),
                };
                ExperimentConfig::new(
                    data,
                    self.k.context("--k is required")?,
                    self.prior.unwrap_or(PriorKind::Column),
                    self.alpha_bar.clone().unwrap_or(Hyper::Value(1.0)),
                    self.alpha_low.clone().unwrap_or(Hyper::Symbol("1/n".into())),
                    self.seed.unwrap_or(0),
                )
            }
        };
        if self.config.is_some() {
            if let Some(p) = &self.data {
                cfg.data = DataSource::Csv { path: p.clone() };
            }
            if let Some(k) = self.k {
                cfg.k = k;
            }
            if let Some(p) = self.prior {
                cfg.prior = p;
            }
            if let Some(a) = &self.alpha_bar {
                cfg.alpha_bar = a.clone();
            }
            if let Some(a) = &self.alpha_low {
                cfg.alpha_low = a.clone();
            }
            if let Some(s) = self.seed {
                cfg.seed = s;
            }
            if let DataSource::Preset { n, seed, .. } = &mut cfg.data {
                if let Some(v) = self.n {
                    *n = v;
                }
                if self.data_seed.is_some() {
                    *seed = self.data_seed;
                }
            }
        }
        if let Some(v) = self.chains {
            cfg.chains = v;
        }
        if let Some(v) = self.iterations {
            cfg.iterations = v;
        }
        if let Some(v) = self.burn_in {
            cfg.burn_in = v;
        }
        if let Some(v) = self.predictive_replicates {
            cfg.predictive_replicates = v;
        }
        if self.quantile_init {
            cfg.init = Initialization::Quantile;
        }
        if self.full_trace {
            cfg.thin_states = 1;
        }
        if self.swap_abort {
            cfg.swap_rate_check = SwapRateCheck::Abort;
        }
        Ok(cfg)
    }
}

#[derive(Args)]
struct FitArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// Run directory for the artifacts.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ReplicateArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// Prior cells as `prior:alpha_bar:alpha_low`, comma separated.
    #[arg(long, value_delimiter = ',')]
    cells: Vec<String>,
    #[arg(long, default_value_t = 10)]
    replicates: usize,
    /// Worker threads (0 = all cores).
    #[arg(long, default_value_t = 0)]
    parallelism: usize,
    /// Directory for `table.csv` and `outcomes.csv`.
    #[arg(long)]
    out: PathBuf,
}

fn parse_cell(s: &str) -> anyhow::Result<StudyCell> {
    let parts: Vec<&str> = s.split(':').collect();
    let [prior, bar, low] = parts.as_slice() else {
        bail!("cell '{s}' is not prior:alpha_bar:alpha_low");
    };
    Ok(StudyCell {
        prior: prior.parse()?,
        alpha_bar: bar.parse()?,
        alpha_low: low.parse()?,
    })
}

fn out_writer(path: Option<&Path>) -> anyhow::Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p).with_context(|| format!("creating {}", p.display()))?)),
        None => Box::new(io::stdout().lock()),
    })
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Simulate { preset, n, seed, out, json } => {
            let d = preset_simulation(preset, n, seed)?;
            write_dataset_csv(out_writer(out.as_deref())?, &d.observations, Some(&d.states))?;
            if let Some(p) = json {
                fs::write(p, dataset_to_json(&d)?)?;
            }
        }
        Command::Bound { k, alpha_low, d, p, out } => {
            let rows = bound_table(&k, &alpha_low, d, p)?;
            write_bound_table(&rows, out_writer(out.as_deref())?)?;
        }
        Command::Fit(args) => {
            let mut cfg = args.config.build()?;
            if args.out.is_some() {
                cfg.output = args.out;
            }
            let outcome = run_experiment(&cfg)?;
            println!("{}", serde_json::to_string_pretty(&outcome.report)?);
        }
        Command::Replicate(args) => {
            if args.cells.is_empty() {
                bail!("--cells is required");
            }
            let study = StudyConfig {
                base: args.config.build()?,
                cells: args.cells.iter().map(|c| parse_cell(c)).collect::<anyhow::Result<_>>()?,
                replicates: args.replicates,
                parallelism: args.parallelism,
            };
            let result = replicate_study(&study)?;
            fs::create_dir_all(&args.out)?;
            result.write_table_csv(BufWriter::new(File::create(args.out.join("table.csv"))?))?;
            result.write_outcomes_csv(BufWriter::new(File::create(args.out.join("outcomes.csv"))?))?;
            fs::write(args.out.join("study.json"), serde_json::to_string_pretty(&study)?)?;
            result.write_table_csv(io::stdout().lock())?;
        }
        Command::Report { run, replicates, seed } => {
            let data = read_dataset_csv(File::open(run.join("data.csv"))?)?;
            let alloc = File::open(run.join("allocations.csv")).ok();
            let mut trace = McmcTrace::read_csv(File::open(run.join("trace.csv"))?, alloc)?;
            trace.n = data.y.len();
            let report = fit_report(&data.y, data.truth.as_deref(), &trace, replicates, seed)?;
            write_report(&run, &report)?;
            println!("{}", serde_json::to_string_pretty(&report)?);
        }
    }
    Ok(())
}

fn output_dir(cli: &Cli) -> Option<PathBuf> {
    match &cli.command {
        Command::Fit(a) => a.out.clone(),
        Command::Replicate(a) => Some(a.out.clone()),
        Command::Report { run, .. } => Some(run.clone()),
        _ => None,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let dir = output_dir(&cli);
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let kind = e
                .downcast_ref::<hmm_overfit::Error>()
                .map_or("Error", hmm_overfit::Error::kind);
            let body = serde_json::json!({ "error": kind, "message": format!("{e:#}") });
            eprintln!("{body}");
            if let Some(d) = dir {
                let _ = fs::create_dir_all(&d).and_then(|_| fs::write(d.join("error.json"), body.to_string()));
            }
            ExitCode::FAILURE
        }
    }
}
