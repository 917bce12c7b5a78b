//! Experiment harness behind the command-line tool.
//!
//! A run is described by an [`ExperimentConfig`] (JSON). Hyperparameters may
//! be numbers or symbols resolved against the data: `"n"`, `"K"`, `"1"`,
//! `"1/n"`, `"1/10n"`, and `"theory"` (smallest `alpha_bar` satisfying the
//! conservative bound, plus one).

use std::fmt;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::{density_grid, fit_report, FitReport};
use crate::data::{read_dataset_csv, write_dataset_csv, ObservedData};
use crate::error::{Error, Result};
use crate::model::{simulate_hmm, HmmParams, SimulatedDataset, TransitionMatrix};
use crate::priors::{split_alpha_bound, PriorKind, PriorStructure, TheoremBound};
use crate::rng::derive_seed;
use crate::sampler::{EmissionPrior, Initialization, MhRule};
use crate::tempering::{ppt_run, PptConfig, PptRun, SwapRateCheck};

/// Emission-mean dimension of the Gaussian model.
pub const EMISSION_DIM: usize = 1;

const DATA_SALT: u64 = 0x6461_7461;
const RUN_SALT: u64 = 0x7275_6e73;
const PREDICTIVE_SALT: u64 = 0x7072_6564;

/// Files written to every run directory.
pub const RUN_ARTIFACTS: [&str; 9] = [
    "config.json",
    "data.csv",
    "trace.csv",
    "allocations.csv",
    "swaps.csv",
    "run.json",
    "report.json",
    "estimates.csv",
    "density.csv",
];

/// Simulation settings with known parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    /// Two states, `γ = (−1, 3)`; used for the large-sample emptying study.
    TwoState,
    Sim1,
    Sim2,
    Sim3,
}

impl Preset {
    pub fn params(self) -> HmmParams {
        let (rows, means): (Vec<Vec<f64>>, Vec<f64>) = match self {
            Preset::TwoState => (vec![vec![0.6, 0.4], vec![0.7, 0.3]], vec![-1.0, 3.0]),
            Preset::Sim1 => (
                vec![
                    vec![0.2, 0.3, 0.5],
                    vec![0.5, 0.25, 0.25],
                    vec![0.25, 0.65, 0.1],
                ],
                vec![1.0, 3.0, 6.0],
            ),
            Preset::Sim2 => (
                vec![vec![0.8, 0.1, 0.1], vec![0.2, 0.4, 0.4], vec![0.3, 0.2, 0.5]],
                vec![-5.0, 5.0, 9.0],
            ),
            Preset::Sim3 => (
                vec![
                    vec![0.2, 0.3, 0.1, 0.2, 0.2],
                    vec![0.1, 0.6, 0.1, 0.1, 0.1],
                    vec![0.1, 0.1, 0.6, 0.1, 0.1],
                    vec![0.1, 0.1, 0.1, 0.6, 0.1],
                    vec![0.1, 0.1, 0.1, 0.1, 0.6],
                ],
                vec![-10.0, -5.0, 0.0, 5.0, 10.0],
            ),
        };
        HmmParams::new(TransitionMatrix::from_rows(&rows).expect("preset rows are stochastic"), means)
            .expect("preset sizes agree")
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Preset::TwoState => "twostate",
            Preset::Sim1 => "sim1",
            Preset::Sim2 => "sim2",
            Preset::Sim3 => "sim3",
        })
    }
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace([' ', '-', '_'], "").as_str() {
            "twostate" => Ok(Preset::TwoState),
            "sim1" => Ok(Preset::Sim1),
            "sim2" => Ok(Preset::Sim2),
            "sim3" => Ok(Preset::Sim3),
            other => Err(Error::Parse(format!("unknown preset '{other}'"))),
        }
    }
}

pub fn preset_simulation(preset: Preset, n: usize, seed: u64) -> Result<SimulatedDataset> {
    simulate_hmm(&preset.params(), n, seed)
}

/// A hyperparameter given as a number or a symbol.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Hyper {
    Value(f64),
    Symbol(String),
}

impl FromStr for Hyper {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.parse::<f64>() {
            Ok(v) => Ok(Hyper::Value(v)),
            Err(_) => Ok(Hyper::Symbol(s.to_string())),
        }
    }
}

impl fmt::Display for Hyper {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Hyper::Value(v) => write!(f, "{v}"),
            Hyper::Symbol(s) => f.write_str(s),
        }
    }
}

impl Hyper {
    /// Resolves against the data size `n` and fitted `k`. `"theory"` needs the
    /// already resolved `alpha_low` and `p`.
    pub fn resolve(&self, n: usize, k: usize, alpha_low: Option<f64>, p: usize) -> Result<f64> {
        let v = match self {
            Hyper::Value(v) => *v,
            Hyper::Symbol(s) => match s.trim() {
                "n" => n as f64,
                "K" | "k" => k as f64,
                "1/n" => 1.0 / n as f64,
                "1/10n" => 1.0 / (10.0 * n as f64),
                "1/K" | "1/k" => 1.0 / k as f64,
                "theory" => {
                    let low = alpha_low.ok_or_else(|| {
                        Error::InvalidConfig("\"theory\" is only defined for alpha_bar".into())
                    })?;
                    theory_alpha_bar(k, low, p)?
                }
                other => other
                    .parse()
                    .map_err(|_| Error::InvalidConfig(format!("unknown hyperparameter symbol '{other}'")))?,
            },
        };
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::InvalidConfig(format!("hyperparameter {self} resolves to {v}")));
        }
        Ok(v)
    }
}

/// Smallest `alpha_bar` meeting the conservative bound, plus one.
pub fn theory_alpha_bar(k: usize, alpha_low: f64, p: usize) -> Result<f64> {
    if k < 2 {
        return Err(Error::InvalidConfig("\"theory\" needs K >= 2".into()));
    }
    let b = crate::priors::conservative_alpha_bound(k, EMISSION_DIM, alpha_low, p)?;
    Ok(b.alpha_bar_min + 1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum DataSource {
    /// Simulated from a preset; the seed defaults to one derived from the
    /// master seed.
    Preset {
        name: Preset,
        n: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        seed: Option<u64>,
    },
    /// CSV with header `t,y` and an optional `x` column.
    Csv { path: PathBuf },
}

fn default_chains() -> usize {
    30
}
fn default_iterations() -> u64 {
    20_000
}
fn default_burn_in() -> u64 {
    10_000
}
fn default_p() -> usize {
    1
}
fn default_thin() -> u64 {
    10
}
fn default_replicates() -> usize {
    10_000
}
fn default_var0() -> f64 {
    100.0
}
fn default_floor() -> f64 {
    0.01
}
fn default_bins() -> usize {
    50
}

/// Everything needed to reproduce one fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub data: DataSource,
    /// Number of states fitted.
    pub k: usize,
    pub prior: PriorKind,
    pub alpha_bar: Hyper,
    pub alpha_low: Hyper,
    #[serde(default = "default_p")]
    pub p: usize,
    #[serde(default = "default_chains")]
    pub chains: usize,
    #[serde(default = "default_iterations")]
    pub iterations: u64,
    #[serde(default = "default_burn_in")]
    pub burn_in: u64,
    pub seed: u64,
    #[serde(default)]
    pub init: Initialization,
    /// Keep allocations every this many kept iterations; 1 keeps all.
    #[serde(default = "default_thin")]
    pub thin_states: u64,
    /// Posterior-predictive datasets.
    #[serde(default = "default_replicates")]
    pub predictive_replicates: usize,
    /// Emission prior mean; defaults to the sample mean.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prior_mean: Option<f64>,
    #[serde(default = "default_var0")]
    pub prior_variance: f64,
    #[serde(default = "default_floor")]
    pub swap_rate_floor: f64,
    #[serde(default)]
    pub swap_rate_check: SwapRateCheck,
    #[serde(default = "default_bins")]
    pub density_bins: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
}

impl ExperimentConfig {
    /// Defaults of the illustrative studies: 30 chains, 20,000 iterations,
    /// 10,000 burn-in.
    pub fn new(data: DataSource, k: usize, prior: PriorKind, alpha_bar: Hyper, alpha_low: Hyper, seed: u64) -> Self {
        Self {
            data,
            k,
            prior,
            alpha_bar,
            alpha_low,
            p: default_p(),
            chains: default_chains(),
            iterations: default_iterations(),
            burn_in: default_burn_in(),
            seed,
            init: Initialization::default(),
            thin_states: default_thin(),
            predictive_replicates: default_replicates(),
            prior_mean: None,
            prior_variance: default_var0(),
            swap_rate_floor: default_floor(),
            swap_rate_check: SwapRateCheck::default(),
            density_bins: default_bins(),
            output: None,
        }
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    /// Checks everything that does not need the data.
    pub fn validate(&self) -> Result<()> {
        if self.burn_in >= self.iterations {
            return Err(Error::InvalidConfig(format!(
                "burn-in ({}) must be smaller than iterations ({})",
                self.burn_in, self.iterations
            )));
        }
        if self.k == 0 || self.chains == 0 || self.predictive_replicates == 0 {
            return Err(Error::InvalidConfig("K, chains and replicates must be at least 1".into()));
        }
        if let DataSource::Preset { n: 0, .. } = self.data {
            return Err(Error::InvalidConfig("preset n must be at least 1".into()));
        }
        EmissionPrior::new(0.0, self.prior_variance)?;
        Ok(())
    }

    pub fn data_seed(&self) -> u64 {
        match self.data {
            DataSource::Preset { seed: Some(s), .. } => s,
            _ => derive_seed(self.seed, 0, DATA_SALT),
        }
    }

    pub fn load_data(&self) -> Result<ObservedData> {
        match &self.data {
            DataSource::Preset { name, n, .. } => Ok(preset_simulation(*name, *n, self.data_seed())?.into()),
            DataSource::Csv { path } => read_dataset_csv(File::open(path)?),
        }
    }

    /// Resolves symbols against the loaded data.
    pub fn resolve(&self, data: &ObservedData) -> Result<ResolvedConfig> {
        self.validate()?;
        let n = data.y.len();
        let alpha_low = self.alpha_low.resolve(n, self.k, None, self.p)?;
        let alpha_bar = self.alpha_bar.resolve(n, self.k, Some(alpha_low), self.p)?;
        let structure = PriorStructure::new(self.prior, self.k, alpha_bar, alpha_low, self.p)?;
        let mut ppt = PptConfig::geometric(structure, self.chains, self.iterations, self.burn_in, self.seed)?;
        ppt.init = self.init;
        ppt.thin_states = self.thin_states;
        ppt.swap_rate_floor = self.swap_rate_floor;
        ppt.swap_rate_check = self.swap_rate_check;
        let mean0 = self.prior_mean.unwrap_or_else(|| EmissionPrior::from_data(&data.y).mean0);
        Ok(ResolvedConfig {
            n,
            alpha_bar,
            alpha_low,
            emission_prior: EmissionPrior::new(mean0, self.prior_variance)?,
            ppt,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResolvedConfig {
    pub n: usize,
    pub alpha_bar: f64,
    pub alpha_low: f64,
    pub emission_prior: EmissionPrior,
    pub ppt: PptConfig,
}

/// Run metadata written to `run.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub seed: u64,
    pub data_seed: Option<u64>,
    pub n: usize,
    pub alpha_bar: f64,
    pub alpha_low: f64,
    pub ladder: Vec<f64>,
    pub emission_prior: EmissionPrior,
    pub swap_rates: Vec<f64>,
    /// Adjacent pairs (1-based) that swapped less often than the floor.
    pub low_swap_pairs: Vec<usize>,
    pub q_acceptance: Vec<f64>,
    pub wall_seconds: f64,
    pub mh_rule: MhRule,
}

#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    pub data: ObservedData,
    pub resolved: ResolvedConfig,
    pub run: PptRun,
    pub report: FitReport,
    pub metadata: RunMetadata,
}

/// Load, fit, analyze, and (when `output` is set) write all artifacts.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentOutcome> {
    config.validate()?;
    let data = config.load_data()?;
    let resolved = config.resolve(&data)?;
    let started = Instant::now();
    let run = ppt_run(&data.y, &resolved.ppt, &resolved.emission_prior)?;
    let report = fit_report(
        &data.y,
        data.truth.as_deref(),
        &run.trace,
        config.predictive_replicates,
        derive_seed(config.seed, 0, PREDICTIVE_SALT),
    )?;
    let metadata = RunMetadata {
        seed: config.seed,
        data_seed: matches!(config.data, DataSource::Preset { .. }).then(|| config.data_seed()),
        n: resolved.n,
        alpha_bar: resolved.alpha_bar,
        alpha_low: resolved.alpha_low,
        ladder: resolved.ppt.ladder.rungs.clone(),
        emission_prior: resolved.emission_prior,
        swap_rates: run.ledger.rates(),
        low_swap_pairs: run
            .ledger
            .pairs_below(config.swap_rate_floor)
            .into_iter()
            .map(|j| j + 1)
            .collect(),
        q_acceptance: run.q_acceptance.clone(),
        wall_seconds: started.elapsed().as_secs_f64(),
        mh_rule: resolved.ppt.rule,
    };
    let outcome = ExperimentOutcome {
        data,
        resolved,
        run,
        report,
        metadata,
    };
    if let Some(dir) = &config.output {
        write_artifacts(dir, config, &outcome)?;
    }
    Ok(outcome)
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(dir.join(name))?))
}

fn write_artifacts(dir: &Path, config: &ExperimentConfig, o: &ExperimentOutcome) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut w = create(dir, "config.json")?;
    serde_json::to_writer_pretty(&mut w, &serde_json::json!({ "config": config, "resolved": o.resolved }))?;
    w.flush()?;
    write_dataset_csv(create(dir, "data.csv")?, &o.data.y, o.data.truth.as_deref())?;
    o.run.trace.write_csv(create(dir, "trace.csv")?)?;
    o.run.trace.write_allocations_csv(create(dir, "allocations.csv")?)?;
    o.run.ledger.write_csv(create(dir, "swaps.csv")?)?;
    let mut w = create(dir, "run.json")?;
    serde_json::to_writer_pretty(&mut w, &o.metadata)?;
    w.flush()?;
    write_report(dir, &o.report)?;
    density_grid(&o.run.trace, config.density_bins, config.density_bins)?.write_csv(create(dir, "density.csv")?)?;
    Ok(())
}

/// Writes `report.json` and `estimates.csv`.
pub fn write_report(dir: &Path, report: &FitReport) -> Result<()> {
    let mut w = create(dir, "report.json")?;
    serde_json::to_writer_pretty(&mut w, report)?;
    w.flush()?;
    report.write_estimates_csv(create(dir, "estimates.csv")?)
}

/// Artifacts missing from a run directory.
pub fn missing_artifacts(dir: &Path) -> Vec<&'static str> {
    RUN_ARTIFACTS
        .iter()
        .copied()
        .filter(|f| !dir.join(f).is_file())
        .collect()
}

/// One prior setting of a replicate study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyCell {
    pub prior: PriorKind,
    pub alpha_bar: Hyper,
    pub alpha_low: Hyper,
}

impl StudyCell {
    pub fn label(&self) -> String {
        format!("{}:{}:{}", self.prior, self.alpha_bar, self.alpha_low)
    }
}

/// Replicate datasets crossed with prior cells. Every cell sees the same
/// replicate datasets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyConfig {
    /// Template for every run; its prior fields are replaced per cell.
    pub base: ExperimentConfig,
    pub cells: Vec<StudyCell>,
    pub replicates: usize,
    /// Worker threads; 0 uses all cores.
    #[serde(default)]
    pub parallelism: usize,
}

/// Result of one (cell, replicate) run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateOutcome {
    pub cell: usize,
    pub replicate: usize,
    pub data_seed: u64,
    pub run_seed: u64,
    pub k_hat: Option<usize>,
    pub p_k_hat: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyResult {
    pub cells: Vec<StudyCell>,
    pub k: usize,
    pub outcomes: Vec<ReplicateOutcome>,
}

impl StudyResult {
    /// Share of successful replicates of `cell` with modal K_A equal to `j`.
    pub fn proportion(&self, cell: usize, j: usize) -> f64 {
        let ok: Vec<usize> = self
            .outcomes
            .iter()
            .filter(|o| o.cell == cell)
            .filter_map(|o| o.k_hat)
            .collect();
        if ok.is_empty() {
            return 0.0;
        }
        ok.iter().filter(|&&k| k == j).count() as f64 / ok.len() as f64
    }

    pub fn count(&self, cell: usize, j: usize) -> usize {
        self.outcomes
            .iter()
            .filter(|o| o.cell == cell && o.k_hat == Some(j))
            .count()
    }

    pub fn failures(&self, cell: usize) -> usize {
        self.outcomes
            .iter()
            .filter(|o| o.cell == cell && o.error.is_some())
            .count()
    }

    /// `cell,prior,alpha_bar,alpha_low,replicates,failures,k_a_1,…,k_a_K`.
    pub fn write_table_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header: Vec<String> = ["cell", "prior", "alpha_bar", "alpha_low", "replicates", "failures"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        header.extend((1..=self.k).map(|j| format!("k_a_{j}")));
        w.write_record(&header)?;
        for (c, cell) in self.cells.iter().enumerate() {
            let reps = self.outcomes.iter().filter(|o| o.cell == c).count();
            let mut row = vec![
                (c + 1).to_string(),
                cell.prior.to_string(),
                cell.alpha_bar.to_string(),
                cell.alpha_low.to_string(),
                reps.to_string(),
                self.failures(c).to_string(),
            ];
            row.extend((1..=self.k).map(|j| self.proportion(c, j).to_string()));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    /// `cell,replicate,data_seed,run_seed,k_hat,p_k_hat,error`.
    pub fn write_outcomes_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["cell", "replicate", "data_seed", "run_seed", "k_hat", "p_k_hat", "error"])?;
        for o in &self.outcomes {
            w.write_record([
                (o.cell + 1).to_string(),
                (o.replicate + 1).to_string(),
                o.data_seed.to_string(),
                o.run_seed.to_string(),
                o.k_hat.map(|k| k.to_string()).unwrap_or_default(),
                o.p_k_hat.map(|p| p.to_string()).unwrap_or_default(),
                o.error.clone().unwrap_or_default(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Runs every (cell, replicate) pair. Failures are recorded, not fatal.
pub fn replicate_study(study: &StudyConfig) -> Result<StudyResult> {
    if study.replicates == 0 || study.cells.is_empty() {
        return Err(Error::InvalidConfig("a study needs at least one replicate and one cell".into()));
    }
    study.base.validate()?;
    let jobs: Vec<(usize, usize)> = (0..study.cells.len())
        .flat_map(|c| (0..study.replicates).map(move |r| (c, r)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(study.parallelism)
        .build()
        .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?;
    let outcomes = pool.install(|| {
        jobs.par_iter()
            .map(|&(c, r)| run_replicate(study, c, r))
            .collect::<Vec<_>>()
    });
    Ok(StudyResult {
        cells: study.cells.clone(),
        k: study.base.k,
        outcomes,
    })
}

fn run_replicate(study: &StudyConfig, c: usize, r: usize) -> ReplicateOutcome {
    let data_seed = derive_seed(study.base.seed, r as u64, DATA_SALT);
    let run_seed = derive_seed(study.base.seed, r as u64, RUN_SALT);
    let cell = &study.cells[c];
    let mut cfg = study.base.clone();
    cfg.prior = cell.prior;
    cfg.alpha_bar = cell.alpha_bar.clone();
    cfg.alpha_low = cell.alpha_low.clone();
    cfg.seed = run_seed;
    cfg.output = None;
    if let DataSource::Preset { seed, .. } = &mut cfg.data {
        *seed = Some(data_seed);
    }
    let result = modal_count(&cfg);
    let (k_hat, p_k_hat, error) = match result {
        Ok((k, p)) => (Some(k), Some(p), None),
        Err(e) => (None, None, Some(format!("{}: {e}", e.kind()))),
    };
    ReplicateOutcome {
        cell: c,
        replicate: r,
        data_seed,
        run_seed,
        k_hat,
        p_k_hat,
        error,
    }
}

/// Modal K_A of one fit; the study only needs the occupancy profile.
fn modal_count(cfg: &ExperimentConfig) -> Result<(usize, f64)> {
    let data = cfg.load_data()?;
    let resolved = cfg.resolve(&data)?;
    let run = ppt_run(&data.y, &resolved.ppt, &resolved.emission_prior)?;
    let profile = crate::analysis::occupancy_profile(&run.trace)?;
    Ok((profile.mode, profile.proportion(profile.mode)))
}

/// Conservative bounds over a grid; infeasible cells are kept with
/// `feasible = false`.
pub fn bound_table(ks: &[usize], alpha_lows: &[f64], d: usize, p: usize) -> Result<Vec<TheoremBound>> {
    let mut rows = Vec::with_capacity(ks.len() * alpha_lows.len());
    for &k in ks {
        for &a in alpha_lows {
            let mut b = split_alpha_bound(k, k - 1, 1, d, a, p)?;
            b.k_star = None;
            rows.push(b);
        }
    }
    Ok(rows)
}

/// `K,d,alpha_low,p,threshold,alpha_bar_min,feasible`.
pub fn write_bound_table<W: Write>(rows: &[TheoremBound], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["K", "d", "alpha_low", "p", "threshold", "alpha_bar_min", "feasible"])?;
    for b in rows {
        w.write_record([
            b.k.to_string(),
            b.d.to_string(),
            b.alpha_low.to_string(),
            b.p.to_string(),
            b.threshold.to_string(),
            b.alpha_bar_min.to_string(),
            b.feasible.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
