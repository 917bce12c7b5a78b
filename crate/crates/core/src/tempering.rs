//! Prior parallel tempering.
//!
//! `J` chains share the data and likelihood but differ in the smaller Dirichlet
//! hyperparameter, from `alpha_bar` (flat, mixes well) down to the target
//! `alpha_low`. After every round of Gibbs sweeps, non-overlapping adjacent
//! pairs propose to exchange configurations with a prior-density ratio.
//!
//! Slot `j` (0-based, the target is slot `J − 1`) draws from stream `j` of the
//! master seed; swap decisions draw from [`SWAP_STREAM`]. A one-chain run
//! therefore reproduces [`gibbs_run`](crate::sampler::gibbs_run) exactly.

use std::io::Write;

use log::warn;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::TransitionMatrix;
use crate::priors::{
    build_row_hyperparameters, hyperparameter_ln_density, tempering_ladder, PriorHyperparameters,
    PriorStructure, TemperLadder,
};
use crate::rng::{stream_rng, StreamRng, SWAP_STREAM};
use crate::sampler::{ChainState, EmissionPrior, GibbsSampler, Initialization, MhRule, RunSettings};
use crate::trace::McmcTrace;

/// What to do when an adjacent pair swaps too rarely after burn-in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SwapRateCheck {
    /// Fail the run with [`Error::SwapRateTooLow`].
    Abort,
    /// Log a warning and return the run.
    #[default]
    Warn,
    Off,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PptConfig {
    pub j_chains: usize,
    pub iterations: u64,
    pub burn_in: u64,
    pub ladder: TemperLadder,
    /// Structure of the target chain; rung `j` replaces its `alpha_low`.
    pub base_structure: PriorStructure,
    pub seed: u64,
    #[serde(default)]
    pub init: Initialization,
    /// Keep target allocations every this many kept iterations (0 = never).
    #[serde(default = "default_thin")]
    pub thin_states: u64,
    #[serde(default = "default_floor")]
    pub swap_rate_floor: f64,
    #[serde(default)]
    pub swap_rate_check: SwapRateCheck,
    #[serde(default)]
    pub rule: MhRule,
}

fn default_thin() -> u64 {
    10
}

fn default_floor() -> f64 {
    0.01
}

impl PptConfig {
    /// Geometric ladder from `base.alpha_bar` down to `base.alpha_low`.
    pub fn geometric(
        base: PriorStructure,
        j_chains: usize,
        iterations: u64,
        burn_in: u64,
        seed: u64,
    ) -> Result<Self> {
        let ladder = tempering_ladder(base.alpha_bar, base.alpha_low, j_chains)?;
        Self::with_ladder(base, ladder, iterations, burn_in, seed)
    }

    pub fn with_ladder(
        base: PriorStructure,
        ladder: TemperLadder,
        iterations: u64,
        burn_in: u64,
        seed: u64,
    ) -> Result<Self> {
        let cfg = Self {
            j_chains: ladder.len(),
            iterations,
            burn_in,
            ladder,
            base_structure: base,
            seed,
            init: Initialization::default(),
            thin_states: default_thin(),
            swap_rate_floor: default_floor(),
            swap_rate_check: SwapRateCheck::default(),
            rule: MhRule::default(),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.run_settings().validate()?;
        if self.j_chains == 0 || self.ladder.len() != self.j_chains {
            return Err(Error::InvalidConfig(format!(
                "ladder has {} rungs for {} chains",
                self.ladder.len(),
                self.j_chains
            )));
        }
        if self.ladder.target() != self.base_structure.alpha_low {
            return Err(Error::InvalidConfig(format!(
                "last rung {} differs from the target alpha_low {}",
                self.ladder.target(),
                self.base_structure.alpha_low
            )));
        }
        if self.ladder.alpha_bar != self.base_structure.alpha_bar {
            return Err(Error::InvalidConfig("ladder and prior disagree on alpha_bar".into()));
        }
        Ok(())
    }

    /// Prior structure of every slot, target last.
    pub fn structures(&self) -> Result<Vec<PriorStructure>> {
        self.ladder
            .rungs
            .iter()
            .map(|&a| self.base_structure.with_alpha_low(a))
            .collect()
    }

    fn run_settings(&self) -> RunSettings {
        RunSettings {
            iterations: self.iterations,
            burn_in: self.burn_in,
            seed: self.seed,
            init: self.init,
            thin_states: self.thin_states,
            rule: self.rule,
        }
    }
}

/// Swap attempts and acceptances per adjacent pair `(j, j+1)`.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SwapLedger {
    pub attempts: Vec<u64>,
    pub accepts: Vec<u64>,
}

impl SwapLedger {
    pub fn new(chains: usize) -> Self {
        let pairs = chains.saturating_sub(1);
        Self {
            attempts: vec![0; pairs],
            accepts: vec![0; pairs],
        }
    }

    pub fn pairs(&self) -> usize {
        self.attempts.len()
    }

    /// Acceptance rate per pair; `NaN` for pairs never attempted.
    pub fn rates(&self) -> Vec<f64> {
        self.attempts
            .iter()
            .zip(&self.accepts)
            .map(|(&t, &a)| if t == 0 { f64::NAN } else { a as f64 / t as f64 })
            .collect()
    }

    pub fn reset(&mut self) {
        self.attempts.fill(0);
        self.accepts.fill(0);
    }

    /// `pair,attempts,accepts,rate`, pair `j` meaning rungs `j` and `j+1`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["pair", "attempts", "accepts", "rate"])?;
        for (j, rate) in self.rates().into_iter().enumerate() {
            w.write_record([
                (j + 1).to_string(),
                self.attempts[j].to_string(),
                self.accepts[j].to_string(),
                rate.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Pairs (0-based) whose rate is below `floor`.
    pub fn pairs_below(&self, floor: f64) -> Vec<usize> {
        self.rates()
            .into_iter()
            .enumerate()
            .filter(|(_, r)| *r < floor)
            .map(|(j, _)| j)
            .collect()
    }

    /// Pair with the lowest rate, if that rate is below `floor`.
    pub fn lowest_below(&self, floor: f64) -> Option<(usize, f64)> {
        self.rates()
            .into_iter()
            .enumerate()
            .filter(|(_, r)| *r < floor)
            .min_by(|a, b| a.1.total_cmp(&b.1))
    }
}

/// `log A` for exchanging `q_i` and `q_j` between rungs `i` and `j`.
pub fn swap_log_acceptance(
    q_i: &TransitionMatrix,
    q_j: &TransitionMatrix,
    structure_i: &PriorStructure,
    structure_j: &PriorStructure,
) -> Result<f64> {
    if q_i.k() != q_j.k() || structure_i.k != structure_j.k {
        return Err(Error::DimensionMismatch("swap between chains of different K".into()));
    }
    let hi = build_row_hyperparameters(structure_i);
    let hj = build_row_hyperparameters(structure_j);
    swap_log_ratio(q_i, q_j, &hi, &hj)
}

fn swap_log_ratio(
    q_i: &TransitionMatrix,
    q_j: &TransitionMatrix,
    hi: &PriorHyperparameters,
    hj: &PriorHyperparameters,
) -> Result<f64> {
    if hi == hj {
        return Ok(0.0);
    }
    // Grouped so that exchanging i and j gives bitwise the same value.
    let cross = hyperparameter_ln_density(q_i, hj)? + hyperparameter_ln_density(q_j, hi)?;
    let own = hyperparameter_ln_density(q_i, hi)? + hyperparameter_ln_density(q_j, hj)?;
    Ok(cross - own)
}

/// One round of swap proposals over slots sorted by rung.
///
/// Picks a parity at random, then proposes pairs `(z, z+1)`, `(z+2, z+3)`, …
/// Accepted pairs exchange `(x, γ, Q)`; slots keep their rungs.
pub fn tempering_sweep<R: Rng + ?Sized>(
    chains: &mut [ChainState],
    structures: &[PriorStructure],
    ledger: &mut SwapLedger,
    rng: &mut R,
) -> Result<()> {
    if structures.len() != chains.len() || ledger.pairs() + 1 != chains.len().max(1) {
        return Err(Error::DimensionMismatch("chains, rungs and ledger disagree".into()));
    }
    let hyper: Vec<PriorHyperparameters> = structures.iter().map(build_row_hyperparameters).collect();
    swap_round(chains, &hyper, ledger, rng)
}

fn swap_round<R: Rng + ?Sized>(
    chains: &mut [ChainState],
    hyper: &[PriorHyperparameters],
    ledger: &mut SwapLedger,
    rng: &mut R,
) -> Result<()> {
    let j = chains.len();
    if j < 2 {
        return Ok(());
    }
    let start = rng.random_range(0..2usize);
    for z in (start..j - 1).step_by(2) {
        let log_a = swap_log_ratio(
            &chains[z].transition,
            &chains[z + 1].transition,
            &hyper[z],
            &hyper[z + 1],
        )?;
        let u: f64 = rng.random();
        ledger.attempts[z] += 1;
        if u.ln() < log_a {
            ledger.accepts[z] += 1;
            let (lo, hi) = chains.split_at_mut(z + 1);
            lo[z].swap_configuration(&mut hi[0]);
        }
    }
    Ok(())
}

/// Output of a tempered run.
#[derive(Debug, Clone, PartialEq)]
pub struct PptRun {
    /// Target-chain draws after burn-in.
    pub trace: McmcTrace,
    /// Swap accounting after burn-in.
    pub ledger: SwapLedger,
    /// Acceptance rate of the `Q` update per slot, over the whole run.
    pub q_acceptance: Vec<f64>,
}

struct Worker<'a> {
    sampler: GibbsSampler<'a>,
    rng: StreamRng,
}

/// Gibbs sweeps on all slots in parallel, then one swap round, `M` times.
pub fn ppt_run(y: &[f64], config: &PptConfig, prior: &EmissionPrior) -> Result<PptRun> {
    config.validate()?;
    let structures = config.structures()?;
    let hyper: Vec<PriorHyperparameters> = structures.iter().map(build_row_hyperparameters).collect();
    let k = config.base_structure.k;
    let settings = config.run_settings();

    let mut chains = Vec::with_capacity(structures.len());
    let mut workers = Vec::with_capacity(structures.len());
    for (j, s) in structures.iter().enumerate() {
        let mut rng = stream_rng(config.seed, j as u64);
        chains.push(ChainState::initialize(y, k, config.init, prior, j, &mut rng)?);
        workers.push(Worker {
            sampler: GibbsSampler::new(y, *s, *prior).with_rule(config.rule),
            rng,
        });
    }
    let mut swap_rng = stream_rng(config.seed, SWAP_STREAM);
    let mut ledger = SwapLedger::new(config.j_chains);
    let mut trace = McmcTrace::new(k, y.len());
    trace.records.reserve((config.iterations - config.burn_in) as usize);

    for m in 1..=config.iterations {
        if chains.len() == 1 {
            let w = &mut workers[0];
            w.sampler.sweep(&mut chains[0], &mut w.rng)?;
        } else {
            chains
                .par_iter_mut()
                .zip(workers.par_iter_mut())
                .map(|(c, w)| w.sampler.sweep(c, &mut w.rng))
                .collect::<Result<()>>()?;
            swap_round(&mut chains, &hyper, &mut ledger, &mut swap_rng)?;
        }
        if m == config.burn_in {
            ledger.reset();
        }
        if m > config.burn_in {
            let target = chains.last().expect("at least one chain");
            trace.records.push(target.record(settings.keeps_states(m)));
        }
    }

    if config.swap_rate_check != SwapRateCheck::Off {
        if let Some((pair, rate)) = ledger.lowest_below(config.swap_rate_floor) {
            let err = Error::SwapRateTooLow {
                pair: pair + 1,
                rate,
                floor: config.swap_rate_floor,
            };
            match config.swap_rate_check {
                SwapRateCheck::Abort => return Err(err),
                _ => warn!("{err}"),
            }
        }
    }
    Ok(PptRun {
        trace,
        ledger,
        q_acceptance: workers.iter().map(|w| w.sampler.acceptance_rate()).collect(),
    })
}
