//! Bayesian estimation of overfitted Gaussian hidden Markov models.
//!
//! Transition rows get asymmetric Dirichlet priors that push the posterior
//! to empty surplus states. Inference is a blocked Gibbs sampler with prior
//! parallel tempering. The crate also provides hyperparameter bound
//! calculators and post-processing for the fitted traces.

pub mod analysis;
pub mod data;
pub mod error;
pub mod experiment;
pub mod model;
pub mod priors;
pub mod rng;
pub mod sampler;
pub mod tempering;
pub mod trace;

pub use error::{Error, Result};
pub use model::{HmmParams, SimulatedDataset, StationaryDistribution, TransitionMatrix};
pub use priors::{MixtureComponent, PriorKind, PriorStructure, TemperLadder};
pub use sampler::{ChainState, EmissionPrior, GibbsSampler, Initialization, MhRule, RunSettings};
pub use trace::{McmcTrace, TraceRecord};
pub use tempering::{ppt_run, PptConfig, PptRun, SwapLedger, SwapRateCheck};
pub use analysis::{fit_report, FitReport, OccupancyProfile};
pub use experiment::{run_experiment, ExperimentConfig, Preset};
