//! Blocked Gibbs sampler on the augmented space `(x_{1:n}, γ, Q)`.
//!
//! One sweep updates, in order:
//!
//! 1. `Q`: rows drawn from their Dirichlet full conditionals given the
//!    transition counts, then accepted with a Metropolis–Hastings step that
//!    corrects for the stationary initial distribution `μ_Q(x_1)`;
//! 2. `γ`: conjugate Normal update per state (empty states draw from the
//!    prior);
//! 3. `x_{1:n}`: forward filtering, backward sampling.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::model::{stationary_distribution, TransitionMatrix};
use crate::priors::{build_row_hyperparameters, MixtureComponent, PriorHyperparameters, PriorStructure, RowHyperparameters};
use crate::rng::{ln_dirichlet_draw, sample_weighted, stream_rng};
use crate::trace::{McmcTrace, TraceRecord};

/// Lower clamp on emission log-densities (relative to the per-step maximum)
/// before exponentiation.
pub const EMISSION_LOG_FLOOR: f64 = -700.0;

/// Transition probabilities below this are treated as zero by FFBS, which
/// keeps the recursions clear of subnormal arithmetic.
const TRANSITION_FLUSH: f64 = 1e-250;

/// Normal prior `N(mean0, var0)` on every emission mean.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmissionPrior {
    pub mean0: f64,
    pub var0: f64,
}

impl EmissionPrior {
    pub fn new(mean0: f64, var0: f64) -> Result<Self> {
        if !(var0 > 0.0) {
            return Err(Error::InvalidConfig(format!("prior variance {var0} must be positive")));
        }
        Ok(Self { mean0, var0 })
    }

    /// Centered on the sample mean with variance 100.
    pub fn from_data(y: &[f64]) -> Self {
        let mean0 = y.iter().sum::<f64>() / y.len().max(1) as f64;
        Self { mean0, var0: 100.0 }
    }
}

/// Transition counts `n_ij = #{t : x_t = i, x_{t+1} = j}`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TransitionCounts {
    pub k: usize,
    pub counts: Vec<u64>,
}

impl TransitionCounts {
    pub fn get(&self, i: usize, j: usize) -> u64 {
        self.counts[i * self.k + j]
    }

    pub fn row(&self, i: usize) -> &[u64] {
        &self.counts[i * self.k..(i + 1) * self.k]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }
}

pub fn transition_counts(states: &[usize], k: usize) -> Result<TransitionCounts> {
    if let Some(&s) = states.iter().find(|&&s| s >= k) {
        return Err(Error::LabelOutOfRange { label: s + 1, k });
    }
    let mut counts = vec![0u64; k * k];
    for w in states.windows(2) {
        counts[w[0] * k + w[1]] += 1;
    }
    Ok(TransitionCounts { k, counts })
}

/// A transition matrix drawn from its full conditional.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionDraw {
    pub matrix: TransitionMatrix,
    /// Mixture component used, for the mixture prior.
    pub component: Option<MixtureComponent>,
}

/// Log Dirichlet-multinomial evidence of all rows' counts under `alpha`,
/// without the multinomial coefficient (it cancels between components).
fn ln_row_evidence(counts: &TransitionCounts, alpha: &RowHyperparameters) -> f64 {
    let k = counts.k;
    let mut total = 0.0;
    for i in 0..k {
        let a = alpha.row(i);
        let n = counts.row(i);
        let (sa, sn): (f64, f64) = (a.iter().sum(), n.iter().sum::<u64>() as f64);
        total += ln_gamma(sa) - ln_gamma(sa + sn);
        for j in 0..k {
            if n[j] > 0 {
                total += ln_gamma(a[j] + n[j] as f64) - ln_gamma(a[j]);
            }
        }
    }
    total
}

fn draw_rows<R: Rng + ?Sized>(counts: &TransitionCounts, alpha: &RowHyperparameters, rng: &mut R) -> TransitionMatrix {
    let k = counts.k;
    let mut log_probs = vec![0.0; k * k];
    let mut post = vec![0.0; k];
    for i in 0..k {
        for j in 0..k {
            post[j] = alpha.get(i, j) + counts.get(i, j) as f64;
        }
        ln_dirichlet_draw(&post, rng, &mut log_probs[i * k..(i + 1) * k]);
    }
    TransitionMatrix::from_log_probs(k, log_probs).expect("Dirichlet rows are normalized")
}

/// Draws each row from `Dirichlet(α_i· + n_i·)`.
///
/// For the mixture prior the matrix-level component is drawn first, with
/// probability proportional to its Dirichlet-multinomial evidence.
pub fn sample_transition_rows<R: Rng + ?Sized>(
    counts: &TransitionCounts,
    structure: &PriorStructure,
    rng: &mut R,
) -> Result<TransitionDraw> {
    if counts.k != structure.k {
        return Err(Error::DimensionMismatch(format!(
            "counts are {}×{0}, prior has K = {}",
            counts.k, structure.k
        )));
    }
    Ok(draw_with_hyperparameters(counts, &build_row_hyperparameters(structure), rng))
}

fn draw_with_hyperparameters<R: Rng + ?Sized>(
    counts: &TransitionCounts,
    hyper: &PriorHyperparameters,
    rng: &mut R,
) -> TransitionDraw {
    match hyper {
        PriorHyperparameters::Single(alpha) => TransitionDraw {
            matrix: draw_rows(counts, alpha, rng),
            component: None,
        },
        PriorHyperparameters::Mixture { column, diagonal } => {
            let lc = ln_row_evidence(counts, column);
            let ld = ln_row_evidence(counts, diagonal);
            // P(column) = 1 / (1 + exp(ld − lc)).
            let p_column = 1.0 / (1.0 + (ld - lc).exp());
            let (component, alpha) = if rng.random::<f64>() < p_column {
                (MixtureComponent::Column, column)
            } else {
                (MixtureComponent::Diagonal, diagonal)
            };
            TransitionDraw {
                matrix: draw_rows(counts, alpha, rng),
                component: Some(component),
            }
        }
    }
}

/// Direction of the Metropolis–Hastings ratio for the `Q` update.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MhRule {
    /// `min(1, μ_new(x₁)/μ_old(x₁))`, the valid correction.
    #[default]
    NewOverOld,
    /// `min(1, μ_old(x₁)/μ_new(x₁))`. Does not leave the posterior invariant;
    /// kept only so the difference can be demonstrated.
    OldOverNew,
}

fn mh_accept<R: Rng + ?Sized>(mu_old: f64, mu_new: f64, rule: MhRule, rng: &mut R) -> bool {
    let u = rng.random::<f64>();
    let (num, den) = match rule {
        MhRule::NewOverOld => (mu_new, mu_old),
        MhRule::OldOverNew => (mu_old, mu_new),
    };
    // u < num/den without dividing; a zero denominator always accepts.
    u * den < num || den == 0.0
}

/// Accepts `q_new` with probability `min(1, μ_{q_new}(x₁)/μ_{q_old}(x₁))`.
///
/// Returns `true` when `q_new` is accepted.
pub fn mh_accept_transition<R: Rng + ?Sized>(
    q_old: &TransitionMatrix,
    q_new: &TransitionMatrix,
    x1: usize,
    rng: &mut R,
) -> Result<bool> {
    if x1 >= q_old.k() || q_old.k() != q_new.k() {
        return Err(Error::LabelOutOfRange { label: x1 + 1, k: q_old.k() });
    }
    let mu_old = stationary_distribution(q_old)?.probs[x1];
    let mu_new = stationary_distribution(q_new)?.probs[x1];
    Ok(mh_accept(mu_old, mu_new, MhRule::NewOverOld, rng))
}

/// Conjugate update of the emission means given allocations.
///
/// State `k` with `n_k` points summing to `s_k` draws from
/// `N((τ₀ s_k + γ₀)/(n_k τ₀ + 1), τ₀/(n_k τ₀ + 1))`.
pub fn sample_emission_means<R: Rng + ?Sized>(
    y: &[f64],
    states: &[usize],
    k: usize,
    prior: &EmissionPrior,
    rng: &mut R,
) -> Result<Vec<f64>> {
    if y.len() != states.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} observations, {} states",
            y.len(),
            states.len()
        )));
    }
    let mut n = vec![0usize; k];
    let mut s = vec![0.0; k];
    for (&yt, &xt) in y.iter().zip(states) {
        if xt >= k {
            return Err(Error::LabelOutOfRange { label: xt + 1, k });
        }
        n[xt] += 1;
        s[xt] += yt;
    }
    Ok((0..k)
        .map(|j| {
            let denom = n[j] as f64 * prior.var0 + 1.0;
            let mean = (prior.var0 * s[j] + prior.mean0) / denom;
            let var = prior.var0 / denom;
            let z: f64 = rng.sample(StandardNormal);
            mean + var.sqrt() * z
        })
        .collect())
}

/// Scratch buffers for forward filtering, backward sampling.
#[derive(Debug, Default, Clone)]
pub struct Ffbs {
    filter: Vec<f64>,
    emis: Vec<f64>,
    weights: Vec<f64>,
    trans: Vec<f64>,
}

impl Ffbs {
    /// Draws `x_{1:n}` from `p(x | Q, γ, y)` with initial distribution `init`.
    pub fn sample<R: Rng + ?Sized>(
        &mut self,
        y: &[f64],
        q: &TransitionMatrix,
        means: &[f64],
        init: &[f64],
        rng: &mut R,
        out: &mut [usize],
    ) -> Result<()> {
        let k = q.k();
        let n = y.len();
        if means.len() != k || init.len() != k || out.len() != n {
            return Err(Error::DimensionMismatch("FFBS inputs disagree in size".into()));
        }
        if n == 0 {
            return Ok(());
        }
        self.filter.resize(n * k, 0.0);
        self.emis.resize(k, 0.0);
        self.weights.resize(k, 0.0);
        self.trans.clear();
        self.trans
            .extend(q.as_slice().iter().map(|&p| if p < TRANSITION_FLUSH { 0.0 } else { p }));
        let probs = self.trans.as_slice();

        for t in 0..n {
            let yt = y[t];
            let mut max_l = f64::NEG_INFINITY;
            for j in 0..k {
                let d = yt - means[j];
                let l = -0.5 * d * d;
                self.emis[j] = l;
                max_l = max_l.max(l);
            }
            for e in self.emis.iter_mut() {
                *e = (*e - max_l).max(EMISSION_LOG_FLOOR).exp();
            }
            let (prev, cur) = self.filter.split_at_mut(t * k);
            let cur = &mut cur[..k];
            if t == 0 {
                for j in 0..k {
                    cur[j] = init[j] * self.emis[j];
                }
            } else {
                let prev = &prev[(t - 1) * k..];
                cur.fill(0.0);
                for (&a, row) in prev[..k].iter().zip(probs.chunks_exact(k)) {
                    for (c, &p) in cur.iter_mut().zip(row) {
                        *c += a * p;
                    }
                }
                for (c, &e) in cur.iter_mut().zip(&self.emis) {
                    *c *= e;
                }
            }
            let total: f64 = cur.iter().sum();
            if !(total > 0.0) || !total.is_finite() {
                return Err(Error::NumericalFailure(format!(
                    "filtered probabilities vanish at t = {}",
                    t + 1
                )));
            }
            let inv = 1.0 / total;
            cur.iter_mut().for_each(|c| *c *= inv);
        }

        let last = &self.filter[(n - 1) * k..];
        out[n - 1] = sample_weighted(last, last.iter().sum(), rng);
        for t in (0..n - 1).rev() {
            let next = out[t + 1];
            let f = &self.filter[t * k..(t + 1) * k];
            let mut total = 0.0;
            for i in 0..k {
                let w = f[i] * probs[i * k + next];
                self.weights[i] = w;
                total += w;
            }
            if !(total > 0.0) {
                return Err(Error::NumericalFailure(format!(
                    "backward weights vanish at t = {}",
                    t + 1
                )));
            }
            out[t] = sample_weighted(&self.weights, total, rng);
        }
        Ok(())
    }
}

/// Exact joint draw of the hidden path, started from the stationary
/// distribution of `q`.
pub fn ffbs_sample_states<R: Rng + ?Sized>(
    y: &[f64],
    q: &TransitionMatrix,
    means: &[f64],
    rng: &mut R,
) -> Result<Vec<usize>> {
    let mu = stationary_distribution(q)?;
    let mut out = vec![0; y.len()];
    Ffbs::default().sample(y, q, means, &mu.probs, rng, &mut out)?;
    Ok(out)
}

/// Starting allocations for a chain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Initialization {
    /// Independent uniform labels.
    #[default]
    RandomUniform,
    /// Observations split into K equal-count slices by rank.
    Quantile,
}

/// Current `(x_{1:n}, Q, γ)` of one chain.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainState {
    pub states: Vec<usize>,
    pub transition: TransitionMatrix,
    pub means: Vec<f64>,
    pub component: Option<MixtureComponent>,
    /// Ladder slot, 0-based (the target chain is the last slot).
    pub rung: usize,
    pub iteration: u64,
}

impl ChainState {
    pub fn initialize<R: Rng + ?Sized>(
        y: &[f64],
        k: usize,
        init: Initialization,
        prior: &EmissionPrior,
        rung: usize,
        rng: &mut R,
    ) -> Result<Self> {
        if k == 0 || y.is_empty() {
            return Err(Error::InvalidConfig("need K >= 1 and at least one observation".into()));
        }
        let n = y.len();
        let states: Vec<usize> = match init {
            Initialization::RandomUniform => (0..n).map(|_| rng.random_range(0..k)).collect(),
            Initialization::Quantile => {
                let mut order: Vec<usize> = (0..n).collect();
                order.sort_by(|&a, &b| y[a].total_cmp(&y[b]));
                let mut s = vec![0; n];
                for (rank, &t) in order.iter().enumerate() {
                    s[t] = rank * k / n;
                }
                s
            }
        };
        let counts = occupancy_counts(&states, k);
        let mut sums = vec![0.0; k];
        for (&yt, &xt) in y.iter().zip(&states) {
            sums[xt] += yt;
        }
        let means = (0..k)
            .map(|j| if counts[j] > 0 { sums[j] / counts[j] as f64 } else { prior.mean0 })
            .collect();
        Ok(Self {
            states,
            transition: TransitionMatrix::uniform(k),
            means,
            component: None,
            rung,
            iteration: 0,
        })
    }

    pub fn k(&self) -> usize {
        self.transition.k()
    }

    /// Observations allocated to each state.
    pub fn occupancy(&self) -> Vec<usize> {
        occupancy_counts(&self.states, self.k())
    }

    /// Exchanges configurations with `other`; rung slots stay put.
    pub fn swap_configuration(&mut self, other: &mut ChainState) {
        std::mem::swap(&mut self.states, &mut other.states);
        std::mem::swap(&mut self.transition, &mut other.transition);
        std::mem::swap(&mut self.means, &mut other.means);
        std::mem::swap(&mut self.component, &mut other.component);
    }

    pub fn record(&self, keep_states: bool) -> TraceRecord {
        let counts = self.occupancy();
        TraceRecord {
            iteration: self.iteration,
            transition: self.transition.clone(),
            means: self.means.clone(),
            occupied: counts.iter().filter(|&&c| c > 0).count(),
            counts,
            component: self.component,
            states: keep_states.then(|| self.states.clone()),
        }
    }
}

pub(crate) fn occupancy_counts(states: &[usize], k: usize) -> Vec<usize> {
    let mut c = vec![0; k];
    for &s in states {
        c[s] += 1;
    }
    c
}

/// Sweep machinery for one chain: data, prior, and reusable buffers.
#[derive(Debug, Clone)]
pub struct GibbsSampler<'a> {
    y: &'a [f64],
    structure: PriorStructure,
    hyper: PriorHyperparameters,
    prior: EmissionPrior,
    rule: MhRule,
    ffbs: Ffbs,
    accepted: u64,
    proposed: u64,
}

impl<'a> GibbsSampler<'a> {
    pub fn new(y: &'a [f64], structure: PriorStructure, prior: EmissionPrior) -> Self {
        Self {
            y,
            hyper: build_row_hyperparameters(&structure),
            structure,
            prior,
            rule: MhRule::NewOverOld,
            ffbs: Ffbs::default(),
            accepted: 0,
            proposed: 0,
        }
    }

    pub fn with_rule(mut self, rule: MhRule) -> Self {
        self.rule = rule;
        self
    }

    pub fn structure(&self) -> &PriorStructure {
        &self.structure
    }

    /// Fraction of `Q` proposals accepted so far.
    pub fn acceptance_rate(&self) -> f64 {
        self.accepted as f64 / self.proposed.max(1) as f64
    }

    /// One full sweep: `Q`, then `γ`, then `x`.
    pub fn sweep<R: Rng + ?Sized>(&mut self, state: &mut ChainState, rng: &mut R) -> Result<()> {
        let k = self.structure.k;
        if state.k() != k || state.states.len() != self.y.len() || state.means.len() != k {
            return Err(Error::DimensionMismatch("chain state does not match sampler".into()));
        }
        let counts = transition_counts(&state.states, k)?;
        let draw = draw_with_hyperparameters(&counts, &self.hyper, rng);

        let x1 = state.states[0];
        let mu_old = stationary_distribution(&state.transition)?;
        // A proposal whose stationary solve fails is rejected outright.
        let mu_new = stationary_distribution(&draw.matrix).ok();
        self.proposed += 1;
        let mu = match mu_new {
            Some(mu_new) if mh_accept(mu_old.probs[x1], mu_new.probs[x1], self.rule, rng) => {
                state.transition = draw.matrix;
                state.component = draw.component;
                self.accepted += 1;
                mu_new
            }
            _ => mu_old,
        };

        state.means = sample_emission_means(self.y, &state.states, k, &self.prior, rng)?;
        self.ffbs
            .sample(self.y, &state.transition, &state.means, &mu.probs, rng, &mut state.states)?;
        state.iteration += 1;
        Ok(())
    }
}

/// One sweep with a throwaway sampler; see [`GibbsSampler::sweep`].
pub fn gibbs_sweep<R: Rng + ?Sized>(
    state: &mut ChainState,
    structure: &PriorStructure,
    prior: &EmissionPrior,
    y: &[f64],
    rng: &mut R,
) -> Result<()> {
    GibbsSampler::new(y, *structure, *prior).sweep(state, rng)
}

/// Settings for a single-chain run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunSettings {
    pub iterations: u64,
    pub burn_in: u64,
    pub seed: u64,
    #[serde(default)]
    pub init: Initialization,
    /// Keep the allocation vector every `thin_states` kept iterations
    /// (0 keeps none).
    #[serde(default = "default_thin")]
    pub thin_states: u64,
    #[serde(default)]
    pub rule: MhRule,
}

fn default_thin() -> u64 {
    10
}

impl RunSettings {
    pub fn new(iterations: u64, burn_in: u64, seed: u64) -> Self {
        Self {
            iterations,
            burn_in,
            seed,
            init: Initialization::default(),
            thin_states: default_thin(),
            rule: MhRule::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.burn_in >= self.iterations {
            return Err(Error::InvalidConfig(format!(
                "burn-in ({}) must be smaller than iterations ({})",
                self.burn_in, self.iterations
            )));
        }
        Ok(())
    }

    pub(crate) fn keeps_states(&self, iteration: u64) -> bool {
        self.thin_states > 0 && (iteration - self.burn_in).is_multiple_of(self.thin_states)
    }
}

/// Plain Gibbs sampler (a single chain, no tempering).
///
/// The chain draws from stream 0 of `settings.seed`, the same stream the
/// target slot of a one-chain tempered run uses.
pub fn gibbs_run(
    y: &[f64],
    structure: &PriorStructure,
    prior: &EmissionPrior,
    settings: &RunSettings,
) -> Result<McmcTrace> {
    settings.validate()?;
    let mut rng = stream_rng(settings.seed, 0);
    let mut state = ChainState::initialize(y, structure.k, settings.init, prior, 0, &mut rng)?;
    let mut sampler = GibbsSampler::new(y, *structure, *prior).with_rule(settings.rule);
    let mut trace = McmcTrace::new(structure.k, y.len());
    for m in 1..=settings.iterations {
        sampler.sweep(&mut state, &mut rng)?;
        if m > settings.burn_in {
            trace.records.push(state.record(settings.keeps_states(m)));
        }
    }
    Ok(trace)
}
