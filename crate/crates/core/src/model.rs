//! Gaussian hidden Markov model with unit emission variance.
//!
//! Hidden states are 0-based inside the crate; every external format
//! (CSV, JSON, CLI output) writes them 1-based.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{sample_weighted, stream_rng, DATA_STREAM};

/// Emission variance shared by every state.
pub const EMISSION_VARIANCE: f64 = 1.0;

const ROW_SUM_TOL: f64 = 1e-12;
const STATIONARY_RESIDUAL_TOL: f64 = 1e-8;

/// Row-stochastic K×K matrix, stored row-major alongside the log entries.
///
/// The log entries are authoritative when the matrix was drawn in log space:
/// a transition probability of `exp(-2000)` is stored as `0.0` but keeps its
/// exact logarithm, which the prior density needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct TransitionMatrix {
    k: usize,
    probs: Vec<f64>,
    log_probs: Vec<f64>,
}

impl TransitionMatrix {
    /// Builds from row-major probabilities.
    pub fn new(k: usize, probs: Vec<f64>) -> Result<Self> {
        let log_probs = probs.iter().map(|p| p.ln()).collect();
        Self::checked(k, probs, log_probs)
    }

    /// Builds from row-major log-probabilities (each row already normalized).
    pub fn from_log_probs(k: usize, log_probs: Vec<f64>) -> Result<Self> {
        let probs = log_probs.iter().map(|l| l.exp()).collect();
        Self::checked(k, probs, log_probs)
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let k = rows.len();
        if rows.iter().any(|r| r.len() != k) {
            return Err(Error::DimensionMismatch(format!(
                "transition rows must all have length {k}"
            )));
        }
        Self::new(k, rows.iter().flatten().copied().collect())
    }

    pub fn uniform(k: usize) -> Self {
        let p = 1.0 / k as f64;
        Self {
            k,
            probs: vec![p; k * k],
            log_probs: vec![p.ln(); k * k],
        }
    }

    pub fn identity(k: usize) -> Self {
        let mut probs = vec![0.0; k * k];
        for i in 0..k {
            probs[i * k + i] = 1.0;
        }
        Self::new(k, probs).expect("identity is stochastic")
    }

    fn checked(k: usize, probs: Vec<f64>, log_probs: Vec<f64>) -> Result<Self> {
        if k == 0 {
            return Err(Error::InvalidTransition("K must be at least 1".into()));
        }
        if probs.len() != k * k {
            return Err(Error::DimensionMismatch(format!(
                "expected {} entries for K = {k}, got {}",
                k * k,
                probs.len()
            )));
        }
        for (i, row) in probs.chunks(k).enumerate() {
            if let Some(p) = row.iter().find(|p| !(0.0..=1.0).contains(*p)) {
                return Err(Error::InvalidTransition(format!("row {} has entry {p}", i + 1)));
            }
            let s: f64 = row.iter().sum();
            if (s - 1.0).abs() > ROW_SUM_TOL {
                return Err(Error::InvalidTransition(format!("row {} sums to {s}", i + 1)));
            }
        }
        Ok(Self { k, probs, log_probs })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.probs[i * self.k + j]
    }

    #[inline]
    pub fn ln(&self, i: usize, j: usize) -> f64 {
        self.log_probs[i * self.k + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.probs[i * self.k..(i + 1) * self.k]
    }

    pub fn log_row(&self, i: usize) -> &[f64] {
        &self.log_probs[i * self.k..(i + 1) * self.k]
    }

    /// Row-major probabilities.
    pub fn as_slice(&self) -> &[f64] {
        &self.probs
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.probs.chunks(self.k).map(<[f64]>::to_vec).collect()
    }

    /// Relabels states: new state `a` is old state `perm[a]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let k = self.k;
        assert_eq!(perm.len(), k, "permutation length");
        let mut probs = vec![0.0; k * k];
        let mut log_probs = vec![0.0; k * k];
        for a in 0..k {
            for b in 0..k {
                probs[a * k + b] = self.get(perm[a], perm[b]);
                log_probs[a * k + b] = self.ln(perm[a], perm[b]);
            }
        }
        Self { k, probs, log_probs }
    }
}

impl TryFrom<Vec<Vec<f64>>> for TransitionMatrix {
    type Error = Error;

    fn try_from(rows: Vec<Vec<f64>>) -> Result<Self> {
        Self::from_rows(&rows)
    }
}

impl From<TransitionMatrix> for Vec<Vec<f64>> {
    fn from(q: TransitionMatrix) -> Self {
        q.rows()
    }
}

/// Parameters of a K-state Gaussian HMM with unit emission variance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HmmParams {
    pub transition: TransitionMatrix,
    pub means: Vec<f64>,
}

impl HmmParams {
    pub fn new(transition: TransitionMatrix, means: Vec<f64>) -> Result<Self> {
        if means.len() != transition.k() {
            return Err(Error::DimensionMismatch(format!(
                "{} means for K = {}",
                means.len(),
                transition.k()
            )));
        }
        Ok(Self { transition, means })
    }

    pub fn k(&self) -> usize {
        self.transition.k()
    }

    pub fn variance(&self) -> f64 {
        EMISSION_VARIANCE
    }

    /// Relabels states: new state `a` is old state `perm[a]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        Self {
            transition: self.transition.permuted(perm),
            means: perm.iter().map(|&p| self.means[p]).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationaryDistribution {
    pub probs: Vec<f64>,
}

impl StationaryDistribution {
    pub fn k(&self) -> usize {
        self.probs.len()
    }

    /// `max_j |(μQ)_j − μ_j|`.
    pub fn residual(&self, q: &TransitionMatrix) -> f64 {
        let k = q.k();
        (0..k)
            .map(|j| {
                let mq: f64 = (0..k).map(|i| self.probs[i] * q.get(i, j)).sum();
                (mq - self.probs[j]).abs()
            })
            .fold(0.0, f64::max)
    }
}

/// Observations with the hidden path that generated them.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedDataset {
    pub observations: Vec<f64>,
    pub states: Vec<usize>,
    pub seed: u64,
}

impl SimulatedDataset {
    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }
}

/// Log density of `Normal(mean, 1)` at `y`.
#[inline]
pub fn normal_ln_pdf(y: f64, mean: f64) -> f64 {
    let d = y - mean;
    -0.5 * (2.0 * PI).ln() - 0.5 * d * d
}

/// Stationary distribution `μ` with `μQ = μ`.
///
/// Solved by Grassmann–Taksar–Heyman state reduction on the recurrent class,
/// which needs no subtractions and stays accurate for nearly decomposable
/// matrices. When `Q` has several closed classes, the class that absorbs the
/// most mass from a uniform start is used; ties go to the class containing
/// the lowest state index. Transient states get probability zero.
pub fn stationary_distribution(q: &TransitionMatrix) -> Result<StationaryDistribution> {
    let k = q.k();
    if k == 1 {
        return Ok(StationaryDistribution { probs: vec![1.0] });
    }
    let classes = closed_classes(q);
    let chosen = if classes.len() == 1 {
        &classes[0]
    } else {
        let masses = absorption_masses(q, &classes)?;
        let mut best = 0;
        for c in 1..classes.len() {
            if masses[c] > masses[best] * (1.0 + 1e-12) {
                best = c;
            }
        }
        &classes[best]
    };

    let sub = gth_solve(q, chosen)?;
    let mut probs = vec![0.0; k];
    for (&s, p) in chosen.iter().zip(sub) {
        probs[s] = p;
    }
    let mu = StationaryDistribution { probs };
    let r = mu.residual(q);
    if !(r < STATIONARY_RESIDUAL_TOL) {
        return Err(Error::NumericalFailure(format!(
            "stationary residual {r:e} exceeds {STATIONARY_RESIDUAL_TOL:e}"
        )));
    }
    Ok(mu)
}

/// Closed communicating classes, each sorted, ordered by smallest member.
fn closed_classes(q: &TransitionMatrix) -> Vec<Vec<usize>> {
    let k = q.k();
    let mut reach = vec![false; k * k];
    let mut stack = Vec::with_capacity(k);
    for s in 0..k {
        reach[s * k + s] = true;
        stack.push(s);
        while let Some(i) = stack.pop() {
            for j in 0..k {
                if q.get(i, j) > 0.0 && !reach[s * k + j] {
                    reach[s * k + j] = true;
                    stack.push(j);
                }
            }
        }
    }
    let mut assigned = vec![false; k];
    let mut classes = Vec::new();
    for i in 0..k {
        if assigned[i] {
            continue;
        }
        let class: Vec<usize> = (0..k)
            .filter(|&j| reach[i * k + j] && reach[j * k + i])
            .collect();
        for &j in &class {
            assigned[j] = true;
        }
        // Closed when everything reachable from i is in the class.
        let closed = (0..k).all(|j| !reach[i * k + j] || class.contains(&j));
        if closed {
            classes.push(class);
        }
    }
    classes
}

/// Share of a uniform initial distribution eventually absorbed by each class.
fn absorption_masses(q: &TransitionMatrix, classes: &[Vec<usize>]) -> Result<Vec<f64>> {
    let k = q.k();
    let mut class_of = vec![usize::MAX; k];
    for (c, class) in classes.iter().enumerate() {
        for &s in class {
            class_of[s] = c;
        }
    }
    let transient: Vec<usize> = (0..k).filter(|&s| class_of[s] == usize::MAX).collect();
    let mut masses: Vec<f64> = classes.iter().map(|c| c.len() as f64).collect();
    if !transient.is_empty() {
        let t = transient.len();
        // (I − Q_TT) H = R, diagonal taken as off-diagonal row mass.
        let mut a = DMatrix::<f64>::zeros(t, t);
        let mut r = DMatrix::<f64>::zeros(t, classes.len());
        for (ai, &i) in transient.iter().enumerate() {
            let off: f64 = (0..k).filter(|&j| j != i).map(|j| q.get(i, j)).sum();
            a[(ai, ai)] = off;
            for (bj, &j) in transient.iter().enumerate() {
                if j != i {
                    a[(ai, bj)] = -q.get(i, j);
                }
            }
            for j in 0..k {
                if class_of[j] != usize::MAX {
                    r[(ai, class_of[j])] += q.get(i, j);
                }
            }
        }
        let h = a.lu().solve(&r).ok_or_else(|| {
            Error::NumericalFailure("singular absorption system".into())
        })?;
        for c in 0..classes.len() {
            masses[c] += h.column(c).sum();
        }
    }
    Ok(masses.into_iter().map(|m| m / k as f64).collect())
}

/// GTH state reduction restricted to an irreducible closed class.
fn gth_solve(q: &TransitionMatrix, class: &[usize]) -> Result<Vec<f64>> {
    let m = class.len();
    if m == 1 {
        return Ok(vec![1.0]);
    }
    let mut a = vec![0.0; m * m];
    for (ai, &i) in class.iter().enumerate() {
        for (bj, &j) in class.iter().enumerate() {
            a[ai * m + bj] = q.get(i, j);
        }
    }
    for n in (1..m).rev() {
        let s: f64 = a[n * m..n * m + n].iter().sum();
        if !(s > 0.0) || !s.is_finite() {
            return Err(Error::NumericalFailure(
                "state reduction met a zero pivot".into(),
            ));
        }
        for i in 0..n {
            a[i * m + n] /= s;
        }
        for i in 0..n {
            let ain = a[i * m + n];
            if ain != 0.0 {
                for j in 0..n {
                    a[i * m + j] += ain * a[n * m + j];
                }
            }
        }
    }
    let mut x = vec![0.0; m];
    x[0] = 1.0;
    for n in 1..m {
        x[n] = (0..n).map(|i| x[i] * a[i * m + n]).sum();
    }
    let total: f64 = x.iter().sum();
    Ok(x.into_iter().map(|v| v / total).collect())
}

/// Ergodicity coefficient `ρ_Q = (1 − Σ_j min_i q_ij)^{-1}`.
///
/// Returns `f64::INFINITY` when the column minima sum to one (all rows
/// equal), using a tolerance of 1e-12.
pub fn ergodicity_coefficient(q: &TransitionMatrix) -> f64 {
    let k = q.k();
    let s: f64 = (0..k)
        .map(|j| (0..k).map(|i| q.get(i, j)).fold(f64::INFINITY, f64::min))
        .sum();
    if s >= 1.0 - 1e-12 {
        f64::INFINITY
    } else {
        1.0 / (1.0 - s)
    }
}

/// Simulates `n` steps from the stationary chain. Deterministic in `seed`.
pub fn simulate_hmm(params: &HmmParams, n: usize, seed: u64) -> Result<SimulatedDataset> {
    let mut rng = stream_rng(seed, DATA_STREAM);
    let (observations, states) = simulate_with_rng(params, n, &mut rng)?;
    Ok(SimulatedDataset {
        observations,
        states,
        seed,
    })
}

/// Simulation against a caller-supplied generator.
pub fn simulate_with_rng<R: Rng + ?Sized>(
    params: &HmmParams,
    n: usize,
    rng: &mut R,
) -> Result<(Vec<f64>, Vec<usize>)> {
    if n == 0 {
        return Err(Error::InvalidConfig("n must be at least 1".into()));
    }
    let mu = stationary_distribution(&params.transition)?;
    let q = &params.transition;
    let mut states = Vec::with_capacity(n);
    let mut obs = Vec::with_capacity(n);
    let mut x = sample_weighted(&mu.probs, 1.0, rng);
    for t in 0..n {
        if t > 0 {
            x = sample_weighted(q.row(x), 1.0, rng);
        }
        let z: f64 = rng.sample(StandardNormal);
        states.push(x);
        obs.push(params.means[x] + z);
    }
    Ok((obs, states))
}

fn check_labels(states: &[usize], k: usize) -> Result<()> {
    match states.iter().find(|&&s| s >= k) {
        Some(&s) => Err(Error::LabelOutOfRange { label: s + 1, k }),
        None => Ok(()),
    }
}

/// `log g(y_1|x_1) + Σ_t [log q_{x_t,x_{t+1}} + log g(y_{t+1}|x_{t+1})]`.
///
/// The initial-state probability is not included. A path through a zero
/// transition gives `-inf`.
pub fn complete_log_likelihood(params: &HmmParams, y: &[f64], states: &[usize]) -> Result<f64> {
    if y.len() != states.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} observations, {} states",
            y.len(),
            states.len()
        )));
    }
    check_labels(states, params.k())?;
    let mut ll = 0.0;
    for t in 0..y.len() {
        if t > 0 {
            let p = params.transition.get(states[t - 1], states[t]);
            if p == 0.0 {
                return Ok(f64::NEG_INFINITY);
            }
            ll += p.ln();
        }
        ll += normal_ln_pdf(y[t], params.means[states[t]]);
    }
    Ok(ll)
}

/// `log f(y_{1:n} | θ, μ)` by the scaled forward recursion.
pub fn observed_log_likelihood(
    params: &HmmParams,
    y: &[f64],
    init: &StationaryDistribution,
) -> Result<f64> {
    let k = params.k();
    if init.k() != k {
        return Err(Error::DimensionMismatch(format!(
            "initial distribution has {} states, model has {k}",
            init.k()
        )));
    }
    let q = &params.transition;
    let mut alpha = vec![0.0; k];
    let mut next = vec![0.0; k];
    let mut emis = vec![0.0; k];
    let mut ll = 0.0;
    for (t, &yt) in y.iter().enumerate() {
        let max_l = params
            .means
            .iter()
            .map(|&m| normal_ln_pdf(yt, m))
            .fold(f64::NEG_INFINITY, f64::max);
        for j in 0..k {
            emis[j] = (normal_ln_pdf(yt, params.means[j]) - max_l).exp();
        }
        if t == 0 {
            for j in 0..k {
                next[j] = init.probs[j] * emis[j];
            }
        } else {
            next.iter_mut().for_each(|v| *v = 0.0);
            for i in 0..k {
                let a = alpha[i];
                if a == 0.0 {
                    continue;
                }
                for (j, v) in next.iter_mut().enumerate() {
                    *v += a * q.get(i, j);
                }
            }
            for j in 0..k {
                next[j] *= emis[j];
            }
        }
        let c: f64 = next.iter().sum();
        if c == 0.0 {
            return Ok(f64::NEG_INFINITY);
        }
        ll += c.ln() + max_l;
        for j in 0..k {
            alpha[j] = next[j] / c;
        }
    }
    Ok(ll)
}
