//! Asymmetric Dirichlet priors on the rows of the transition matrix.
//!
//! Each row gets a large pseudo-count `alpha_bar` in some positions and a
//! small `alpha_low` elsewhere:
//!
//! * **Column**: `alpha_bar` in the first `p` positions of every row.
//! * **Diagonal**: `alpha_bar` on the diagonal.
//! * **Mixture**: an equal-weight mixture of the two, with one component
//!   indicator for the whole matrix.
//!
//! The module also carries the hyperparameter bounds under which surplus
//! states are emptied asymptotically, the matching posterior rate, and the
//! geometric ladder used for prior parallel tempering.

use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::model::TransitionMatrix;
use crate::rng::log_sum_exp;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PriorKind {
    Column,
    Diagonal,
    Mixture,
}

impl std::fmt::Display for PriorKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            PriorKind::Column => "column",
            PriorKind::Diagonal => "diagonal",
            PriorKind::Mixture => "mixture",
        })
    }
}

impl std::str::FromStr for PriorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "column" | "c" => Ok(PriorKind::Column),
            "diagonal" | "d" => Ok(PriorKind::Diagonal),
            "mixture" | "m" => Ok(PriorKind::Mixture),
            other => Err(Error::Parse(format!("unknown prior structure '{other}'"))),
        }
    }
}

/// Component of the mixture prior that generated a matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MixtureComponent {
    Column,
    Diagonal,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PriorStructure {
    pub kind: PriorKind,
    pub k: usize,
    pub alpha_bar: f64,
    pub alpha_low: f64,
    /// Number of leading `alpha_bar` entries per row (Column component).
    pub p: usize,
}

impl PriorStructure {
    pub fn new(kind: PriorKind, k: usize, alpha_bar: f64, alpha_low: f64, p: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::InvalidConfig("K must be at least 1".into()));
        }
        if !(alpha_low > 0.0 && alpha_low.is_finite()) || !alpha_bar.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "hyperparameters must be positive and finite (alpha_bar = {alpha_bar}, alpha_low = {alpha_low})"
            )));
        }
        if alpha_bar < alpha_low {
            return Err(Error::InvalidConfig(format!(
                "alpha_bar ({alpha_bar}) must be at least alpha_low ({alpha_low})"
            )));
        }
        if p == 0 || p > k {
            return Err(Error::InvalidConfig(format!("p = {p} outside 1..={k}")));
        }
        Ok(Self {
            kind,
            k,
            alpha_bar,
            alpha_low,
            p,
        })
    }

    pub fn column(k: usize, alpha_bar: f64, alpha_low: f64) -> Result<Self> {
        Self::new(PriorKind::Column, k, alpha_bar, alpha_low, 1)
    }

    pub fn diagonal(k: usize, alpha_bar: f64, alpha_low: f64) -> Result<Self> {
        Self::new(PriorKind::Diagonal, k, alpha_bar, alpha_low, 1)
    }

    pub fn mixture(k: usize, alpha_bar: f64, alpha_low: f64) -> Result<Self> {
        Self::new(PriorKind::Mixture, k, alpha_bar, alpha_low, 1)
    }

    /// Same structure on another rung of the tempering ladder.
    pub fn with_alpha_low(&self, alpha_low: f64) -> Result<Self> {
        Self::new(self.kind, self.k, self.alpha_bar, alpha_low, self.p)
    }

    /// Pseudo-counts for one component.
    pub fn component_hyperparameters(&self, component: MixtureComponent) -> RowHyperparameters {
        let k = self.k;
        let mut values = vec![self.alpha_low; k * k];
        for i in 0..k {
            match component {
                MixtureComponent::Column => {
                    values[i * k..i * k + self.p].fill(self.alpha_bar);
                }
                MixtureComponent::Diagonal => values[i * k + i] = self.alpha_bar,
            }
        }
        RowHyperparameters { k, values }
    }
}

/// K×K Dirichlet pseudo-counts, row `i` parameterizing row `i` of Q.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RowHyperparameters {
    pub k: usize,
    pub values: Vec<f64>,
}

impl RowHyperparameters {
    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.k..(i + 1) * self.k]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.k + j]
    }
}

/// Hyperparameters of a prior structure; the mixture keeps both components.
#[derive(Debug, Clone, PartialEq)]
pub enum PriorHyperparameters {
    Single(RowHyperparameters),
    Mixture {
        column: RowHyperparameters,
        diagonal: RowHyperparameters,
    },
}

pub fn build_row_hyperparameters(structure: &PriorStructure) -> PriorHyperparameters {
    match structure.kind {
        PriorKind::Column => {
            PriorHyperparameters::Single(structure.component_hyperparameters(MixtureComponent::Column))
        }
        PriorKind::Diagonal => PriorHyperparameters::Single(
            structure.component_hyperparameters(MixtureComponent::Diagonal),
        ),
        PriorKind::Mixture => PriorHyperparameters::Mixture {
            column: structure.component_hyperparameters(MixtureComponent::Column),
            diagonal: structure.component_hyperparameters(MixtureComponent::Diagonal),
        },
    }
}

/// Dirichlet log density at a point given by its log coordinates.
pub fn dirichlet_ln_pdf(alpha: &[f64], log_x: &[f64]) -> f64 {
    let total: f64 = alpha.iter().sum();
    let mut ld = ln_gamma(total);
    for (&a, &lx) in alpha.iter().zip(log_x) {
        ld -= ln_gamma(a);
        if a != 1.0 {
            ld += (a - 1.0) * lx;
        }
    }
    ld
}

/// Sum of row log densities of `q` under one set of pseudo-counts.
pub fn matrix_ln_pdf(q: &TransitionMatrix, alpha: &RowHyperparameters) -> f64 {
    (0..q.k())
        .map(|i| dirichlet_ln_pdf(alpha.row(i), q.log_row(i)))
        .sum()
}

/// Log prior density of `q` under `structure`.
///
/// The density is evaluated in the open simplex: an entry whose logarithm is
/// `-inf` gives [`Error::BoundaryDensity`].
pub fn log_prior_density(q: &TransitionMatrix, structure: &PriorStructure) -> Result<f64> {
    if q.k() != structure.k {
        return Err(Error::DimensionMismatch(format!(
            "matrix has K = {}, prior has K = {}",
            q.k(),
            structure.k
        )));
    }
    hyperparameter_ln_density(q, &build_row_hyperparameters(structure))
}

/// [`log_prior_density`] with prebuilt pseudo-counts.
pub fn hyperparameter_ln_density(q: &TransitionMatrix, hyper: &PriorHyperparameters) -> Result<f64> {
    if (0..q.k()).any(|i| q.log_row(i).contains(&f64::NEG_INFINITY)) {
        return Err(Error::BoundaryDensity);
    }
    Ok(match hyper {
        PriorHyperparameters::Single(a) => matrix_ln_pdf(q, a),
        PriorHyperparameters::Mixture { column, diagonal } => {
            let half = 0.5f64.ln();
            log_sum_exp(&[half + matrix_ln_pdf(q, column), half + matrix_ln_pdf(q, diagonal)])
        }
    })
}

/// Threshold on `p·alpha_bar + (K−p)·alpha_low` above which surplus states
/// are emptied, together with the implied minimal `alpha_bar`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TheoremBound {
    pub k: usize,
    /// Assumed true state count; `None` for the conservative bound.
    pub k_star: Option<usize>,
    pub d: usize,
    pub alpha_low: f64,
    pub p: usize,
    /// Lower bound (strict) on `p·alpha_bar + (K−p)·alpha_low`.
    pub threshold: f64,
    pub alpha_bar_min: f64,
    pub feasible: bool,
    /// Supremum of `alpha_low` keeping the constraint feasible.
    pub max_alpha_low: f64,
}

/// Bound with the true state count chosen separately for the two sides:
/// `k_star_bar` enters the threshold numerator and `k_star_low` the
/// `alpha_low` constraint (and the threshold denominator).
pub fn split_alpha_bound(
    k: usize,
    k_star_bar: usize,
    k_star_low: usize,
    d: usize,
    alpha_low: f64,
    p: usize,
) -> Result<TheoremBound> {
    if k < 2 || d == 0 || p == 0 || p > k {
        return Err(Error::InvalidConfig(format!(
            "bound needs K >= 2, d >= 1, 1 <= p <= K (got K = {k}, d = {d}, p = {p})"
        )));
    }
    if k_star_bar == 0 || k_star_bar >= k || k_star_low == 0 || k_star_low >= k {
        return Err(Error::InvalidConfig(format!("K* must lie in 1..{k}")));
    }
    if !(alpha_low > 0.0) {
        return Err(Error::InvalidConfig("alpha_low must be positive".into()));
    }
    let (kf, dh) = (k as f64, d as f64 / 2.0);
    let df = d as f64;

    let ksb = k_star_bar as f64;
    let a1 = ksb * (ksb - 1.0 + df) + alpha_low * kf * (kf - ksb);
    let b = ksb * (df + ksb - 1.0) + alpha_low * (ksb + 1.0) * (kf - ksb - 1.0) + dh;

    let ksl = k_star_low as f64;
    let penalty = (kf - ksl).powi(2) - (kf - 2.0 * ksl - 1.0);
    let max_alpha_low = dh / penalty;
    let denom = dh - alpha_low * penalty;
    let feasible = denom > 0.0;

    let (threshold, alpha_bar_min) = if feasible {
        let t = a1 * b / denom;
        (t, (t - (kf - p as f64) * alpha_low) / p as f64)
    } else {
        (f64::NAN, f64::NAN)
    };
    Ok(TheoremBound {
        k,
        k_star: (k_star_bar == k_star_low).then_some(k_star_bar),
        d,
        alpha_low,
        p,
        threshold,
        alpha_bar_min,
        feasible,
        max_alpha_low,
    })
}

fn require_feasible(bound: TheoremBound) -> Result<TheoremBound> {
    if bound.feasible {
        Ok(bound)
    } else {
        Err(Error::InfeasibleBound {
            max_alpha_low: bound.max_alpha_low,
        })
    }
}

/// Conservative bound valid for any true state count `1 <= K* < K`.
///
/// Takes `K* = K − 1` in the threshold numerator and `K* = 1` in the
/// `alpha_low` constraint, which are the worst cases of each.
pub fn conservative_alpha_bound(k: usize, d: usize, alpha_low: f64, p: usize) -> Result<TheoremBound> {
    let mut b = require_feasible(split_alpha_bound(k, k.saturating_sub(1), 1, d, alpha_low, p)?)?;
    b.k_star = None;
    Ok(b)
}

/// Bound for a known true state count `k_star`.
pub fn general_alpha_bound(
    k: usize,
    k_star: usize,
    d: usize,
    alpha_low: f64,
    p: usize,
) -> Result<TheoremBound> {
    require_feasible(split_alpha_bound(k, k_star, k_star, d, alpha_low, p)?)
}

/// Posterior concentration rate of the surplus stationary mass.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PosteriorRate {
    pub a1: f64,
    pub a: f64,
    pub b: f64,
    pub n_exponent: f64,
    pub log_exponent: f64,
    pub rate: f64,
}

/// `v_n = n^{-½[(1−A)B − A₁]/(d/2 + α̲(K−2K*−1))} (log n)^{B/(d + 2α̲(K−2K*−1))}`.
#[allow(clippy::too_many_arguments)]
pub fn posterior_rate(
    k: usize,
    k_star: usize,
    d: usize,
    alpha_bar: f64,
    alpha_low: f64,
    p: usize,
    n: u64,
) -> Result<PosteriorRate> {
    if n < 2 {
        return Err(Error::InvalidConfig("posterior rate needs n >= 2".into()));
    }
    let bound = general_alpha_bound(k, k_star, d, alpha_low, p)?;
    let (kf, ks, df) = (k as f64, k_star as f64, d as f64);
    let mass = p as f64 * alpha_bar + (kf - p as f64) * alpha_low;
    if !(mass > bound.threshold) {
        return Err(Error::InfeasibleBound {
            max_alpha_low: bound.max_alpha_low,
        });
    }
    let a1 = kf * (kf - ks) * alpha_low + ks * (ks - 1.0 + df);
    let a = a1 / mass;
    let b = ks * (df + ks - 1.0) + alpha_low * (ks + 1.0) * (kf - ks - 1.0) + df / 2.0;
    let shift = alpha_low * (kf - 2.0 * ks - 1.0);
    let n_exponent = -0.5 * ((1.0 - a) * b - a1) / (df / 2.0 + shift);
    let log_exponent = b / (df + 2.0 * shift);
    let nf = n as f64;
    let rate = (n_exponent * nf.ln() + log_exponent * nf.ln().ln()).exp();
    Ok(PosteriorRate {
        a1,
        a,
        b,
        n_exponent,
        log_exponent,
        rate,
    })
}

/// Values of the smaller hyperparameter for each tempered chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemperLadder {
    pub alpha_bar: f64,
    /// Rung 1 first; the last rung is the target chain.
    pub rungs: Vec<f64>,
}

impl TemperLadder {
    /// A user-supplied ladder: positive, non-increasing, not above `alpha_bar`.
    pub fn from_rungs(alpha_bar: f64, rungs: Vec<f64>) -> Result<Self> {
        if rungs.is_empty() {
            return Err(Error::InvalidConfig("ladder needs at least one rung".into()));
        }
        if rungs.iter().any(|&r| !(r > 0.0) || r > alpha_bar) {
            return Err(Error::InvalidConfig("rungs must lie in (0, alpha_bar]".into()));
        }
        if rungs.windows(2).any(|w| w[1] > w[0]) {
            return Err(Error::InvalidConfig("rungs must be non-increasing".into()));
        }
        Ok(Self { alpha_bar, rungs })
    }

    pub fn len(&self) -> usize {
        self.rungs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rungs.is_empty()
    }

    pub fn target(&self) -> f64 {
        *self.rungs.last().expect("non-empty ladder")
    }
}

/// Geometric ladder `alpha_bar · (alpha_bar/target)^{-(j−1)/J}` for
/// `j = 1..J−1`, with the last rung pinned to `target`.
///
/// A single-chain ladder holds just the target.
pub fn tempering_ladder(alpha_bar: f64, target: f64, chains: usize) -> Result<TemperLadder> {
    if chains == 0 {
        return Err(Error::InvalidConfig("ladder needs at least one chain".into()));
    }
    if !(target > 0.0) || target > alpha_bar {
        return Err(Error::InvalidConfig(format!(
            "target alpha_low {target} must lie in (0, alpha_bar = {alpha_bar}]"
        )));
    }
    let ratio = alpha_bar / target;
    let j_total = chains as f64;
    let mut rungs: Vec<f64> = (1..chains)
        .map(|j| alpha_bar * ratio.powf(-((j - 1) as f64) / j_total))
        .collect();
    rungs.push(target);
    TemperLadder::from_rungs(alpha_bar, rungs)
}
