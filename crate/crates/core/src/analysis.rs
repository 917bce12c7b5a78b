//! Post-processing of a target-chain trace.
//!
//! The fitted model is read off at the modal number of occupied states:
//! iterations with that many occupied states are kept, empty states dropped,
//! and the survivors relabeled by ascending emission mean before summaries,
//! fit errors and posterior-predictive checks are computed.

use std::collections::BTreeMap;
use std::io::Write;

use pathfinding::kuhn_munkres::kuhn_munkres;
use pathfinding::matrix::Matrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{simulate_with_rng, stationary_distribution, HmmParams, TransitionMatrix};
use crate::rng::stream_rng;
use crate::trace::McmcTrace;

/// Number of distinct labels in an allocation vector.
pub fn occupied_states(states: &[usize], k: usize) -> Result<usize> {
    let mut seen = vec![false; k];
    for &s in states {
        if s >= k {
            return Err(Error::LabelOutOfRange { label: s + 1, k });
        }
        seen[s] = true;
    }
    Ok(seen.iter().filter(|&&b| b).count())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OccupancyProfile {
    pub per_iteration: Vec<usize>,
    /// Proportion of kept iterations with each K_A.
    pub distribution: BTreeMap<usize, f64>,
    /// Empirical mode of K_A; ties go to the smaller value.
    pub mode: usize,
}

impl OccupancyProfile {
    pub fn proportion(&self, k_a: usize) -> f64 {
        self.distribution.get(&k_a).copied().unwrap_or(0.0)
    }
}

pub fn occupancy_profile(trace: &McmcTrace) -> Result<OccupancyProfile> {
    if trace.is_empty() {
        return Err(Error::EmptyTrace);
    }
    let per_iteration: Vec<usize> = trace.records.iter().map(|r| r.occupied).collect();
    Ok(profile_from_counts(per_iteration))
}

pub(crate) fn profile_from_counts(per_iteration: Vec<usize>) -> OccupancyProfile {
    let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
    for &k in &per_iteration {
        *counts.entry(k).or_default() += 1;
    }
    // BTreeMap iterates in ascending K_A, so the first maximum is the smallest.
    let mut mode = 0;
    let mut best = 0;
    for (&k, &c) in &counts {
        if c > best {
            best = c;
            mode = k;
        }
    }
    let total = per_iteration.len() as f64;
    let distribution = counts.into_iter().map(|(k, c)| (k, c as f64 / total)).collect();
    OccupancyProfile {
        per_iteration,
        distribution,
        mode,
    }
}

/// One iteration restricted to its occupied states.
#[derive(Debug, Clone, PartialEq)]
pub struct ModalDraw {
    pub iteration: u64,
    /// Occupied-state block of Q with rows renormalized.
    pub transition: TransitionMatrix,
    pub means: Vec<f64>,
    /// Stationary probabilities of the occupied states under the full Q,
    /// renormalized to sum to one.
    pub stationary: Vec<f64>,
    pub counts: Vec<usize>,
    /// Compacted allocations, when the iteration kept them.
    pub states: Option<Vec<usize>>,
}

/// Iterations sharing one number of occupied states.
#[derive(Debug, Clone, PartialEq)]
pub struct ModalTrace {
    pub k_a: usize,
    pub n: usize,
    pub draws: Vec<ModalDraw>,
}

impl ModalTrace {
    pub fn len(&self) -> usize {
        self.draws.len()
    }

    pub fn is_empty(&self) -> bool {
        self.draws.is_empty()
    }
}

/// Keeps iterations with exactly `k_a` occupied states, compacting labels.
pub fn extract_modal_model(trace: &McmcTrace, k_a: usize) -> Result<ModalTrace> {
    let mut draws = Vec::new();
    for r in trace.records.iter().filter(|r| r.occupied == k_a) {
        let occupied: Vec<usize> = (0..r.k()).filter(|&j| r.counts[j] > 0).collect();
        let mut new_label = vec![usize::MAX; r.k()];
        for (a, &j) in occupied.iter().enumerate() {
            new_label[j] = a;
        }
        let mut probs = Vec::with_capacity(k_a * k_a);
        for &i in &occupied {
            let row: Vec<f64> = occupied.iter().map(|&j| r.transition.get(i, j)).collect();
            let s: f64 = row.iter().sum();
            if !(s > 0.0) {
                return Err(Error::NumericalFailure(format!(
                    "iteration {}: occupied state {} has no mass on occupied states",
                    r.iteration,
                    i + 1
                )));
            }
            probs.extend(row);
        }
        let mu_full = stationary_distribution(&r.transition)?;
        let mut stationary: Vec<f64> = occupied.iter().map(|&j| mu_full.probs[j]).collect();
        let s: f64 = stationary.iter().sum();
        if s > 0.0 {
            stationary.iter_mut().for_each(|m| *m /= s);
        }
        draws.push(ModalDraw {
            iteration: r.iteration,
            transition: renormalized(k_a, probs)?,
            means: occupied.iter().map(|&j| r.means[j]).collect(),
            stationary,
            counts: occupied.iter().map(|&j| r.counts[j]).collect(),
            states: r
                .states
                .as_ref()
                .map(|s| s.iter().map(|&x| new_label[x]).collect()),
        });
    }
    if draws.is_empty() {
        return Err(Error::NoSuchModel(k_a));
    }
    Ok(ModalTrace {
        k_a,
        n: trace.n,
        draws,
    })
}

fn renormalized(k: usize, mut probs: Vec<f64>) -> Result<TransitionMatrix> {
    // Division by the row sum leaves rounding of order 1e-16 per entry.
    for i in 0..k {
        let row = &mut probs[i * k..(i + 1) * k];
        let s: f64 = row.iter().sum();
        row.iter_mut().for_each(|p| *p /= s);
    }
    TransitionMatrix::new(k, probs)
}

/// Orders states in every draw by ascending emission mean.
pub fn relabel(sub: &ModalTrace) -> ModalTrace {
    let draws = sub
        .draws
        .iter()
        .map(|d| {
            let mut perm: Vec<usize> = (0..sub.k_a).collect();
            perm.sort_by(|&a, &b| d.means[a].total_cmp(&d.means[b]));
            if perm.iter().enumerate().all(|(a, &b)| a == b) {
                return d.clone();
            }
            let mut inverse = vec![0; sub.k_a];
            for (a, &b) in perm.iter().enumerate() {
                inverse[b] = a;
            }
            ModalDraw {
                iteration: d.iteration,
                transition: d.transition.permuted(&perm),
                means: perm.iter().map(|&j| d.means[j]).collect(),
                stationary: perm.iter().map(|&j| d.stationary[j]).collect(),
                counts: perm.iter().map(|&j| d.counts[j]).collect(),
                states: d
                    .states
                    .as_ref()
                    .map(|s| s.iter().map(|&x| inverse[x]).collect()),
            }
        })
        .collect();
    ModalTrace {
        k_a: sub.k_a,
        n: sub.n,
        draws,
    }
}

/// Posterior mean with an equal-tailed 95% interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub lower: f64,
    pub upper: f64,
}

impl Estimate {
    pub fn from_draws(values: &[f64]) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::EmptyTrace);
        }
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        Ok(Self {
            mean: values.iter().sum::<f64>() / values.len() as f64,
            lower: quantile_sorted(&sorted, 0.025),
            upper: quantile_sorted(&sorted, 0.975),
        })
    }

    pub fn contains(&self, v: f64) -> bool {
        self.lower <= v && v <= self.upper
    }
}

/// Linear-interpolation quantile of sorted data (Hyndman–Fan type 7).
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateEstimate {
    /// 1-based label after relabeling.
    pub state: usize,
    pub mu: Estimate,
    pub gamma: Estimate,
}

/// Per-state estimates of `μ_k` and `γ_k`.
pub fn summarize(sub: &ModalTrace) -> Result<Vec<StateEstimate>> {
    if sub.is_empty() {
        return Err(Error::EmptyTrace);
    }
    (0..sub.k_a)
        .map(|k| {
            let mu: Vec<f64> = sub.draws.iter().map(|d| d.stationary[k]).collect();
            let gamma: Vec<f64> = sub.draws.iter().map(|d| d.means[k]).collect();
            Ok(StateEstimate {
                state: k + 1,
                mu: Estimate::from_draws(&mu)?,
                gamma: Estimate::from_draws(&gamma)?,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitMetrics {
    /// Share of time points whose MAP state matches the truth under the best
    /// label matching.
    pub reclass_pct: Option<f64>,
    /// `Σ_t |y_t − γ̂_{x̂_t}|`.
    pub mae: f64,
    /// `Σ_t (y_t − γ̂_{x̂_t})²`.
    pub mse: f64,
    /// MAP state per time point (0-based, relabeled order).
    #[serde(skip)]
    pub map_states: Vec<usize>,
}

/// Per-`t` most frequent allocation over draws that kept their allocations.
pub fn map_states(sub: &ModalTrace) -> Result<Vec<usize>> {
    let mut freq = vec![0u32; sub.n * sub.k_a];
    let mut any = false;
    for s in sub.draws.iter().filter_map(|d| d.states.as_ref()) {
        if s.len() != sub.n {
            return Err(Error::DimensionMismatch("allocation vector length differs from n".into()));
        }
        any = true;
        for (t, &x) in s.iter().enumerate() {
            freq[t * sub.k_a + x] += 1;
        }
    }
    if !any {
        return Err(Error::NoAllocations);
    }
    Ok(freq
        .chunks(sub.k_a)
        .map(|row| {
            let mut best = 0;
            for (j, &c) in row.iter().enumerate() {
                if c > row[best] {
                    best = j;
                }
            }
            best
        })
        .collect())
}

/// Largest number of positions on which `a` and `b` agree under a one-to-one
/// matching of their labels.
pub fn max_agreement(a: &[usize], b: &[usize]) -> usize {
    let ka = a.iter().max().map_or(0, |m| m + 1);
    let kb = b.iter().max().map_or(0, |m| m + 1);
    if ka == 0 || kb == 0 {
        return 0;
    }
    let mut agree = vec![vec![0i64; kb]; ka];
    for (&x, &z) in a.iter().zip(b) {
        agree[x][z] += 1;
    }
    let weights = if ka <= kb {
        Matrix::from_fn(ka, kb, |(i, j)| agree[i][j])
    } else {
        Matrix::from_fn(kb, ka, |(i, j)| agree[j][i])
    };
    kuhn_munkres(&weights).0 as usize
}

pub fn fit_metrics(y: &[f64], truth: Option<&[usize]>, sub: &ModalTrace) -> Result<FitMetrics> {
    if y.len() != sub.n {
        return Err(Error::DimensionMismatch(format!(
            "{} observations for a trace fitted to {}",
            y.len(),
            sub.n
        )));
    }
    if let Some(t) = truth {
        if t.len() != y.len() {
            return Err(Error::DimensionMismatch("truth and observations differ in length".into()));
        }
    }
    let x_hat = map_states(sub)?;
    let gamma_hat: Vec<f64> = summarize(sub)?.iter().map(|e| e.gamma.mean).collect();
    let (mut mae, mut mse) = (0.0, 0.0);
    for (&yt, &xt) in y.iter().zip(&x_hat) {
        let e = yt - gamma_hat[xt];
        mae += e.abs();
        mse += e * e;
    }
    let reclass_pct = truth.map(|t| max_agreement(&x_hat, t) as f64 / y.len() as f64);
    Ok(FitMetrics {
        reclass_pct,
        mae,
        mse,
        map_states: x_hat,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PredictiveCheck {
    /// Share of `y_t` inside the per-`t` central 95% predictive band.
    pub concordance: f64,
    /// Replicate average of `Σ_t |y_t − y_t^rep|`.
    pub mape: f64,
    /// Replicate average of `Σ_t (y_t − y_t^rep)²`.
    pub mspe: f64,
    pub replicates: usize,
}

/// Simulates `replicates` datasets, each from a uniformly drawn iteration.
///
/// Replicate `r` draws from stream `r` of `seed`.
pub fn posterior_predictive(
    y: &[f64],
    sub: &ModalTrace,
    replicates: usize,
    seed: u64,
) -> Result<PredictiveCheck> {
    if sub.is_empty() {
        return Err(Error::EmptyTrace);
    }
    if replicates == 0 || y.is_empty() {
        return Err(Error::InvalidConfig("need at least one replicate and one observation".into()));
    }
    let n = y.len();
    let sims = (0..replicates)
        .into_par_iter()
        .map(|r| {
            let mut rng = stream_rng(seed, r as u64);
            let d = &sub.draws[rand::Rng::random_range(&mut rng, 0..sub.len())];
            let params = HmmParams::new(d.transition.clone(), d.means.clone())?;
            Ok(simulate_with_rng(&params, n, &mut rng)?.0)
        })
        .collect::<Result<Vec<Vec<f64>>>>()?;

    let (mut abs, mut sq) = (0.0, 0.0);
    for s in &sims {
        for (a, b) in y.iter().zip(s) {
            let e = a - b;
            abs += e.abs();
            sq += e * e;
        }
    }
    let inside = (0..n)
        .into_par_iter()
        .filter(|&t| {
            let mut col: Vec<f64> = sims.iter().map(|s| s[t]).collect();
            col.sort_by(f64::total_cmp);
            let (lo, hi) = (quantile_sorted(&col, 0.025), quantile_sorted(&col, 0.975));
            lo <= y[t] && y[t] <= hi
        })
        .count();
    Ok(PredictiveCheck {
        concordance: inside as f64 / n as f64,
        mape: abs / replicates as f64,
        mspe: sq / replicates as f64,
        replicates,
    })
}

/// 2-D histogram of `(μ_k, γ_k)` pooled over all states and iterations.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityGrid {
    pub mu_centers: Vec<f64>,
    pub gamma_centers: Vec<f64>,
    /// Row-major over `(mu_bin, gamma_bin)`; integrates to one.
    pub density: Vec<f64>,
}

pub fn density_grid(trace: &McmcTrace, mu_bins: usize, gamma_bins: usize) -> Result<DensityGrid> {
    if trace.is_empty() {
        return Err(Error::EmptyTrace);
    }
    if mu_bins == 0 || gamma_bins == 0 {
        return Err(Error::InvalidConfig("density grid needs at least one bin per axis".into()));
    }
    let mut points = Vec::with_capacity(trace.len() * trace.k);
    for r in &trace.records {
        let mu = stationary_distribution(&r.transition)?;
        points.extend(mu.probs.iter().copied().zip(r.means.iter().copied()));
    }
    let (g_min, g_max) = points
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), p| (a.min(p.1), b.max(p.1)));
    let g_span = if g_max > g_min { g_max - g_min } else { 1.0 };
    let (mu_w, g_w) = (1.0 / mu_bins as f64, g_span / gamma_bins as f64);
    let mut counts = vec![0usize; mu_bins * gamma_bins];
    for &(m, g) in &points {
        let i = ((m / mu_w) as usize).min(mu_bins - 1);
        let j = (((g - g_min) / g_w) as usize).min(gamma_bins - 1);
        counts[i * gamma_bins + j] += 1;
    }
    let scale = 1.0 / (points.len() as f64 * mu_w * g_w);
    Ok(DensityGrid {
        mu_centers: (0..mu_bins).map(|i| (i as f64 + 0.5) * mu_w).collect(),
        gamma_centers: (0..gamma_bins).map(|j| g_min + (j as f64 + 0.5) * g_w).collect(),
        density: counts.iter().map(|&c| c as f64 * scale).collect(),
    })
}

impl DensityGrid {
    /// `mu_bin,gamma_bin,density` with bin centers.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["mu_bin", "gamma_bin", "density"])?;
        let g = self.gamma_centers.len();
        for (i, m) in self.mu_centers.iter().enumerate() {
            for (j, gc) in self.gamma_centers.iter().enumerate() {
                w.write_record([m.to_string(), gc.to_string(), self.density[i * g + j].to_string()])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// How the trace assigns a reference emission mean to label slots.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlotUsage {
    pub reference: f64,
    /// Share of iterations in which the most used slot carried the
    /// reference's cluster.
    pub dominant_share: f64,
    /// Slots that carried the cluster in at least 1% of iterations.
    pub slots_visited: usize,
}

/// For each reference mean, tracks which slot carries its cluster.
///
/// A slot belongs to the cluster of the reference nearest to its mean; the
/// carrier is the cluster member holding the most observations, so short
/// lived states with a handful of points do not count as moves. Without
/// label switching every cluster stays in one slot.
pub fn label_switching(trace: &McmcTrace, references: &[f64]) -> Result<Vec<SlotUsage>> {
    if trace.is_empty() {
        return Err(Error::EmptyTrace);
    }
    let nearest = |m: f64| {
        (0..references.len())
            .min_by(|&a, &b| (references[a] - m).abs().total_cmp(&(references[b] - m).abs()))
    };
    let mut hits = vec![vec![0usize; trace.k]; references.len()];
    let mut seen = vec![0usize; references.len()];
    for rec in &trace.records {
        let mut carrier: Vec<Option<usize>> = vec![None; references.len()];
        for j in (0..rec.k()).filter(|&j| rec.counts[j] > 0) {
            if let Some(r) = nearest(rec.means[j]) {
                if carrier[r].is_none_or(|c| rec.counts[j] > rec.counts[c]) {
                    carrier[r] = Some(j);
                }
            }
        }
        for (r, c) in carrier.into_iter().enumerate() {
            if let Some(j) = c {
                hits[r][j] += 1;
                seen[r] += 1;
            }
        }
    }
    Ok(references
        .iter()
        .zip(hits.iter().zip(&seen))
        .map(|(&reference, (h, &total))| {
            let total = total.max(1) as f64;
            SlotUsage {
                reference,
                dominant_share: *h.iter().max().unwrap_or(&0) as f64 / total,
                slots_visited: h.iter().filter(|&&c| c as f64 >= 0.01 * total).count(),
            }
        })
        .collect())
}

/// Everything reported for one fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub k_hat: usize,
    pub p_k_hat: f64,
    pub occupancy: BTreeMap<usize, f64>,
    pub kept_iterations: usize,
    pub modal_iterations: usize,
    pub estimates: Vec<StateEstimate>,
    pub reclass_pct: Option<f64>,
    pub mae: f64,
    pub mse: f64,
    pub concordance: f64,
    pub mape: f64,
    pub mspe: f64,
}

impl FitReport {
    /// `state,parameter,mean,lower,upper`.
    pub fn write_estimates_csv<W: Write>(&self, writer: W) -> Result<()> {
        write_estimates_csv(&self.estimates, writer)
    }
}

pub fn write_estimates_csv<W: Write>(estimates: &[StateEstimate], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["state", "parameter", "mean", "lower", "upper"])?;
    for e in estimates {
        for (name, v) in [("mu", e.mu), ("gamma", e.gamma)] {
            w.write_record([
                e.state.to_string(),
                name.to_string(),
                v.mean.to_string(),
                v.lower.to_string(),
                v.upper.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Modal model, summaries, fit errors and predictive check in one pass.
pub fn fit_report(
    y: &[f64],
    truth: Option<&[usize]>,
    trace: &McmcTrace,
    replicates: usize,
    seed: u64,
) -> Result<FitReport> {
    let profile = occupancy_profile(trace)?;
    let sub = relabel(&extract_modal_model(trace, profile.mode)?);
    let estimates = summarize(&sub)?;
    let fit = fit_metrics(y, truth, &sub)?;
    let pred = posterior_predictive(y, &sub, replicates, seed)?;
    Ok(FitReport {
        k_hat: profile.mode,
        p_k_hat: profile.proportion(profile.mode),
        occupancy: profile.distribution,
        kept_iterations: trace.len(),
        modal_iterations: sub.len(),
        estimates,
        reclass_pct: fit.reclass_pct,
        mae: fit.mae,
        mse: fit.mse,
        concordance: pred.concordance,
        mape: pred.mape,
        mspe: pred.mspe,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::observed_log_likelihood;
    use crate::rng::stream_rng;
    use crate::sampler::occupancy_counts;
    use crate::trace::TraceRecord;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand_distr::{Distribution, StandardNormal};

    fn record(it: u64, q: &[Vec<f64>], means: &[f64], states: Option<Vec<usize>>, counts: Vec<usize>) -> TraceRecord {
        TraceRecord {
            iteration: it,
            transition: TransitionMatrix::from_rows(q).unwrap(),
            means: means.to_vec(),
            occupied: counts.iter().filter(|&&c| c > 0).count(),
            counts,
            component: None,
            states,
        }
    }

    fn trace_with_ka(ka: &[usize]) -> McmcTrace {
        let k = 5;
        let q = vec![vec![0.2; 5]; 5];
        McmcTrace {
            k,
            n: 5,
            records: ka
                .iter()
                .enumerate()
                .map(|(i, &a)| {
                    let counts: Vec<usize> = (0..k).map(|j| usize::from(j < a)).collect();
                    record(i as u64 + 1, &q, &[0.0, 1.0, 2.0, 3.0, 4.0], None, counts)
                })
                .collect(),
        }
    }

    #[test]
    fn occupied_examples() {
        assert_eq!(occupied_states(&[0, 0, 0], 4).unwrap(), 1);
        assert_eq!(occupied_states(&[0, 2, 2, 1], 4).unwrap(), 3);
        assert_eq!(occupied_states(&[3, 1, 0, 2], 4).unwrap(), 4);
        assert!(occupied_states(&[4], 4).is_err());
    }

    #[test]
    fn profile_examples() {
        let p = occupancy_profile(&trace_with_ka(&[2; 10])).unwrap();
        assert_eq!((p.mode, p.proportion(2)), (2, 1.0));

        let mut ka = vec![3; 81];
        ka.extend([4; 17]);
        ka.extend([5; 2]);
        let p = occupancy_profile(&trace_with_ka(&ka)).unwrap();
        assert_eq!(p.mode, 3);
        assert_abs_diff_eq!(p.proportion(3), 0.81, epsilon = 1e-12);
        assert_abs_diff_eq!(p.distribution.values().sum::<f64>(), 1.0, epsilon = 1e-12);

        let p = occupancy_profile(&trace_with_ka(&[4, 3, 4, 3])).unwrap();
        assert_eq!(p.mode, 3);
        assert!(matches!(occupancy_profile(&McmcTrace::new(2, 1)), Err(Error::EmptyTrace)));
    }

    #[test]
    fn modal_extraction_counts() {
        let t = trace_with_ka(&[3, 4, 3, 3, 5]);
        assert_eq!(extract_modal_model(&t, 3).unwrap().len(), 3);
        assert_eq!(extract_modal_model(&trace_with_ka(&[2; 6]), 2).unwrap().len(), 6);
        assert!(matches!(extract_modal_model(&t, 1), Err(Error::NoSuchModel(1))));
    }

    #[test]
    fn compaction_keeps_occupied_parameters() {
        let q = vec![
            vec![0.5, 0.1, 0.4],
            vec![0.2, 0.2, 0.6],
            vec![0.3, 0.3, 0.4],
        ];
        let t = McmcTrace {
            k: 3,
            n: 4,
            records: vec![record(1, &q, &[7.0, -1.0, 2.0], Some(vec![2, 0, 0, 2]), vec![2, 0, 2])],
        };
        let sub = extract_modal_model(&t, 2).unwrap();
        let d = &sub.draws[0];
        assert_eq!(d.means, vec![7.0, 2.0]);
        assert_eq!(d.states.as_ref().unwrap(), &vec![1, 0, 0, 1]);
        assert_abs_diff_eq!(d.transition.get(0, 1), 0.4 / 0.9, epsilon = 1e-15);
        assert_abs_diff_eq!(d.stationary.iter().sum::<f64>(), 1.0, epsilon = 1e-12);

        let r = relabel(&sub);
        let d = &r.draws[0];
        assert_eq!(d.means, vec![2.0, 7.0]);
        assert_eq!(d.states.as_ref().unwrap(), &vec![0, 1, 1, 0]);
        assert_abs_diff_eq!(d.transition.get(1, 0), 0.4 / 0.9, epsilon = 1e-15);
        assert_eq!(relabel(&r), r);
    }

    #[test]
    fn relabel_two_state_transposition() {
        let q = vec![vec![0.9, 0.1], vec![0.3, 0.7]];
        let t = McmcTrace {
            k: 2,
            n: 2,
            records: vec![record(1, &q, &[3.0, -1.0], None, vec![1, 1])],
        };
        let r = relabel(&extract_modal_model(&t, 2).unwrap());
        let d = &r.draws[0];
        assert_eq!(d.means, vec![-1.0, 3.0]);
        assert_eq!(d.transition.rows(), vec![vec![0.7, 0.3], vec![0.1, 0.9]]);
        assert_abs_diff_eq!(d.stationary[0], 0.25, epsilon = 1e-12);
    }

    #[test]
    fn quantiles_of_normal_draws() {
        let mut rng = stream_rng(3, 0);
        let v: Vec<f64> = (0..10_000).map(|_| StandardNormal.sample(&mut rng)).collect();
        let e = Estimate::from_draws(&v).unwrap();
        assert!((e.lower + 1.96).abs() < 0.08 && (e.upper - 1.96).abs() < 0.08);
        let e = Estimate::from_draws(&[2.5; 7]).unwrap();
        assert_eq!((e.mean, e.lower, e.upper), (2.5, 2.5, 2.5));
        assert_eq!(quantile_sorted(&[1.0, 2.0, 3.0, 4.0], 0.5), 2.5);
    }

    fn single_draw_trace(means: &[f64], q: &[Vec<f64>], states: Vec<usize>) -> ModalTrace {
        let k = means.len();
        let counts = occupancy_counts(&states, k);
        let t = McmcTrace {
            k,
            n: states.len(),
            records: vec![record(1, q, means, Some(states), counts)],
        };
        extract_modal_model(&t, k).unwrap()
    }

    #[test]
    fn hand_computed_errors() {
        let sub = single_draw_trace(&[0.0, 10.0], &[vec![0.5, 0.5], vec![0.5, 0.5]], vec![0, 0, 1, 1]);
        let y = [1.0, -2.0, 9.0, 10.5];
        let f = fit_metrics(&y, Some(&[1, 1, 0, 0]), &sub).unwrap();
        assert_abs_diff_eq!(f.mae, 1.0 + 2.0 + 1.0 + 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(f.mse, 1.0 + 4.0 + 1.0 + 0.25, epsilon = 1e-12);
        assert_eq!(f.reclass_pct, Some(1.0));
    }

    #[test]
    fn single_state_mse_is_total_sum_of_squares() {
        let y = [1.0, 2.0, 4.0, 7.0];
        let ybar = 3.5;
        let sub = single_draw_trace(&[ybar], &[vec![1.0]], vec![0; 4]);
        let f = fit_metrics(&y, None, &sub).unwrap();
        let tss: f64 = y.iter().map(|v| (v - ybar).powi(2)).sum();
        assert_abs_diff_eq!(f.mse, tss, epsilon = 1e-12);
        assert!(fit_metrics(&y[..3], None, &sub).is_err());
    }

    #[test]
    fn agreement_handles_unequal_label_counts() {
        assert_eq!(max_agreement(&[0, 0, 1, 1, 2], &[1, 1, 0, 0, 0]), 4);
        assert_eq!(max_agreement(&[1, 1, 0, 0, 0], &[0, 0, 1, 1, 2]), 4);
    }

    #[test]
    fn single_replicate_mape_is_its_own_sum() {
        let sub = single_draw_trace(&[0.0, 5.0], &[vec![0.8, 0.2], vec![0.4, 0.6]], vec![0, 1, 1]);
        let y = [0.3, 4.0, 6.0];
        let pc = posterior_predictive(&y, &sub, 1, 17).unwrap();
        let mut rng = stream_rng(17, 0);
        let _: usize = rand::Rng::random_range(&mut rng, 0..1);
        let params = HmmParams::new(sub.draws[0].transition.clone(), sub.draws[0].means.clone()).unwrap();
        let rep = simulate_with_rng(&params, 3, &mut rng).unwrap().0;
        let expect: f64 = y.iter().zip(&rep).map(|(a, b)| (a - b).abs()).sum();
        assert_abs_diff_eq!(pc.mape, expect, epsilon = 1e-12);
    }

    #[test]
    fn well_specified_concordance_is_near_95() {
        let q = vec![vec![0.8, 0.2], vec![0.3, 0.7]];
        let params = HmmParams::new(TransitionMatrix::from_rows(&q).unwrap(), vec![-2.0, 2.0]).unwrap();
        // Misses cluster in time, so a short series is noisy; use n = 2000.
        for seed in 0..3 {
            let mut rng = stream_rng(seed, 1);
            let (y, x) = simulate_with_rng(&params, 2000, &mut rng).unwrap();
            let sub = single_draw_trace(&[-2.0, 2.0], &q, x);
            let pc = posterior_predictive(&y, &sub, 10_000, 3).unwrap();
            assert!((pc.concordance - 0.95).abs() < 0.02, "{}", pc.concordance);
        }
    }

    #[test]
    fn density_grid_integrates_to_one() {
        let t = trace_with_ka(&[3, 4, 5]);
        let g = density_grid(&t, 10, 8).unwrap();
        let area = 0.1 * (g.gamma_centers[1] - g.gamma_centers[0]);
        assert_abs_diff_eq!(g.density.iter().sum::<f64>() * area, 1.0, epsilon = 1e-9);
        let mut buf = Vec::new();
        g.write_csv(&mut buf).unwrap();
        assert!(String::from_utf8(buf).unwrap().starts_with("mu_bin,gamma_bin,density\n"));
    }

    #[test]
    fn fixed_slots_show_no_switching() {
        let q = vec![vec![0.5, 0.5], vec![0.5, 0.5]];
        let mut t = McmcTrace::new(2, 2);
        for i in 0..10 {
            t.records.push(record(i, &q, &[-5.0, 5.0], None, vec![1, 1]));
        }
        let u = label_switching(&t, &[-5.0, 5.0]).unwrap();
        assert!(u.iter().all(|s| s.dominant_share == 1.0 && s.slots_visited == 1));
        for i in 0..10 {
            t.records.push(record(i, &q, &[5.0, -5.0], None, vec![1, 1]));
        }
        let u = label_switching(&t, &[-5.0, 5.0]).unwrap();
        assert!(u.iter().all(|s| s.dominant_share == 0.5 && s.slots_visited == 2));
    }

    #[test]
    fn small_transient_states_are_not_switches() {
        let q = vec![vec![1.0 / 3.0; 3]; 3];
        let mut t = McmcTrace::new(3, 12);
        for i in 0..10 {
            let counts = if i % 2 == 0 { vec![10, 2, 0] } else { vec![12, 0, 0] };
            t.records.push(record(i, &q, &[5.0, 5.5, 0.0], None, counts));
        }
        let u = label_switching(&t, &[5.0]).unwrap();
        assert_eq!((u[0].dominant_share, u[0].slots_visited), (1.0, 1));
    }

    proptest! {
        #[test]
        fn occupancy_is_label_invariant(states in prop::collection::vec(0usize..5, 1..40), shift in 0usize..5) {
            let perm: Vec<usize> = states.iter().map(|&s| (s + shift) % 5).collect();
            prop_assert_eq!(occupied_states(&states, 5).unwrap(), occupied_states(&perm, 5).unwrap());
        }

        #[test]
        fn reclass_invariant_to_truth_relabeling(
            pairs in prop::collection::vec((0usize..3, 0usize..3), 1..40),
            shift in 1usize..3,
        ) {
            let (a, b): (Vec<usize>, Vec<usize>) = pairs.into_iter().unzip();
            let b2: Vec<usize> = b.iter().map(|&x| (x + shift) % 3).collect();
            prop_assert_eq!(max_agreement(&a, &b), max_agreement(&a, &b2));
        }

        #[test]
        fn relabel_is_idempotent_and_keeps_likelihood(
            means in prop::collection::vec(-10.0f64..10.0, 3),
            raw in prop::collection::vec(0.05f64..1.0, 9),
            y in prop::collection::vec(-10.0f64..10.0, 1..12),
        ) {
            let rows: Vec<Vec<f64>> = raw.chunks(3).map(|r| {
                let s: f64 = r.iter().sum();
                r.iter().map(|v| v / s).collect()
            }).collect();
            let t = McmcTrace { k: 3, n: 3, records: vec![record(1, &rows, &means, None, vec![1, 1, 1])] };
            let sub = extract_modal_model(&t, 3).unwrap();
            let once = relabel(&sub);
            prop_assert_eq!(&relabel(&once), &once);
            let ll = |d: &ModalDraw| {
                let p = HmmParams::new(d.transition.clone(), d.means.clone()).unwrap();
                let init = crate::model::StationaryDistribution { probs: d.stationary.clone() };
                observed_log_likelihood(&p, &y, &init).unwrap()
            };
            let (a, b) = (ll(&sub.draws[0]), ll(&once.draws[0]));
            prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
        }
    }
}
