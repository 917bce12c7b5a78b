//! Seeded random streams and the small samplers shared by the modules.
//!
//! Every logical task (a tempered chain, the swap proposals, a predictive
//! replicate) owns one ChaCha stream keyed by `(seed, stream)`, so results do
//! not depend on how work is scheduled across threads.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};

pub type StreamRng = ChaCha8Rng;

/// Stream reserved for tempering swap decisions.
pub const SWAP_STREAM: u64 = u64::MAX;

/// Stream reserved for data simulation.
pub const DATA_STREAM: u64 = u64::MAX - 1;

/// Independent generator for `(seed, stream)`.
pub fn stream_rng(seed: u64, stream: u64) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Derives a child seed, e.g. for replicate `index` of a study.
pub fn derive_seed(master: u64, index: u64, salt: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(master ^ salt.rotate_left(17));
    rng.set_stream(index);
    rng.next_u64()
}

/// Draws an index from unnormalized non-negative weights by inversion.
///
/// `total` must be the sum of `weights` and strictly positive.
pub fn sample_weighted<R: Rng + ?Sized>(weights: &[f64], total: f64, rng: &mut R) -> usize {
    let u = rng.random::<f64>() * total;
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (i, &w) in weights.iter().enumerate() {
        if w > 0.0 {
            acc += w;
            last_positive = i;
            if u < acc {
                return i;
            }
        }
    }
    // Rounding can leave u marginally above the accumulated total.
    last_positive
}

/// Log of a Gamma(shape, 1) draw, accurate even when the draw underflows.
///
/// Shapes below one use the boost `G(a) = G(a + 1) * U^(1/a)`, evaluated in
/// log space; for shapes like 1e-4 the linear draw is routinely below the
/// smallest positive double.
pub fn ln_gamma_draw<R: Rng + ?Sized>(shape: f64, rng: &mut R) -> f64 {
    debug_assert!(shape > 0.0);
    if shape >= 1.0 {
        let g: f64 = Gamma::new(shape, 1.0).expect("positive shape").sample(rng);
        g.ln()
    } else {
        let g: f64 = Gamma::new(shape + 1.0, 1.0).expect("positive shape").sample(rng);
        // 1 - U lies in (0, 1], so the log is finite.
        let u: f64 = 1.0 - rng.random::<f64>();
        g.ln() + u.ln() / shape
    }
}

/// Log-space Dirichlet draw: returns normalized log-probabilities.
pub fn ln_dirichlet_draw<R: Rng + ?Sized>(alpha: &[f64], rng: &mut R, out: &mut [f64]) {
    debug_assert_eq!(alpha.len(), out.len());
    for (o, &a) in out.iter_mut().zip(alpha) {
        *o = ln_gamma_draw(a, rng);
    }
    let lse = log_sum_exp(out);
    for o in out.iter_mut() {
        *o -= lse;
    }
}

/// `log(sum(exp(v)))`, stable for large negative entries.
pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if max == f64::INFINITY {
        return f64::INFINITY;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}
