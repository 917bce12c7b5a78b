//! Oracles shared by the integration tests: the one-observation, two-state
//! toy posterior by quadrature, brute-force path enumeration, and KS distance.

#![allow(dead_code)]

use hmm_overfit::{EmissionPrior, PriorStructure};
use statrs::distribution::{ContinuousCDF, Normal};

/// The toy model: one observation, K = 2, Column prior with `ᾱ = 3`,
/// `α̲ = 1`, and a `N(0, 4)` prior on both means.
pub struct Toy {
    pub y: f64,
    pub alpha_bar: f64,
    pub alpha_low: f64,
    pub prior: EmissionPrior,
}

impl Default for Toy {
    fn default() -> Self {
        Self {
            y: 1.0,
            alpha_bar: 3.0,
            alpha_low: 1.0,
            prior: EmissionPrior::new(0.0, 4.0).unwrap(),
        }
    }
}

/// Marginal posterior CDFs of the toy model on a grid.
pub struct ToyPosterior {
    /// Right edges of the `q_{1,1}` cells and the CDF there.
    pub q11_edges: Vec<f64>,
    pub q11_cdf: Vec<f64>,
    /// Posterior probability that `x_1 = 1`.
    pub w1: f64,
    pub gamma_post: Normal,
    pub gamma_prior: Normal,
}

impl Toy {
    pub fn structure(&self) -> PriorStructure {
        PriorStructure::column(2, self.alpha_bar, self.alpha_low).unwrap()
    }

    /// 2-D midpoint quadrature over `(q_{1,1}, q_{2,1})`, with the means
    /// integrated out analytically.
    pub fn posterior(&self, grid: usize) -> ToyPosterior {
        // Column prior: both rows Dirichlet(ᾱ, α̲), so q_{1,1} and q_{2,1}
        // are Beta(ᾱ, α̲).
        let beta = |u: f64| u.powf(self.alpha_bar - 1.0) * (1.0 - u).powf(self.alpha_low - 1.0);
        let (m0, v0) = (self.prior.mean0, self.prior.var0);
        // p(y | x_1 = j) after integrating γ_j; identical for both states.
        let evidence = |_: usize| {
            let v = v0 + 1.0;
            (-(self.y - m0).powi(2) / (2.0 * v)).exp() / (2.0 * std::f64::consts::PI * v).sqrt()
        };
        let h = 1.0 / grid as f64;
        let mut q11_mass = vec![0.0; grid];
        let mut w = [0.0; 2];
        for a in 0..grid {
            let u = (a as f64 + 0.5) * h;
            for b in 0..grid {
                let v = (b as f64 + 0.5) * h;
                let prior = beta(u) * beta(v);
                // Stationary law of [[u, 1-u], [v, 1-v]].
                let mu1 = v / (1.0 - u + v);
                let joint = [prior * mu1 * evidence(0), prior * (1.0 - mu1) * evidence(1)];
                q11_mass[a] += joint[0] + joint[1];
                w[0] += joint[0];
                w[1] += joint[1];
            }
        }
        let total: f64 = q11_mass.iter().sum();
        let mut acc = 0.0;
        let q11_cdf = q11_mass
            .iter()
            .map(|m| {
                acc += m / total;
                acc
            })
            .collect();
        let post_var = 1.0 / (1.0 / v0 + 1.0);
        ToyPosterior {
            q11_edges: (1..=grid).map(|a| a as f64 * h).collect(),
            q11_cdf,
            w1: w[0] / (w[0] + w[1]),
            gamma_post: Normal::new(post_var * (m0 / v0 + self.y), post_var.sqrt()).unwrap(),
            gamma_prior: Normal::new(m0, v0.sqrt()).unwrap(),
        }
    }
}

impl ToyPosterior {
    pub fn q11(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        if x >= 1.0 {
            return 1.0;
        }
        let h = self.q11_edges[0];
        let i = ((x / h).floor() as usize).min(self.q11_cdf.len() - 1);
        let lo = if i == 0 { 0.0 } else { self.q11_cdf[i - 1] };
        lo + (self.q11_cdf[i] - lo) * (x / h - i as f64)
    }

    pub fn gamma1(&self, x: f64) -> f64 {
        self.w1 * self.gamma_post.cdf(x) + (1.0 - self.w1) * self.gamma_prior.cdf(x)
    }
}

/// Kolmogorov–Smirnov distance between a sample and a continuous CDF.
pub fn ks_distance(mut sample: Vec<f64>, cdf: impl Fn(f64) -> f64) -> f64 {
    sample.sort_by(f64::total_cmp);
    let n = sample.len() as f64;
    sample
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}

/// Every path of length `n` over `k` states, first coordinate fastest.
pub fn all_paths(n: usize, k: usize) -> Vec<Vec<usize>> {
    let total = k.pow(n as u32);
    (0..total)
        .map(|mut code| {
            (0..n)
                .map(|_| {
                    let s = code % k;
                    code /= k;
                    s
                })
                .collect()
        })
        .collect()
}

/// Index of `path` in [`all_paths`] order.
pub fn path_index(path: &[usize], k: usize) -> usize {
    path.iter().rev().fold(0, |acc, &s| acc * k + s)
}

/// `log[ init(x_1) Π q(x_t, x_{t+1}) Π N(y_t; m_{x_t}, 1) ]`, written out
/// independently of the library.
pub fn ln_joint(path: &[usize], y: &[f64], q: &[Vec<f64>], means: &[f64], init: &[f64]) -> f64 {
    let ln_norm = |y: f64, m: f64| -0.5 * (2.0 * std::f64::consts::PI).ln() - 0.5 * (y - m) * (y - m);
    let mut l = init[path[0]].ln() + ln_norm(y[0], means[path[0]]);
    for t in 1..path.len() {
        l += q[path[t - 1]][path[t]].ln() + ln_norm(y[t], means[path[t]]);
    }
    l
}

pub fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Exact stationary law of a 2×2 or 3×3 chain by Cramer's rule on
/// `μ(Q − I) = 0, Σμ = 1`.
pub fn stationary_small(q: &[Vec<f64>]) -> Vec<f64> {
    let k = q.len();
    match k {
        1 => vec![1.0],
        2 => {
            let (a, b) = (q[0][1], q[1][0]);
            vec![b / (a + b), a / (a + b)]
        }
        3 => {
            // Unnormalized solution from the cofactors of I − Q.
            let m = |i: usize, j: usize| if i == j { 1.0 - q[i][j] } else { -q[i][j] };
            let minor = |r: usize| {
                let idx: Vec<usize> = (0..3).filter(|&i| i != r).collect();
                m(idx[0], idx[0]) * m(idx[1], idx[1]) - m(idx[0], idx[1]) * m(idx[1], idx[0])
            };
            let raw: Vec<f64> = (0..3).map(minor).collect();
            let s: f64 = raw.iter().sum();
            raw.iter().map(|r| r / s).collect()
        }
        _ => panic!("only K <= 3"),
    }
}
