#![allow(dead_code)]
//! Test-only reference implementations and instance generators.

use mtss::action::{Action, Observation};
use mtss::catalog::ItemCatalog;
use mtss::history::{InteractionHistory, ProblemKind};
use mtss::rng::StreamRng;
use nalgebra::{DMatrix, DVector};
use rand::seq::index::sample;
use rand::Rng;
use rand_distr::StandardNormal;

/// A random semi-bandit problem with its raw observation log.
pub struct LmmCase {
    pub mu: Vec<f64>,
    pub sigma: DMatrix<f64>,
    pub sigma1: f64,
    pub sigma2: f64,
    pub catalog: ItemCatalog,
    pub history: InteractionHistory,
    /// `(item, reward)` for every individual observation, in order.
    pub observations: Vec<(usize, f64)>,
}

pub fn normal(rng: &mut StreamRng) -> f64 {
    rng.sample(StandardNormal)
}

pub fn random_spd(d: usize, rng: &mut StreamRng) -> DMatrix<f64> {
    let a = DMatrix::from_fn(d, d, |_, _| normal(rng));
    &a * a.transpose() / d as f64 + DMatrix::identity(d, d) * 0.3
}

/// Feature rows with an intercept, optionally scaled into the unit ball.
pub fn random_features(n: usize, d: usize, unit_ball: bool, rng: &mut StreamRng) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| {
            let mut x: Vec<f64> = std::iter::once(1.0).chain((1..d).map(|_| normal(rng))).collect();
            if unit_ball {
                let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
                let r: f64 = rng.random::<f64>();
                x.iter_mut().for_each(|v| *v *= r / norm);
            }
            x
        })
        .collect()
}

/// Random subsets of size at most `k` per round with Gaussian rewards.
pub fn random_history(
    n: usize,
    k: usize,
    rounds: usize,
    rng: &mut StreamRng,
) -> (InteractionHistory, Vec<(usize, f64)>) {
    let mut h = InteractionHistory::new(ProblemKind::SemiBandit, n);
    let mut obs = Vec::new();
    for _ in 0..rounds {
        let size = rng.random_range(1..=k.min(n));
        let items = sample(rng, n, size).into_vec();
        let rewards: Vec<f64> = items.iter().map(|_| 2.0 * normal(rng)).collect();
        obs.extend(items.iter().copied().zip(rewards.iter().copied()));
        h.record(Action::Subset(items), Observation::SemiBandit(rewards))
            .unwrap();
    }
    (h, obs)
}

pub fn random_lmm_case(max_n: usize, max_d: usize, max_t: usize, rng: &mut StreamRng) -> LmmCase {
    let n = rng.random_range(1..=max_n);
    let d = rng.random_range(1..=max_d);
    let t = rng.random_range(0..=max_t);
    let k = rng.random_range(1..=n);
    let mu: Vec<f64> = (0..d).map(|_| normal(rng)).collect();
    let sigma = random_spd(d, rng);
    let sigma1 = rng.random_range(0.2..2.0);
    let sigma2 = rng.random_range(0.3..2.0);
    let catalog = ItemCatalog::new(random_features(n, d, false, rng)).unwrap();
    let (history, observations) = random_history(n, k, t, rng);
    LmmCase {
        mu,
        sigma,
        sigma1,
        sigma2,
        catalog,
        history,
        observations,
    }
}

/// Dense posterior of gamma in observation space:
/// `V = sigma2^2 I + Phi Sigma Phi^T + sigma1^2 Z Z^T`,
/// `mean = mu + Sigma Phi^T V^{-1} (Y - Phi mu)`, `cov = Sigma - Sigma Phi^T V^{-1} Phi Sigma`.
pub fn dense_gamma_posterior(case: &LmmCase, sigma1: f64) -> (DVector<f64>, DMatrix<f64>) {
    let (phi, y, v) = observation_space(case, sigma1);
    let mu = DVector::from_column_slice(&case.mu);
    if y.is_empty() {
        return (mu, case.sigma.clone());
    }
    let vinv = v.try_inverse().expect("V invertible");
    let gain = &case.sigma * phi.transpose() * &vinv;
    let mean = &mu + &gain * (&y - &phi * &mu);
    let cov = &case.sigma - &gain * &phi * &case.sigma;
    (mean, cov)
}

fn observation_space(case: &LmmCase, sigma1: f64) -> (DMatrix<f64>, DVector<f64>, DMatrix<f64>) {
    let c = case.observations.len();
    let d = case.mu.len();
    let phi = DMatrix::from_fn(c, d, |j, k| case.catalog.features(case.observations[j].0)[k]);
    let y = DVector::from_iterator(c, case.observations.iter().map(|o| o.1));
    let same = DMatrix::from_fn(c, c, |a, b| {
        if case.observations[a].0 == case.observations[b].0 {
            1.0
        } else {
            0.0
        }
    });
    let v =
        DMatrix::identity(c, c) * case.sigma2.powi(2) + &phi * &case.sigma * phi.transpose() + same * sigma1.powi(2);
    (phi, y, v)
}

/// Dense joint posterior of theta: prior `N(X mu, X Sigma X^T + sigma1^2 I)`,
/// conditioned on all observations.
pub fn dense_theta_posterior(case: &LmmCase) -> (DVector<f64>, DMatrix<f64>) {
    let n = case.catalog.n_items();
    let d = case.mu.len();
    let x = DMatrix::from_fn(n, d, |i, k| case.catalog.features(i)[k]);
    let mu = DVector::from_column_slice(&case.mu);
    let prior_mean = &x * &mu;
    let prior_cov = &x * &case.sigma * x.transpose() + DMatrix::identity(n, n) * case.sigma1.powi(2);
    if case.observations.is_empty() {
        return (prior_mean, prior_cov);
    }
    let (phi, y, v) = observation_space(case, case.sigma1);
    let c = case.observations.len();
    let z = DMatrix::from_fn(n, c, |i, j| if case.observations[j].0 == i { 1.0 } else { 0.0 });
    let cross = &x * &case.sigma * phi.transpose() + z * case.sigma1.powi(2);
    let vinv = v.try_inverse().expect("V invertible");
    let mean = &prior_mean + &cross * &vinv * (&y - &phi * &mu);
    let cov = prior_cov - &cross * &vinv * cross.transpose();
    (mean, cov)
}

/// `max |a - b| / max(max |b|, floor)`.
pub fn rel_err(a: &[f64], b: &[f64], floor: f64) -> f64 {
    assert_eq!(a.len(), b.len());
    let scale = b.iter().fold(floor, |m, v| m.max(v.abs()));
    a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs())) / scale
}

/// Every subset of `0..n` with at most `k` elements, in lexicographic bitmask order.
pub fn subsets_up_to(n: usize, k: usize) -> Vec<Vec<usize>> {
    (0u32..1 << n)
        .filter(|m| m.count_ones() as usize <= k)
        .map(|m| (0..n).filter(|i| m >> i & 1 == 1).collect())
        .collect()
}

/// Best assortment by exhaustive enumeration.
pub fn brute_force_assortment(v: &[f64], eta: &[f64], k: usize) -> (Vec<usize>, f64) {
    let value = |s: &[usize]| {
        let num: f64 = s.iter().map(|&i| eta[i] * v[i]).sum();
        num / (1.0 + s.iter().map(|&i| v[i]).sum::<f64>())
    };
    let mut best = (Vec::new(), 0.0);
    for s in subsets_up_to(v.len(), k) {
        let r = value(&s);
        if r > best.1 {
            best = (s, r);
        }
    }
    best
}

/// Posterior mean of gamma for the 1-D Beta-Bernoulli case by quadrature on a grid:
/// `p(gamma) ∝ N(gamma; 0, prior_var) B(a + s, b + f) / B(a, b)`, `a = psi logistic(gamma)`.
pub fn grid_posterior_mean_1d(psi: f64, prior_var: f64, successes: f64, failures: f64) -> f64 {
    use statrs::function::gamma::ln_gamma;
    let lnb = |a: f64, b: f64| ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b);
    let pts = 2001;
    let (lo, hi) = (-6.0, 6.0);
    let logs: Vec<(f64, f64)> = (0..pts)
        .map(|j| {
            let g = lo + (hi - lo) * j as f64 / (pts - 1) as f64;
            let m = 1.0 / (1.0 + (-g).exp());
            let (a, b) = (psi * m, psi * (1.0 - m));
            (
                g,
                -0.5 * g * g / prior_var + lnb(a + successes, b + failures) - lnb(a, b),
            )
        })
        .collect();
    let max = logs.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
    let (num, den) = logs.iter().fold((0.0, 0.0), |(n, d), (g, l)| {
        let w = (l - max).exp();
        (n + g * w, d + w)
    });
    num / den
}
