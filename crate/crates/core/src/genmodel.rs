//! Beta-logistic generalization models.
//!
//! `theta_i ~ Beta(m_i, psi)` in mean-precision form, i.e. shape parameters
//! `(m_i psi, (1 - m_i) psi)`, with `m_i = logistic(x_i^T gamma)` (plain link)
//! or `(logistic(x_i^T gamma) + 1) / 2` (shifted link, mean in (1/2, 1)).
//! Bernoulli (cascade) and Geometric on {0, 1, ...} (MNL epochs) observations
//! are both conjugate. gamma is sampled with a Metropolis-within-Gibbs chain.

use rand::{Rng, RngCore};
use rand_distr::{Beta, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::belief::GaussianBelief;
use crate::catalog::ItemCatalog;
use crate::error::{invalid, Result};
use crate::history::{ProblemKind, SufficientStats};
use crate::rng::item_stream;

/// Draws are kept inside `[THETA_FLOOR, 1 - THETA_FLOOR]`.
pub const THETA_FLOOR: f64 = 1e-12;

/// Numerically stable logistic function.
pub fn logistic(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + e^x)` without overflow.
fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Link {
    /// mean = logistic(z)
    Plain,
    /// mean = (logistic(z) + 1) / 2
    Shifted,
}

impl Link {
    pub fn mean(self, z: f64) -> f64 {
        match self {
            Link::Plain => logistic(z),
            Link::Shifted => 0.5 * (1.0 + logistic(z)),
        }
    }

    /// `1 - mean(z)`, computed without cancellation.
    pub fn complement(self, z: f64) -> f64 {
        match self {
            Link::Plain => logistic(-z),
            Link::Shifted => 0.5 * logistic(-z),
        }
    }

    pub fn ln_mean(self, z: f64) -> f64 {
        match self {
            Link::Plain => -softplus(-z),
            Link::Shifted => (1.0 + logistic(z)).ln() - std::f64::consts::LN_2,
        }
    }

    pub fn ln_complement(self, z: f64) -> f64 {
        match self {
            Link::Plain => -softplus(z),
            Link::Shifted => -softplus(z) - std::f64::consts::LN_2,
        }
    }
}

/// Which conjugate likelihood the per-item statistics carry.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Family {
    Bernoulli,
    Geometric,
}

impl Family {
    pub fn for_problem(kind: ProblemKind) -> Result<Self> {
        match kind {
            ProblemKind::Cascade => Ok(Family::Bernoulli),
            ProblemKind::Mnl => Ok(Family::Geometric),
            ProblemKind::SemiBandit => Err(invalid("Beta models need cascade or MNL statistics")),
        }
    }

    /// `(added to alpha, added to beta)` for item `i`.
    fn counts(self, stats: &SufficientStats, i: usize) -> (f64, f64) {
        match self {
            Family::Bernoulli => (stats.successes(i) as f64, stats.failures(i) as f64),
            Family::Geometric => (stats.epochs(i) as f64, stats.purchases(i) as f64),
        }
    }
}

#[derive(Debug, Clone)]
pub struct BetaLogisticSpec {
    pub psi: f64,
    pub link: Link,
    pub gamma_prior: GaussianBelief,
}

impl BetaLogisticSpec {
    pub fn new(psi: f64, link: Link, gamma_prior: GaussianBelief) -> Result<Self> {
        if !(psi > 0.0 && psi.is_finite()) {
            return Err(invalid("psi must be positive"));
        }
        Ok(Self { psi, link, gamma_prior })
    }

    pub fn with_psi(&self, psi: f64) -> Result<Self> {
        Self::new(psi, self.link, self.gamma_prior.clone())
    }

    pub fn dim(&self) -> usize {
        self.gamma_prior.dim()
    }

    /// Prior shape parameters at linear score `z`.
    pub fn prior_shapes(&self, z: f64) -> (f64, f64) {
        let a = (self.link.mean(z) * self.psi).max(f64::MIN_POSITIVE);
        let b = (self.link.complement(z) * self.psi).max(f64::MIN_POSITIVE);
        (a, b)
    }
}

/// Per-item Beta shape parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct BetaBelief {
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
}

impl BetaBelief {
    pub fn uniform(n_items: usize) -> Self {
        Self {
            alpha: vec![1.0; n_items],
            beta: vec![1.0; n_items],
        }
    }

    pub fn update_bernoulli(&mut self, item: usize, success: bool) {
        if success {
            self.alpha[item] += 1.0;
        } else {
            self.beta[item] += 1.0;
        }
    }

    /// One epoch with `purchases` picks of the item (Geometric on {0, 1, ...}).
    pub fn update_geometric(&mut self, item: usize, purchases: u64) {
        self.alpha[item] += 1.0;
        self.beta[item] += purchases as f64;
    }

    /// Fold in everything recorded in `stats`.
    pub fn absorb(&mut self, stats: &SufficientStats) -> Result<()> {
        let family = Family::for_problem(stats.kind())?;
        for i in stats.observed_items() {
            let (a, b) = family.counts(stats, i);
            self.alpha[i] += a;
            self.beta[i] += b;
        }
        Ok(())
    }

    pub fn mean(&self, i: usize) -> f64 {
        self.alpha[i] / (self.alpha[i] + self.beta[i])
    }
}

/// `alpha_i = m_i psi`, `beta_i = (1 - m_i) psi`.
pub fn prior_from_gamma(spec: &BetaLogisticSpec, catalog: &ItemCatalog, gamma: &[f64]) -> BetaBelief {
    let (alpha, beta) = (0..catalog.n_items())
        .map(|i| spec.prior_shapes(catalog.linear_score(i, gamma)))
        .unzip();
    BetaBelief { alpha, beta }
}

/// Counter for draws that landed on (or past) the boundary of (0, 1).
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ClampStats {
    pub draws: u64,
    pub clamped: u64,
}

impl ClampStats {
    pub fn fraction(&self) -> f64 {
        if self.draws == 0 {
            0.0
        } else {
            self.clamped as f64 / self.draws as f64
        }
    }
}

/// Beta draw clamped into `[THETA_FLOOR, 1 - THETA_FLOOR]`.
pub fn sample_beta<R: Rng + ?Sized>(a: f64, b: f64, rng: &mut R, clamps: &mut ClampStats) -> f64 {
    clamps.draws += 1;
    let x = match Beta::new(a, b) {
        Ok(dist) => dist.sample(rng),
        Err(_) => f64::NAN,
    };
    let x = if x.is_finite() { x } else { a / (a + b) };
    if !(THETA_FLOOR..=1.0 - THETA_FLOOR).contains(&x) {
        clamps.clamped += 1;
        x.clamp(THETA_FLOOR, 1.0 - THETA_FLOOR)
    } else {
        x
    }
}

/// Independent conjugate draws of every theta_i given gamma and the data.
pub fn sample_theta_given_gamma<R: Rng + ?Sized>(
    spec: &BetaLogisticSpec,
    catalog: &ItemCatalog,
    stats: &SufficientStats,
    gamma: &[f64],
    rng: &mut R,
) -> Result<(Vec<f64>, ClampStats)> {
    let family = Family::for_problem(stats.kind())?;
    let mut clamps = ClampStats::default();
    let draws = (0..catalog.n_items())
        .map(|i| {
            let (a0, b0) = spec.prior_shapes(catalog.linear_score(i, gamma));
            let (da, db) = family.counts(stats, i);
            sample_beta(a0 + da, b0 + db, rng, &mut clamps)
        })
        .collect();
    Ok((draws, clamps))
}

/// Same law as [`sample_theta_given_gamma`], but item `i` draws from its own
/// stream addressed by `(seed, item id, slot)`.
pub fn sample_theta_given_gamma_streams(
    spec: &BetaLogisticSpec,
    catalog: &ItemCatalog,
    stats: &SufficientStats,
    gamma: &[f64],
    seed: u64,
    slot: u64,
    clamps: &mut ClampStats,
) -> Result<Vec<f64>> {
    let family = Family::for_problem(stats.kind())?;
    Ok((0..catalog.n_items())
        .map(|i| {
            let (a0, b0) = spec.prior_shapes(catalog.linear_score(i, gamma));
            let (da, db) = family.counts(stats, i);
            let mut rng = item_stream(seed, "theta", catalog.ids()[i], slot);
            sample_beta(a0 + da, b0 + db, &mut rng, clamps)
        })
        .collect())
}

fn ln_beta_fn(a: f64, b: f64) -> f64 {
    ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b)
}

/// Log Beta density with shapes `(a, b)` at `theta`, given `ln theta` and `ln(1 - theta)`.
fn ln_beta_pdf(a: f64, b: f64, ln_t: f64, ln_1mt: f64) -> f64 {
    (a - 1.0) * ln_t + (b - 1.0) * ln_1mt - ln_beta_fn(a, b)
}

/// Log marginal likelihood of one item's data under `Beta(a, b)` with theta
/// integrated out: `ln B(a + da, b + db) - ln B(a, b)`.
pub fn ln_beta_marginal(a: f64, b: f64, da: f64, db: f64) -> f64 {
    if da == 0.0 && db == 0.0 {
        return 0.0;
    }
    ln_beta_fn(a + da, b + db) - ln_beta_fn(a, b)
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct GammaSamplerConfig {
    pub n_burnin: usize,
    pub n_keep: usize,
    /// Initial random-walk step; `None` means `0.1 / sqrt(d)`.
    pub proposal_scale: Option<f64>,
    pub adapt_target: f64,
    /// Redraw the theta block before every gamma step (otherwise once per call).
    pub gibbs_theta_refresh: bool,
    /// Iterations per warm-started call after the first.
    pub refresh_iters: usize,
}

impl Default for GammaSamplerConfig {
    fn default() -> Self {
        Self {
            n_burnin: 500,
            n_keep: 500,
            proposal_scale: None,
            adapt_target: 0.3,
            gibbs_theta_refresh: true,
            refresh_iters: 50,
        }
    }
}

impl GammaSamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_keep == 0 {
            return Err(invalid("n_keep must be at least 1"));
        }
        if let Some(s) = self.proposal_scale {
            if !(s > 0.0) {
                return Err(invalid("proposal_scale must be positive"));
            }
        }
        if !(self.adapt_target > 0.0 && self.adapt_target < 1.0) {
            return Err(invalid("adapt_target must lie in (0, 1)"));
        }
        Ok(())
    }
}

/// Target of the chain.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChainMode {
    /// gamma and theta jointly under the hierarchical model.
    Hierarchical,
    /// theta_i = link(x_i^T gamma) exactly (feature-determined model).
    Deterministic,
}

const ADAPT_WINDOW: u64 = 25;

/// Persistent Metropolis-within-Gibbs chain over gamma.
///
/// The first call runs `n_burnin` adaptive iterations followed by `n_keep`
/// iterations; later calls warm-start from the stored state and run
/// `refresh_iters` iterations. Items without observations drop out of the
/// target: their theta integrates to one, so the gamma marginal is unchanged.
#[derive(Debug, Clone)]
pub struct GammaChain {
    mode: ChainMode,
    config: GammaSamplerConfig,
    seed: u64,
    gamma: Vec<f64>,
    log_scale: f64,
    started: bool,
    iteration: u64,
    proposed: u64,
    accepted: u64,
    clamps: ClampStats,
    kept: Vec<Vec<f64>>,
}

struct ItemData {
    idx: usize,
    x: Vec<f64>,
    da: f64,
    db: f64,
    id: u64,
    ln_t: f64,
    ln_1mt: f64,
}

impl GammaChain {
    pub fn new(mode: ChainMode, config: GammaSamplerConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            mode,
            config,
            seed,
            gamma: Vec::new(),
            log_scale: 0.0,
            started: false,
            iteration: 0,
            proposed: 0,
            accepted: 0,
            clamps: ClampStats::default(),
            kept: Vec::new(),
        })
    }

    pub fn state(&self) -> &[f64] {
        &self.gamma
    }

    pub fn acceptance_rate(&self) -> f64 {
        if self.proposed == 0 {
            0.0
        } else {
            self.accepted as f64 / self.proposed as f64
        }
    }

    pub fn proposal_scale(&self) -> f64 {
        self.log_scale.exp()
    }

    pub fn clamp_stats(&self) -> ClampStats {
        self.clamps
    }

    pub fn iterations(&self) -> u64 {
        self.iteration
    }

    /// gamma states visited by the last call (post burn-in).
    pub fn kept(&self) -> &[Vec<f64>] {
        &self.kept
    }

    fn log_target(&self, spec: &BetaLogisticSpec, data: &[ItemData], gamma: &[f64]) -> Result<f64> {
        let mut lp = spec.gamma_prior.log_density(gamma)?;
        for it in data {
            let z: f64 = it.x.iter().zip(gamma).map(|(a, b)| a * b).sum();
            lp += match self.mode {
                ChainMode::Hierarchical => {
                    let (a, b) = spec.prior_shapes(z);
                    ln_beta_pdf(a, b, it.ln_t, it.ln_1mt)
                }
                ChainMode::Deterministic => it.da * spec.link.ln_mean(z) + it.db * spec.link.ln_complement(z),
            };
        }
        Ok(lp)
    }

    fn refresh_theta(&mut self, spec: &BetaLogisticSpec, data: &mut [ItemData]) {
        for it in data.iter_mut() {
            let z: f64 = it.x.iter().zip(&self.gamma).map(|(a, b)| a * b).sum();
            let (a0, b0) = spec.prior_shapes(z);
            let mut rng = item_stream(self.seed, "mcmc/theta", it.id, self.iteration);
            let t = sample_beta(a0 + it.da, b0 + it.db, &mut rng, &mut self.clamps);
            it.ln_t = t.ln();
            it.ln_1mt = (-t).ln_1p();
        }
    }

    /// Advance the chain and return its final gamma.
    pub fn advance<R: Rng + ?Sized>(
        &mut self,
        spec: &BetaLogisticSpec,
        catalog: &ItemCatalog,
        stats: &SufficientStats,
        rng: &mut R,
    ) -> Result<Vec<f64>> {
        let family = Family::for_problem(stats.kind())?;
        if catalog.dim() != spec.dim() {
            return Err(invalid("feature dimension differs from prior dimension"));
        }
        let mut data: Vec<ItemData> = stats
            .observed_items()
            .map(|i| {
                let (da, db) = family.counts(stats, i);
                ItemData {
                    idx: i,
                    x: catalog.features(i).to_vec(),
                    da,
                    db,
                    id: catalog.ids()[i],
                    ln_t: 0.0,
                    ln_1mt: 0.0,
                }
            })
            .collect();
        debug_assert!(data.iter().all(|d| d.idx < catalog.n_items()));

        let (burnin, keep) = if self.started {
            (0, self.config.refresh_iters.max(1))
        } else {
            // Start from a prior draw so that with no data every state is
            // exactly prior-distributed.
            self.gamma = spec.gamma_prior.sample(rng)?.as_slice().to_vec();
            let d = spec.dim() as f64;
            self.log_scale = self.config.proposal_scale.unwrap_or(0.1 / d.sqrt()).ln();
            self.started = true;
            (self.config.n_burnin, self.config.n_keep)
        };

        let hierarchical = self.mode == ChainMode::Hierarchical;
        if hierarchical {
            self.refresh_theta(spec, &mut data);
        }
        let mut current = self.log_target(spec, &data, &self.gamma)?;
        let (mut win_acc, mut win_prop, mut windows) = (0u64, 0u64, 0u64);
        self.kept.clear();
        for step in 0..burnin + keep {
            if hierarchical && self.config.gibbs_theta_refresh && step > 0 {
                self.refresh_theta(spec, &mut data);
                current = self.log_target(spec, &data, &self.gamma)?;
            }
            let scale = self.log_scale.exp();
            let proposal: Vec<f64> = self
                .gamma
                .iter()
                .map(|g| g + scale * rng.sample::<f64, _>(StandardNormal))
                .collect();
            let cand = self.log_target(spec, &data, &proposal)?;
            self.proposed += 1;
            win_prop += 1;
            let log_u = rng.random::<f64>().ln();
            if cand.is_finite() && log_u < cand - current {
                self.gamma = proposal;
                current = cand;
                self.accepted += 1;
                win_acc += 1;
            }
            self.iteration += 1;
            if step < burnin && win_prop == ADAPT_WINDOW {
                windows += 1;
                let rate = win_acc as f64 / win_prop as f64;
                self.log_scale += 2.0 * (rate - self.config.adapt_target) / (windows as f64).sqrt();
                win_acc = 0;
                win_prop = 0;
            }
            if step >= burnin {
                self.kept.push(self.gamma.clone());
            }
        }
        Ok(self.gamma.clone())
    }
}

/// One chain from scratch; returns its final state.
pub fn sample_gamma_posterior<R: Rng + ?Sized>(
    spec: &BetaLogisticSpec,
    catalog: &ItemCatalog,
    stats: &SufficientStats,
    config: &GammaSamplerConfig,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let mut chain = GammaChain::new(ChainMode::Hierarchical, config.clone(), rng.next_u64())?;
    chain.advance(spec, catalog, stats, rng)
}

/// Monte-Carlo estimate of the log marginal likelihood of the data under
/// precision `psi`, averaging over gamma draws with theta integrated out.
pub fn log_marginal_likelihood_mc(
    spec: &BetaLogisticSpec,
    catalog: &ItemCatalog,
    stats: &SufficientStats,
    gammas: &[Vec<f64>],
) -> Result<f64> {
    let family = Family::for_problem(stats.kind())?;
    if gammas.is_empty() {
        return Err(invalid("need at least one gamma draw"));
    }
    let per_draw: Vec<f64> = gammas
        .iter()
        .map(|g| {
            stats
                .observed_items()
                .map(|i| {
                    let (a, b) = spec.prior_shapes(catalog.linear_score(i, g));
                    let (da, db) = family.counts(stats, i);
                    ln_beta_marginal(a, b, da, db)
                })
                .sum()
        })
        .collect();
    let max = per_draw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + per_draw.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
    Ok(lse - (gammas.len() as f64).ln())
}

/// Independent draws with a caller-supplied generator per item; mainly for tests.
pub fn draw_prior_theta(
    spec: &BetaLogisticSpec,
    catalog: &ItemCatalog,
    gamma: &[f64],
    rng: &mut dyn RngCore,
) -> Vec<f64> {
    let mut clamps = ClampStats::default();
    (0..catalog.n_items())
        .map(|i| {
            let (a, b) = spec.prior_shapes(catalog.linear_score(i, gamma));
            sample_beta(a, b, rng, &mut clamps)
        })
        .collect()
}
