//! The four Thompson-sampling policies, the gamma-refresh schedule and
//! empirical-Bayes hyperparameter updates.
//!
//! Randomness is split in two: gamma draws consume the agent's sequential
//! stream, while each item parameter draw comes from
//! `item_stream(seed, "theta", item id, selection index)`. Permuting the
//! catalog therefore permutes the sampled parameters without changing them.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::action::{Action, Observation};
use crate::catalog::ItemCatalog;
use crate::env::{run_epoch_mnl, MnlEnv, ScenarioConfig};
use crate::error::{invalid, Result};
use crate::genmodel::{
    log_marginal_likelihood_mc, sample_beta, sample_theta_given_gamma_streams, BetaLogisticSpec, ChainMode, ClampStats,
    GammaChain, GammaSamplerConfig, THETA_FLOOR,
};
use crate::history::{InteractionHistory, ProblemKind, SufficientStats};
use crate::lmm::{item_posterior_given_gamma, log_marginal_likelihood, posterior_gamma, LmmSpec};
use crate::optim::{optimal_assortment, rank_top_k, top_k, AssortmentSolverConfig};
use crate::rng::{item_stream, seeded_rng, StreamRng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AgentKind {
    /// Sample gamma from its posterior, then theta given gamma.
    Mtss,
    /// Thompson sampling with the true gamma.
    Oracle,
    /// Independent per-item Thompson sampling with manual priors.
    Agnostic,
    /// Thompson sampling under `theta_i = g(x_i; gamma)` exactly.
    Determined,
}

impl AgentKind {
    pub const ALL: [AgentKind; 4] = [
        AgentKind::Mtss,
        AgentKind::Oracle,
        AgentKind::Agnostic,
        AgentKind::Determined,
    ];

    pub fn name(self) -> &'static str {
        match self {
            AgentKind::Mtss => "mtss",
            AgentKind::Oracle => "oracle",
            AgentKind::Agnostic => "agnostic",
            AgentKind::Determined => "determined",
        }
    }
}

/// When a new gamma is drawn. Times are environment rounds.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Schedule {
    EveryRound,
    EveryMRounds { m: u64 },
    AtTimes { times: Vec<u64> },
}

impl Schedule {
    /// Refresh every 100 rounds for semi-bandits and every 500 otherwise.
    pub fn default_for(problem: ProblemKind) -> Self {
        match problem {
            ProblemKind::SemiBandit => Schedule::EveryMRounds { m: 100 },
            ProblemKind::Cascade | ProblemKind::Mnl => Schedule::EveryMRounds { m: 500 },
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Schedule::EveryRound => Ok(()),
            Schedule::EveryMRounds { m } if *m == 0 => Err(invalid("schedule period must be positive")),
            Schedule::EveryMRounds { .. } => Ok(()),
            Schedule::AtTimes { times } if times.windows(2).any(|w| w[0] >= w[1]) => {
                Err(invalid("refresh times must be strictly increasing"))
            }
            Schedule::AtTimes { .. } => Ok(()),
        }
    }

    /// Whether a refresh is due at round `now`, given the round of the last one.
    pub fn fires(&self, last: Option<u64>, now: u64) -> bool {
        let Some(last) = last else { return true };
        match self {
            Schedule::EveryRound => true,
            Schedule::EveryMRounds { m } => now / m > last / m,
            Schedule::AtTimes { times } => times.iter().any(|&t| last < t && t <= now),
        }
    }
}

/// Empirical-Bayes selection of `sigma1` (LMM) or `psi` (Beta models) over a grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EbConfig {
    pub enabled: bool,
    #[serde(default = "default_eb_period")]
    pub refresh_period: u64,
    #[serde(default)]
    pub grid: Vec<f64>,
}

fn default_eb_period() -> u64 {
    100
}

impl Default for EbConfig {
    fn default() -> Self {
        Self {
            enabled: false,
            refresh_period: default_eb_period(),
            grid: Vec::new(),
        }
    }
}

impl EbConfig {
    /// `base * 2^j` for `j = 0..count`.
    pub fn log2_grid(base: f64, count: usize) -> Vec<f64> {
        (0..count).map(|j| base * 2f64.powi(j as i32)).collect()
    }

    pub fn validate(&self) -> Result<()> {
        if !self.enabled {
            return Ok(());
        }
        if self.grid.is_empty() {
            return Err(invalid("empirical-Bayes grid is empty"));
        }
        if self.grid.iter().any(|g| !(*g > 0.0 && g.is_finite())) || self.grid.windows(2).any(|w| w[0] >= w[1]) {
            return Err(invalid("empirical-Bayes grid must be positive and strictly increasing"));
        }
        if self.refresh_period == 0 {
            return Err(invalid("empirical-Bayes refresh period must be positive"));
        }
        Ok(())
    }
}

/// Grid argmax of a score; ties go to the earlier (smaller) grid value.
fn grid_argmax(grid: &[f64], mut score: impl FnMut(f64) -> Result<f64>) -> Result<f64> {
    let mut best = (grid[0], f64::NEG_INFINITY);
    for &g in grid {
        let s = score(g)?;
        if s > best.1 {
            best = (g, s);
        }
    }
    Ok(best.0)
}

/// `sigma1` maximizing the exact LMM marginal likelihood. Returns the current
/// value when there is no data.
pub fn select_sigma1(spec: &LmmSpec, stats: &SufficientStats, catalog: &ItemCatalog, grid: &[f64]) -> Result<f64> {
    if stats.total_pulls() == 0 || grid.is_empty() {
        return Ok(spec.sigma1());
    }
    grid_argmax(grid, |s| log_marginal_likelihood(&spec.with_sigma1(s)?, stats, catalog))
}

/// `psi` maximizing a Monte-Carlo marginal likelihood over the given gamma draws.
pub fn select_psi(
    spec: &BetaLogisticSpec,
    stats: &SufficientStats,
    catalog: &ItemCatalog,
    grid: &[f64],
    gammas: &[Vec<f64>],
) -> Result<f64> {
    if stats.total_pulls() == 0 || grid.is_empty() || gammas.is_empty() {
        return Ok(spec.psi);
    }
    grid_argmax(grid, |p| {
        log_marginal_likelihood_mc(&spec.with_psi(p)?, catalog, stats, gammas)
    })
}

/// Options shared by every agent in a run.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentSettings {
    /// `None` uses [`Schedule::default_for`].
    #[serde(default)]
    pub schedule: Option<Schedule>,
    #[serde(default)]
    pub eb: EbConfig,
    #[serde(default)]
    pub sampler: GammaSamplerConfig,
}

#[derive(Debug, Clone)]
enum Model {
    Lmm(LmmSpec),
    Beta(BetaLogisticSpec),
}

/// One policy instance; owns its RNG streams and cached state.
#[derive(Debug, Clone)]
pub struct Agent {
    kind: AgentKind,
    problem: ProblemKind,
    k: usize,
    model: Model,
    gamma_true: Option<Vec<f64>>,
    schedule: Schedule,
    eb: EbConfig,
    seed: u64,
    rng: StreamRng,
    chain: Option<GammaChain>,
    cached_gamma: Option<Vec<f64>>,
    last_refresh: Option<u64>,
    last_eb: Option<u64>,
    gamma_draws: u64,
    selections: u64,
    agnostic_variance: f64,
    clamps: ClampStats,
    solver: AssortmentSolverConfig,
}

impl Agent {
    /// Build an agent that assumes the scenario's generative model.
    pub fn new(
        kind: AgentKind,
        scenario: &ScenarioConfig,
        gamma_true: Option<&[f64]>,
        settings: &AgentSettings,
        seed: u64,
    ) -> Result<Self> {
        let model = match scenario.problem {
            ProblemKind::SemiBandit => Model::Lmm(scenario.lmm_spec()?),
            ProblemKind::Cascade | ProblemKind::Mnl => Model::Beta(scenario.beta_spec()?),
        };
        Self::with_model(kind, scenario.problem, scenario.k, model, gamma_true, settings, seed)
    }

    /// Semi-bandit agent with an explicit LMM.
    pub fn lmm(
        kind: AgentKind,
        k: usize,
        spec: LmmSpec,
        gamma_true: Option<&[f64]>,
        settings: &AgentSettings,
        seed: u64,
    ) -> Result<Self> {
        Self::with_model(
            kind,
            ProblemKind::SemiBandit,
            k,
            Model::Lmm(spec),
            gamma_true,
            settings,
            seed,
        )
    }

    /// Cascade or MNL agent with an explicit Beta-logistic model.
    pub fn beta(
        kind: AgentKind,
        problem: ProblemKind,
        k: usize,
        spec: BetaLogisticSpec,
        gamma_true: Option<&[f64]>,
        settings: &AgentSettings,
        seed: u64,
    ) -> Result<Self> {
        if problem == ProblemKind::SemiBandit {
            return Err(invalid("Beta models need cascade or MNL problems"));
        }
        Self::with_model(kind, problem, k, Model::Beta(spec), gamma_true, settings, seed)
    }

    fn with_model(
        kind: AgentKind,
        problem: ProblemKind,
        k: usize,
        model: Model,
        gamma_true: Option<&[f64]>,
        settings: &AgentSettings,
        seed: u64,
    ) -> Result<Self> {
        let schedule = settings
            .schedule
            .clone()
            .unwrap_or_else(|| Schedule::default_for(problem));
        schedule.validate()?;
        settings.eb.validate()?;
        settings.sampler.validate()?;
        let dim = match &model {
            Model::Lmm(s) => s.dim(),
            Model::Beta(s) => s.dim(),
        };
        let gamma_true = match (kind, gamma_true) {
            (AgentKind::Oracle, None) => return Err(invalid("oracle agent needs the true gamma")),
            (AgentKind::Oracle, Some(g)) if g.len() != dim => {
                return Err(invalid("true gamma has the wrong dimension"))
            }
            (AgentKind::Oracle, Some(g)) => Some(g.to_vec()),
            _ => None,
        };
        let chain = match (&model, kind) {
            (Model::Beta(_), AgentKind::Mtss) => Some(GammaChain::new(
                ChainMode::Hierarchical,
                settings.sampler.clone(),
                seed,
            )?),
            (Model::Beta(_), AgentKind::Determined) => Some(GammaChain::new(
                ChainMode::Deterministic,
                settings.sampler.clone(),
                seed,
            )?),
            _ => None,
        };
        let agnostic_variance = match &model {
            Model::Lmm(s) => s.item_variance_bound(),
            Model::Beta(_) => 0.0,
        };
        Ok(Self {
            kind,
            problem,
            k,
            model,
            gamma_true,
            schedule,
            eb: settings.eb.clone(),
            seed,
            rng: seeded_rng(seed, "agent/gamma"),
            chain,
            cached_gamma: None,
            last_refresh: None,
            last_eb: None,
            gamma_draws: 0,
            selections: 0,
            agnostic_variance,
            clamps: ClampStats::default(),
            solver: AssortmentSolverConfig::default(),
        })
    }

    pub fn kind(&self) -> AgentKind {
        self.kind
    }

    /// Number of posterior gamma draws so far.
    pub fn gamma_draws(&self) -> u64 {
        self.gamma_draws
    }

    pub fn cached_gamma(&self) -> Option<&[f64]> {
        self.cached_gamma.as_deref()
    }

    /// Currently assumed `sigma1` (LMM) or `psi` (Beta models).
    pub fn hyperparameter(&self) -> f64 {
        match &self.model {
            Model::Lmm(s) => s.sigma1(),
            Model::Beta(s) => s.psi,
        }
    }

    pub fn clamp_stats(&self) -> ClampStats {
        let mut c = self.clamps;
        if let Some(chain) = &self.chain {
            let cc = chain.clamp_stats();
            c.draws += cc.draws;
            c.clamped += cc.clamped;
        }
        c
    }

    pub fn chain(&self) -> Option<&GammaChain> {
        self.chain.as_ref()
    }

    /// Refit the hyperparameter by empirical Bayes (MTSS only). Empty
    /// histories leave it unchanged.
    pub fn empirical_bayes_refresh(&mut self, history: &InteractionHistory, catalog: &ItemCatalog) -> Result<f64> {
        if !self.eb.enabled || self.kind != AgentKind::Mtss {
            return Ok(self.hyperparameter());
        }
        match &mut self.model {
            Model::Lmm(spec) => {
                let s = select_sigma1(spec, history.stats(), catalog, &self.eb.grid)?;
                *spec = spec.with_sigma1(s)?;
                Ok(s)
            }
            Model::Beta(spec) => {
                let gammas = self.chain.as_ref().map(|c| c.kept().to_vec()).unwrap_or_default();
                let p = select_psi(spec, history.stats(), catalog, &self.eb.grid, &gammas)?;
                *spec = spec.with_psi(p)?;
                Ok(p)
            }
        }
    }

    fn refresh_gamma(&mut self, history: &InteractionHistory, catalog: &ItemCatalog) -> Result<()> {
        let now = history.rounds();
        // The degenerate linear model is an exact conjugate update, so it
        // tracks every round; everything else follows the schedule.
        let due = match (&self.model, self.kind) {
            (_, AgentKind::Oracle | AgentKind::Agnostic) => false,
            (Model::Lmm(_), AgentKind::Determined) => true,
            _ => self.schedule.fires(self.last_refresh, now),
        };
        if !due {
            return Ok(());
        }
        if self.eb.enabled
            && self.kind == AgentKind::Mtss
            && self.last_eb.is_none_or(|l| now >= l + self.eb.refresh_period)
        {
            self.empirical_bayes_refresh(history, catalog)?;
            self.last_eb = Some(now);
        }
        let stats = history.stats();
        let gamma = match &self.model {
            Model::Lmm(spec) => {
                let spec = if self.kind == AgentKind::Determined {
                    spec.with_sigma1(0.0)?
                } else {
                    spec.clone()
                };
                posterior_gamma(&spec, stats, catalog)?
                    .sample(&mut self.rng)?
                    .as_slice()
                    .to_vec()
            }
            Model::Beta(spec) => {
                let chain = self.chain.as_mut().expect("Beta agents that sample gamma own a chain");
                chain.advance(spec, catalog, stats, &mut self.rng)?
            }
        };
        self.cached_gamma = Some(gamma);
        self.last_refresh = Some(now);
        self.gamma_draws += 1;
        Ok(())
    }

    fn normal_draw(&self, id: u64, slot: u64) -> f64 {
        item_stream(self.seed, "theta", id, slot).sample::<f64, _>(StandardNormal)
    }

    /// Sampled item parameters for this round.
    fn sample_theta(&mut self, history: &InteractionHistory, catalog: &ItemCatalog) -> Result<Vec<f64>> {
        let stats = history.stats();
        if stats.n_items() != catalog.n_items() {
            return Err(invalid("history and catalog disagree on item count"));
        }
        let slot = self.selections;
        let ids = catalog.ids();
        let n = catalog.n_items();
        let gamma = match self.kind {
            AgentKind::Oracle => self.gamma_true.clone(),
            AgentKind::Agnostic => None,
            _ => self.cached_gamma.clone(),
        };
        match (&self.model, self.kind) {
            (Model::Lmm(spec), AgentKind::Agnostic) => {
                let p0 = 1.0 / self.agnostic_variance;
                let p2 = 1.0 / (spec.sigma2() * spec.sigma2());
                Ok((0..n)
                    .map(|i| {
                        if spec.sigma2() == 0.0 && stats.pulls(i) > 0 {
                            return stats.reward_sum(i) / stats.pulls(i) as f64;
                        }
                        let var = 1.0 / (p0 + p2 * stats.pulls(i) as f64);
                        var * p2 * stats.reward_sum(i) + var.sqrt() * self.normal_draw(ids[i], slot)
                    })
                    .collect())
            }
            (Model::Lmm(_), AgentKind::Determined) => {
                let g = gamma.expect("gamma refreshed before sampling");
                Ok(catalog.linear_scores(&g))
            }
            (Model::Lmm(spec), _) => {
                let g = gamma.expect("gamma available");
                Ok((0..n)
                    .map(|i| {
                        let (m, v) = item_posterior_given_gamma(
                            spec,
                            stats.pulls(i),
                            stats.reward_sum(i),
                            catalog.linear_score(i, &g),
                        );
                        if v == 0.0 {
                            m
                        } else {
                            m + v.sqrt() * self.normal_draw(ids[i], slot)
                        }
                    })
                    .collect())
            }
            (Model::Beta(_), AgentKind::Agnostic) => {
                let mut clamps = ClampStats::default();
                let out = (0..n)
                    .map(|i| {
                        let (a, b) = match self.problem {
                            ProblemKind::Cascade => (stats.successes(i), stats.failures(i)),
                            _ => (stats.epochs(i), stats.purchases(i)),
                        };
                        let mut rng = item_stream(self.seed, "theta", ids[i], slot);
                        sample_beta(1.0 + a as f64, 1.0 + b as f64, &mut rng, &mut clamps)
                    })
                    .collect();
                self.clamps.draws += clamps.draws;
                self.clamps.clamped += clamps.clamped;
                Ok(out)
            }
            (Model::Beta(spec), AgentKind::Determined) => {
                let g = gamma.expect("gamma refreshed before sampling");
                Ok((0..n)
                    .map(|i| {
                        spec.link
                            .mean(catalog.linear_score(i, &g))
                            .clamp(THETA_FLOOR, 1.0 - THETA_FLOOR)
                    })
                    .collect())
            }
            (Model::Beta(spec), _) => {
                let g = gamma.expect("gamma available");
                sample_theta_given_gamma_streams(spec, catalog, stats, &g, self.seed, slot, &mut self.clamps)
            }
        }
    }

    /// Greedy action for sampled parameters.
    fn greedy(&self, theta: &[f64], catalog: &ItemCatalog) -> Result<Action> {
        match self.problem {
            ProblemKind::SemiBandit => {
                let top = top_k(theta, self.k)?;
                let keep = top.items().iter().copied().filter(|&i| theta[i] > 0.0).collect();
                Action::subset(keep, theta.len(), self.k)
            }
            ProblemKind::Cascade => rank_top_k(theta, self.k),
            ProblemKind::Mnl => {
                let v: Vec<f64> = theta.iter().map(|t| 1.0 / t - 1.0).collect();
                match catalog.revenues() {
                    Some(eta) => optimal_assortment(&v, eta, self.k, &self.solver),
                    None => optimal_assortment(&v, &vec![1.0; v.len()], self.k, &self.solver),
                }
            }
        }
    }

    /// Choose the next action (for MNL: the next epoch's assortment).
    pub fn select(&mut self, history: &InteractionHistory, catalog: &ItemCatalog) -> Result<Action> {
        if history.kind() != self.problem {
            return Err(invalid("history kind differs from the agent's problem"));
        }
        self.refresh_gamma(history, catalog)?;
        let theta = self.sample_theta(history, catalog)?;
        self.selections += 1;
        self.greedy(&theta, catalog)
    }

    /// Sampled parameters without choosing an action; consumes one selection slot.
    pub fn sample_parameters(&mut self, history: &InteractionHistory, catalog: &ItemCatalog) -> Result<Vec<f64>> {
        self.refresh_gamma(history, catalog)?;
        let theta = self.sample_theta(history, catalog)?;
        self.selections += 1;
        Ok(theta)
    }
}

/// Offer one assortment for a full epoch and record it.
pub fn run_mnl_agent_epoch<R: Rng + ?Sized>(
    agent: &mut Agent,
    env: &MnlEnv,
    history: &mut InteractionHistory,
    rng: &mut R,
) -> Result<(Action, Observation)> {
    let catalog = env.ground.catalog();
    let action = agent.select(history, catalog)?;
    let obs = run_epoch_mnl(env, &action, rng)?;
    history.record(action.clone(), obs.clone())?;
    Ok((action, obs))
}
