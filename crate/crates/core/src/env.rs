//! Ground-truth simulators and scenario generators.

use rand::seq::index::sample as sample_indices;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::action::{Action, Observation};
use crate::belief::GaussianBelief;
use crate::catalog::{dot, ItemCatalog};
use crate::error::{invalid, Error, Result};
use crate::genmodel::{sample_beta, BetaLogisticSpec, ClampStats, Link};
use crate::history::ProblemKind;
use crate::lmm::LmmSpec;
use crate::optim::{assortment_revenue, optimal_assortment, top_k, AssortmentSolverConfig};

/// Runaway guard for a single MNL epoch.
pub const EPOCH_CAP: u64 = 1_000_000;

/// How true item parameters are generated from features.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ThetaSource {
    /// `theta_i ~ N(x_i^T gamma, sigma1^2)`.
    Lmm { sigma1: f64 },
    /// `theta_i ~ Beta(link(x_i^T gamma), psi)` in mean-precision form.
    BetaLogistic { psi: f64, link: Link },
    /// `theta_i ~ N(lambda cos(c s_i) / c + (1 - lambda) s_i, sigma1^2)`, `s_i = x_i^T gamma`.
    MisspecifiedCos { lambda: f64, sigma1: f64 },
}

/// Item turnover: every `period` rounds, `delta_n` items are replaced.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ColdStart {
    #[serde(default = "default_period")]
    pub period: u64,
    pub delta_n: usize,
}

fn default_period() -> u64 {
    100
}

fn default_one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default)]
    pub name: String,
    pub problem: ProblemKind,
    pub n_items: usize,
    pub k: usize,
    /// Feature dimension, counting the leading intercept.
    pub dim: usize,
    pub theta_source: ThetaSource,
    /// Semi-bandit reward noise.
    #[serde(default = "default_one")]
    pub sigma2: f64,
    /// MNL revenue per item.
    #[serde(default = "default_one")]
    pub revenue: f64,
    #[serde(default)]
    pub cold_start: Option<ColdStart>,
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(format!("scenario '{}': {m}", self.name)));
        if self.n_items == 0 || self.dim == 0 {
            return bad("n_items and dim must be positive".into());
        }
        if self.k == 0 || self.k > self.n_items {
            return bad(format!("K = {} must lie in 1..={}", self.k, self.n_items));
        }
        if !(self.sigma2 >= 0.0 && self.sigma2.is_finite()) {
            return bad("sigma2 must be non-negative".into());
        }
        if !(self.revenue > 0.0 && self.revenue.is_finite()) {
            return bad("revenue must be positive".into());
        }
        match (self.problem, self.theta_source) {
            (ProblemKind::SemiBandit, ThetaSource::Lmm { sigma1 }) => {
                if !(sigma1 >= 0.0 && sigma1.is_finite()) {
                    return bad("sigma1 must be non-negative".into());
                }
            }
            (ProblemKind::SemiBandit, ThetaSource::MisspecifiedCos { lambda, sigma1 }) => {
                if !(0.0..=1.0).contains(&lambda) {
                    return bad("lambda must lie in [0, 1]".into());
                }
                if !(sigma1 >= 0.0 && sigma1.is_finite()) {
                    return bad("sigma1 must be non-negative".into());
                }
            }
            (ProblemKind::Cascade, ThetaSource::BetaLogistic { psi, .. })
            | (
                ProblemKind::Mnl,
                ThetaSource::BetaLogistic {
                    psi,
                    link: Link::Shifted,
                },
            ) => {
                if !(psi > 0.0 && psi.is_finite()) {
                    return bad("psi must be positive".into());
                }
            }
            (p, s) => return bad(format!("theta source {s:?} is not supported for {p:?}")),
        }
        if let Some(cs) = self.cold_start {
            if self.problem == ProblemKind::Mnl {
                return bad("cold start is not supported for MNL".into());
            }
            if cs.delta_n > self.n_items {
                return bad(format!("delta_n = {} exceeds N = {}", cs.delta_n, self.n_items));
            }
            if cs.period == 0 {
                return bad("cold-start period must be positive".into());
            }
        }
        Ok(())
    }

    /// `Q(gamma) = N(0, I / d)`.
    pub fn gamma_prior(&self) -> Result<GaussianBelief> {
        GaussianBelief::isotropic(self.dim, 1.0 / self.dim as f64)
    }

    /// The LMM an agent assumes for this scenario (misspecified scenarios
    /// are fitted with the plain LMM).
    pub fn lmm_spec(&self) -> Result<LmmSpec> {
        let sigma1 = match self.theta_source {
            ThetaSource::Lmm { sigma1 } | ThetaSource::MisspecifiedCos { sigma1, .. } => sigma1,
            ThetaSource::BetaLogistic { .. } => return Err(invalid("scenario has no LMM")),
        };
        LmmSpec::isotropic(self.dim, sigma1, self.sigma2)
    }

    pub fn beta_spec(&self) -> Result<BetaLogisticSpec> {
        match self.theta_source {
            ThetaSource::BetaLogistic { psi, link } => BetaLogisticSpec::new(psi, link, self.gamma_prior()?),
            _ => Err(invalid("scenario has no Beta-logistic model")),
        }
    }
}

/// Default precision for the Beta-logistic presets.
pub const DEFAULT_PSI: f64 = 5.0;

/// Names accepted by [`preset`].
pub const PRESET_NAMES: &[&str] = &[
    "semi-6.1",
    "cascade-6.1",
    "mnl-6.1",
    "semi-6.1-desk",
    "cascade-6.1-desk",
    "mnl-6.1-desk",
    "cold-start-desk",
    "misspec-desk",
];

pub fn preset(name: &str) -> Option<ScenarioConfig> {
    let base = |problem, n_items, k, theta_source| ScenarioConfig {
        name: name.to_string(),
        problem,
        n_items,
        k,
        dim: 5,
        theta_source,
        sigma2: 1.0,
        revenue: 1.0,
        cold_start: None,
    };
    let lmm = |sigma1| ThetaSource::Lmm { sigma1 };
    let plain = ThetaSource::BetaLogistic {
        psi: DEFAULT_PSI,
        link: Link::Plain,
    };
    let shifted = ThetaSource::BetaLogistic {
        psi: DEFAULT_PSI,
        link: Link::Shifted,
    };
    Some(match name {
        "semi-6.1" => base(ProblemKind::SemiBandit, 3000, 10, lmm(0.5)),
        "cascade-6.1" => base(ProblemKind::Cascade, 1000, 3, plain),
        "mnl-6.1" => base(ProblemKind::Mnl, 1000, 5, shifted),
        "semi-6.1-desk" => base(ProblemKind::SemiBandit, 200, 5, lmm(0.5)),
        "cascade-6.1-desk" => base(ProblemKind::Cascade, 200, 3, plain),
        "mnl-6.1-desk" => base(ProblemKind::Mnl, 200, 5, shifted),
        "cold-start-desk" => ScenarioConfig {
            cold_start: Some(ColdStart {
                period: 100,
                delta_n: 40,
            }),
            ..base(ProblemKind::SemiBandit, 200, 5, lmm(1.0))
        },
        "misspec-desk" => base(
            ProblemKind::SemiBandit,
            200,
            5,
            ThetaSource::MisspecifiedCos {
                lambda: 1.0,
                sigma1: 0.5,
            },
        ),
        _ => return None,
    })
}

/// Feature row `(1, z_1, ..., z_{d-1})` with standard-normal `z`.
fn draw_features<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Vec<f64> {
    std::iter::once(1.0)
        .chain((1..dim).map(|_| rng.sample::<f64, _>(StandardNormal)))
        .collect()
}

/// `pi/2 / max_j |x_j^T gamma|`, shared by all items of an instance.
fn cos_normalizer(scores: &[f64]) -> f64 {
    let max = scores.iter().fold(0.0f64, |m, s| m.max(s.abs()));
    if max > 0.0 {
        std::f64::consts::FRAC_PI_2 / max
    } else {
        1.0
    }
}

fn draw_theta<R: Rng + ?Sized>(
    source: ThetaSource,
    score: f64,
    normalizer: f64,
    rng: &mut R,
    clamps: &mut ClampStats,
) -> f64 {
    match source {
        ThetaSource::Lmm { sigma1 } => score + sigma1 * rng.sample::<f64, _>(StandardNormal),
        ThetaSource::MisspecifiedCos { lambda, sigma1 } => {
            let c = normalizer;
            let mean = lambda * (c * score).cos() / c + (1.0 - lambda) * score;
            mean + sigma1 * rng.sample::<f64, _>(StandardNormal)
        }
        ThetaSource::BetaLogistic { psi, link } => {
            let a = (link.mean(score) * psi).max(f64::MIN_POSITIVE);
            let b = (link.complement(score) * psi).max(f64::MIN_POSITIVE);
            sample_beta(a, b, rng, clamps)
        }
    }
}

/// Simulator state shared by the three problems.
#[derive(Debug, Clone)]
pub struct Ground {
    catalog: ItemCatalog,
    k: usize,
    gamma_true: Vec<f64>,
    normalizer: Option<f64>,
    next_id: u64,
    optimal: f64,
}

impl Ground {
    pub fn catalog(&self) -> &ItemCatalog {
        &self.catalog
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn gamma_true(&self) -> &[f64] {
        &self.gamma_true
    }

    /// The shared misspecification normalizer `c`, when used.
    pub fn normalizer(&self) -> Option<f64> {
        self.normalizer
    }

    pub fn theta(&self) -> &[f64] {
        self.catalog.true_theta().expect("simulator catalogs carry theta")
    }
}

#[derive(Debug, Clone)]
pub struct SemiBanditEnv {
    pub ground: Ground,
    pub sigma2: f64,
}

#[derive(Debug, Clone)]
pub struct CascadeEnv {
    pub ground: Ground,
}

#[derive(Debug, Clone)]
pub struct MnlEnv {
    pub ground: Ground,
    /// `v_i = 1 / theta_i - 1`.
    utilities: Vec<f64>,
}

#[derive(Debug, Clone)]
pub enum Environment {
    Semi(SemiBanditEnv),
    Cascade(CascadeEnv),
    Mnl(MnlEnv),
}

/// Sum of the positive entries among the top `k`: the best value over `|A| <= k`.
fn best_semi_value(theta: &[f64], k: usize) -> f64 {
    let mut sorted: Vec<f64> = theta.to_vec();
    sorted.sort_unstable_by(|a, b| b.total_cmp(a));
    sorted.iter().take(k).filter(|t| **t > 0.0).sum()
}

fn cascade_value(theta: &[f64], items: &[usize]) -> f64 {
    1.0 - items.iter().map(|&i| 1.0 - theta[i]).product::<f64>()
}

impl Environment {
    /// Construct a simulator around an existing catalog with ground truth.
    pub fn from_catalog(
        problem: ProblemKind,
        catalog: ItemCatalog,
        k: usize,
        sigma2: f64,
        gamma_true: Vec<f64>,
    ) -> Result<Self> {
        if catalog.true_theta().is_none() {
            return Err(invalid("simulator catalog needs ground-truth theta"));
        }
        if k == 0 || k > catalog.n_items() {
            return Err(invalid(format!("K = {k} must lie in 1..={}", catalog.n_items())));
        }
        let next_id = catalog.ids().iter().max().map_or(0, |m| m + 1);
        let ground = Ground {
            catalog,
            k,
            gamma_true,
            normalizer: None,
            next_id,
            optimal: 0.0,
        };
        let mut env = match problem {
            ProblemKind::SemiBandit => {
                if !(sigma2 >= 0.0) {
                    return Err(invalid("sigma2 must be non-negative"));
                }
                Environment::Semi(SemiBanditEnv { ground, sigma2 })
            }
            ProblemKind::Cascade => {
                ground
                    .catalog
                    .check_theta_range(-f64::MIN_POSITIVE, 1.0 + f64::EPSILON)?;
                Environment::Cascade(CascadeEnv { ground })
            }
            ProblemKind::Mnl => {
                ground.catalog.check_theta_range(0.0, 1.0)?;
                let mut ground = ground;
                if ground.catalog.revenues().is_none() {
                    let n = ground.catalog.n_items();
                    ground.catalog = ground.catalog.clone().with_revenues(vec![1.0; n])?;
                }
                Environment::Mnl(MnlEnv {
                    ground,
                    utilities: Vec::new(),
                })
            }
        };
        env.refresh()?;
        Ok(env)
    }

    /// Recompute cached quantities after the catalog changed.
    fn refresh(&mut self) -> Result<()> {
        let optimal = match self {
            Environment::Semi(e) => best_semi_value(e.ground.theta(), e.ground.k),
            Environment::Cascade(e) => {
                let a = top_k(e.ground.theta(), e.ground.k)?;
                cascade_value(e.ground.theta(), a.items())
            }
            Environment::Mnl(e) => {
                e.utilities = e.ground.theta().iter().map(|t| 1.0 / t - 1.0).collect();
                let eta = e.ground.catalog.revenues().expect("MNL catalog has revenues");
                let a = optimal_assortment(&e.utilities, eta, e.ground.k, &AssortmentSolverConfig::default())?;
                assortment_revenue(a.items(), &e.utilities, eta)
            }
        };
        self.ground_mut().optimal = optimal;
        Ok(())
    }

    pub fn ground(&self) -> &Ground {
        match self {
            Environment::Semi(e) => &e.ground,
            Environment::Cascade(e) => &e.ground,
            Environment::Mnl(e) => &e.ground,
        }
    }

    fn ground_mut(&mut self) -> &mut Ground {
        match self {
            Environment::Semi(e) => &mut e.ground,
            Environment::Cascade(e) => &mut e.ground,
            Environment::Mnl(e) => &mut e.ground,
        }
    }

    pub fn problem(&self) -> ProblemKind {
        match self {
            Environment::Semi(_) => ProblemKind::SemiBandit,
            Environment::Cascade(_) => ProblemKind::Cascade,
            Environment::Mnl(_) => ProblemKind::Mnl,
        }
    }

    pub fn catalog(&self) -> &ItemCatalog {
        &self.ground().catalog
    }

    pub fn k(&self) -> usize {
        self.ground().k
    }

    /// Expected reward `r(A, theta)` of an action.
    pub fn expected_reward(&self, action: &Action) -> Result<f64> {
        let n = self.catalog().n_items();
        if action.items().iter().any(|&i| i >= n) || action.len() > self.k() {
            return Err(invalid("action is not feasible"));
        }
        let theta = self.ground().theta();
        Ok(match self {
            Environment::Semi(_) => action.items().iter().map(|&i| theta[i]).sum(),
            Environment::Cascade(_) => cascade_value(theta, action.items()),
            Environment::Mnl(e) => assortment_revenue(
                action.items(),
                &e.utilities,
                e.ground.catalog.revenues().expect("revenues"),
            ),
        })
    }

    /// `max_A r(A, theta)` over feasible actions.
    pub fn optimal_value(&self) -> f64 {
        self.ground().optimal
    }

    /// `optimal_value - expected_reward`, clamped at zero within rounding.
    pub fn gap(&self, action: &Action) -> Result<f64> {
        let d = self.optimal_value() - self.expected_reward(action)?;
        Ok(if d < 0.0 && d > -1e-12 { 0.0 } else { d })
    }

    /// Replace `delta_n` uniformly chosen items with fresh draws. Returns the
    /// new environment and the replaced slots (sorted).
    pub fn rotate_items<R: Rng + ?Sized>(&self, scenario: &ScenarioConfig, rng: &mut R) -> Result<(Self, Vec<usize>)> {
        let cs = scenario
            .cold_start
            .ok_or_else(|| invalid("scenario has no cold-start configuration"))?;
        let n = self.catalog().n_items();
        if cs.delta_n > n {
            return Err(invalid(format!("delta_n = {} exceeds N = {n}", cs.delta_n)));
        }
        let mut slots = sample_indices(rng, n, cs.delta_n).into_vec();
        slots.sort_unstable();
        let mut out = self.clone();
        let g = out.ground_mut();
        let mut clamps = ClampStats::default();
        for &slot in &slots {
            let x = draw_features(scenario.dim, rng);
            let score = dot(&x, &g.gamma_true);
            let t = draw_theta(
                scenario.theta_source,
                score,
                g.normalizer.unwrap_or(1.0),
                rng,
                &mut clamps,
            );
            g.catalog.replace_item(slot, g.next_id, &x, Some(t));
            g.next_id += 1;
        }
        out.refresh()?;
        Ok((out, slots))
    }
}

/// Draw features and ground truth for a fresh instance.
pub fn draw_instance<R: Rng + ?Sized>(
    scenario: &ScenarioConfig,
    gamma_true: &[f64],
    rng: &mut R,
) -> Result<Environment> {
    scenario.validate()?;
    if gamma_true.len() != scenario.dim {
        return Err(invalid(format!(
            "gamma has dimension {}, expected {}",
            gamma_true.len(),
            scenario.dim
        )));
    }
    let rows: Vec<Vec<f64>> = (0..scenario.n_items)
        .map(|_| draw_features(scenario.dim, rng))
        .collect();
    let scores: Vec<f64> = rows.iter().map(|x| dot(x, gamma_true)).collect();
    let normalizer = match scenario.theta_source {
        ThetaSource::MisspecifiedCos { .. } => Some(cos_normalizer(&scores)),
        _ => None,
    };
    let mut clamps = ClampStats::default();
    let theta: Vec<f64> = scores
        .iter()
        .map(|&s| draw_theta(scenario.theta_source, s, normalizer.unwrap_or(1.0), rng, &mut clamps))
        .collect();
    let mut catalog = ItemCatalog::new(rows)?.with_theta(theta)?;
    if scenario.problem == ProblemKind::Mnl {
        catalog = catalog.with_revenues(vec![scenario.revenue; scenario.n_items])?;
    }
    let mut env = Environment::from_catalog(
        scenario.problem,
        catalog,
        scenario.k,
        scenario.sigma2,
        gamma_true.to_vec(),
    )?;
    env.ground_mut().normalizer = normalizer;
    Ok(env)
}

/// Semi-bandit feedback: one Gaussian reward per chosen item, and their sum.
pub fn step_semi<R: Rng + ?Sized>(env: &SemiBanditEnv, action: &Action, rng: &mut R) -> Result<(Observation, f64)> {
    if action.len() > env.ground.k {
        return Err(invalid("action exceeds K"));
    }
    let theta = env.ground.theta();
    let rewards: Vec<f64> = action
        .items()
        .iter()
        .map(|&i| theta[i] + env.sigma2 * rng.sample::<f64, _>(StandardNormal))
        .collect();
    let total = rewards.iter().sum();
    Ok((Observation::SemiBandit(rewards), total))
}

/// Cascade feedback: scan the list top-down and click the first attractive item.
pub fn step_cascade<R: Rng + ?Sized>(env: &CascadeEnv, action: &Action, rng: &mut R) -> Result<Observation> {
    if !matches!(action, Action::Ranked(_)) || action.len() > env.ground.k {
        return Err(invalid("cascade needs a ranked list of at most K items"));
    }
    let theta = env.ground.theta();
    let click = action.items().iter().position(|&i| rng.random::<f64>() < theta[i]);
    Ok(Observation::Cascade { click })
}

/// One MNL epoch: offer `assortment` until the no-purchase option is chosen.
pub fn run_epoch_mnl<R: Rng + ?Sized>(env: &MnlEnv, assortment: &Action, rng: &mut R) -> Result<Observation> {
    run_epoch_mnl_capped(env, assortment, EPOCH_CAP, rng)
}

/// [`run_epoch_mnl`] with an explicit runaway cap.
pub fn run_epoch_mnl_capped<R: Rng + ?Sized>(
    env: &MnlEnv,
    assortment: &Action,
    cap: u64,
    rng: &mut R,
) -> Result<Observation> {
    if !matches!(assortment, Action::Subset(_)) || assortment.len() > env.ground.k {
        return Err(invalid("MNL needs a subset of at most K items"));
    }
    let items = assortment.items();
    let v: Vec<f64> = items.iter().map(|&i| env.utilities[i]).collect();
    let total: f64 = 1.0 + v.iter().sum::<f64>();
    let mut purchases = vec![0u64; items.len()];
    let mut length = 0u64;
    loop {
        if length == cap {
            return Err(Error::EpochRunaway { cap });
        }
        length += 1;
        let mut u = rng.random::<f64>() * total - 1.0;
        if u < 0.0 {
            break;
        }
        let mut pick = v.len() - 1;
        for (j, vj) in v.iter().enumerate() {
            if u < *vj {
                pick = j;
                break;
            }
            u -= vj;
        }
        purchases[pick] += 1;
    }
    Ok(Observation::MnlEpoch { purchases, length })
}

impl MnlEnv {
    pub fn utilities(&self) -> &[f64] {
        &self.utilities
    }
}
