//! Experiment runner: replications, aggregation, grid configs and CSV output.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::action::Observation;
use crate::agents::{Agent, AgentKind, AgentSettings, EbConfig, Schedule};
use crate::env::{
    draw_instance, preset, run_epoch_mnl, step_cascade, step_semi, Environment, ScenarioConfig, PRESET_NAMES,
};
use crate::error::{invalid, Error, Result};
use crate::genmodel::GammaSamplerConfig;
use crate::history::InteractionHistory;
use crate::par::map_indexed;
use crate::regret::RegretTrace;
use crate::rng::{derive_seed, seeded_rng};

/// Column names of the curve CSV, in order.
pub const CURVE_HEADER: [&str; 5] = [
    "round",
    "mean_cum_regret",
    "stderr_cum_regret",
    "mean_inst_regret",
    "n_replications",
];

/// Everything one replication produced.
#[derive(Debug, Clone)]
pub struct ReplicationOutcome {
    pub trace: RegretTrace,
    /// Shared misspecification normalizer of the drawn instance, if any.
    pub normalizer: Option<f64>,
    pub gamma_draws: u64,
    pub clamped_fraction: f64,
    /// Final hyperparameter the agent assumed (after any empirical Bayes).
    pub hyperparameter: f64,
}

/// Seed of replication `r` in a grid.
pub fn replication_seed(seed_base: u64, r: u64) -> u64 {
    derive_seed(seed_base, "replication", r)
}

/// One replication: draw gamma and an instance, then run `horizon` rounds.
pub fn run_replication(
    scenario: &ScenarioConfig,
    kind: AgentKind,
    horizon: u64,
    seed: u64,
    settings: &AgentSettings,
) -> Result<RegretTrace> {
    Ok(run_replication_with(scenario, kind, horizon, seed, None, settings)?.trace)
}

/// [`run_replication`] with an optional fixed instance seed. When set, every
/// replication faces the same gamma and items and only the feedback noise and
/// the agent's randomness vary (per-instance rather than Bayes regret).
pub fn run_replication_with(
    scenario: &ScenarioConfig,
    kind: AgentKind,
    horizon: u64,
    seed: u64,
    instance_seed: Option<u64>,
    settings: &AgentSettings,
) -> Result<ReplicationOutcome> {
    if horizon == 0 {
        return Err(invalid("horizon must be at least one round"));
    }
    scenario.validate()?;
    let truth_seed = instance_seed.unwrap_or(seed);
    let gamma = scenario
        .gamma_prior()?
        .sample(&mut seeded_rng(truth_seed, "truth/gamma"))?;
    let gamma = gamma.as_slice().to_vec();
    let env = draw_instance(scenario, &gamma, &mut seeded_rng(truth_seed, "truth/instance"))?;
    let agent = Agent::new(kind, scenario, Some(&gamma), settings, derive_seed(seed, "agent", 0))?;
    run_on_environment(scenario, env, agent, horizon, seed)
}

/// Run an agent against a prepared environment.
pub fn run_on_environment(
    scenario: &ScenarioConfig,
    mut env: Environment,
    mut agent: Agent,
    horizon: u64,
    seed: u64,
) -> Result<ReplicationOutcome> {
    let normalizer = env.ground().normalizer();
    let mut feedback = seeded_rng(seed, "env/feedback");
    let mut rotation = seeded_rng(seed, "env/rotation");
    let mut history = InteractionHistory::new(env.problem(), env.catalog().n_items());
    let mut trace = RegretTrace::new(0, seed);
    match &env {
        Environment::Mnl(mnl) => {
            while history.rounds() < horizon {
                let remaining = horizon - history.rounds();
                let action = agent.select(&history, mnl.ground.catalog())?;
                let obs = run_epoch_mnl(mnl, &action, &mut feedback)?;
                let gap = env.gap(&action)?;
                let Observation::MnlEpoch { length, .. } = obs else {
                    unreachable!()
                };
                for _ in 0..length.min(remaining) {
                    trace.push(gap)?;
                }
                if length <= remaining {
                    history.record(action, obs)?;
                } else {
                    // The epoch ran past the budget; its observation is incomplete.
                    history.advance_rounds(remaining);
                }
            }
        }
        _ => {
            for t in 0..horizon {
                if let Some(cs) = scenario.cold_start {
                    if t > 0 && t % cs.period == 0 {
                        let (next, slots) = env.rotate_items(scenario, &mut rotation)?;
                        env = next;
                        history.reset_items(&slots);
                    }
                }
                let action = agent.select(&history, env.catalog())?;
                trace.push(env.gap(&action)?)?;
                let obs = match &env {
                    Environment::Semi(e) => step_semi(e, &action, &mut feedback)?.0,
                    Environment::Cascade(e) => step_cascade(e, &action, &mut feedback)?,
                    Environment::Mnl(_) => unreachable!(),
                };
                history.record(action, obs)?;
            }
        }
    }
    Ok(ReplicationOutcome {
        trace,
        normalizer,
        gamma_draws: agent.gamma_draws(),
        clamped_fraction: agent.clamp_stats().fraction(),
        hyperparameter: agent.hyperparameter(),
    })
}

/// Per-round Bayes-regret summary over replications.
#[derive(Debug, Clone, PartialEq)]
pub struct Curve {
    pub mean_cum: Vec<f64>,
    pub stderr_cum: Vec<f64>,
    pub mean_inst: Vec<f64>,
    pub n_replications: usize,
    /// Set when only one trace was available and the SE column is zero by convention.
    pub single_trace: bool,
}

impl Curve {
    pub fn final_mean(&self) -> f64 {
        *self.mean_cum.last().expect("curves are non-empty")
    }
}

/// Mean and standard error (`sample std / sqrt(M)`) per round.
pub fn aggregate(traces: &[RegretTrace]) -> Result<Curve> {
    let first = traces.first().ok_or_else(|| invalid("no traces to aggregate"))?;
    let len = first.len();
    if len == 0 || traces.iter().any(|t| t.len() != len) {
        return Err(invalid("traces must be non-empty and of equal length"));
    }
    let m = traces.len() as f64;
    let mut curve = Curve {
        mean_cum: Vec::with_capacity(len),
        stderr_cum: Vec::with_capacity(len),
        mean_inst: Vec::with_capacity(len),
        n_replications: traces.len(),
        single_trace: traces.len() == 1,
    };
    for t in 0..len {
        let mean = traces.iter().map(|tr| tr.cumulative()[t]).sum::<f64>() / m;
        let se = if traces.len() > 1 {
            let ss: f64 = traces.iter().map(|tr| (tr.cumulative()[t] - mean).powi(2)).sum();
            (ss / (m - 1.0)).sqrt() / m.sqrt()
        } else {
            0.0
        };
        curve.mean_cum.push(mean);
        curve.stderr_cum.push(se);
        curve
            .mean_inst
            .push(traces.iter().map(|tr| tr.instant()[t]).sum::<f64>() / m);
    }
    Ok(curve)
}

/// Write a curve in the CSV schema (LF line endings, 1-based rounds).
pub fn write_curve_csv<W: Write>(curve: &Curve, writer: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(writer);
    w.write_record(CURVE_HEADER)?;
    for t in 0..curve.mean_cum.len() {
        w.write_record([
            (t + 1).to_string(),
            curve.mean_cum[t].to_string(),
            curve.stderr_cum[t].to_string(),
            curve.mean_inst[t].to_string(),
            curve.n_replications.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Scenario given by preset name or inline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ScenarioRef {
    Preset(String),
    Inline(ScenarioConfig),
}

impl ScenarioRef {
    pub fn resolve(&self) -> Result<ScenarioConfig> {
        match self {
            ScenarioRef::Preset(name) => preset(name).ok_or_else(|| {
                Error::Config(format!(
                    "unknown preset '{name}'; known presets: {}",
                    PRESET_NAMES.join(", ")
                ))
            }),
            ScenarioRef::Inline(s) => {
                let mut s = s.clone();
                if s.name.is_empty() {
                    s.name = "inline".into();
                }
                Ok(s)
            }
        }
    }
}

/// JSON run configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub scenario: ScenarioRef,
    pub agents: Vec<AgentKind>,
    #[serde(rename = "T")]
    pub horizon: u64,
    pub replications: u64,
    #[serde(default)]
    pub seed_base: u64,
    #[serde(default)]
    pub schedule: Option<Schedule>,
    #[serde(default)]
    pub eb: EbConfig,
    #[serde(default)]
    pub sampler: GammaSamplerConfig,
    /// Hold gamma and the items fixed across replications.
    #[serde(default)]
    pub instance_seed: Option<u64>,
    pub output_dir: PathBuf,
}

impl GridConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn settings(&self) -> AgentSettings {
        AgentSettings {
            schedule: self.schedule.clone(),
            eb: self.eb.clone(),
            sampler: self.sampler.clone(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let cfg = |e: Error| match e {
            Error::Config(m) => Error::Config(m),
            other => Error::Config(other.to_string()),
        };
        let scenario = self.scenario.resolve()?;
        scenario.validate().map_err(cfg)?;
        if self.agents.is_empty() {
            return Err(Error::Config("at least one agent is required".into()));
        }
        let mut seen = std::collections::HashSet::new();
        if let Some(a) = self.agents.iter().find(|a| !seen.insert(**a)) {
            return Err(Error::Config(format!("agent '{}' listed twice", a.name())));
        }
        if self.horizon == 0 || self.replications == 0 {
            return Err(Error::Config("T and replications must be positive".into()));
        }
        if let Some(s) = &self.schedule {
            s.validate().map_err(cfg)?;
        }
        self.eb.validate().map_err(cfg)?;
        self.sampler.validate().map_err(cfg)?;
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CellFailure {
    pub replication: u64,
    pub seed: u64,
    pub error: String,
}

/// Outcome of one (scenario, agent) cell.
#[derive(Debug, Clone)]
pub struct CellResult {
    pub agent: AgentKind,
    pub outcomes: Vec<(u64, ReplicationOutcome)>,
    pub failures: Vec<CellFailure>,
}

impl CellResult {
    pub fn traces(&self) -> Vec<RegretTrace> {
        self.outcomes.iter().map(|(_, o)| o.trace.clone()).collect()
    }

    pub fn curve(&self) -> Result<Curve> {
        aggregate(&self.traces())
    }
}

/// Run every replication of one agent on one scenario.
#[allow(clippy::too_many_arguments)]
pub fn run_cell(
    scenario: &ScenarioConfig,
    agent: AgentKind,
    horizon: u64,
    replications: u64,
    seed_base: u64,
    instance_seed: Option<u64>,
    settings: &AgentSettings,
    workers: Option<usize>,
) -> CellResult {
    let results = map_indexed(replications as usize, workers, |r| {
        let seed = replication_seed(seed_base, r as u64);
        let out = run_replication_with(scenario, agent, horizon, seed, instance_seed, settings);
        (r as u64, seed, out)
    });
    let mut cell = CellResult {
        agent,
        outcomes: Vec::new(),
        failures: Vec::new(),
    };
    for (r, seed, out) in results {
        match out {
            Ok(mut o) => {
                o.trace.replication = r;
                cell.outcomes.push((r, o));
            }
            Err(e) => cell.failures.push(CellFailure {
                replication: r,
                seed,
                error: e.to_string(),
            }),
        }
    }
    cell
}

#[derive(Debug, Clone, Serialize)]
struct CellMetadata {
    agent: &'static str,
    csv: Option<String>,
    replications_ok: usize,
    single_trace: bool,
    failures: Vec<CellFailure>,
    mean_gamma_draws: f64,
    max_clamped_fraction: f64,
    /// Misspecification normalizer per replication, when the scenario uses one.
    normalizers: Vec<Option<f64>>,
    final_mean_cum_regret: Option<f64>,
    final_stderr_cum_regret: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
struct RunMetadata<'a> {
    config: &'a GridConfig,
    scenario: ScenarioConfig,
    version: &'static str,
    parallel: bool,
    wall_time_secs: f64,
    cells: Vec<CellMetadata>,
}

/// Summary of a grid run.
#[derive(Debug, Clone)]
pub struct GridReport {
    pub csv_paths: Vec<PathBuf>,
    pub metadata_path: PathBuf,
    pub failed_cells: usize,
}

/// File name for one curve.
pub fn curve_file_name(scenario: &str, agent: AgentKind) -> String {
    format!("{scenario}__{}.csv", agent.name())
}

/// Execute a grid: one curve CSV per agent plus `metadata.json`.
pub fn run_grid(config: &GridConfig, workers: Option<usize>) -> Result<GridReport> {
    config.validate()?;
    let scenario = config.scenario.resolve()?;
    let settings = config.settings();
    let start = Instant::now();
    let cells: Vec<CellResult> = config
        .agents
        .iter()
        .map(|&a| {
            run_cell(
                &scenario,
                a,
                config.horizon,
                config.replications,
                config.seed_base,
                config.instance_seed,
                &settings,
                workers,
            )
        })
        .collect();
    let wall = start.elapsed().as_secs_f64();

    fs::create_dir_all(&config.output_dir)?;
    let mut csv_paths = Vec::new();
    let mut meta_cells = Vec::new();
    let mut failed_cells = 0;
    for cell in &cells {
        if !cell.failures.is_empty() {
            failed_cells += 1;
        }
        let mut meta = CellMetadata {
            agent: cell.agent.name(),
            csv: None,
            replications_ok: cell.outcomes.len(),
            single_trace: cell.outcomes.len() == 1,
            failures: cell.failures.clone(),
            mean_gamma_draws: 0.0,
            max_clamped_fraction: 0.0,
            normalizers: cell.outcomes.iter().map(|(_, o)| o.normalizer).collect(),
            final_mean_cum_regret: None,
            final_stderr_cum_regret: None,
        };
        if !cell.outcomes.is_empty() {
            let m = cell.outcomes.len() as f64;
            meta.mean_gamma_draws = cell.outcomes.iter().map(|(_, o)| o.gamma_draws as f64).sum::<f64>() / m;
            meta.max_clamped_fraction = cell
                .outcomes
                .iter()
                .map(|(_, o)| o.clamped_fraction)
                .fold(0.0, f64::max);
            let curve = cell.curve()?;
            let name = curve_file_name(&scenario.name, cell.agent);
            let path = config.output_dir.join(&name);
            write_curve_csv(&curve, fs::File::create(&path)?)?;
            meta.csv = Some(name);
            meta.final_mean_cum_regret = Some(curve.final_mean());
            meta.final_stderr_cum_regret = curve.stderr_cum.last().copied();
            csv_paths.push(path);
        }
        meta_cells.push(meta);
    }
    let metadata = RunMetadata {
        config,
        scenario: scenario.clone(),
        version: env!("CARGO_PKG_VERSION"),
        parallel: crate::par::is_parallel(),
        wall_time_secs: wall,
        cells: meta_cells,
    };
    let metadata_path = config.output_dir.join("metadata.json");
    fs::write(&metadata_path, serde_json::to_string_pretty(&metadata)?)?;
    Ok(GridReport {
        csv_paths,
        metadata_path,
        failed_cells,
    })
}

/// Final cumulative regret per agent, keyed by name; convenience for summaries.
pub fn final_regrets(cells: &[CellResult]) -> Result<BTreeMap<&'static str, f64>> {
    cells
        .iter()
        .map(|c| Ok((c.agent.name(), c.curve()?.final_mean())))
        .collect()
}
