//! Scenario files, batch execution, prior sweeps and report emission.
//!
//! Scenario documents are JSON; source and state indices in files and
//! reports are 1-based.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{
    self, Allocation, Classification, InterventionSpec, SimulationConfig, SimulationTrace,
    TieBreakRule,
};
use crate::error::{Error, Result};
use crate::gaussian::{Environment, GaussianPrior, Objective};
use crate::oracle::{self, ComparisonRow};
use crate::spanning::{self, AssumptionReport, Witness};

/// Intervention as written in a scenario; `FreeSignalsAuto` escalates γ.
#[derive(Debug, Clone, PartialEq)]
pub enum ScenarioIntervention {
    Fixed(InterventionSpec),
    FreeSignalsAuto { gamma0: f64 },
}

/// Outcome a scenario is expected to reproduce (regression tag).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Expected {
    pub classification: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trapped_set: Option<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub environment: Environment,
    pub prior: GaussianPrior,
    pub horizon: u64,
    pub tie_break: TieBreakRule,
    pub intervention: ScenarioIntervention,
    pub sample_realizations: bool,
    pub seed: u64,
    pub expected: Option<Expected>,
    /// When set, the report includes a greedy-vs-optimal table up to this t.
    pub compare_t: Option<u64>,
}

impl Scenario {
    pub fn simulation_config(&self) -> SimulationConfig {
        SimulationConfig {
            horizon: self.horizon,
            tie_break: self.tie_break,
            intervention: match &self.intervention {
                ScenarioIntervention::Fixed(spec) => spec.clone(),
                ScenarioIntervention::FreeSignalsAuto { .. } => InterventionSpec::None,
            },
            sample_realizations: self.sample_realizations,
            seed: self.seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum RawTieBreak {
    LowestIndex,
    Random(u64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
enum RawFreeSignals {
    Vectors(Vec<Vec<f64>>),
    Bounded { vectors: Vec<Vec<f64>>, gamma: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawAuto {
    gamma0: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum RawIntervention {
    None,
    Precision(u64),
    Batch(u64),
    FreeSignals(RawFreeSignals),
    FreeSignalsAuto(RawAuto),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawObjective {
    weight: f64,
    direction: Vec<f64>,
}

fn default_tie_break() -> RawTieBreak {
    RawTieBreak::LowestIndex
}

fn default_intervention() -> RawIntervention {
    RawIntervention::None
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    name: String,
    coefficients: Vec<Vec<f64>>,
    #[serde(default)]
    objective: Option<Vec<RawObjective>>,
    #[serde(default)]
    prior_mean: Option<Vec<f64>>,
    prior_cov: Vec<Vec<f64>>,
    horizon: u64,
    #[serde(default = "default_tie_break")]
    tie_break: RawTieBreak,
    #[serde(default = "default_intervention")]
    intervention: RawIntervention,
    #[serde(default)]
    sample_realizations: bool,
    #[serde(default)]
    seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    expected: Option<Expected>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    compare_t: Option<u64>,
}

fn rows_matrix(rows: &[Vec<f64>], path: &str) -> Result<DMatrix<f64>> {
    let ncols = rows.first().map_or(0, Vec::len);
    for (r, row) in rows.iter().enumerate() {
        if row.len() != ncols {
            return Err(Error::scenario(
                format!("{path}[{r}]"),
                format!("expected {ncols} entries, found {}", row.len()),
            ));
        }
    }
    Ok(DMatrix::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
}

fn located(path: String, err: Error) -> Error {
    match err {
        Error::Scenario { .. } => err,
        other => Error::scenario(path, other.to_string()),
    }
}

fn valid_name(name: &str) -> bool {
    !name.is_empty()
        && name
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '-' | '.'))
        && !name.starts_with('.')
}

fn from_raw(raw: RawScenario, prefix: &str) -> Result<Scenario> {
    let at = |field: &str| format!("{prefix}{field}");
    if !valid_name(&raw.name) {
        return Err(Error::scenario(
            at("name"),
            "must be non-empty and use only letters, digits, '_', '-' or '.'",
        ));
    }
    let coefficients = rows_matrix(&raw.coefficients, &at("coefficients"))?;
    let k = coefficients.ncols();
    let objective = match raw.objective {
        Some(list) => list
            .into_iter()
            .map(|o| Objective::new(o.weight, o.direction))
            .collect(),
        None => {
            let mut e1 = vec![0.0; k];
            if k > 0 {
                e1[0] = 1.0;
            }
            vec![Objective::new(1.0, e1)]
        }
    };
    let environment =
        Environment::new(coefficients, objective).map_err(|e| located(at("coefficients"), e))?;
    let mean = raw.prior_mean.unwrap_or_else(|| vec![0.0; k]);
    if mean.len() != k {
        return Err(Error::scenario(
            at("prior_mean"),
            format!("expected {k} entries, found {}", mean.len()),
        ));
    }
    let cov = rows_matrix(&raw.prior_cov, &at("prior_cov"))?;
    if cov.nrows() != k || cov.ncols() != k {
        return Err(Error::scenario(
            at("prior_cov"),
            format!(
                "expected a {k}x{k} matrix, found {}x{}",
                cov.nrows(),
                cov.ncols()
            ),
        ));
    }
    let prior = GaussianPrior::new(DVector::from_vec(mean), cov)
        .map_err(|e| located(at("prior_cov"), e))?;
    if raw.horizon == 0 {
        return Err(Error::scenario(at("horizon"), "must be at least 1"));
    }
    let tie_break = match raw.tie_break {
        RawTieBreak::LowestIndex => TieBreakRule::LowestIndex,
        RawTieBreak::Random(seed) => TieBreakRule::Random(seed),
    };
    let intervention = match raw.intervention {
        RawIntervention::None => ScenarioIntervention::Fixed(InterventionSpec::None),
        RawIntervention::Precision(b) => {
            ScenarioIntervention::Fixed(InterventionSpec::PrecisionReplicate(b))
        }
        RawIntervention::Batch(b) => {
            ScenarioIntervention::Fixed(InterventionSpec::BatchAllocate(b))
        }
        RawIntervention::FreeSignals(body) => {
            let to_vecs =
                |v: Vec<Vec<f64>>| v.into_iter().map(DVector::from_vec).collect::<Vec<_>>();
            ScenarioIntervention::Fixed(match body {
                RawFreeSignals::Vectors(v) => InterventionSpec::free_signals(to_vecs(v)),
                RawFreeSignals::Bounded { vectors, gamma } => InterventionSpec::FreeSignals {
                    vectors: to_vecs(vectors),
                    gamma,
                },
            })
        }
        RawIntervention::FreeSignalsAuto(RawAuto { gamma0 }) => {
            if !(gamma0.is_finite() && gamma0 > 0.0) {
                return Err(Error::scenario(
                    at("intervention.free_signals_auto.gamma0"),
                    "must be positive",
                ));
            }
            ScenarioIntervention::FreeSignalsAuto { gamma0 }
        }
    };
    if let ScenarioIntervention::Fixed(spec) = &intervention {
        spec.validate(&environment)
            .map_err(|e| located(at("intervention"), e))?;
    }
    if let Some(exp) = &raw.expected {
        if !matches!(
            exp.classification.as_str(),
            "trap" | "efficient" | "undetermined"
        ) {
            return Err(Error::scenario(
                at("expected.classification"),
                "must be \"trap\", \"efficient\" or \"undetermined\"",
            ));
        }
    }
    if raw.compare_t == Some(0) {
        return Err(Error::scenario(at("compare_t"), "must be at least 1"));
    }
    Ok(Scenario {
        name: raw.name,
        environment,
        prior,
        horizon: raw.horizon,
        tie_break,
        intervention,
        sample_realizations: raw.sample_realizations,
        seed: raw.seed,
        expected: raw.expected,
        compare_t: raw.compare_t,
    })
}

fn to_raw(s: &Scenario) -> RawScenario {
    let matrix_rows = |m: &DMatrix<f64>| -> Vec<Vec<f64>> {
        (0..m.nrows())
            .map(|i| m.row(i).iter().copied().collect())
            .collect()
    };
    let intervention = match &s.intervention {
        ScenarioIntervention::FreeSignalsAuto { gamma0 } => {
            RawIntervention::FreeSignalsAuto(RawAuto { gamma0: *gamma0 })
        }
        ScenarioIntervention::Fixed(spec) => match spec {
            InterventionSpec::None => RawIntervention::None,
            InterventionSpec::PrecisionReplicate(b) => RawIntervention::Precision(*b),
            InterventionSpec::BatchAllocate(b) => RawIntervention::Batch(*b),
            InterventionSpec::FreeSignals { vectors, gamma } => {
                let rows: Vec<Vec<f64>> = vectors
                    .iter()
                    .map(|v| v.iter().copied().collect())
                    .collect();
                let implied = vectors.iter().map(|v| v.norm()).fold(0.0, f64::max);
                RawIntervention::FreeSignals(if implied == *gamma {
                    RawFreeSignals::Vectors(rows)
                } else {
                    RawFreeSignals::Bounded {
                        vectors: rows,
                        gamma: *gamma,
                    }
                })
            }
        },
    };
    RawScenario {
        name: s.name.clone(),
        coefficients: matrix_rows(s.environment.coefficients()),
        objective: Some(
            s.environment
                .objective()
                .iter()
                .map(|o| RawObjective {
                    weight: o.weight,
                    direction: o.direction.iter().copied().collect(),
                })
                .collect(),
        ),
        prior_mean: Some(s.prior.mean().iter().copied().collect()),
        prior_cov: matrix_rows(s.prior.covariance()),
        horizon: s.horizon,
        tie_break: match s.tie_break {
            TieBreakRule::LowestIndex => RawTieBreak::LowestIndex,
            TieBreakRule::Random(seed) => RawTieBreak::Random(seed),
        },
        intervention,
        sample_realizations: s.sample_realizations,
        seed: s.seed,
        expected: s.expected.clone(),
        compare_t: s.compare_t,
    }
}

fn parse_raw<T: serde::de::DeserializeOwned>(text: &str) -> Result<T> {
    let mut de = serde_json::Deserializer::from_str(text);
    let value = serde_path_to_error::deserialize(&mut de).map_err(|e| {
        let path = e.path().to_string();
        Error::scenario(
            if path == "." {
                "<document>".to_string()
            } else {
                path
            },
            e.into_inner().to_string(),
        )
    })?;
    de.end()
        .map_err(|e| Error::scenario("<document>", e.to_string()))?;
    Ok(value)
}

/// Parses and validates a single scenario document.
pub fn parse_scenario(text: &str) -> Result<Scenario> {
    from_raw(parse_raw(text)?, "")
}

#[derive(Deserialize)]
#[serde(untagged)]
enum RawBatch {
    Many(Vec<serde_json::Value>),
    One(serde_json::Value),
}

/// Parses a document holding either one scenario or an array of them.
pub fn parse_batch(text: &str) -> Result<Vec<Scenario>> {
    let values = match parse_raw::<RawBatch>(text)? {
        RawBatch::Many(v) => v,
        RawBatch::One(v) => return Ok(vec![parse_scenario(&v.to_string())?]),
    };
    let mut out: Vec<Scenario> = Vec::with_capacity(values.len());
    for (i, v) in values.into_iter().enumerate() {
        let raw: RawScenario = serde_path_to_error::deserialize(v).map_err(|e| {
            let path = e.path().to_string();
            let path = if path == "." {
                format!("[{i}]")
            } else {
                format!("[{i}].{path}")
            };
            Error::scenario(path, e.into_inner().to_string())
        })?;
        let scenario = from_raw(raw, &format!("[{i}]."))?;
        if out.iter().any(|s| s.name == scenario.name) {
            return Err(Error::scenario(
                format!("[{i}].name"),
                format!("duplicate scenario name {:?}", scenario.name),
            ));
        }
        out.push(scenario);
    }
    Ok(out)
}

pub fn load_batch(path: &Path) -> Result<Vec<Scenario>> {
    parse_batch(&fs::read_to_string(path)?)
}

/// Serializes a scenario with every field explicit.
pub fn emit(scenario: &Scenario) -> String {
    serde_json::to_string_pretty(&to_raw(scenario)).expect("scenario serializes")
}

/// Formats a float like C's `%.17g`.
pub fn format_g17(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return if x.is_sign_negative() {
            "-0".into()
        } else {
            "0".into()
        };
    }
    let sci = format!("{:.16e}", x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-4..17).contains(&exp) {
        let m = trim_fraction(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{m}e{sign}{:02}", exp.abs())
    } else {
        let decimals = (16 - exp) as usize;
        trim_fraction(&format!("{:.*}", decimals, x)).to_string()
    }
}

fn trim_fraction(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

/// Trace CSV: `t,choice,posterior_variance,count_1..count_N`, choices and
/// counts 1-based.
pub fn trace_csv(trace: &SimulationTrace) -> String {
    let n = trace.final_counts.len();
    let mut out = String::from("t,choice,posterior_variance");
    for i in 1..=n {
        let _ = write!(out, ",count_{i}");
    }
    out.push('\n');
    for (step, (choice, counts)) in trace.choices.iter().zip(trace.count_path()).enumerate() {
        let choice = match choice {
            Allocation::Single(i) => (i + 1).to_string(),
            Allocation::Batch(b) => b.iter().map(u64::to_string).collect::<Vec<_>>().join(";"),
        };
        let _ = write!(
            out,
            "{},{},{}",
            step + 1,
            choice,
            format_g17(trace.variance_path[step])
        );
        for c in counts.counts() {
            let _ = write!(out, ",{c}");
        }
        out.push('\n');
    }
    out
}

fn one_based(indices: &[usize]) -> Vec<usize> {
    indices.iter().map(|i| i + 1).collect()
}

/// Non-finite numbers are written as `null`.
fn finite(x: f64) -> Option<f64> {
    x.is_finite().then_some(x)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WitnessReport {
    pub kind: spanning::WitnessKind,
    pub indices: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AssumptionSummary {
    pub unique_minimizer: bool,
    pub gap: Option<f64>,
    pub strong_linear_independence: bool,
    pub unique_minimizer_every_subspace: bool,
    pub all_minimal_sets_size_k: bool,
    pub witnesses: Vec<WitnessReport>,
}

impl From<&AssumptionReport> for AssumptionSummary {
    fn from(r: &AssumptionReport) -> Self {
        AssumptionSummary {
            unique_minimizer: r.unique_minimizer,
            gap: r.gap,
            strong_linear_independence: r.strong_linear_independence,
            unique_minimizer_every_subspace: r.unique_minimizer_every_subspace,
            all_minimal_sets_size_k: r.all_minimal_sets_size_k,
            witnesses: r
                .witnesses
                .iter()
                .map(|w: &Witness| WitnessReport {
                    kind: w.kind,
                    indices: one_based(&w.indices),
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Report {
    pub name: String,
    pub classification: String,
    pub trapped_set: Option<Vec<usize>>,
    pub inefficiency_ratio: Option<f64>,
    pub frequency_estimate: Vec<f64>,
    pub phi_best: Option<f64>,
    pub best_set: Option<Vec<usize>>,
    pub lambda_star: Vec<f64>,
    pub assumption_report: Option<AssumptionSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma_final: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub comparison: Option<Vec<ComparisonRow>>,
}

impl Report {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    /// Whether the report matches the scenario's expected outcome, if any.
    pub fn matches(&self, expected: &Expected) -> bool {
        self.classification == expected.classification
            && expected
                .trapped_set
                .as_ref()
                .is_none_or(|set| self.trapped_set.as_ref() == Some(set))
    }
}

#[derive(Debug, Clone)]
pub struct ScenarioRun {
    pub trace: SimulationTrace,
    pub report: Report,
}

/// Simulates one scenario and builds its report.
pub fn run_scenario(scenario: &Scenario) -> Result<ScenarioRun> {
    let env = &scenario.environment;
    let config = scenario.simulation_config();
    let (gamma_final, trace) = match &scenario.intervention {
        ScenarioIntervention::FreeSignalsAuto { gamma0 } => {
            let (g, t) = dynamics::escalate_gamma_with(env, &scenario.prior, &config, *gamma0)?;
            (Some(g), t)
        }
        ScenarioIntervention::Fixed(_) => {
            (None, dynamics::simulate(env, &scenario.prior, &config)?)
        }
    };
    let assumption_report = if env.single_target().is_ok() {
        Some(AssumptionSummary::from(&spanning::check_assumptions(env)?))
    } else {
        None
    };
    let comparison = match scenario.compare_t {
        Some(t) => Some(oracle::greedy_vs_optimal(env, &scenario.prior, t)?),
        None => None,
    };
    let report = Report {
        name: scenario.name.clone(),
        classification: trace.classification.label().to_string(),
        trapped_set: match &trace.classification {
            Classification::Trap(set) => Some(one_based(set)),
            _ => None,
        },
        inefficiency_ratio: finite(trace.inefficiency_ratio),
        frequency_estimate: trace.frequency_estimate.weights().to_vec(),
        phi_best: trace.benchmark.phi_best,
        best_set: trace.benchmark.best_set.as_deref().map(one_based),
        lambda_star: trace.benchmark.lambda_star.weights().to_vec(),
        assumption_report,
        gamma_final,
        comparison,
    };
    Ok(ScenarioRun { trace, report })
}

/// Thread pool honouring `INFOTRAP_THREADS`.
pub fn thread_pool() -> Result<rayon::ThreadPool> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var("INFOTRAP_THREADS") {
        let n: usize = v.trim().parse().map_err(|_| {
            Error::InvalidEnvironment(format!(
                "INFOTRAP_THREADS must be a positive integer, got {v:?}"
            ))
        })?;
        if n == 0 {
            return Err(Error::InvalidEnvironment(
                "INFOTRAP_THREADS must be at least 1".into(),
            ));
        }
        builder = builder.num_threads(n);
    }
    builder
        .build()
        .map_err(|e| Error::InvalidEnvironment(format!("cannot build thread pool: {e}")))
}

/// Runs every scenario in parallel, writing `<name>.trace.csv` and
/// `<name>.report.json` into `out_dir`. Reports are returned in input order.
pub fn run_batch(scenarios: &[Scenario], out_dir: &Path) -> Result<Vec<Report>> {
    if scenarios.is_empty() {
        return Ok(Vec::new());
    }
    fs::create_dir_all(out_dir)?;
    let runs: Vec<Result<ScenarioRun>> =
        thread_pool()?.install(|| scenarios.par_iter().map(run_scenario).collect());
    let mut reports = Vec::with_capacity(runs.len());
    for run in runs {
        let run = run?;
        fs::write(
            out_dir.join(format!("{}.trace.csv", run.report.name)),
            trace_csv(&run.trace),
        )?;
        fs::write(
            out_dir.join(format!("{}.report.json", run.report.name)),
            run.report.to_json(),
        )?;
        reports.push(run.report);
    }
    Ok(reports)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub base: Scenario,
    /// 0-based state whose prior variance is varied.
    pub state: usize,
    pub grid: Vec<f64>,
}

impl SweepSpec {
    pub fn new(base: Scenario, state: usize, grid: Vec<f64>) -> Result<Self> {
        if grid.is_empty() {
            return Err(Error::scenario("grid", "must not be empty"));
        }
        if grid.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::scenario("grid", "values must be positive"));
        }
        if grid.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::scenario(
                "grid",
                "values must be strictly increasing",
            ));
        }
        if state >= base.environment.num_states() {
            return Err(Error::scenario(
                "state",
                format!(
                    "state {} out of range 1..={}",
                    state + 1,
                    base.environment.num_states()
                ),
            ));
        }
        Ok(SweepSpec { base, state, grid })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub variance: f64,
    pub classification: String,
    pub trapped_set: Option<Vec<usize>>,
    pub inefficiency_ratio: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepReport {
    pub name: String,
    /// 1-based state index.
    pub state: usize,
    pub rows: Vec<SweepRow>,
    /// Consecutive grid values around the first classification change.
    pub threshold: Option<(f64, f64)>,
}

/// Re-runs the base scenario with one prior variance replaced by each grid
/// value.
pub fn sweep(spec: &SweepSpec) -> Result<SweepReport> {
    let rows: Vec<SweepRow> = thread_pool()?.install(|| {
        spec.grid
            .par_iter()
            .map(|&v| {
                let scenario = Scenario {
                    prior: spec.base.prior.with_variance(spec.state, v)?,
                    ..spec.base.clone()
                };
                let run = run_scenario(&Scenario {
                    compare_t: None,
                    ..scenario
                })?;
                Ok(SweepRow {
                    variance: v,
                    classification: run.report.classification,
                    trapped_set: run.report.trapped_set,
                    inefficiency_ratio: run.report.inefficiency_ratio,
                })
            })
            .collect::<Result<Vec<_>>>()
    })?;
    let threshold = rows
        .windows(2)
        .find(|w| {
            (&w[0].classification, &w[0].trapped_set) != (&w[1].classification, &w[1].trapped_set)
        })
        .map(|w| (w[0].variance, w[1].variance));
    Ok(SweepReport {
        name: spec.base.name.clone(),
        state: spec.state + 1,
        rows,
        threshold,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SetSummary {
    pub indices: Vec<usize>,
    pub beta: Vec<f64>,
    pub phi: f64,
    pub lambda_star: Vec<f64>,
    pub subspace_optimal: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NumericSummary {
    pub frequencies: Vec<f64>,
    pub value: f64,
    pub label: String,
    pub non_unique: bool,
}

/// Static analysis of a scenario's environment (prior not used).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnalysisReport {
    pub name: String,
    pub minimal_sets: Option<Vec<SetSummary>>,
    pub phi_l1: Option<f64>,
    pub best_set: Option<Vec<usize>>,
    pub assumption_report: Option<AssumptionSummary>,
    pub numeric_optimum: Option<NumericSummary>,
}

impl AnalysisReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("analysis serializes");
        s.push('\n');
        s
    }
}

pub fn analyze(scenario: &Scenario) -> Result<AnalysisReport> {
    let env = &scenario.environment;
    if env.single_target().is_err() {
        let numeric = oracle::optimal_frequency_numeric(env)?;
        return Ok(AnalysisReport {
            name: scenario.name.clone(),
            minimal_sets: None,
            phi_l1: None,
            best_set: None,
            assumption_report: None,
            numeric_optimum: Some(NumericSummary {
                frequencies: numeric.frequencies.weights().to_vec(),
                value: numeric.value,
                label: numeric.label().to_string(),
                non_unique: numeric.non_unique,
            }),
        });
    }
    let sets = spanning::enumerate_minimal_spanning_sets(env)?;
    let minimal_sets = sets
        .iter()
        .map(|r| {
            Ok(SetSummary {
                indices: one_based(&r.indices),
                beta: r.beta.clone(),
                phi: r.phi,
                lambda_star: r.lambda_star.weights().to_vec(),
                subspace_optimal: spanning::is_subspace_optimal(env, &r.indices)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(AnalysisReport {
        name: scenario.name.clone(),
        best_set: sets.first().map(|r| one_based(&r.indices)),
        minimal_sets: Some(minimal_sets),
        phi_l1: Some(spanning::phi_by_l1(env)?.0),
        assumption_report: Some(AssumptionSummary::from(&spanning::check_assumptions(env)?)),
        numeric_optimum: None,
    })
}

/// `t,greedy_variance,optimal_variance,ratio,benchmark`
pub fn comparison_csv(rows: &[ComparisonRow]) -> String {
    let mut out = String::from("t,greedy_variance,optimal_variance,ratio,benchmark\n");
    for r in rows {
        let kind = match r.benchmark {
            oracle::BenchmarkKind::Oracle => "oracle",
            oracle::BenchmarkKind::LambdaStar => "lambda_star",
        };
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            r.t,
            format_g17(r.greedy_value),
            format_g17(r.optimal_value),
            format_g17(r.ratio),
            kind
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    const EXAMPLE2: &str = r#"{
        "name": "example2",
        "coefficients": [[1, 0], [3, 1], [0, 1]],
        "prior_cov": [[1, 0], [0, 10]],
        "horizon": 1000
    }"#;

    #[test]
    fn parses_defaults() {
        let s = parse_scenario(EXAMPLE2).unwrap();
        assert_eq!(s.environment.num_sources(), 3);
        assert_eq!(s.tie_break, TieBreakRule::LowestIndex);
        assert_eq!(
            s.intervention,
            ScenarioIntervention::Fixed(InterventionSpec::None)
        );
        assert_eq!(s.prior.covariance()[(1, 1)], 10.0);
    }

    #[test]
    fn round_trip() {
        let s = parse_scenario(EXAMPLE2).unwrap();
        assert_eq!(parse_scenario(&emit(&s)).unwrap(), s);
    }

    #[test]
    fn intervention_forms() {
        for (text, expected) in [
            (
                r#""none""#,
                ScenarioIntervention::Fixed(InterventionSpec::None),
            ),
            (
                r#"{"none": null}"#,
                ScenarioIntervention::Fixed(InterventionSpec::None),
            ),
            (
                r#"{"precision": 10}"#,
                ScenarioIntervention::Fixed(InterventionSpec::PrecisionReplicate(10)),
            ),
            (
                r#"{"batch": 2}"#,
                ScenarioIntervention::Fixed(InterventionSpec::BatchAllocate(2)),
            ),
            (
                r#"{"free_signals_auto": {"gamma0": 1}}"#,
                ScenarioIntervention::FreeSignalsAuto { gamma0: 1.0 },
            ),
        ] {
            let doc = EXAMPLE2.replace(
                "\"horizon\"",
                &format!("\"intervention\": {text}, \"horizon\""),
            );
            assert_eq!(
                parse_scenario(&doc).unwrap().intervention,
                expected,
                "{text}"
            );
        }
    }

    #[test]
    fn located_errors() {
        let bad = EXAMPLE2.replace("[[1, 0], [0, 10]]", "[[1, 2], [2, 1]]");
        match parse_scenario(&bad) {
            Err(Error::Scenario { path, reason }) => {
                assert_eq!(path, "prior_cov");
                assert!(reason.contains("not positive definite"));
            }
            other => panic!("unexpected {other:?}"),
        }
        let bad = EXAMPLE2.replace("\"horizon\": 1000", "\"horizon\": \"long\"");
        assert!(
            matches!(parse_scenario(&bad), Err(Error::Scenario { path, .. }) if path == "horizon")
        );
        let bad = EXAMPLE2.replace(
            "\"horizon\"",
            "\"intervention\": {\"batch\": 20}, \"horizon\"",
        );
        assert!(
            matches!(parse_scenario(&bad), Err(Error::Scenario { path, .. }) if path == "intervention")
        );
    }

    #[test]
    fn batch_rejects_duplicate_names() {
        let doc = format!("[{EXAMPLE2}, {EXAMPLE2}]");
        assert!(
            matches!(parse_batch(&doc), Err(Error::Scenario { path, .. }) if path == "[1].name")
        );
        assert_eq!(parse_batch(EXAMPLE2).unwrap().len(), 1);
        assert!(parse_batch("[]").unwrap().is_empty());
    }

    #[test]
    fn g17_formatting() {
        assert_eq!(format_g17(1.0), "1");
        assert_eq!(format_g17(0.5), "0.5");
        assert_eq!(format_g17(0.1), "0.10000000000000001");
        assert_eq!(format_g17(0.175), "0.17499999999999999");
        assert_eq!(format_g17(1e-5), "1.0000000000000001e-05");
        assert_eq!(format_g17(1e20), "1e+20");
        assert_eq!(format_g17(123456.0), "123456");
        assert_eq!(format_g17(2.0 / 3.0), "0.66666666666666663");
        assert_eq!(format_g17(1e-4), "0.0001");
        assert_eq!(format_g17(1e16), "10000000000000000");
        assert_eq!(format_g17(1.5e17), "1.5e+17");
    }
}
