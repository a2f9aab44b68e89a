//! Greedy sequential acquisition, interventions, and long-run classification.
//!
//! Each period one agent adds the allocation that minimizes the posterior
//! loss at the end of the period. Choices depend only on the precision
//! matrix, so the whole path is deterministic given the prior (and the seed
//! when ties are broken at random).

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaussian::{
    asymptotic_variance, objective_value, rank_one_reductions, BeliefState, DivisionVector,
    Environment, FrequencyVector, GaussianPrior,
};
use crate::linalg;
use crate::oracle;
use crate::spanning::{self, phi_tied};

/// Largest batch size for exhaustive batch allocation.
pub const MAX_BATCH: u64 = 12;
/// Largest number of sources for exhaustive batch allocation.
pub const MAX_BATCH_SOURCES: usize = 8;
/// End-of-period losses within this fraction of the current loss are tied.
pub const GREEDY_TIE_TOLERANCE: f64 = 1e-12;
/// L∞ distance to λ* under which a run counts as efficient.
pub const EFFICIENCY_THRESHOLD: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TieBreakRule {
    #[default]
    LowestIndex,
    Random(u64),
}

#[derive(Debug, Clone, PartialEq, Default)]
pub enum InterventionSpec {
    #[default]
    None,
    /// Each acquisition yields `B` independent observations of one source.
    PrecisionReplicate(u64),
    /// Each agent splits `B` observations across sources.
    BatchAllocate(u64),
    /// Public signals `⟨pⱼ, θ⟩ + N(0,1)` revealed once at the start; every
    /// `pⱼ` has norm at most `gamma`.
    FreeSignals {
        vectors: Vec<DVector<f64>>,
        gamma: f64,
    },
}

impl InterventionSpec {
    /// Free signals with the bound set to the largest vector norm.
    pub fn free_signals(vectors: Vec<DVector<f64>>) -> Self {
        let gamma = vectors.iter().map(|v| v.norm()).fold(0.0, f64::max);
        InterventionSpec::FreeSignals { vectors, gamma }
    }

    pub fn validate(&self, env: &Environment) -> Result<()> {
        match self {
            InterventionSpec::None => Ok(()),
            InterventionSpec::PrecisionReplicate(b) => {
                if *b == 0 {
                    return Err(Error::InvalidIntervention("B must be at least 1".into()));
                }
                Ok(())
            }
            InterventionSpec::BatchAllocate(b) => {
                if *b == 0 {
                    return Err(Error::InvalidIntervention("B must be at least 1".into()));
                }
                if *b > MAX_BATCH || env.num_sources() > MAX_BATCH_SOURCES {
                    return Err(Error::SearchSpaceTooLarge {
                        size: linalg::binomial(env.num_sources() as u64 + b - 1, *b),
                        limit: linalg::binomial(
                            MAX_BATCH_SOURCES as u64 + MAX_BATCH - 1,
                            MAX_BATCH,
                        ),
                    });
                }
                Ok(())
            }
            InterventionSpec::FreeSignals { vectors, gamma } => {
                for (j, p) in vectors.iter().enumerate() {
                    if p.len() != env.num_states() {
                        return Err(Error::DimensionMismatch {
                            what: "free signal",
                            expected: env.num_states(),
                            found: p.len(),
                        });
                    }
                    if p.iter().any(|x| !x.is_finite()) {
                        return Err(Error::InvalidIntervention(format!(
                            "free signal {j} is not finite"
                        )));
                    }
                    if p.norm() > gamma * (1.0 + 1e-12) {
                        return Err(Error::InvalidIntervention(format!(
                            "free signal {j} has norm {} above the bound {gamma}",
                            p.norm()
                        )));
                    }
                }
                Ok(())
            }
        }
    }

    /// Observations per acquisition.
    fn units(&self) -> u64 {
        match self {
            InterventionSpec::PrecisionReplicate(b) | InterventionSpec::BatchAllocate(b) => *b,
            _ => 1,
        }
    }

    /// Count increments per period in the division vector; replicated
    /// acquisitions count once.
    fn counts_per_period(&self) -> u64 {
        match self {
            InterventionSpec::BatchAllocate(b) => *b,
            _ => 1,
        }
    }
}

/// One period's choice.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Allocation {
    Single(usize),
    Batch(Vec<u64>),
}

impl Allocation {
    /// Count increment this allocation adds to the division vector.
    pub fn add_to(&self, counts: &mut DivisionVector) {
        match self {
            Allocation::Single(i) => counts.add(*i, 1),
            Allocation::Batch(b) => {
                for (i, &x) in b.iter().enumerate() {
                    counts.add(i, x);
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Classification {
    Efficient,
    Trap(Vec<usize>),
    Undetermined,
}

impl Classification {
    pub fn label(&self) -> &'static str {
        match self {
            Classification::Efficient => "efficient",
            Classification::Trap(_) => "trap",
            Classification::Undetermined => "undetermined",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationConfig {
    pub horizon: u64,
    pub tie_break: TieBreakRule,
    pub intervention: InterventionSpec,
    pub sample_realizations: bool,
    pub seed: u64,
}

impl SimulationConfig {
    pub fn new(horizon: u64) -> Self {
        SimulationConfig {
            horizon,
            tie_break: TieBreakRule::LowestIndex,
            intervention: InterventionSpec::None,
            sample_realizations: false,
            seed: 0,
        }
    }

    pub fn with_intervention(mut self, spec: InterventionSpec) -> Self {
        self.intervention = spec;
        self
    }

    pub fn with_tie_break(mut self, rule: TieBreakRule) -> Self {
        self.tie_break = rule;
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationTrace {
    pub choices: Vec<Allocation>,
    /// `V` after each period.
    pub variance_path: Vec<f64>,
    pub final_counts: DivisionVector,
    pub classification: Classification,
    /// `+∞` when the observed frequencies do not identify the target.
    pub inefficiency_ratio: f64,
    pub frequency_estimate: FrequencyVector,
    /// Sources observed during the classification window.
    pub observed_set: Vec<usize>,
    pub benchmark: Benchmark,
    /// Present when realizations were sampled.
    pub true_state: Option<Vec<f64>>,
    pub posterior_mean: Option<Vec<f64>>,
}

impl SimulationTrace {
    /// Division vector after each period `t = 1..=horizon`.
    pub fn count_path(&self) -> Vec<DivisionVector> {
        let mut counts = DivisionVector::zeros(self.final_counts.len());
        self.choices
            .iter()
            .map(|a| {
                a.add_to(&mut counts);
                counts.clone()
            })
            .collect()
    }

    /// `max |mᵢ(t) − λ*ᵢ·t·units|` over periods `t` in `[from, to]`.
    pub fn sup_deviation(&self, from: u64, to: u64) -> f64 {
        let lam = self.benchmark.lambda_star.weights();
        let units = self.units() as f64;
        let mut worst = 0.0_f64;
        for (step, counts) in self.count_path().iter().enumerate() {
            let t = step as u64 + 1;
            if t < from || t > to {
                continue;
            }
            for (i, &c) in counts.counts().iter().enumerate() {
                worst = worst.max((c as f64 - lam[i] * t as f64 * units).abs());
            }
        }
        worst
    }

    fn units(&self) -> u64 {
        match self.choices.first() {
            Some(Allocation::Batch(b)) => b.iter().sum(),
            _ => 1,
        }
    }
}

/// The efficient long-run benchmark of an environment.
#[derive(Debug, Clone, PartialEq)]
pub struct Benchmark {
    pub lambda_star: FrequencyVector,
    /// `V*(λ*)`.
    pub optimal_value: f64,
    /// Best minimal spanning set and its φ; absent for multi-direction
    /// objectives, where λ* comes from numeric optimization only.
    pub best_set: Option<Vec<usize>>,
    pub phi_best: Option<f64>,
}

pub fn benchmark(env: &Environment) -> Result<Benchmark> {
    if env.single_target().is_ok() {
        let sets = spanning::enumerate_minimal_spanning_sets(env)?;
        let best = sets
            .first()
            .ok_or_else(|| Error::NotSpanning((0..env.num_sources()).collect()))?;
        Ok(Benchmark {
            lambda_star: best.lambda_star.clone(),
            optimal_value: best.phi * best.phi,
            best_set: Some(best.indices.clone()),
            phi_best: Some(best.phi),
        })
    } else {
        let numeric = oracle::optimal_frequency_numeric(env)?;
        Ok(Benchmark {
            optimal_value: asymptotic_variance(env, &numeric.frequencies)?,
            lambda_star: numeric.frequencies,
            best_set: None,
            phi_best: None,
        })
    }
}

/// Classifies long-run behaviour from the counts accumulated over a window of
/// `periods` periods with `units` observations each.
pub fn classify(
    env: &Environment,
    bench: &Benchmark,
    window_counts: &DivisionVector,
    periods: u64,
    units: u64,
) -> Result<(Classification, f64, FrequencyVector)> {
    let scale = (periods * units) as f64;
    let freq = FrequencyVector::new(
        window_counts
            .counts()
            .iter()
            .map(|&c| c as f64 / scale)
            .collect(),
    )?;
    let observed = window_counts.support();
    if let (Some(phi_best), Ok(_)) = (bench.phi_best, env.single_target()) {
        if let Ok(report) = spanning::beta_phi_lambda(env, &observed) {
            if report.phi > phi_best * (1.0 + 1e-9) {
                return Ok((Classification::Trap(observed), report.phi / phi_best, freq));
            }
        }
    }
    if freq.linf_distance(&bench.lambda_star) <= EFFICIENCY_THRESHOLD
        && observed == bench.lambda_star.support()
    {
        return Ok((Classification::Efficient, 1.0, freq));
    }
    let ratio = (asymptotic_variance(env, &freq)? / bench.optimal_value).sqrt();
    Ok((Classification::Undetermined, ratio, freq))
}

/// Adds `Σⱼ pⱼpⱼ'` to the prior precision.
pub fn apply_free_signals(
    prior: &GaussianPrior,
    vectors: &[DVector<f64>],
) -> Result<GaussianPrior> {
    if vectors.is_empty() {
        return Ok(prior.clone());
    }
    let mut precision = prior.precision().clone();
    for p in vectors {
        if p.len() != prior.dim() {
            return Err(Error::DimensionMismatch {
                what: "free signal",
                expected: prior.dim(),
                found: p.len(),
            });
        }
        precision.ger(1.0, p, p, 1.0);
    }
    GaussianPrior::from_precision(prior.mean().clone(), precision)
}

struct TieBreaker {
    rng: Option<ChaCha8Rng>,
}

impl TieBreaker {
    fn new(rule: TieBreakRule) -> Self {
        TieBreaker {
            rng: match rule {
                TieBreakRule::LowestIndex => None,
                TieBreakRule::Random(seed) => Some(ChaCha8Rng::seed_from_u64(seed)),
            },
        }
    }

    fn pick(&mut self, tied: usize) -> usize {
        match (&mut self.rng, tied) {
            (_, 0 | 1) | (None, _) => 0,
            (Some(rng), n) => rng.random_range(0..n),
        }
    }
}

fn choose(
    env: &Environment,
    precision: &DMatrix<f64>,
    spec: &InterventionSpec,
    ties: &mut TieBreaker,
) -> Result<(Allocation, f64)> {
    let factor = linalg::cholesky(precision, "posterior precision")?;
    let current = objective_value(env, &factor);
    let tol = GREEDY_TIE_TOLERANCE * current;
    match spec {
        InterventionSpec::BatchAllocate(b) => {
            // Candidates in descending lexicographic order so the lowest-index
            // rule favours earlier sources.
            let candidates = linalg::compositions_desc(*b, env.num_sources());
            let mut values = Vec::with_capacity(candidates.len());
            for cand in &candidates {
                let weights: Vec<f64> = cand.iter().map(|&x| x as f64).collect();
                let next = precision + env.information_matrix(&weights);
                values.push(objective_value(
                    env,
                    &linalg::cholesky(&next, "posterior precision")?,
                ));
            }
            let best = values.iter().copied().fold(f64::INFINITY, f64::min);
            let tied: Vec<usize> = (0..candidates.len())
                .filter(|&j| values[j] <= best + tol)
                .collect();
            let pick = tied[ties.pick(tied.len())];
            Ok((Allocation::Batch(candidates[pick].clone()), values[pick]))
        }
        _ => {
            let reductions = rank_one_reductions(env, &factor, spec.units() as f64);
            let best = reductions.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let tied: Vec<usize> = (0..reductions.len())
                .filter(|&i| reductions[i] >= best - tol)
                .collect();
            let pick = tied[ties.pick(tied.len())];
            Ok((Allocation::Single(pick), current - reductions[pick]))
        }
    }
}

fn effective_prior(prior: &GaussianPrior, spec: &InterventionSpec) -> Result<GaussianPrior> {
    match spec {
        InterventionSpec::FreeSignals { vectors, .. } => apply_free_signals(prior, vectors),
        _ => Ok(prior.clone()),
    }
}

fn check_dims(env: &Environment, prior: &GaussianPrior) -> Result<()> {
    if prior.dim() != env.num_states() {
        return Err(Error::DimensionMismatch {
            what: "prior dimension",
            expected: env.num_states(),
            found: prior.dim(),
        });
    }
    Ok(())
}

/// The allocation chosen by the next agent after `counts` acquisitions.
///
/// Under precision replication each count stands for `B` observations.
pub fn greedy_step(
    env: &Environment,
    prior: &GaussianPrior,
    counts: &DivisionVector,
    rule: TieBreakRule,
    spec: &InterventionSpec,
) -> Result<Allocation> {
    check_dims(env, prior)?;
    spec.validate(env)?;
    if counts.len() != env.num_sources() {
        return Err(Error::DimensionMismatch {
            what: "count vector",
            expected: env.num_sources(),
            found: counts.len(),
        });
    }
    let start = effective_prior(prior, spec)?;
    let per_count = match spec {
        InterventionSpec::PrecisionReplicate(b) => *b as f64,
        _ => 1.0,
    };
    let weights: Vec<f64> = counts
        .counts()
        .iter()
        .map(|&c| c as f64 * per_count)
        .collect();
    let precision = start.precision() + env.information_matrix(&weights);
    Ok(choose(env, &precision, spec, &mut TieBreaker::new(rule))?.0)
}

/// Runs the greedy dynamics for `config.horizon` periods and classifies the
/// last half of the run.
pub fn simulate(
    env: &Environment,
    prior: &GaussianPrior,
    config: &SimulationConfig,
) -> Result<SimulationTrace> {
    check_dims(env, prior)?;
    if config.horizon == 0 {
        return Err(Error::InvalidEnvironment(
            "horizon must be at least 1".into(),
        ));
    }
    let spec = &config.intervention;
    spec.validate(env)?;
    let bench = benchmark(env)?;
    let start = effective_prior(prior, spec)?;

    let mut belief = BeliefState::from_prior(&start, config.sample_realizations);
    let mut noise = ChaCha8Rng::seed_from_u64(config.seed);
    noise.set_stream(1);
    let true_state = if config.sample_realizations {
        let chol = linalg::cholesky(prior.covariance(), "prior covariance")?;
        let z = DVector::from_fn(prior.dim(), |_, _| noise.sample::<f64, _>(StandardNormal));
        Some(prior.mean() + chol.l() * z)
    } else {
        None
    };

    let mut ties = TieBreaker::new(config.tie_break);
    let mut counts = DivisionVector::zeros(env.num_sources());
    let half = config.horizon / 2;
    let mut counts_at_half = counts.clone();
    let mut choices = Vec::with_capacity(config.horizon as usize);
    let mut variance_path = Vec::with_capacity(config.horizon as usize);
    for t in 1..=config.horizon {
        let (alloc, value) = choose(env, belief.precision(), spec, &mut ties)?;
        let plan: Vec<(usize, u64)> = match (&alloc, spec) {
            (Allocation::Single(i), InterventionSpec::PrecisionReplicate(b)) => vec![(*i, *b)],
            (Allocation::Single(i), _) => vec![(*i, 1)],
            (Allocation::Batch(b), _) => b
                .iter()
                .copied()
                .enumerate()
                .filter(|(_, x)| *x > 0)
                .collect(),
        };
        for (i, times) in plan {
            let c = env.source(i);
            match &true_state {
                Some(theta) => {
                    for _ in 0..times {
                        let eps: f64 = noise.sample(StandardNormal);
                        belief.observe_realization(&c, c.dot(theta) + eps);
                    }
                }
                None => belief.observe(&c, times as f64),
            }
        }
        alloc.add_to(&mut counts);
        choices.push(alloc);
        variance_path.push(value);
        if t == half {
            counts_at_half = counts.clone();
        }
    }

    let window = DivisionVector::new(
        counts
            .counts()
            .iter()
            .zip(counts_at_half.counts())
            .map(|(a, b)| a - b)
            .collect(),
    );
    let (classification, inefficiency_ratio, frequency_estimate) = classify(
        env,
        &bench,
        &window,
        config.horizon - half,
        spec.counts_per_period(),
    )?;
    let posterior_mean = belief.mean()?.map(|m| m.iter().copied().collect());
    Ok(SimulationTrace {
        choices,
        variance_path,
        final_counts: counts,
        classification,
        inefficiency_ratio,
        frequency_estimate,
        observed_set: window.support(),
        benchmark: bench,
        true_state: true_state.map(|v| v.iter().copied().collect()),
        posterior_mean,
    })
}

/// Free signals of norm `gamma` revealing the confounders of the best set:
/// an orthonormal basis of `span(S*) ∩ u⊥`, scaled by `gamma`.
pub fn design_free_signals(env: &Environment, gamma: f64) -> Result<Vec<DVector<f64>>> {
    if !(gamma.is_finite() && gamma > 0.0) {
        return Err(Error::InvalidIntervention(format!(
            "gamma must be positive, got {gamma}"
        )));
    }
    let u = env.single_target()?;
    let sets = spanning::enumerate_minimal_spanning_sets(env)?;
    let best = match sets.as_slice() {
        [] => return Err(Error::NotSpanning((0..env.num_sources()).collect())),
        [best] => best,
        [best, second, ..] => {
            if phi_tied(best.phi, second.phi) {
                return Err(Error::UniqueMinimizerViolated(format!(
                    "sets {:?} and {:?} tie at φ = {}",
                    best.indices, second.indices, best.phi
                )));
            }
            best
        }
    };
    let k = best.size();
    if k == 1 {
        return Ok(Vec::new());
    }
    let uhat = u / u.norm();
    let mut cols = env.source_columns(&best.indices);
    for mut col in cols.column_iter_mut() {
        let along = col.dot(&uhat);
        col.axpy(-along, &uhat, 1.0);
    }
    let svd = cols.svd(true, false);
    let left = svd.u.expect("left singular vectors requested");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    Ok(order
        .into_iter()
        .take(k - 1)
        .map(|j| {
            let mut v = left.column(j).into_owned();
            // Deterministic sign: first non-negligible entry positive.
            if let Some(&lead) = v.iter().find(|x| x.abs() > 1e-12) {
                if lead < 0.0 {
                    v = -v;
                }
            }
            v * gamma
        })
        .collect())
}

/// Doubles γ from `gamma0` (at most 20 times) until the designed free signals
/// make the run efficient. Returns the first success or the last attempt.
pub fn escalate_gamma(
    env: &Environment,
    prior: &GaussianPrior,
    horizon: u64,
    gamma0: f64,
) -> Result<(f64, SimulationTrace)> {
    escalate_gamma_with(env, prior, &SimulationConfig::new(horizon), gamma0)
}

/// [`escalate_gamma`] with tie-breaking, sampling and seed taken from `config`.
pub fn escalate_gamma_with(
    env: &Environment,
    prior: &GaussianPrior,
    config: &SimulationConfig,
    gamma0: f64,
) -> Result<(f64, SimulationTrace)> {
    let mut last = None;
    for doubling in 0..=20 {
        let gamma = gamma0 * 2f64.powi(doubling);
        let vectors = design_free_signals(env, gamma)?;
        let no_signals = vectors.is_empty();
        let run = SimulationConfig {
            intervention: InterventionSpec::FreeSignals { vectors, gamma },
            ..config.clone()
        };
        let trace = simulate(env, prior, &run)?;
        if trace.classification == Classification::Efficient || no_signals {
            return Ok((gamma, trace));
        }
        last = Some((gamma, trace));
    }
    Ok(last.expect("at least one attempt"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gaussian::posterior_variance;

    fn example2() -> Environment {
        Environment::from_rows(&[vec![1.0, 0.0], vec![3.0, 1.0], vec![0.0, 1.0]]).unwrap()
    }

    fn prior(vb: f64) -> GaussianPrior {
        GaussianPrior::independent(&[1.0, vb]).unwrap()
    }

    #[test]
    fn first_choice_depends_on_confounder_variance() {
        let env = example2();
        let zero = DivisionVector::zeros(3);
        let none = InterventionSpec::None;
        let rule = TieBreakRule::LowestIndex;
        assert_eq!(
            greedy_step(&env, &prior(10.0), &zero, rule, &none).unwrap(),
            Allocation::Single(0)
        );
        assert_eq!(
            greedy_step(&env, &prior(6.0), &zero, rule, &none).unwrap(),
            Allocation::Single(1)
        );
        let batch = InterventionSpec::BatchAllocate(2);
        assert_eq!(
            greedy_step(&env, &prior(10.0), &zero, rule, &batch).unwrap(),
            Allocation::Batch(vec![0, 1, 1])
        );
    }

    #[test]
    fn example2_trap() {
        let env = example2();
        let trace = simulate(&env, &prior(10.0), &SimulationConfig::new(1000)).unwrap();
        assert!(trace.choices.iter().all(|c| *c == Allocation::Single(0)));
        assert_eq!(trace.classification, Classification::Trap(vec![0]));
        assert!((trace.inefficiency_ratio - 1.5).abs() < 1e-9);
        assert!(trace.variance_path.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn example2_efficient() {
        let env = example2();
        let trace = simulate(&env, &prior(6.0), &SimulationConfig::new(2000)).unwrap();
        assert_eq!(trace.classification, Classification::Efficient);
        let f = trace.frequency_estimate.weights();
        assert!(f[0] == 0.0 && (f[1] - 0.5).abs() < 0.01 && (f[2] - 0.5).abs() < 0.01);
    }

    #[test]
    fn variance_path_matches_exact_recomputation() {
        let env = example2();
        let p = prior(6.0);
        let trace = simulate(&env, &p, &SimulationConfig::new(50)).unwrap();
        for (v, counts) in trace.variance_path.iter().zip(trace.count_path()) {
            let exact = posterior_variance(&env, &p, &counts).unwrap();
            assert!((v - exact).abs() <= 1e-12 * exact);
        }
    }

    #[test]
    fn free_signal_examples() {
        let p = prior(10.0);
        let out = apply_free_signals(&p, &[DVector::from_vec(vec![0.0, 10.0])]).unwrap();
        assert!((out.covariance()[(0, 0)] - 1.0).abs() < 1e-12);
        assert!((out.covariance()[(1, 1)] - 1.0 / 100.1).abs() < 1e-12);
        assert_eq!(apply_free_signals(&p, &[]).unwrap(), p);
        let unit = GaussianPrior::independent(&[1.0, 1.0]).unwrap();
        let out = apply_free_signals(&unit, &[DVector::from_vec(vec![1.0, 0.0])]).unwrap();
        assert!((out.covariance()[(0, 0)] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn designed_signals() {
        let v = design_free_signals(&example2(), 3.0).unwrap();
        assert_eq!(v.len(), 1);
        assert!(v[0][0].abs() < 1e-12 && (v[0][1] - 3.0).abs() < 1e-12);
        let unbiased = Environment::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        assert!(design_free_signals(&unbiased, 1.0).unwrap().is_empty());
    }

    #[test]
    fn escalation_breaks_example2_trap() {
        let (gamma, trace) = escalate_gamma(&example2(), &prior(10.0), 1000, 1.0).unwrap();
        assert_eq!(trace.classification, Classification::Efficient);
        assert!(gamma <= 1024.0);
    }

    #[test]
    fn random_ties_are_reproducible() {
        let env = Environment::from_rows(&[vec![1.0], vec![1.0], vec![1.0]]).unwrap();
        let p = GaussianPrior::independent(&[1.0]).unwrap();
        let cfg = SimulationConfig::new(60).with_tie_break(TieBreakRule::Random(7));
        let a = simulate(&env, &p, &cfg).unwrap();
        let b = simulate(&env, &p, &cfg).unwrap();
        assert_eq!(a.choices, b.choices);
        assert!(a.final_counts.counts().iter().all(|&c| c > 0));
        let low = simulate(&env, &p, &SimulationConfig::new(60)).unwrap();
        assert_eq!(low.final_counts.counts(), &[60, 0, 0]);
    }

    #[test]
    fn sampling_keeps_choices() {
        let env = example2();
        let p = prior(6.0);
        let mut cfg = SimulationConfig::new(200);
        let plain = simulate(&env, &p, &cfg).unwrap();
        cfg.sample_realizations = true;
        cfg.seed = 42;
        let sampled = simulate(&env, &p, &cfg).unwrap();
        assert_eq!(plain.choices, sampled.choices);
        assert!(sampled.posterior_mean.is_some() && sampled.true_state.is_some());
    }

    #[test]
    fn batch_bounds() {
        let env = example2();
        let err = greedy_step(
            &env,
            &prior(10.0),
            &DivisionVector::zeros(3),
            TieBreakRule::LowestIndex,
            &InterventionSpec::BatchAllocate(13),
        );
        assert!(matches!(err, Err(Error::SearchSpaceTooLarge { .. })));
    }
}
