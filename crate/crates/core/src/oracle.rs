//! Brute-force ground truth: t-optimal divisions and optimal frequencies.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{self, SimulationConfig};
use crate::error::{Error, Result};
use crate::gaussian::{
    posterior_variance, DivisionVector, Environment, FrequencyVector, GaussianPrior,
};
use crate::linalg;
use crate::spanning;

/// Largest number of compositions `optimal_division` will enumerate.
pub const MAX_COMPOSITIONS: u128 = 10_000_000;
/// Per-period composition count up to which `greedy_vs_optimal` uses the
/// exhaustive oracle; beyond it the rounded `λ*·t` benchmark is used.
pub const COMPARE_ORACLE_LIMIT: u128 = 100_000;
/// Relative tolerance for counting tied optima.
pub const OPTIMUM_TIE_TOLERANCE: f64 = 1e-12;
/// `all_optima` is listed only up to this many optima.
pub const MAX_LISTED_OPTIMA: usize = 16;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimalDivisionResult {
    pub t: u64,
    /// Lexicographically smallest optimum.
    pub counts: DivisionVector,
    pub value: f64,
    pub num_optima: u64,
    /// Every optimum in lexicographic order, when there are at most 16.
    pub all_optima: Option<Vec<DivisionVector>>,
}

/// Number of ways to split `t` observations across `n` sources.
pub fn composition_count(t: u64, n: usize) -> u128 {
    linalg::binomial(t + n as u64 - 1, n as u64 - 1)
}

/// Evaluates `V` at integer counts reusing a precomputed prior precision.
struct Evaluator<'a> {
    env: &'a Environment,
    prior_precision: &'a DMatrix<f64>,
    outer: Vec<DMatrix<f64>>,
}

impl<'a> Evaluator<'a> {
    fn new(env: &'a Environment, prior: &'a GaussianPrior) -> Self {
        let outer = (0..env.num_sources())
            .map(|i| {
                let c = env.source(i);
                &c * c.transpose()
            })
            .collect();
        Evaluator {
            env,
            prior_precision: prior.precision(),
            outer,
        }
    }

    fn value(&self, counts: &[u64]) -> f64 {
        let mut p = self.prior_precision.clone();
        for (i, &q) in counts.iter().enumerate() {
            if q > 0 {
                p += &self.outer[i] * q as f64;
            }
        }
        match linalg::cholesky(&p, "posterior precision") {
            Ok(f) => crate::gaussian::objective_value(self.env, &f),
            Err(_) => f64::INFINITY,
        }
    }

    /// Visits compositions of `rest` into the slots after `slot`, in
    /// ascending lexicographic order.
    fn visit(
        &self,
        current: &mut Vec<u64>,
        slot: usize,
        rest: u64,
        f: &mut dyn FnMut(&[u64], f64),
    ) {
        if slot + 1 == current.len() {
            current[slot] = rest;
            let v = self.value(current);
            f(current, v);
            return;
        }
        for x in 0..=rest {
            current[slot] = x;
            self.visit(current, slot + 1, rest - x, f);
        }
    }

    /// Calls `f` on every composition whose first count is `first`.
    fn visit_partition(&self, t: u64, first: u64, f: &mut dyn FnMut(&[u64], f64)) {
        let n = self.env.num_sources();
        let mut current = vec![0; n];
        current[0] = first;
        if n == 1 {
            if first == t {
                let v = self.value(&current);
                f(&current, v);
            }
            return;
        }
        self.visit(&mut current, 1, t - first, f);
    }
}

fn check_prior(env: &Environment, prior: &GaussianPrior) -> Result<()> {
    if prior.dim() != env.num_states() {
        return Err(Error::DimensionMismatch {
            what: "prior dimension",
            expected: env.num_states(),
            found: prior.dim(),
        });
    }
    Ok(())
}

/// Exact t-optimal division by exhaustive enumeration of compositions.
pub fn optimal_division(
    env: &Environment,
    prior: &GaussianPrior,
    t: u64,
) -> Result<OptimalDivisionResult> {
    check_prior(env, prior)?;
    let size = composition_count(t, env.num_sources());
    if size > MAX_COMPOSITIONS {
        return Err(Error::SearchSpaceTooLarge {
            size,
            limit: MAX_COMPOSITIONS,
        });
    }
    let eval = Evaluator::new(env, prior);
    let best = (0..=t)
        .into_par_iter()
        .map(|first| {
            let mut m = f64::INFINITY;
            eval.visit_partition(t, first, &mut |_, v| m = m.min(v));
            m
        })
        .reduce(|| f64::INFINITY, f64::min);
    let cutoff = best + OPTIMUM_TIE_TOLERANCE * best.abs();
    // Second pass counts ties, keeping the lexicographically first few.
    let per_partition: Vec<(u64, Vec<Vec<u64>>)> = (0..=t)
        .into_par_iter()
        .map(|first| {
            let mut count = 0u64;
            let mut kept = Vec::new();
            eval.visit_partition(t, first, &mut |c, v| {
                if v <= cutoff {
                    count += 1;
                    if kept.len() <= MAX_LISTED_OPTIMA {
                        kept.push(c.to_vec());
                    }
                }
            });
            (count, kept)
        })
        .collect();
    let num_optima: u64 = per_partition.iter().map(|p| p.0).sum();
    let listed: Vec<DivisionVector> = per_partition
        .into_iter()
        .flat_map(|p| p.1)
        .take(MAX_LISTED_OPTIMA + 1)
        .map(DivisionVector::new)
        .collect();
    let counts = listed
        .first()
        .cloned()
        .ok_or_else(|| Error::InvalidEnvironment("no finite posterior variance found".into()))?;
    let value = posterior_variance(env, prior, &counts)?;
    Ok(OptimalDivisionResult {
        t,
        counts,
        value,
        num_optima,
        all_optima: (num_optima as usize <= MAX_LISTED_OPTIMA).then_some(listed),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimalTrajectory {
    pub steps: Vec<OptimalDivisionResult>,
    /// Long-run frequencies the deviations are measured against.
    pub lambda_star: FrequencyVector,
    /// `deviations[t-1][i] = nᵢ(t) − λ*ᵢ·t`.
    pub deviations: Vec<Vec<f64>>,
}

/// `n(t)` for `t = 1..=horizon` with deviations from `λ*·t`.
pub fn optimal_trajectory(
    env: &Environment,
    prior: &GaussianPrior,
    horizon: u64,
) -> Result<OptimalTrajectory> {
    let bench = dynamics::benchmark(env)?;
    let steps = (1..=horizon)
        .map(|t| optimal_division(env, prior, t))
        .collect::<Result<Vec<_>>>()?;
    let lam = bench.lambda_star.weights();
    let deviations = steps
        .iter()
        .map(|s| {
            s.counts
                .counts()
                .iter()
                .zip(lam)
                .map(|(&n, &l)| n as f64 - l * s.t as f64)
                .collect()
        })
        .collect();
    Ok(OptimalTrajectory {
        steps,
        lambda_star: bench.lambda_star,
        deviations,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct NumericFrequency {
    pub frequencies: FrequencyVector,
    /// `V*` at `frequencies`.
    pub value: f64,
    /// Relative Frank-Wolfe gap at the last descent iterate.
    pub relative_gap: f64,
    pub iterations: usize,
    /// True when the thresholded support admitted the closed-form solve.
    pub exact_resolve: bool,
    /// True when a second start point converged elsewhere.
    pub non_unique: bool,
}

impl NumericFrequency {
    pub fn label(&self) -> &'static str {
        if self.exact_resolve {
            "exact"
        } else {
            "numeric-only"
        }
    }
}

pub const NUMERIC_ITERATIONS: usize = 100_000;
pub const SUPPORT_THRESHOLD: f64 = 1e-6;
pub const MAX_RELATIVE_GAP: f64 = 1e-3;
const STEP0: f64 = 1.0;
const WEIGHT_FLOOR: f64 = 1e-12;

/// `C` and the objective directions expressed in an orthonormal basis of the
/// row space of `C`, where the information matrix of a positive λ is
/// invertible.
struct Reduced {
    rows: Vec<DVector<f64>>,
    targets: Vec<(f64, DVector<f64>)>,
}

impl Reduced {
    fn new(env: &Environment) -> Result<Self> {
        let c = env.coefficients();
        let r = linalg::rank(c);
        let eig = (c.transpose() * c).symmetric_eigen();
        let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
        let basis = DMatrix::from_columns(
            &order
                .iter()
                .take(r)
                .map(|&j| eig.eigenvectors.column(j).into_owned())
                .collect::<Vec<_>>(),
        );
        let all: Vec<usize> = (0..env.num_sources()).collect();
        let cols = env.source_columns(&all);
        for o in env.objective() {
            if !linalg::in_span(&cols, &o.direction) {
                return Err(Error::NotSpanning(all));
            }
        }
        Ok(Reduced {
            rows: (0..env.num_sources())
                .map(|i| basis.transpose() * env.source(i))
                .collect(),
            targets: env
                .objective()
                .iter()
                .map(|o| (o.weight, basis.transpose() * &o.direction))
                .collect(),
        })
    }

    /// `V*(λ)` and its gradient.
    fn value_and_gradient(&self, lambda: &[f64]) -> (f64, Vec<f64>) {
        let dim = self.targets[0].1.len();
        let top = lambda.iter().copied().fold(0.0, f64::max);
        let mut m = DMatrix::zeros(dim, dim);
        for (c, &l) in self.rows.iter().zip(lambda) {
            m.ger(l.max(WEIGHT_FLOOR * top), c, c, 1.0);
        }
        let Some(f) = nalgebra::Cholesky::new(m) else {
            return (f64::INFINITY, vec![0.0; lambda.len()]);
        };
        let xs: Vec<(f64, DVector<f64>)> =
            self.targets.iter().map(|(w, u)| (*w, f.solve(u))).collect();
        let value = self
            .targets
            .iter()
            .zip(&xs)
            .map(|((w, u), (_, x))| w * u.dot(x))
            .sum();
        let grad = self
            .rows
            .iter()
            .map(|c| -xs.iter().map(|(w, x)| w * x.dot(c).powi(2)).sum::<f64>())
            .collect();
        (value, grad)
    }

    fn descend(&self, start: Vec<f64>) -> (Vec<f64>, f64) {
        let mut lambda = start;
        for iter in 1..=NUMERIC_ITERATIONS {
            let (_, g) = self.value_and_gradient(&lambda);
            let scale = g.iter().fold(0.0_f64, |a, x| a.max(x.abs()));
            if scale == 0.0 || !scale.is_finite() {
                break;
            }
            let step = STEP0 / (iter as f64).sqrt();
            // Shift by the smallest gradient so exponents stay non-positive.
            let gmin = g.iter().copied().fold(f64::INFINITY, f64::min);
            let mut total = 0.0;
            for (l, gi) in lambda.iter_mut().zip(&g) {
                *l *= (-step * (gi - gmin) / scale).exp();
                total += *l;
            }
            for l in lambda.iter_mut() {
                *l /= total;
            }
        }
        let (value, g) = self.value_and_gradient(&lambda);
        let gmin = g.iter().copied().fold(f64::INFINITY, f64::min);
        let along: f64 = lambda.iter().zip(&g).map(|(l, gi)| l * gi).sum();
        (lambda, (along - gmin) / value)
    }
}

fn resolve(env: &Environment, lambda: &[f64]) -> Result<(Vec<f64>, bool)> {
    let support: Vec<usize> = (0..lambda.len())
        .filter(|&i| lambda[i] > SUPPORT_THRESHOLD)
        .collect();
    if env.single_target().is_ok() {
        if let Ok(report) = spanning::beta_phi_lambda(env, &support) {
            return Ok((report.lambda_star.weights().to_vec(), true));
        }
    }
    let mut out: Vec<f64> = lambda
        .iter()
        .map(|&l| if l > SUPPORT_THRESHOLD { l } else { 0.0 })
        .collect();
    let total: f64 = out.iter().sum();
    out.iter_mut().for_each(|l| *l /= total);
    Ok((out, false))
}

/// Minimizes `V*` over the simplex by exponentiated-gradient descent, then
/// thresholds the support and re-solves exactly when the support is a
/// minimal spanning set.
pub fn optimal_frequency_numeric(env: &Environment) -> Result<NumericFrequency> {
    let reduced = Reduced::new(env)?;
    let n = env.num_sources();
    let (first, gap) = reduced.descend(vec![1.0 / n as f64; n]);
    if gap.is_nan() || gap > MAX_RELATIVE_GAP {
        return Err(Error::NonConvergence {
            gap,
            iterations: NUMERIC_ITERATIONS,
        });
    }
    let (frequencies, exact_resolve) = resolve(env, &first)?;

    let ramp_total = (n * (n + 1) / 2) as f64;
    let (second, _) = reduced.descend((1..=n).map(|i| i as f64 / ramp_total).collect());
    let (other, _) = resolve(env, &second)?;
    let non_unique = frequencies
        .iter()
        .zip(&other)
        .any(|(a, b)| (a - b).abs() > 1e-3);

    let frequencies = FrequencyVector::new(frequencies)?;
    let value = crate::gaussian::asymptotic_variance(env, &frequencies)?;
    Ok(NumericFrequency {
        frequencies,
        value,
        relative_gap: gap,
        iterations: NUMERIC_ITERATIONS,
        exact_resolve,
        non_unique,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BenchmarkKind {
    /// Exhaustive t-optimal division.
    Oracle,
    /// `λ*·t` rounded by largest remainder.
    LambdaStar,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub t: u64,
    pub greedy_value: f64,
    pub optimal_value: f64,
    /// `V(m(t)) / V(n(t))`.
    pub ratio: f64,
    pub benchmark: BenchmarkKind,
}

/// Rounds `λ·t` to integers summing to `t`, giving leftover units to the
/// largest fractional parts (lower index first on ties).
pub fn round_frequencies(lambda: &FrequencyVector, t: u64) -> DivisionVector {
    let total: f64 = lambda.weights().iter().sum();
    let exact: Vec<f64> = lambda
        .weights()
        .iter()
        .map(|l| l / total * t as f64)
        .collect();
    let mut counts: Vec<u64> = exact.iter().map(|x| x.floor() as u64).collect();
    let assigned: u64 = counts.iter().sum();
    let mut order: Vec<usize> = (0..exact.len()).collect();
    order.sort_by(|&a, &b| {
        let fa = exact[a] - exact[a].floor();
        let fb = exact[b] - exact[b].floor();
        fb.total_cmp(&fa).then(a.cmp(&b))
    });
    for &i in order.iter().take(t.saturating_sub(assigned) as usize) {
        counts[i] += 1;
    }
    DivisionVector::new(counts)
}

/// Greedy posterior loss against the t-optimal benchmark for `t = 1..=horizon`.
pub fn greedy_vs_optimal(
    env: &Environment,
    prior: &GaussianPrior,
    horizon: u64,
) -> Result<Vec<ComparisonRow>> {
    check_prior(env, prior)?;
    let trace = dynamics::simulate(env, prior, &SimulationConfig::new(horizon))?;
    let lambda = &trace.benchmark.lambda_star;
    trace
        .count_path()
        .into_par_iter()
        .enumerate()
        .map(|(step, m)| {
            let t = step as u64 + 1;
            let greedy_value = posterior_variance(env, prior, &m)?;
            let (optimal_value, benchmark) =
                if composition_count(t, env.num_sources()) <= COMPARE_ORACLE_LIMIT {
                    (
                        optimal_division(env, prior, t)?.value,
                        BenchmarkKind::Oracle,
                    )
                } else {
                    (
                        posterior_variance(env, prior, &round_frequencies(lambda, t))?,
                        BenchmarkKind::LambdaStar,
                    )
                };
            Ok(ComparisonRow {
                t,
                greedy_value,
                optimal_value,
                ratio: greedy_value / optimal_value,
                benchmark,
            })
        })
        .collect()
}
