//! Minimal spanning sets, their asymptotic learning speed, and trap priors.
//!
//! A set `S` of sources is minimally spanning when the target `u` is a linear
//! combination `Σ βᵢ cᵢ` of its coefficient vectors and no proper subset
//! spans `u`. Such a representation is unique with every `βᵢ ≠ 0`; its
//! `φ(S) = Σ |βᵢ|` is the asymptotic standard deviation from sampling `S`
//! at frequencies `λ*ᵢ = |βᵢ| / φ(S)`.

use itertools::Itertools;
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaussian::{Environment, FrequencyVector, GaussianPrior};
use crate::linalg::{self, RANK_TOLERANCE, TIE_TOLERANCE};

/// Largest number of sources for exhaustive subset enumeration.
pub const MAX_ENUMERATION_SOURCES: usize = 20;

#[derive(Debug, Clone, PartialEq)]
pub struct SpanningSetReport {
    /// Sorted source indices.
    pub indices: Vec<usize>,
    /// Coefficients aligned with `indices`.
    pub beta: Vec<f64>,
    pub phi: f64,
    /// Length-N frequencies supported on `indices`.
    pub lambda_star: FrequencyVector,
}

impl SpanningSetReport {
    pub fn size(&self) -> usize {
        self.indices.len()
    }

    /// `max |Σ βᵢcᵢ − u|`.
    pub fn residual(&self, env: &Environment) -> Result<f64> {
        let u = env.single_target()?;
        let cols = env.source_columns(&self.indices);
        let recon = cols * DVector::from_column_slice(&self.beta);
        Ok((recon - u).amax())
    }
}

/// Whether two φ values are equal up to the relative tie tolerance.
pub fn phi_tied(a: f64, b: f64) -> bool {
    (a - b).abs() <= TIE_TOLERANCE * a.abs().max(b.abs())
}

fn normalize_indices(env: &Environment, set: &[usize]) -> Result<Vec<usize>> {
    for &i in set {
        env.check_index(i)?;
    }
    let mut s = set.to_vec();
    s.sort_unstable();
    s.dedup();
    Ok(s)
}

fn classify_set(
    env: &Environment,
    u: &DVector<f64>,
    indices: &[usize],
) -> Result<SpanningSetReport> {
    let unorm = u.norm();
    let cols = env.source_columns(indices);
    let proj = linalg::project(&cols, u);
    if indices.is_empty() || proj.residual > RANK_TOLERANCE * unorm {
        return Err(Error::NotSpanning(indices.to_vec()));
    }
    if proj.rank < indices.len() {
        return Err(Error::NotMinimal(indices.to_vec()));
    }
    let beta: Vec<f64> = proj.solution.iter().copied().collect();
    for (pos, &b) in beta.iter().enumerate() {
        if (b * cols.column(pos).norm()).abs() <= RANK_TOLERANCE * unorm {
            return Err(Error::NotMinimal(indices.to_vec()));
        }
    }
    let phi: f64 = beta.iter().map(|b| b.abs()).sum();
    let mut lambda = vec![0.0; env.num_sources()];
    for (&i, b) in indices.iter().zip(&beta) {
        lambda[i] = b.abs() / phi;
    }
    Ok(SpanningSetReport {
        indices: indices.to_vec(),
        beta,
        phi,
        lambda_star: FrequencyVector::new(lambda)?,
    })
}

/// β, φ and λ* for a minimally spanning set.
pub fn beta_phi_lambda(env: &Environment, set: &[usize]) -> Result<SpanningSetReport> {
    let u = env.single_target()?;
    let indices = normalize_indices(env, set)?;
    classify_set(env, u, &indices)
}

fn check_enumerable(n: usize) -> Result<()> {
    if n > MAX_ENUMERATION_SOURCES {
        return Err(Error::SearchSpaceTooLarge {
            size: 1u128 << n,
            limit: 1u128 << MAX_ENUMERATION_SOURCES,
        });
    }
    Ok(())
}

fn sort_reports(reports: &mut [SpanningSetReport]) {
    reports.sort_by(|a, b| {
        a.phi
            .total_cmp(&b.phi)
            .then_with(|| a.indices.cmp(&b.indices))
    });
    // Runs of tied φ are ordered lexicographically.
    let mut start = 0;
    while start < reports.len() {
        let mut end = start + 1;
        while end < reports.len() && phi_tied(reports[end - 1].phi, reports[end].phi) {
            end += 1;
        }
        reports[start..end].sort_by(|a, b| a.indices.cmp(&b.indices));
        start = end;
    }
}

fn minimal_sets_among(
    env: &Environment,
    u: &DVector<f64>,
    candidates: &[usize],
) -> Vec<SpanningSetReport> {
    let max_size = env.num_states().min(candidates.len());
    let subsets: Vec<Vec<usize>> = (1..=max_size)
        .flat_map(|k| candidates.iter().copied().combinations(k))
        .collect();
    let mut reports: Vec<SpanningSetReport> = subsets
        .par_iter()
        .filter_map(|s| classify_set(env, u, s).ok())
        .collect();
    sort_reports(&mut reports);
    reports
}

/// Every minimal spanning set, sorted by φ ascending with ties broken
/// lexicographically.
pub fn enumerate_minimal_spanning_sets(env: &Environment) -> Result<Vec<SpanningSetReport>> {
    let u = env.single_target()?;
    check_enumerable(env.num_sources())?;
    let all: Vec<usize> = (0..env.num_sources()).collect();
    Ok(minimal_sets_among(env, u, &all))
}

/// The minimum of `Σ|βᵢ|` subject to `Σ βᵢcᵢ = u`, with a minimizing β.
///
/// Solved exactly over the basic solutions of the linear program: every
/// subset of `rank C` sources forming a basis of the column space.
pub fn phi_by_l1(env: &Environment) -> Result<(f64, Vec<f64>)> {
    let u = env.single_target()?;
    let n = env.num_sources();
    check_enumerable(n)?;
    let all: Vec<usize> = (0..n).collect();
    if !linalg::in_span(&env.source_columns(&all), u) {
        return Err(Error::NotSpanning(all));
    }
    let r = linalg::rank(env.coefficients());
    let unorm = u.norm();
    let bases: Vec<Vec<usize>> = all.iter().copied().combinations(r).collect();
    let best = bases
        .par_iter()
        .filter_map(|s| {
            let proj = linalg::project(&env.source_columns(s), u);
            (proj.rank == r && proj.residual <= RANK_TOLERANCE * unorm).then(|| {
                let l1: f64 = proj.solution.iter().map(|b| b.abs()).sum();
                (l1, s.clone(), proj.solution)
            })
        })
        .min_by(|a, b| a.0.total_cmp(&b.0).then_with(|| a.1.cmp(&b.1)))
        .ok_or_else(|| Error::NotSpanning((0..n).collect()))?;
    let mut beta = vec![0.0; n];
    for (pos, &i) in best.1.iter().enumerate() {
        beta[i] = best.2[pos];
    }
    Ok((best.0, beta))
}

/// All sources whose coefficient vectors lie in the span of `set`.
pub fn subspace_closure(env: &Environment, set: &[usize]) -> Result<Vec<usize>> {
    let indices = normalize_indices(env, set)?;
    let cols = env.source_columns(&indices);
    Ok((0..env.num_sources())
        .filter(|&j| indices.binary_search(&j).is_ok() || linalg::in_span(&cols, &env.source(j)))
        .collect())
}

/// Whether `set` strictly beats (beyond the tie tolerance) every other minimal
/// spanning set inside its own closure.
pub fn is_subspace_optimal(env: &Environment, set: &[usize]) -> Result<bool> {
    let report = beta_phi_lambda(env, set)?;
    let u = env.single_target()?;
    let closure = subspace_closure(env, &report.indices)?;
    Ok(minimal_sets_among(env, u, &closure)
        .iter()
        .filter(|other| other.indices != report.indices)
        .all(|other| report.phi < other.phi && !phi_tied(report.phi, other.phi)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WitnessKind {
    /// A minimal spanning set tied with the best one.
    TiedMinimizer,
    /// K sources whose coefficient matrix is singular.
    RankDeficient,
    /// Closure of a spanning set in which the φ minimizer is not unique.
    TiedInSubspace,
    /// A minimal spanning set with fewer than K sources.
    SmallMinimalSet,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    pub kind: WitnessKind,
    pub indices: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssumptionReport {
    pub unique_minimizer: bool,
    /// φ of the runner-up minus φ of the best; `None` with a single minimal set.
    pub gap: Option<f64>,
    pub strong_linear_independence: bool,
    pub unique_minimizer_every_subspace: bool,
    pub all_minimal_sets_size_k: bool,
    pub witnesses: Vec<Witness>,
}

/// Cap on witnesses recorded per kind.
const WITNESS_CAP: usize = 32;

pub fn check_assumptions(env: &Environment) -> Result<AssumptionReport> {
    let u = env.single_target()?;
    let n = env.num_sources();
    let k = env.num_states();
    check_enumerable(n)?;
    let sets = enumerate_minimal_spanning_sets(env)?;
    let mut witnesses = Vec::new();

    let (unique_minimizer, gap) = match sets.as_slice() {
        [] => (false, None),
        [_] => (true, None),
        [best, second, ..] => {
            let tied = phi_tied(best.phi, second.phi);
            if tied {
                witnesses.extend(
                    sets.iter()
                        .take_while(|s| phi_tied(best.phi, s.phi))
                        .take(WITNESS_CAP)
                        .map(|s| Witness {
                            kind: WitnessKind::TiedMinimizer,
                            indices: s.indices.clone(),
                        }),
                );
            }
            (!tied, Some(second.phi - best.phi))
        }
    };

    let all: Vec<usize> = (0..n).collect();
    let deficient: Vec<Vec<usize>> = if n < k {
        Vec::new()
    } else {
        all.iter()
            .copied()
            .combinations(k)
            .collect::<Vec<_>>()
            .into_par_iter()
            .filter(|s| linalg::rank(&env.source_columns(s)) < k)
            .collect()
    };
    let strong_linear_independence = n >= k && deficient.is_empty();
    witnesses.extend(
        deficient
            .into_iter()
            .take(WITNESS_CAP)
            .map(|indices| Witness {
                kind: WitnessKind::RankDeficient,
                indices,
            }),
    );

    // Every subspace spanned by sources and containing u is the closure of
    // some independent spanning subset.
    let spanning_independent: Vec<Vec<usize>> = (1..=k.min(n))
        .flat_map(|size| all.iter().copied().combinations(size))
        .collect::<Vec<_>>()
        .into_par_iter()
        .filter(|s| {
            let proj = linalg::project(&env.source_columns(s), u);
            proj.rank == s.len() && proj.residual <= RANK_TOLERANCE * u.norm()
        })
        .collect();
    let mut closures: Vec<Vec<usize>> = spanning_independent
        .iter()
        .map(|s| subspace_closure(env, s))
        .collect::<Result<_>>()?;
    closures.sort();
    closures.dedup();
    let tied_closures: Vec<Vec<usize>> = closures
        .into_par_iter()
        .filter(|closure| {
            let inner = minimal_sets_among(env, u, closure);
            inner.len() >= 2 && phi_tied(inner[0].phi, inner[1].phi)
        })
        .collect();
    let unique_minimizer_every_subspace = !sets.is_empty() && tied_closures.is_empty();
    witnesses.extend(
        tied_closures
            .into_iter()
            .take(WITNESS_CAP)
            .map(|indices| Witness {
                kind: WitnessKind::TiedInSubspace,
                indices,
            }),
    );

    let small: Vec<&SpanningSetReport> = sets.iter().filter(|s| s.size() != k).collect();
    let all_minimal_sets_size_k = !sets.is_empty() && small.is_empty();
    witnesses.extend(small.into_iter().take(WITNESS_CAP).map(|s| Witness {
        kind: WitnessKind::SmallMinimalSet,
        indices: s.indices.clone(),
    }));

    Ok(AssumptionReport {
        unique_minimizer,
        gap,
        strong_linear_independence,
        unique_minimizer_every_subspace,
        all_minimal_sets_size_k,
        witnesses,
    })
}

/// A prior under which greedy agents sample only `set`.
///
/// States are mapped to coordinates `z = Tθ` where the first `k` rows of `T`
/// are the coefficient vectors of `set` and the remaining rows span their
/// orthogonal complement. The prior is independent in `z`, with variance
/// `eps/λ*ᵢ` on the measured coordinates and `1/eps` elsewhere.
pub fn construct_trap_prior(env: &Environment, set: &[usize], eps: f64) -> Result<GaussianPrior> {
    if !(eps.is_finite() && eps > 0.0) {
        return Err(Error::InvalidEnvironment(format!(
            "eps must be positive, got {eps}"
        )));
    }
    let report = beta_phi_lambda(env, set)?;
    if !is_subspace_optimal(env, &report.indices)? {
        return Err(Error::NotSubspaceOptimal(report.indices));
    }
    let kdim = env.num_states();
    let ssize = report.size();
    if ssize == kdim {
        let best = &enumerate_minimal_spanning_sets(env)?[0];
        if best.indices != report.indices || !is_strict_best(env, &report)? {
            return Err(Error::NoTrapExists(report.indices));
        }
    }
    let cols = env.source_columns(&report.indices);
    let complement = linalg::orthogonal_complement(&cols, kdim);
    let mut t = DMatrix::zeros(kdim, kdim);
    for (row, &i) in report.indices.iter().enumerate() {
        t.set_row(row, &env.coefficients().row(i));
    }
    for extra in 0..complement.ncols() {
        t.set_row(ssize + extra, &complement.column(extra).transpose());
    }
    let mut variances = DVector::from_element(kdim, 1.0 / eps);
    for (row, &i) in report.indices.iter().enumerate() {
        variances[row] = eps / report.lambda_star.weights()[i];
    }
    let t_inv = t
        .try_inverse()
        .ok_or_else(|| Error::InvalidEnvironment("coordinate transform is singular".into()))?;
    let cov = &t_inv * DMatrix::from_diagonal(&variances) * t_inv.transpose();
    GaussianPrior::new(DVector::zeros(kdim), linalg::symmetrize(&cov))
}

fn is_strict_best(env: &Environment, report: &SpanningSetReport) -> Result<bool> {
    let sets = enumerate_minimal_spanning_sets(env)?;
    Ok(sets
        .iter()
        .filter(|s| s.indices != report.indices)
        .all(|s| !phi_tied(s.phi, report.phi) && s.phi > report.phi))
}

/// For each source `j` in the closure of `set` but outside it, the sum of its
/// coordinates in the sign-normalized basis `{sign(βᵢ)·cᵢ}`. Returns pairs
/// `(j, Σᵢ αⱼᵢ)`.
pub fn outside_coordinate_sums(env: &Environment, set: &[usize]) -> Result<Vec<(usize, f64)>> {
    let report = beta_phi_lambda(env, set)?;
    let signed = DMatrix::from_fn(env.num_states(), report.size(), |r, c| {
        env.coefficients()[(report.indices[c], r)] * report.beta[c].signum()
    });
    subspace_closure(env, &report.indices)?
        .into_iter()
        .filter(|j| report.indices.binary_search(j).is_err())
        .map(|j| {
            let proj = linalg::project(&signed, &env.source(j));
            Ok((j, proj.solution.sum()))
        })
        .collect()
}

/// Largest `η` such that scaling every source outside the best set by
/// `(1 + η)` keeps that set a best set (capped at `1e6`).
pub fn perturbation_eta(env: &Environment) -> Result<f64> {
    let sets = enumerate_minimal_spanning_sets(env)?;
    let best = sets
        .first()
        .ok_or_else(|| Error::NotSpanning((0..env.num_sources()).collect()))?;
    let mut eta = 1e6_f64;
    for other in sets.iter().skip(1) {
        let (mut inside, mut outside) = (0.0, 0.0);
        for (&i, b) in other.indices.iter().zip(&other.beta) {
            if best.indices.binary_search(&i).is_ok() {
                inside += b.abs();
            } else {
                outside += b.abs();
            }
        }
        if best.phi > inside {
            eta = eta.min(outside / (best.phi - inside) - 1.0);
        }
    }
    Ok(eta.max(0.0))
}

/// Lower bound `φ*² / (1 − (2η+η²)/(1+η)² · ρ)` on `V*(λ)` for `λ` on the
/// simplex with mass `ρ` outside the best set.
pub fn perturbation_lower_bound(phi_best: f64, eta: f64, outside_mass: f64) -> f64 {
    let shrink = (2.0 * eta + eta * eta) / (1.0 + eta).powi(2);
    phi_best * phi_best / (1.0 - shrink * outside_mass)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gaussian::asymptotic_variance;

    fn example2() -> Environment {
        Environment::from_rows(&[vec![1.0, 0.0], vec![3.0, 1.0], vec![0.0, 1.0]]).unwrap()
    }

    fn precise_info() -> Environment {
        Environment::with_target(
            &[
                vec![10.0, 0.0, 0.0],
                vec![0.0, 10.0, 0.0],
                vec![4.0, 5.0, 10.0],
                vec![8.0, 6.0, -20.0],
            ],
            vec![1.0, 1.0, 0.0],
        )
        .unwrap()
    }

    fn example1() -> Environment {
        Environment::from_rows(&[
            vec![1.0, 1.0, 0.0],
            vec![0.0, 1.0, 0.0],
            vec![1.0, 0.0, 1.0],
            vec![0.0, 0.0, 1.0],
        ])
        .unwrap()
    }

    #[test]
    fn example2_sets() {
        let sets = enumerate_minimal_spanning_sets(&example2()).unwrap();
        assert_eq!(sets.len(), 2);
        assert_eq!(sets[0].indices, vec![1, 2]);
        assert!((sets[0].phi - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(sets[1].indices, vec![0]);
        assert!((sets[1].phi - 1.0).abs() < 1e-12);
    }

    #[test]
    fn precise_info_sets() {
        let env = precise_info();
        let sets = enumerate_minimal_spanning_sets(&env).unwrap();
        let find = |idx: &[usize]| sets.iter().find(|s| s.indices == idx).unwrap().phi;
        assert!((find(&[2, 3]) - 3.0 / 16.0).abs() < 1e-12);
        assert!((find(&[0, 1]) - 0.2).abs() < 1e-12);
        assert_eq!(sets[0].indices, vec![2, 3]);

        let r = beta_phi_lambda(&env, &[3, 2]).unwrap();
        assert!((r.beta[0] - 0.125).abs() < 1e-12 && (r.beta[1] - 0.0625).abs() < 1e-12);
        let lam = r.lambda_star.weights();
        assert!((lam[2] - 2.0 / 3.0).abs() < 1e-12 && (lam[3] - 1.0 / 3.0).abs() < 1e-12);
        assert!(r.residual(&env).unwrap() < 1e-12);
    }

    #[test]
    fn beta_examples() {
        let r = beta_phi_lambda(&example2(), &[1, 2]).unwrap();
        assert!((r.beta[0] - 1.0 / 3.0).abs() < 1e-12 && (r.beta[1] + 1.0 / 3.0).abs() < 1e-12);
        let lam = r.lambda_star.weights();
        assert!(lam[0] == 0.0 && (lam[1] - 0.5).abs() < 1e-12 && (lam[2] - 0.5).abs() < 1e-12);
        let scalar = Environment::from_rows(&[vec![2.0]]).unwrap();
        let r = beta_phi_lambda(&scalar, &[0]).unwrap();
        assert_eq!((r.beta[0], r.phi), (0.5, 0.5));
        assert!(matches!(
            beta_phi_lambda(&example2(), &[1]),
            Err(Error::NotSpanning(_))
        ));
        assert!(matches!(
            beta_phi_lambda(&example2(), &[0, 1]),
            Err(Error::NotMinimal(_))
        ));
    }

    #[test]
    fn identity_env_has_single_set() {
        let env = Environment::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let sets = enumerate_minimal_spanning_sets(&env).unwrap();
        assert_eq!(sets.len(), 1);
        assert_eq!(sets[0].indices, vec![0]);
    }

    #[test]
    fn l1_examples() {
        assert!((phi_by_l1(&example2()).unwrap().0 - 2.0 / 3.0).abs() < 1e-12);
        assert!((phi_by_l1(&precise_info()).unwrap().0 - 3.0 / 16.0).abs() < 1e-12);
        let dup = Environment::from_rows(&[vec![1.0], vec![1.0]]).unwrap();
        assert!((phi_by_l1(&dup).unwrap().0 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn closure_and_subspace_optimality() {
        let dup = Environment::from_rows(&[vec![1.0], vec![2.0]]).unwrap();
        assert_eq!(subspace_closure(&dup, &[0]).unwrap(), vec![0, 1]);
        assert!(!is_subspace_optimal(&dup, &[0]).unwrap());
        let env = example2();
        assert_eq!(subspace_closure(&env, &[0]).unwrap(), vec![0]);
        assert_eq!(subspace_closure(&env, &[0, 1, 2]).unwrap(), vec![0, 1, 2]);
        assert!(is_subspace_optimal(&env, &[0]).unwrap());
        assert!(is_subspace_optimal(&env, &[1, 2]).unwrap());
    }

    #[test]
    fn assumption_examples() {
        let r = check_assumptions(&example1()).unwrap();
        assert!(!r.unique_minimizer);
        assert!(r
            .witnesses
            .iter()
            .any(|w| w.kind == WitnessKind::TiedMinimizer));
        let r = check_assumptions(&example2()).unwrap();
        assert!(r.unique_minimizer && !r.all_minimal_sets_size_k);
        assert!((r.gap.unwrap() - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn trap_prior_example2() {
        let env = example2();
        let p = construct_trap_prior(&env, &[0], 0.01).unwrap();
        let cov = p.covariance();
        assert!((cov[(0, 0)] - 0.01).abs() < 1e-12);
        assert!((cov[(1, 1)] - 100.0).abs() < 1e-9);
        assert!(cov[(0, 1)].abs() < 1e-12);
        assert!(construct_trap_prior(&env, &[1, 2], 0.01).is_ok());

        let dup = Environment::from_rows(&[vec![1.0], vec![2.0]]).unwrap();
        assert!(matches!(
            construct_trap_prior(&dup, &[0], 0.01),
            Err(Error::NotSubspaceOptimal(_))
        ));
    }

    #[test]
    fn size_k_non_best_set_cannot_trap() {
        let env = Environment::from_rows(&[
            vec![1.0, 0.0],
            vec![1.0, 1.0],
            vec![0.0, 1.0],
            vec![2.0, 1.0],
        ])
        .unwrap();
        let sets = enumerate_minimal_spanning_sets(&env).unwrap();
        let worse_size_k = sets.iter().skip(1).find(|s| s.size() == 2).unwrap();
        assert!(matches!(
            construct_trap_prior(&env, &worse_size_k.indices, 0.01),
            Err(Error::NotSubspaceOptimal(_)) | Err(Error::NoTrapExists(_))
        ));
    }

    #[test]
    fn best_set_attains_phi_squared() {
        for env in [example2(), precise_info()] {
            let best = &enumerate_minimal_spanning_sets(&env).unwrap()[0];
            let v = asymptotic_variance(&env, &best.lambda_star).unwrap();
            assert!((v - best.phi * best.phi).abs() < 1e-10);
        }
    }

    #[test]
    fn perturbation_eta_example2() {
        // {1} has φ=1 against φ*=2/3 with nothing shared: 1/(1+η) ≥ 2/3.
        let eta = perturbation_eta(&example2()).unwrap();
        assert!((eta - 0.5).abs() < 1e-12);
    }
}
