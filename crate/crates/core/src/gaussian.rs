//! Gaussian signal environments and exact posterior-variance computation.
//!
//! Source `i` produces `⟨cᵢ, θ⟩ + N(0, 1)` for an unknown state `θ ∈ R^K`.
//! With a Gaussian prior the posterior covariance after `qᵢ` observations of
//! each source is deterministic:
//!
//! ```text
//! Σ(q) = ((Σ⁰)⁻¹ + Σᵢ qᵢ cᵢcᵢ')⁻¹
//! ```
//!
//! and the loss of interest is `Σᵣ wᵣ · uᵣ' Σ(q) uᵣ` over the objective
//! directions. The single objective `(1, e₁)` tracks the first state alone.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;

/// One weighted direction of the quadratic loss.
#[derive(Debug, Clone, PartialEq)]
pub struct Objective {
    pub weight: f64,
    pub direction: DVector<f64>,
}

impl Objective {
    pub fn new(weight: f64, direction: Vec<f64>) -> Self {
        Objective {
            weight,
            direction: DVector::from_vec(direction),
        }
    }
}

/// Signal coefficients (one row per source) together with the loss directions.
#[derive(Debug, Clone, PartialEq)]
pub struct Environment {
    coefficients: DMatrix<f64>,
    objective: Vec<Objective>,
}

impl Environment {
    pub fn new(coefficients: DMatrix<f64>, objective: Vec<Objective>) -> Result<Self> {
        let (n, k) = coefficients.shape();
        if n == 0 || k == 0 {
            return Err(Error::InvalidEnvironment(
                "need at least one source and one state".into(),
            ));
        }
        if coefficients.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidEnvironment(
                "coefficients must be finite".into(),
            ));
        }
        if objective.is_empty() {
            return Err(Error::InvalidEnvironment("objective is empty".into()));
        }
        for (r, obj) in objective.iter().enumerate() {
            if obj.direction.len() != k {
                return Err(Error::DimensionMismatch {
                    what: "objective direction",
                    expected: k,
                    found: obj.direction.len(),
                });
            }
            if !(obj.weight.is_finite() && obj.weight > 0.0) {
                return Err(Error::InvalidEnvironment(format!(
                    "objective {r} has non-positive weight {}",
                    obj.weight
                )));
            }
            if obj.direction.iter().any(|x| !x.is_finite()) || obj.direction.norm() == 0.0 {
                return Err(Error::InvalidEnvironment(format!(
                    "objective {r} direction must be finite and non-zero"
                )));
            }
        }
        Ok(Environment {
            coefficients,
            objective,
        })
    }

    /// Builds an environment from coefficient rows with the loss on the first
    /// state.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let k = rows.first().map_or(0, Vec::len);
        let mut target = vec![0.0; k];
        if k > 0 {
            target[0] = 1.0;
        }
        Self::with_target(rows, target)
    }

    pub fn with_target(rows: &[Vec<f64>], target: Vec<f64>) -> Result<Self> {
        Self::new(rows_to_matrix(rows)?, vec![Objective::new(1.0, target)])
    }

    pub fn with_objective(rows: &[Vec<f64>], objective: Vec<Objective>) -> Result<Self> {
        Self::new(rows_to_matrix(rows)?, objective)
    }

    pub fn num_sources(&self) -> usize {
        self.coefficients.nrows()
    }

    pub fn num_states(&self) -> usize {
        self.coefficients.ncols()
    }

    pub fn coefficients(&self) -> &DMatrix<f64> {
        &self.coefficients
    }

    pub fn objective(&self) -> &[Objective] {
        &self.objective
    }

    /// Coefficient vector `cᵢ` of source `i`.
    pub fn source(&self, i: usize) -> DVector<f64> {
        self.coefficients.row(i).transpose()
    }

    /// Coefficient vectors of the given sources as matrix columns.
    pub fn source_columns(&self, indices: &[usize]) -> DMatrix<f64> {
        let k = self.num_states();
        let mut m = DMatrix::zeros(k, indices.len());
        for (col, &i) in indices.iter().enumerate() {
            m.set_column(col, &self.coefficients.row(i).transpose());
        }
        m
    }

    /// The target direction when the objective has exactly one direction.
    pub fn single_target(&self) -> Result<&DVector<f64>> {
        match self.objective.as_slice() {
            [only] => Ok(&only.direction),
            _ => Err(Error::Unsupported(
                "operation requires a single objective direction".into(),
            )),
        }
    }

    /// Copy of the environment with every objective weight multiplied by `factor`.
    pub fn with_scaled_weights(&self, factor: f64) -> Result<Self> {
        let objective = self
            .objective
            .iter()
            .map(|o| Objective {
                weight: o.weight * factor,
                direction: o.direction.clone(),
            })
            .collect();
        Self::new(self.coefficients.clone(), objective)
    }

    pub(crate) fn check_index(&self, i: usize) -> Result<()> {
        if i < self.num_sources() {
            Ok(())
        } else {
            Err(Error::IndexOutOfRange {
                index: i,
                len: self.num_sources(),
            })
        }
    }

    /// `C' diag(weights) C`, the information contributed by the given counts
    /// or frequencies.
    pub fn information_matrix(&self, weights: &[f64]) -> DMatrix<f64> {
        let k = self.num_states();
        let mut info = DMatrix::zeros(k, k);
        for (i, &w) in weights.iter().enumerate() {
            if w != 0.0 {
                let c = self.source(i);
                info.ger(w, &c, &c, 1.0);
            }
        }
        info
    }
}

fn rows_to_matrix(rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let n = rows.len();
    let k = rows.first().map_or(0, Vec::len);
    for row in rows {
        if row.len() != k {
            return Err(Error::DimensionMismatch {
                what: "coefficient row",
                expected: k,
                found: row.len(),
            });
        }
    }
    Ok(DMatrix::from_fn(n, k, |i, j| rows[i][j]))
}

/// Multivariate normal prior over the states with full-rank covariance.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianPrior {
    mean: DVector<f64>,
    covariance: DMatrix<f64>,
    precision: DMatrix<f64>,
}

impl GaussianPrior {
    /// Validates symmetry (to `1e-10` relative to the largest entry) and
    /// positive definiteness, then symmetrizes.
    pub fn new(mean: DVector<f64>, covariance: DMatrix<f64>) -> Result<Self> {
        let covariance = validated_spd(covariance, "prior covariance")?;
        if mean.len() != covariance.nrows() {
            return Err(Error::DimensionMismatch {
                what: "prior mean",
                expected: covariance.nrows(),
                found: mean.len(),
            });
        }
        if mean.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidEnvironment(
                "prior mean must be finite".into(),
            ));
        }
        let precision = linalg::spd_inverse(&covariance, "prior covariance")?;
        Ok(GaussianPrior {
            mean,
            covariance,
            precision,
        })
    }

    /// Zero-mean prior with independent states of the given variances.
    pub fn independent(variances: &[f64]) -> Result<Self> {
        Self::new(
            DVector::zeros(variances.len()),
            DMatrix::from_diagonal(&DVector::from_row_slice(variances)),
        )
    }

    pub fn from_rows(mean: Vec<f64>, covariance: &[Vec<f64>]) -> Result<Self> {
        Self::new(DVector::from_vec(mean), rows_to_matrix(covariance)?)
    }

    /// Builds the prior from its precision matrix, which is stored as given
    /// (after symmetrization) so that precision additivity stays exact.
    pub fn from_precision(mean: DVector<f64>, precision: DMatrix<f64>) -> Result<Self> {
        let precision = validated_spd(precision, "prior precision")?;
        if mean.len() != precision.nrows() {
            return Err(Error::DimensionMismatch {
                what: "prior mean",
                expected: precision.nrows(),
                found: mean.len(),
            });
        }
        let covariance = linalg::spd_inverse(&precision, "prior precision")?;
        Ok(GaussianPrior {
            mean,
            covariance,
            precision,
        })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.covariance
    }

    pub fn precision(&self) -> &DMatrix<f64> {
        &self.precision
    }

    /// Same prior with one diagonal covariance entry replaced.
    pub fn with_variance(&self, state: usize, variance: f64) -> Result<Self> {
        if state >= self.dim() {
            return Err(Error::IndexOutOfRange {
                index: state,
                len: self.dim(),
            });
        }
        let mut cov = self.covariance.clone();
        cov[(state, state)] = variance;
        Self::new(self.mean.clone(), cov)
    }

    fn check_env(&self, env: &Environment) -> Result<()> {
        if self.dim() != env.num_states() {
            return Err(Error::DimensionMismatch {
                what: "prior dimension",
                expected: env.num_states(),
                found: self.dim(),
            });
        }
        Ok(())
    }
}

fn validated_spd(m: DMatrix<f64>, what: &'static str) -> Result<DMatrix<f64>> {
    if !m.is_square() || m.nrows() == 0 {
        return Err(Error::DimensionMismatch {
            what,
            expected: m.nrows(),
            found: m.ncols(),
        });
    }
    if m.iter().any(|x| !x.is_finite()) {
        return Err(Error::NotPositiveDefinite { what });
    }
    let asym = linalg::max_asymmetry(&m);
    if asym > 1e-10 * linalg::max_abs(&m).max(1.0) {
        return Err(Error::NotSymmetric {
            what,
            asymmetry: asym,
        });
    }
    let m = linalg::symmetrize(&m);
    if !linalg::is_well_posed_pd(&m) {
        return Err(Error::NotPositiveDefinite { what });
    }
    Ok(m)
}

/// Non-negative integer observation counts per source.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DivisionVector(Vec<u64>);

impl DivisionVector {
    pub fn new(counts: Vec<u64>) -> Self {
        DivisionVector(counts)
    }

    pub fn zeros(n: usize) -> Self {
        DivisionVector(vec![0; n])
    }

    pub fn counts(&self) -> &[u64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn total(&self) -> u64 {
        self.0.iter().sum()
    }

    pub fn as_f64(&self) -> Vec<f64> {
        self.0.iter().map(|&c| c as f64).collect()
    }

    /// `self + eᵢ`
    pub fn incremented(&self, i: usize) -> Self {
        let mut next = self.0.clone();
        next[i] += 1;
        DivisionVector(next)
    }

    pub fn add(&mut self, i: usize, amount: u64) {
        self.0[i] += amount;
    }

    pub fn support(&self) -> Vec<usize> {
        (0..self.0.len()).filter(|&i| self.0[i] > 0).collect()
    }
}

impl From<Vec<u64>> for DivisionVector {
    fn from(v: Vec<u64>) -> Self {
        DivisionVector(v)
    }
}

/// Non-negative observation frequencies per source.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FrequencyVector(Vec<f64>);

impl FrequencyVector {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        for (index, &value) in weights.iter().enumerate() {
            if !(value.is_finite() && value >= 0.0) {
                return Err(Error::NegativeWeight { index, value });
            }
        }
        Ok(FrequencyVector(weights))
    }

    /// Rescales non-negative weights onto the simplex.
    pub fn normalized(weights: Vec<f64>) -> Result<Self> {
        let v = Self::new(weights)?;
        let total: f64 = v.0.iter().sum();
        if total <= 0.0 {
            return Err(Error::InvalidEnvironment(
                "cannot normalize an all-zero frequency vector".into(),
            ));
        }
        Ok(FrequencyVector(
            v.0.into_iter().map(|x| x / total).collect(),
        ))
    }

    pub fn weights(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Whether the weights sum to one within `1e-12`.
    pub fn is_simplex_normalized(&self) -> bool {
        (self.0.iter().sum::<f64>() - 1.0).abs() <= 1e-12
    }

    pub fn support(&self) -> Vec<usize> {
        (0..self.0.len()).filter(|&i| self.0[i] > 0.0).collect()
    }

    pub fn scaled(&self, factor: f64) -> Result<Self> {
        Self::new(self.0.iter().map(|x| x * factor).collect())
    }

    pub fn linf_distance(&self, other: &FrequencyVector) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .fold(0.0_f64, |acc, (a, b)| acc.max((a - b).abs()))
    }
}

/// Posterior precision (and optionally the information vector `precision · mean`).
#[derive(Debug, Clone)]
pub struct BeliefState {
    precision: DMatrix<f64>,
    information: Option<DVector<f64>>,
}

impl BeliefState {
    pub fn from_prior(prior: &GaussianPrior, track_mean: bool) -> Self {
        BeliefState {
            precision: prior.precision().clone(),
            information: track_mean.then(|| prior.precision() * prior.mean()),
        }
    }

    /// Precision after real-valued counts of each source.
    pub fn from_counts(env: &Environment, prior: &GaussianPrior, counts: &[f64]) -> Result<Self> {
        check_counts(env, prior, counts)?;
        Ok(BeliefState {
            precision: prior.precision() + env.information_matrix(counts),
            information: None,
        })
    }

    pub fn precision(&self) -> &DMatrix<f64> {
        &self.precision
    }

    /// Adds `times · c c'` to the precision.
    pub fn observe(&mut self, c: &DVector<f64>, times: f64) {
        self.precision.ger(times, c, c, 1.0);
    }

    /// One observation `y` of a unit-noise signal with coefficients `c`.
    pub fn observe_realization(&mut self, c: &DVector<f64>, y: f64) {
        self.precision.ger(1.0, c, c, 1.0);
        if let Some(info) = self.information.as_mut() {
            info.axpy(y, c, 1.0);
        }
    }

    pub fn mean(&self) -> Result<Option<DVector<f64>>> {
        match &self.information {
            None => Ok(None),
            Some(info) => Ok(Some(
                linalg::cholesky(&self.precision, "posterior precision")?.solve(info),
            )),
        }
    }

    pub fn factor(&self) -> Result<Cholesky<f64, Dyn>> {
        linalg::cholesky(&self.precision, "posterior precision")
    }

    pub fn objective_variance(&self, env: &Environment) -> Result<f64> {
        Ok(objective_value(env, &self.factor()?))
    }

    /// Max-norm distance between this precision and prior precision plus the
    /// information of `counts`.
    pub fn reconstruction_residual(
        &self,
        env: &Environment,
        prior: &GaussianPrior,
        counts: &[f64],
    ) -> f64 {
        let rebuilt = prior.precision() + env.information_matrix(counts);
        linalg::max_abs(&(&self.precision - rebuilt))
    }
}

fn check_counts(env: &Environment, prior: &GaussianPrior, counts: &[f64]) -> Result<()> {
    prior.check_env(env)?;
    if counts.len() != env.num_sources() {
        return Err(Error::DimensionMismatch {
            what: "count vector",
            expected: env.num_sources(),
            found: counts.len(),
        });
    }
    for (index, &value) in counts.iter().enumerate() {
        if !(value.is_finite() && value >= 0.0) {
            return Err(Error::NegativeWeight { index, value });
        }
    }
    Ok(())
}

pub(crate) fn objective_value(env: &Environment, factor: &Cholesky<f64, Dyn>) -> f64 {
    env.objective()
        .iter()
        .map(|o| o.weight * o.direction.dot(&factor.solve(&o.direction)))
        .sum()
}

/// Exact posterior loss `Σᵣ wᵣ uᵣ'((Σ⁰)⁻¹ + C'QC)⁻¹uᵣ` at integer counts.
pub fn posterior_variance(
    env: &Environment,
    prior: &GaussianPrior,
    q: &DivisionVector,
) -> Result<f64> {
    posterior_variance_at(env, prior, &q.as_f64())
}

/// Continuous extension of [`posterior_variance`] to non-negative real counts.
pub fn posterior_variance_at(env: &Environment, prior: &GaussianPrior, q: &[f64]) -> Result<f64> {
    BeliefState::from_counts(env, prior, q)?.objective_variance(env)
}

/// Drop in posterior loss from one more observation of source `i`.
pub fn variance_reduction(
    env: &Environment,
    prior: &GaussianPrior,
    q: &DivisionVector,
    i: usize,
) -> Result<f64> {
    env.check_index(i)?;
    let state = BeliefState::from_counts(env, prior, &q.as_f64())?;
    let factor = state.factor()?;
    Ok(rank_one_reductions(env, &factor, 1.0)[i])
}

/// Loss reductions from adding `times · cᵢcᵢ'` for every source `i`, by the
/// Sherman-Morrison identity; always non-negative.
pub(crate) fn rank_one_reductions(
    env: &Environment,
    factor: &Cholesky<f64, Dyn>,
    times: f64,
) -> Vec<f64> {
    let targets: Vec<(f64, DVector<f64>)> = env
        .objective()
        .iter()
        .map(|o| (o.weight, factor.solve(&o.direction)))
        .collect();
    (0..env.num_sources())
        .map(|i| {
            let c = env.source(i);
            let leverage = c.dot(&factor.solve(&c));
            let gain: f64 = targets.iter().map(|(w, x)| w * c.dot(x).powi(2)).sum();
            times * gain / (1.0 + times * leverage)
        })
        .collect()
}

/// Gradient of the continuous posterior loss: `∂ⱼV = −Σᵣ wᵣ (uᵣ' P⁻¹ cⱼ)²`.
pub fn grad_posterior_variance(
    env: &Environment,
    prior: &GaussianPrior,
    q: &[f64],
) -> Result<Vec<f64>> {
    let factor = BeliefState::from_counts(env, prior, q)?.factor()?;
    Ok(gradient_from_factor(env, &factor))
}

fn gradient_from_factor(env: &Environment, factor: &Cholesky<f64, Dyn>) -> Vec<f64> {
    let xs: Vec<(f64, DVector<f64>)> = env
        .objective()
        .iter()
        .map(|o| (o.weight, factor.solve(&o.direction)))
        .collect();
    (0..env.num_sources())
        .map(|j| {
            let c = env.source(j);
            -xs.iter().map(|(w, x)| w * x.dot(&c).powi(2)).sum::<f64>()
        })
        .collect()
}

fn check_frequencies(env: &Environment, lambda: &FrequencyVector) -> Result<()> {
    if lambda.len() != env.num_sources() {
        return Err(Error::DimensionMismatch {
            what: "frequency vector",
            expected: env.num_sources(),
            found: lambda.len(),
        });
    }
    Ok(())
}

/// Normalized long-run loss `V*(λ) = Σᵣ wᵣ uᵣ'(C'ΛC)⁻¹uᵣ` under the spectral
/// pseudo-inverse convention; `+∞` when some direction is not identified by
/// the positively weighted sources.
pub fn asymptotic_variance(env: &Environment, lambda: &FrequencyVector) -> Result<f64> {
    check_frequencies(env, lambda)?;
    let info = env.information_matrix(lambda.weights());
    // Rows scaled by the largest information entry to stay clear of overflow.
    let scale = linalg::max_abs(&info);
    if scale == 0.0 {
        return Ok(f64::INFINITY);
    }
    let design = DMatrix::from_fn(env.num_sources(), env.num_states(), |i, j| {
        (lambda.weights()[i] / scale).sqrt() * env.coefficients()[(i, j)]
    });
    let mut total = 0.0;
    for o in env.objective() {
        let form = linalg::design_quadratic_form(&design, &o.direction);
        if form.is_infinite() {
            return Ok(f64::INFINITY);
        }
        total += o.weight * form;
    }
    Ok(total / scale)
}

/// Gradient of [`asymptotic_variance`]; fails where the information matrix is
/// singular, since `V*` is not differentiable there.
pub fn grad_asymptotic_variance(env: &Environment, lambda: &FrequencyVector) -> Result<Vec<f64>> {
    check_frequencies(env, lambda)?;
    let info = env.information_matrix(lambda.weights());
    let eig = linalg::symmetrize(&info).symmetric_eigen();
    let largest = eig.eigenvalues.max();
    if eig.eigenvalues.min() <= linalg::PSEUDO_INVERSE_CUTOFF * largest.max(1.0) {
        return Err(Error::NonDifferentiable);
    }
    let factor =
        linalg::cholesky(&info, "information matrix").map_err(|_| Error::NonDifferentiable)?;
    Ok(gradient_from_factor(env, &factor))
}
