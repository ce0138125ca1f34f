//! Intrinsic Cramér-Rao bounds.
//!
//! For an unbiased estimator `Σ̂` and a distance `δ` induced by some metric,
//! neglecting curvature terms gives `E[δ²(Σ̂, Σ)] ≥ tr(F⁻¹)`, where `F` is the
//! Fisher information expressed in a basis of the tangent space that is
//! orthonormal for that metric:
//!
//! ```text
//! F_qℓ = n (α_g tr(Σ⁻¹ξ_qΣ⁻¹ξ_ℓ) + β_g tr(Σ⁻¹ξ_q) tr(Σ⁻¹ξ_ℓ))
//! ```
//!
//! Three distances are covered: Euclidean (numerical `tr(F⁻¹)`), the natural
//! metric `(1, 0)` with a closed form, and the Fisher-Rao metric `(α_g, β_g)`
//! of the model, whose bound is `p²/n` for every CES law.
//!
//! Tangent bases list `p²` elements in a fixed order: the `p` diagonal units,
//! then the real symmetric pairs `(i, j)`, `i < j`, in lexicographic order,
//! then the imaginary pairs in the same order.

use nalgebra::{Cholesky, DMatrix};
use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::estimation::{EstimationConfig, Estimator};
use crate::geometry::{euclidean_distance_sq, fisher_rao_distance_sq, whitened_inner, whitened_log, MetricParams};
use crate::matrix::{CMatrix, HermitianMatrix, HpdMatrix};
use crate::models::{coefficients, sample_batch, CesCoefficients, CesModel};
use crate::rng::SeededRng;

/// Condition estimate above which FIM inversion emits a warning.
pub const FIM_CONDITION_WARNING: f64 = 1e12;

const RANK_TOL: f64 = 1e-12;

/// The inner product a [`TangentBasis`] is orthonormal for.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum BasisMetric {
    /// `Re tr(ξη)`, independent of the base point.
    Euclidean,
    AffineInvariant(MetricParams),
}

#[derive(Clone, Debug)]
pub struct TangentBasis {
    /// Base point; `None` for the Euclidean basis, which is valid everywhere.
    pub point: Option<HpdMatrix>,
    pub metric: BasisMetric,
    pub elements: Vec<HermitianMatrix>,
    /// Elements pulled back to the identity, `Σ^{-1/2} ξ Σ^{-1/2}`.
    whitened: Option<Vec<HermitianMatrix>>,
}

impl TangentBasis {
    pub fn dim(&self) -> usize {
        self.elements.first().map_or(0, |e| e.dim())
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    /// Gram matrix of the elements under the basis metric.
    pub fn gram(&self) -> DMatrix<f64> {
        match (&self.metric, &self.whitened) {
            (BasisMetric::AffineInvariant(params), Some(w)) => gram_matrix(w, *params),
            _ => gram_matrix(&self.elements, MetricParams::NATURAL),
        }
    }

    fn check_point(&self, sigma: &HpdMatrix) -> Result<()> {
        sigma.check_dim(self.dim())?;
        if let Some(point) = &self.point {
            if crate::matrix::relative_error(point.matrix(), sigma.matrix()) > 1e-12 {
                return Err(Error::InvalidArgument(
                    "tangent basis is attached to a different point".into(),
                ));
            }
        }
        Ok(())
    }

    /// Whitened elements at `sigma`, computed if the basis does not cache them.
    fn whitened_at(&self, sigma: &HpdMatrix) -> Vec<HermitianMatrix> {
        match &self.whitened {
            Some(w) => w.clone(),
            None => {
                let root = sigma.inv_sqrt();
                self.elements.iter().map(|e| e.sandwich(&root)).collect()
            }
        }
    }
}

/// Real coordinates `[Re a_ij, Im a_ij]` so that `Re tr(AB)` is a dot product.
fn real_coordinates(elements: &[HermitianMatrix]) -> DMatrix<f64> {
    let p = elements.first().map_or(0, |e| e.dim());
    DMatrix::from_fn(2 * p * p, elements.len(), |r, c| {
        let z = elements[c].as_matrix()[r / 2];
        if r % 2 == 0 {
            z.re
        } else {
            z.im
        }
    })
}

/// `α Re tr(A_q A_ℓ) + β tr(A_q) tr(A_ℓ)` for all pairs.
fn gram_matrix(elements: &[HermitianMatrix], params: MetricParams) -> DMatrix<f64> {
    let v = real_coordinates(elements);
    let traces = DMatrix::from_fn(elements.len(), 1, |q, _| elements[q].trace());
    let mut g = v.transpose() * &v * params.alpha;
    g += &traces * traces.transpose() * params.beta;
    g
}

fn canonical_elements(p: usize) -> Vec<HermitianMatrix> {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let mut out = Vec::with_capacity(p * p);
    for i in 0..p {
        let mut m = CMatrix::zeros(p, p);
        m[(i, i)] = Complex64::new(1.0, 0.0);
        out.push(HermitianMatrix::from_symmetrized(m));
    }
    for (re, im) in [(s, 0.0), (0.0, s)] {
        for i in 0..p {
            for j in i + 1..p {
                let mut m = CMatrix::zeros(p, p);
                m[(i, j)] = Complex64::new(re, im);
                m[(j, i)] = Complex64::new(re, -im);
                out.push(HermitianMatrix::from_symmetrized(m));
            }
        }
    }
    out
}

/// Orthonormal basis of Hermitian matrices under `Re tr(ξη)`.
pub fn euclidean_basis(p: usize) -> TangentBasis {
    TangentBasis {
        point: None,
        metric: BasisMetric::Euclidean,
        elements: canonical_elements(p),
        whitened: None,
    }
}

/// `Σ^{1/2} ξ Σ^{1/2}` for each Euclidean basis element: orthonormal under `(1, 0)` at `Σ`.
pub fn natural_basis(sigma: &HpdMatrix) -> TangentBasis {
    let root = sigma.sqrt();
    let canonical = canonical_elements(sigma.dim());
    TangentBasis {
        point: Some(sigma.clone()),
        metric: BasisMetric::AffineInvariant(MetricParams::NATURAL),
        elements: canonical.iter().map(|e| e.sandwich(&root)).collect(),
        whitened: Some(canonical),
    }
}

/// Gram-Schmidt of the natural basis under the metric `params` at `Σ`.
///
/// Orthogonalization runs on whitened elements, where the natural basis is
/// the canonical one; each vector gets a second pass for stability.
pub fn gram_schmidt_basis(sigma: &HpdMatrix, params: MetricParams) -> Result<TangentBasis> {
    let p = sigma.dim();
    params.validate_for(p)?;
    let mut done: Vec<HermitianMatrix> = Vec::with_capacity(p * p);
    for (index, mut v) in canonical_elements(p).into_iter().enumerate() {
        for _ in 0..2 {
            for u in &done {
                let c = whitened_inner(&v, u, params);
                v = &v - &u.scale(c);
            }
        }
        let norm = whitened_inner(&v, &v, params).max(0.0).sqrt();
        if norm < RANK_TOL {
            return Err(Error::NumericalRankLoss { index });
        }
        done.push(v.scale(1.0 / norm));
    }
    let root = sigma.sqrt();
    Ok(TangentBasis {
        point: Some(sigma.clone()),
        metric: BasisMetric::AffineInvariant(params),
        elements: done.iter().map(|e| e.sandwich(&root)).collect(),
        whitened: Some(done),
    })
}

/// Fisher information in tangent coordinates.
#[derive(Clone, Debug, PartialEq)]
pub struct FimMatrix {
    pub entries: DMatrix<f64>,
    pub sample_count: usize,
}

impl FimMatrix {
    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    /// `F⁻¹` through a Cholesky factorization.
    ///
    /// The condition estimate is `(max lᵢᵢ / min lᵢᵢ)²` from the factor's
    /// diagonal, a cheap lower bound on the true condition number.
    pub fn inverse(&self) -> Result<DMatrix<f64>> {
        let chol = Cholesky::new(self.entries.clone()).ok_or(Error::SingularFim {
            condition: f64::INFINITY,
        })?;
        let diag = chol.l_dirty().diagonal();
        let (lo, hi) = diag
            .iter()
            .fold((f64::INFINITY, 0.0f64), |(lo, hi), &d| (lo.min(d), hi.max(d)));
        let condition = (hi / lo).powi(2);
        if !condition.is_finite() || lo <= 0.0 {
            return Err(Error::SingularFim { condition });
        }
        if condition > FIM_CONDITION_WARNING {
            log::warn!("Fisher information is ill-conditioned (estimate {condition:.3e})");
        }
        Ok(chol.inverse())
    }

    pub fn inverse_trace(&self) -> Result<f64> {
        Ok(self.inverse()?.trace())
    }
}

/// `F` for the Fisher coefficients of `model`.
pub fn fim_matrix(sigma: &HpdMatrix, basis: &TangentBasis, model: &CesModel, n: usize) -> Result<FimMatrix> {
    if model.dim() != sigma.dim() {
        return Err(Error::DimensionMismatch {
            expected: sigma.dim(),
            found: model.dim(),
        });
    }
    fim_matrix_with_coefficients(sigma, basis, coefficients(model).metric_params(), n)
}

/// `F_qℓ = n ⟨ξ_q, ξ_ℓ⟩` in the metric `coeffs` at `Σ`.
pub fn fim_matrix_with_coefficients(
    sigma: &HpdMatrix,
    basis: &TangentBasis,
    coeffs: MetricParams,
    n: usize,
) -> Result<FimMatrix> {
    basis.check_point(sigma)?;
    coeffs.validate_for(sigma.dim())?;
    let whitened = basis.whitened_at(sigma);
    let mut entries = gram_matrix(&whitened, coeffs) * n as f64;
    // exact symmetry for the Cholesky factorization
    entries = (&entries + entries.transpose()) * 0.5;
    Ok(FimMatrix {
        entries,
        sample_count: n,
    })
}

/// Which squared distance a bound or error refers to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum DistanceKind {
    Euclidean,
    /// Affine-invariant metric `(1, 0)`.
    Natural,
    /// Affine-invariant metric `(α_g, β_g)` of the data model.
    FisherRao,
}

impl DistanceKind {
    pub const ALL: [DistanceKind; 3] = [DistanceKind::Euclidean, DistanceKind::Natural, DistanceKind::FisherRao];

    pub fn label(&self) -> &'static str {
        match self {
            DistanceKind::Euclidean => "euclidean",
            DistanceKind::Natural => "natural",
            DistanceKind::FisherRao => "fisher_rao",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoundReport {
    pub distance: DistanceKind,
    pub value: f64,
    pub p: usize,
    pub n: usize,
    pub coefficients: CesCoefficients,
}

fn check_counts(n: usize, p: usize) -> Result<()> {
    if n == 0 || p == 0 {
        return Err(Error::InvalidArgument(format!("need n, p >= 1 (n={n}, p={p})")));
    }
    Ok(())
}

/// `tr(F⁻¹)` in the Euclidean basis.
pub fn crb_euclidean(sigma: &HpdMatrix, model: &CesModel, n: usize) -> Result<BoundReport> {
    let p = sigma.dim();
    check_counts(n, p)?;
    let fim = fim_matrix(sigma, &euclidean_basis(p), model, n)?;
    Ok(BoundReport {
        distance: DistanceKind::Euclidean,
        value: fim.inverse_trace()?,
        p,
        n,
        coefficients: coefficients(model),
    })
}

/// `(1/n) ((p² − 1)/α_g + 1/(α_g + pβ_g))`, independent of `Σ`.
pub fn crb_natural(model: &CesModel, n: usize, p: usize) -> Result<BoundReport> {
    check_counts(n, p)?;
    let model = model.with_dim(p)?;
    let c = coefficients(&model);
    let pf = p as f64;
    let value = ((pf * pf - 1.0) / c.alpha_g + 1.0 / (c.alpha_g + pf * c.beta_g)) / n as f64;
    Ok(BoundReport {
        distance: DistanceKind::Natural,
        value,
        p,
        n,
        coefficients: c,
    })
}

/// `p²/n`, the same for every CES model.
pub fn crb_fisher_rao(p: usize, n: usize) -> Result<BoundReport> {
    check_counts(n, p)?;
    Ok(BoundReport {
        distance: DistanceKind::FisherRao,
        value: (p * p) as f64 / n as f64,
        p,
        n,
        coefficients: CesCoefficients {
            alpha_g: 1.0,
            beta_g: 0.0,
        },
    })
}

/// Coordinates of the error `Σ̂ − Σ` (Euclidean basis) or `log_Σ Σ̂`
/// (affine-invariant bases). Their squared norm is the squared distance in
/// the basis metric.
pub fn error_vector(sigma: &HpdMatrix, sigma_hat: &HpdMatrix, basis: &TangentBasis) -> Result<Vec<f64>> {
    basis.check_point(sigma)?;
    sigma_hat.check_dim(sigma.dim())?;
    match basis.metric {
        BasisMetric::Euclidean => {
            let diff = sigma_hat.as_hermitian() - sigma.as_hermitian();
            Ok(basis.elements.iter().map(|e| diff.trace_inner(e)).collect())
        }
        BasisMetric::AffineInvariant(params) => {
            let log = whitened_log(sigma, sigma_hat)?;
            let whitened = basis.whitened_at(sigma);
            Ok(whitened.iter().map(|e| whitened_inner(&log, e, params)).collect())
        }
    }
}

/// Monte-Carlo MSE-versus-bound experiment.
#[derive(Clone, Debug)]
pub struct McScenario {
    pub sigma_true: HpdMatrix,
    pub model_true: CesModel,
    pub estimators: Vec<Estimator>,
    pub n_grid: Vec<usize>,
    pub trials: usize,
    pub seed: u64,
    /// Worker threads; 0 uses the rayon default. Results do not depend on it.
    pub workers: usize,
    pub estimation: EstimationConfig,
}

/// Minimum number of trials per cell.
pub const MIN_TRIALS: usize = 50;

impl McScenario {
    pub fn validate(&self) -> Result<()> {
        let p = self.sigma_true.dim();
        if self.model_true.dim() != p {
            return Err(Error::DimensionMismatch {
                expected: p,
                found: self.model_true.dim(),
            });
        }
        if self.estimators.is_empty() || self.n_grid.is_empty() {
            return Err(Error::EmptyInput);
        }
        if let Some(&n) = self.n_grid.iter().find(|&&n| n <= p) {
            return Err(Error::InsufficientSamples { n, p });
        }
        if self.trials < MIN_TRIALS {
            return Err(Error::InvalidArgument(format!(
                "trials={} below the minimum of {MIN_TRIALS}",
                self.trials
            )));
        }
        self.estimation.validate()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct McMseRow {
    pub estimator: String,
    pub n: usize,
    pub distance: DistanceKind,
    pub mean_sq_dist: f64,
    pub std_err: f64,
    pub bound: f64,
    /// Successful trials entering the mean.
    pub trials: usize,
    pub failures: usize,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct McMseTable {
    pub rows: Vec<McMseRow>,
}

impl McMseTable {
    pub fn get(&self, estimator: &str, n: usize, distance: DistanceKind) -> Option<&McMseRow> {
        self.rows
            .iter()
            .find(|r| r.estimator == estimator && r.n == n && r.distance == distance)
    }
}

/// Squared distances of `estimate` to the truth, in [`DistanceKind::ALL`] order.
fn squared_distances(truth: &HpdMatrix, estimate: &HpdMatrix, fisher: MetricParams) -> Result<[f64; 3]> {
    Ok([
        euclidean_distance_sq(truth, estimate)?,
        fisher_rao_distance_sq(truth, estimate, MetricParams::NATURAL)?,
        fisher_rao_distance_sq(truth, estimate, fisher)?,
    ])
}

type TrialOutcome = Vec<Option<[f64; 3]>>;

fn run_trial(scenario: &McScenario, n_index: usize, n: usize, trial: usize, fisher: MetricParams) -> TrialOutcome {
    let stream = SeededRng::stream_id(n_index as u64, trial as u64);
    let mut rng = SeededRng::new(scenario.seed, stream);
    let batch = match sample_batch(&scenario.sigma_true, &scenario.model_true, n, &mut rng) {
        Ok(b) => b,
        Err(_) => return vec![None; scenario.estimators.len()],
    };
    scenario
        .estimators
        .iter()
        .map(|est| {
            let result = est.estimate(&batch, &scenario.estimation).ok()?;
            if !result.converged {
                return None;
            }
            squared_distances(&scenario.sigma_true, &result.estimate, fisher).ok()
        })
        .collect()
}

fn mean_and_se(values: &[f64]) -> (f64, f64) {
    let k = values.len();
    if k == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / k as f64;
    if k == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (k - 1) as f64;
    (mean, (var / k as f64).sqrt())
}

/// Runs every (estimator, n) cell and reports the three squared distances
/// with their bounds.
///
/// Trial `t` at grid index `i` draws from stream `(i, t)` of the seed, and all
/// estimators see the same batch. Estimation errors and non-converged runs
/// count as failures and are excluded from the means.
pub fn mc_mse_experiment(scenario: &McScenario) -> Result<McMseTable> {
    scenario.validate()?;
    let p = scenario.sigma_true.dim();
    let fisher = coefficients(&scenario.model_true).metric_params();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(scenario.workers)
        .build()
        .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;

    let mut table = McMseTable::default();
    for (n_index, &n) in scenario.n_grid.iter().enumerate() {
        let outcomes: Vec<TrialOutcome> = pool.install(|| {
            (0..scenario.trials)
                .into_par_iter()
                .map(|trial| run_trial(scenario, n_index, n, trial, fisher))
                .collect()
        });
        let bounds = [
            crb_euclidean(&scenario.sigma_true, &scenario.model_true, n)?.value,
            crb_natural(&scenario.model_true, n, p)?.value,
            crb_fisher_rao(p, n)?.value,
        ];
        for (e, est) in scenario.estimators.iter().enumerate() {
            let ok: Vec<[f64; 3]> = outcomes.iter().filter_map(|o| o[e]).collect();
            let failures = scenario.trials - ok.len();
            if failures > 0 {
                log::warn!("{}: {failures} failed trials at n={n}", est.label());
            }
            for (d, kind) in DistanceKind::ALL.iter().enumerate() {
                let values: Vec<f64> = ok.iter().map(|v| v[d]).collect();
                let (mean, se) = mean_and_se(&values);
                table.rows.push(McMseRow {
                    estimator: est.label(),
                    n,
                    distance: *kind,
                    mean_sq_dist: mean,
                    std_err: se,
                    bound: bounds[d],
                    trials: ok.len(),
                    failures,
                });
            }
        }
    }
    Ok(table)
}
