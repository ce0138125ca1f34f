//! Scatter matrix estimation.
//!
//! The CES maximum likelihood estimator solves the fixed-point equation
//!
//! ```text
//! Σ = (1/n) Σᵢ ψ(xᵢᴴΣ⁻¹xᵢ) xᵢxᵢᴴ =: T(Σ)
//! ```
//!
//! [`mle_fixed_point`] iterates `T` directly. [`riemannian_gradient_descent`]
//! minimizes the negative log-likelihood on the manifold for any metric,
//! retraction and step rule. With metric `(1, 0)`, the first order retraction
//! and a constant step `1/n`, its iterates are exactly those of `T`.

use nalgebra::DVector;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::geometry::{whiten, whitened_inner, MetricParams, Retraction};
use crate::matrix::{relative_error, CMatrix, HermitianMatrix, HpdMatrix};
use crate::models::{neg_log_likelihood, quadratic_forms, CesModel, Generator, SampleBatch};

/// Step size rule for gradient descent.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum StepRule {
    Constant(f64),
    /// Armijo backtracking starting from `1/n` at every iteration.
    Backtracking {
        shrink: f64,
        sufficient_decrease: f64,
    },
}

impl Default for StepRule {
    fn default() -> Self {
        StepRule::Backtracking {
            shrink: 0.5,
            sufficient_decrease: 1e-4,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EstimationConfig {
    /// Relative change threshold for the fixed point; per-sample gradient
    /// norm threshold for gradient descent.
    pub tolerance: f64,
    pub max_iterations: usize,
    pub retraction: Retraction,
    pub step_rule: StepRule,
    /// Keep every iterate in [`EstimationResult::iterates`].
    pub record_iterates: bool,
}

impl Default for EstimationConfig {
    fn default() -> Self {
        Self {
            tolerance: 1e-9,
            max_iterations: 1000,
            retraction: Retraction::SecondOrder,
            step_rule: StepRule::default(),
            record_iterates: false,
        }
    }
}

impl EstimationConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tolerance > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "tolerance {} must be positive",
                self.tolerance
            )));
        }
        if self.max_iterations == 0 {
            return Err(Error::InvalidArgument("max_iterations must be at least 1".into()));
        }
        match self.step_rule {
            StepRule::Constant(step) if !(step > 0.0 && step.is_finite()) => {
                Err(Error::InvalidArgument(format!("constant step {step} must be positive")))
            }
            StepRule::Backtracking {
                shrink,
                sufficient_decrease,
            } if !(shrink > 0.0 && shrink < 1.0 && sufficient_decrease > 0.0 && sufficient_decrease < 1.0) => Err(
                Error::InvalidArgument("backtracking constants must lie in (0, 1)".into()),
            ),
            _ => Ok(()),
        }
    }
}

#[derive(Clone, Debug)]
pub struct EstimationResult {
    pub estimate: HpdMatrix,
    pub iterations: usize,
    pub residual_history: Vec<f64>,
    pub converged: bool,
    /// Iterates after each step, when requested.
    pub iterates: Vec<HpdMatrix>,
}

impl EstimationResult {
    pub fn final_residual(&self) -> Option<f64> {
        self.residual_history.last().copied()
    }
}

/// Additive penalty `h(Σ)` for regularized costs `L(Σ) + h(Σ)`.
pub trait Penalty: Sync {
    fn cost(&self, sigma: &HpdMatrix) -> f64;
    /// Hermitian `G` with `Dh(Σ)[ξ] = Re tr(Gξ)`.
    fn euclidean_gradient(&self, sigma: &HpdMatrix) -> HermitianMatrix;
}

/// `X diag(w) Xᴴ`.
fn weighted_outer_sum(batch: &SampleBatch, weights: &[f64]) -> CMatrix {
    let data = batch.data();
    let mut scaled = data.clone();
    for (j, &w) in weights.iter().enumerate() {
        scaled.column_mut(j).scale_mut(w);
    }
    scaled * data.adjoint()
}

/// `Σᵢ ψ(tᵢ) xᵢxᵢᴴ` and the weighted quadratic forms `ψ(tᵢ) tᵢ`.
fn psi_scatter(batch: &SampleBatch, model: &CesModel, sigma: &CMatrix) -> Result<(CMatrix, f64)> {
    let t = quadratic_forms(batch, sigma)?;
    let w: Vec<f64> = t.iter().map(|&ti| model.psi(ti)).collect();
    let weighted_t = w.iter().zip(&t).map(|(a, b)| a * b).sum();
    Ok((weighted_outer_sum(batch, &w), weighted_t))
}

fn fixed_point_map(batch: &SampleBatch, model: &CesModel, sigma: &CMatrix) -> Result<CMatrix> {
    let n = batch.count() as f64;
    let t = quadratic_forms(batch, sigma)?;
    let w: Vec<f64> = t.iter().map(|&ti| model.psi(ti) / n).collect();
    Ok(hermitian_part(weighted_outer_sum(batch, &w)))
}

fn hermitian_part(m: CMatrix) -> CMatrix {
    HermitianMatrix::from_symmetrized(m).into_matrix()
}

/// Sample covariance `(1/n) Σᵢ xᵢxᵢᴴ`.
pub fn scm(batch: &SampleBatch) -> Result<HpdMatrix> {
    let n = batch.count() as f64;
    let w = vec![1.0 / n; batch.count()];
    HpdMatrix::from_matrix(hermitian_part(weighted_outer_sum(batch, &w)))
}

/// Default warm start: the SCM, or `I_p` scaled by the mean sample energy
/// per coordinate when the SCM is not positive definite.
pub fn initial_guess(batch: &SampleBatch) -> HpdMatrix {
    scm(batch).unwrap_or_else(|_| {
        let p = batch.dim();
        let energy = batch.data().norm_squared() / (batch.count() * p) as f64;
        let scale = if energy > 0.0 { energy } else { 1.0 };
        HpdMatrix::from_diagonal(&vec![scale; p]).expect("positive scaled identity")
    })
}

/// Fixed-point MLE from the default warm start.
pub fn mle_fixed_point(batch: &SampleBatch, model: &CesModel, config: &EstimationConfig) -> Result<EstimationResult> {
    mle_fixed_point_from(batch, model, config, &initial_guess(batch))
}

/// Fixed-point MLE from `sigma0`.
///
/// Stops when `‖Σ_{k+1} − Σ_k‖_F / ‖Σ_k‖_F < tolerance`. Hitting the iteration
/// cap is not an error: the last iterate is returned with `converged = false`.
pub fn mle_fixed_point_from(
    batch: &SampleBatch,
    model: &CesModel,
    config: &EstimationConfig,
    sigma0: &HpdMatrix,
) -> Result<EstimationResult> {
    config.validate()?;
    let (n, p) = (batch.count(), batch.dim());
    if n <= p {
        return Err(Error::InsufficientSamples { n, p });
    }
    sigma0.check_dim(p)?;
    if model.dim() != p {
        return Err(Error::DimensionMismatch {
            expected: p,
            found: model.dim(),
        });
    }

    let mut current = sigma0.matrix().clone();
    let mut history = Vec::new();
    let mut iterates = Vec::new();
    let mut converged = false;
    while history.len() < config.max_iterations {
        let next = fixed_point_map(batch, model, &current)?;
        let change = relative_error(&next, &current);
        current = next;
        history.push(change);
        if config.record_iterates {
            iterates.push(HpdMatrix::from_matrix(current.clone())?);
        }
        if change < config.tolerance {
            converged = true;
            break;
        }
    }
    Ok(EstimationResult {
        estimate: HpdMatrix::from_matrix(current)?,
        iterations: history.len(),
        residual_history: history,
        converged,
        iterates,
    })
}

/// `‖Σ − T(Σ)‖_F / ‖Σ‖_F`.
pub fn fixed_point_residual(batch: &SampleBatch, model: &CesModel, sigma: &HpdMatrix) -> Result<f64> {
    batch.check_dim(sigma.dim())?;
    let t = fixed_point_map(batch, model, sigma.matrix())?;
    Ok(relative_error(&t, sigma.matrix()))
}

/// Riemannian gradient of the negative log-likelihood under the `(α, β)` metric:
///
/// ```text
/// grad L(Σ) = ( n/(α+pβ) + β/(α(α+pβ)) Σᵢ ψ(tᵢ) tᵢ ) Σ − (1/α) Σᵢ ψ(tᵢ) xᵢxᵢᴴ
/// ```
///
/// with `tᵢ = xᵢᴴΣ⁻¹xᵢ`. For `(1, 0)` this is `nΣ − Σᵢ ψ(tᵢ) xᵢxᵢᴴ`.
pub fn riemannian_grad_nll(
    sigma: &HpdMatrix,
    batch: &SampleBatch,
    model: &CesModel,
    params: MetricParams,
) -> Result<HermitianMatrix> {
    let p = sigma.dim();
    params.validate_for(p)?;
    batch.check_dim(p)?;
    let (alpha, beta) = (params.alpha, params.beta);
    let n = batch.count() as f64;
    let (scatter, weighted_t) = psi_scatter(batch, model, sigma.matrix())?;
    let denom = alpha + p as f64 * beta;
    let coef = n / denom + beta / (alpha * denom) * weighted_t;
    let grad = sigma.matrix() * Complex64::new(coef, 0.0) - scatter * Complex64::new(1.0 / alpha, 0.0);
    Ok(HermitianMatrix::from_symmetrized(grad))
}

/// Converts a `(1, 0)` gradient to the `(α, β)` metric:
/// `(1/α) G − β/(α(α+pβ)) tr(Σ⁻¹G) Σ`.
pub fn natural_gradient_to_metric(
    sigma: &HpdMatrix,
    natural_grad: &HermitianMatrix,
    params: MetricParams,
) -> Result<HermitianMatrix> {
    let p = sigma.dim();
    params.validate_for(p)?;
    let (alpha, beta) = (params.alpha, params.beta);
    let trace = whiten(sigma, natural_grad)?.trace();
    let shift = beta / (alpha * (alpha + p as f64 * beta)) * trace;
    Ok(&natural_grad.scale(1.0 / alpha) - &sigma.as_hermitian().scale(shift))
}

fn metric_norm_sq(sigma: &HpdMatrix, xi: &HermitianMatrix, params: MetricParams) -> Result<f64> {
    let a = whiten(sigma, xi)?;
    Ok(whitened_inner(&a, &a, params))
}

struct Objective<'a> {
    batch: &'a SampleBatch,
    model: &'a CesModel,
    params: MetricParams,
    penalty: Option<&'a dyn Penalty>,
}

impl Objective<'_> {
    fn cost(&self, sigma: &HpdMatrix) -> Result<f64> {
        let mut c = neg_log_likelihood(self.batch, sigma, self.model)?;
        if let Some(h) = self.penalty {
            c += h.cost(sigma);
        }
        Ok(c)
    }

    fn gradient(&self, sigma: &HpdMatrix) -> Result<HermitianMatrix> {
        let mut g = riemannian_grad_nll(sigma, self.batch, self.model, self.params)?;
        if let Some(h) = self.penalty {
            let natural = h.euclidean_gradient(sigma).sandwich(sigma.as_hermitian());
            g = &g + &natural_gradient_to_metric(sigma, &natural, self.params)?;
        }
        Ok(g)
    }
}

/// Riemannian gradient descent `Σ_{k+1} = R_{Σ_k}(−λ_k grad L(Σ_k))`.
///
/// Stops when `‖grad L‖_Σ / n < tolerance` in the chosen metric. With the
/// first order retraction and a constant step, leaving the cone aborts the
/// run with [`Error::LeftCone`]; under backtracking such trial steps are
/// shrunk instead.
pub fn riemannian_gradient_descent(
    batch: &SampleBatch,
    model: &CesModel,
    params: MetricParams,
    config: &EstimationConfig,
    sigma0: &HpdMatrix,
) -> Result<EstimationResult> {
    riemannian_gradient_descent_penalized(batch, model, params, config, sigma0, None)
}

/// [`riemannian_gradient_descent`] on `L(Σ) + h(Σ)`.
pub fn riemannian_gradient_descent_penalized(
    batch: &SampleBatch,
    model: &CesModel,
    params: MetricParams,
    config: &EstimationConfig,
    sigma0: &HpdMatrix,
    penalty: Option<&dyn Penalty>,
) -> Result<EstimationResult> {
    config.validate()?;
    let p = batch.dim();
    sigma0.check_dim(p)?;
    params.validate_for(p)?;
    let n = batch.count() as f64;
    let objective = Objective {
        batch,
        model,
        params,
        penalty,
    };

    let mut sigma = sigma0.clone();
    let mut grad = objective.gradient(&sigma)?;
    let mut grad_sq = metric_norm_sq(&sigma, &grad, params)?;
    let mut history = Vec::new();
    let mut iterates = Vec::new();
    let mut converged = grad_sq.max(0.0).sqrt() / n < config.tolerance;

    while !converged && history.len() < config.max_iterations {
        let next = match config.step_rule {
            StepRule::Constant(step) => config.retraction.retract(&sigma, &grad.scale(-step))?,
            StepRule::Backtracking {
                shrink,
                sufficient_decrease,
            } => {
                let cost = objective.cost(&sigma)?;
                // rounding slack so near-stationary steps are not rejected as noise
                let slack = 1e-12 * cost.abs().max(1.0);
                let mut step = 1.0 / n;
                let mut accepted = None;
                for _ in 0..60 {
                    if let Ok(candidate) = config.retraction.retract(&sigma, &grad.scale(-step)) {
                        let c = objective.cost(&candidate)?;
                        if c <= cost - sufficient_decrease * step * grad_sq + slack {
                            accepted = Some(candidate);
                            break;
                        }
                    }
                    step *= shrink;
                }
                match accepted {
                    Some(candidate) => candidate,
                    None => {
                        log::warn!("backtracking stalled after {} iterations", history.len());
                        break;
                    }
                }
            }
        };
        sigma = next;
        grad = objective.gradient(&sigma)?;
        grad_sq = metric_norm_sq(&sigma, &grad, params)?;
        let residual = grad_sq.max(0.0).sqrt() / n;
        history.push(residual);
        if config.record_iterates {
            iterates.push(sigma.clone());
        }
        converged = residual < config.tolerance;
    }

    Ok(EstimationResult {
        estimate: sigma,
        iterations: history.len(),
        residual_history: history,
        converged,
        iterates,
    })
}

/// A scatter estimator selectable by name in experiments.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Estimator {
    Scm,
    /// Fixed-point MLE assuming the given generator, whatever the data law.
    Mle(Generator),
}

impl Estimator {
    /// Stable short name: `scm`, `mle_gaussian`, `mle_t<dof>`.
    pub fn label(&self) -> String {
        match self {
            Estimator::Scm => "scm".into(),
            Estimator::Mle(Generator::Gaussian) => "mle_gaussian".into(),
            Estimator::Mle(Generator::StudentT { dof }) => format!("mle_t{dof}"),
        }
    }

    /// Runs the estimator. The SCM reports zero iterations and `converged = true`.
    pub fn estimate(&self, batch: &SampleBatch, config: &EstimationConfig) -> Result<EstimationResult> {
        match self {
            Estimator::Scm => Ok(EstimationResult {
                estimate: scm(batch)?,
                iterations: 0,
                residual_history: Vec::new(),
                converged: true,
                iterates: Vec::new(),
            }),
            Estimator::Mle(generator) => {
                let model = CesModel::new(batch.dim(), *generator)?;
                mle_fixed_point(batch, &model, config)
            }
        }
    }
}

/// Per-sample directional derivative of `L` used by tests and diagnostics:
/// `DL(Σ)[ξ] = n tr(Σ⁻¹ξ) − Σᵢ ψ(tᵢ) xᵢᴴΣ⁻¹ξΣ⁻¹xᵢ`.
pub fn nll_directional_derivative(
    sigma: &HpdMatrix,
    batch: &SampleBatch,
    model: &CesModel,
    xi: &HermitianMatrix,
) -> Result<f64> {
    batch.check_dim(sigma.dim())?;
    let inv = sigma.inverse();
    let v = inv.as_matrix() * batch.data();
    let n = batch.count() as f64;
    let mut total = n * (inv.as_matrix() * xi.as_matrix()).trace().re;
    for j in 0..batch.count() {
        let vj: DVector<Complex64> = v.column(j).into_owned();
        let t = batch.data().column(j).dotc(&vj).re;
        total -= model.psi(t) * vj.dotc(&(xi.as_matrix() * &vj)).re;
    }
    Ok(total)
}
