//! Karcher means and minimum-distance-to-mean classification.
//!
//! The Karcher mean of `Σ₁, …, Σ_m` minimizes the variance
//! `V(Σ̄) = (1/2m) Σⱼ δ²(Σ̄, Σⱼ)`. Its critical point satisfies
//! `Σⱼ log_Σ̄(Σⱼ) = 0` for every member of the affine-invariant family, so the
//! mean does not depend on `(α, β)`; the classifier's distances do.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::estimation::{EstimationConfig, Estimator};
use crate::geometry::{fisher_rao_distance_sq, MetricParams};
use crate::matrix::{spectral_map, CMatrix, HermitianMatrix, HpdMatrix, SpectralFn};
use crate::models::{sample_batch, CesModel, SampleBatch};
use crate::rng::SeededRng;

/// `(1/2m) Σⱼ δ²(Σ̄, Σⱼ)`.
pub fn karcher_variance(sigma_bar: &HpdMatrix, set: &[HpdMatrix], params: MetricParams) -> Result<f64> {
    if set.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mut total = 0.0;
    for s in set {
        total += fisher_rao_distance_sq(sigma_bar, s, params)?;
    }
    Ok(total / (2 * set.len()) as f64)
}

#[derive(Clone, Debug)]
pub struct KarcherResult {
    pub mean: HpdMatrix,
    pub iterations: usize,
    /// `‖(1/m) Σⱼ log_Σ̄(Σⱼ)‖` in the `(1, 0)` metric at the returned mean.
    pub grad_norm: f64,
    pub converged: bool,
    /// `(1, 0)` variance at every iterate, starting point included.
    pub variance_history: Vec<f64>,
}

/// Whitened logs `log(Σ̄^{-1/2} Σⱼ Σ̄^{-1/2})`.
fn whitened_logs(mean: &HpdMatrix, set: &[HpdMatrix]) -> Result<Vec<HermitianMatrix>> {
    let w = mean.inv_sqrt();
    set.iter()
        .map(|s| {
            s.check_dim(mean.dim())?;
            spectral_map(&s.as_hermitian().sandwich(&w), SpectralFn::Log)
        })
        .collect()
}

/// Mean whitened log and the `(1, 0)` variance at `mean`.
fn gradient_and_variance(mean: &HpdMatrix, set: &[HpdMatrix]) -> Result<(HermitianMatrix, f64)> {
    let logs = whitened_logs(mean, set)?;
    let m = set.len() as f64;
    let mut sum = CMatrix::zeros(mean.dim(), mean.dim());
    let mut variance = 0.0;
    for l in &logs {
        sum += l.as_matrix();
        variance += l.trace_inner(l);
    }
    Ok((
        HermitianMatrix::from_symmetrized(sum).scale(1.0 / m),
        variance / (2.0 * m),
    ))
}

/// Riemannian gradient norm of the variance at `mean`, `‖(1/m) Σⱼ log(Σ̄^{-1/2}ΣⱼΣ̄^{-1/2})‖_F`.
pub fn karcher_gradient_norm(mean: &HpdMatrix, set: &[HpdMatrix]) -> Result<f64> {
    if set.is_empty() {
        return Err(Error::EmptyInput);
    }
    Ok(gradient_and_variance(mean, set)?.0.frobenius_norm())
}

/// Arithmetic mean of the set, which is always positive definite.
pub fn arithmetic_mean(set: &[HpdMatrix]) -> Result<HpdMatrix> {
    let first = set.first().ok_or(Error::EmptyInput)?;
    let mut sum = first.matrix().clone();
    for s in &set[1..] {
        s.check_dim(first.dim())?;
        sum += s.matrix();
    }
    if set.len() == 1 {
        return Ok(first.clone());
    }
    HpdMatrix::from_matrix(sum / num_complex::Complex64::new(set.len() as f64, 0.0))
}

/// Karcher mean by Riemannian gradient descent from the arithmetic mean.
///
/// Each step is `Σ̄ ← exp_Σ̄((t/m) Σⱼ log_Σ̄ Σⱼ)` with `t = 1`, halved while the
/// variance would increase. Running out of iterations is reported through
/// `converged = false`, with the last iterate.
pub fn karcher_mean(set: &[HpdMatrix], tol: f64, max_iter: usize) -> Result<KarcherResult> {
    karcher_mean_from(set, &arithmetic_mean(set)?, tol, max_iter)
}

pub fn karcher_mean_from(set: &[HpdMatrix], init: &HpdMatrix, tol: f64, max_iter: usize) -> Result<KarcherResult> {
    if set.is_empty() {
        return Err(Error::EmptyInput);
    }
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument(format!("tolerance {tol} must be positive")));
    }
    let mut mean = init.clone();
    let (mut grad, mut variance) = gradient_and_variance(&mean, set)?;
    let mut history = vec![variance];
    let mut iterations = 0;

    while grad.frobenius_norm() >= tol && iterations < max_iter {
        let root = mean.sqrt();
        // near the mean the true decrease is ~‖grad‖², far below the rounding of V
        let slack = 1e-12 * variance;
        let mut step = 1.0;
        let mut next = None;
        for _ in 0..40 {
            let candidate = HpdMatrix::new(spectral_map(&grad.scale(step), SpectralFn::Exp)?.sandwich(&root))?;
            let (g, v) = gradient_and_variance(&candidate, set)?;
            if v <= variance + slack {
                next = Some((candidate, g, v));
                break;
            }
            step *= 0.5;
        }
        let Some((candidate, g, v)) = next else {
            // no decreasing step at double precision
            break;
        };
        mean = candidate;
        grad = g;
        variance = v;
        history.push(v);
        iterations += 1;
    }

    let grad_norm = grad.frobenius_norm();
    Ok(KarcherResult {
        mean,
        iterations,
        grad_norm,
        converged: grad_norm < tol,
        variance_history: history,
    })
}

/// Covariance features with labels in `1..=class_count`.
#[derive(Clone, Debug)]
pub struct LabeledCovSet {
    pub items: Vec<(HpdMatrix, usize)>,
    pub class_count: usize,
}

impl LabeledCovSet {
    pub fn new(items: Vec<(HpdMatrix, usize)>, class_count: usize) -> Result<Self> {
        let set = Self { items, class_count };
        set.validate()?;
        Ok(set)
    }

    pub fn validate(&self) -> Result<()> {
        let p = self.items.first().map(|(m, _)| m.dim());
        for (m, label) in &self.items {
            if *label == 0 || *label > self.class_count {
                return Err(Error::InvalidLabel {
                    label: *label,
                    class_count: self.class_count,
                });
            }
            if let Some(p) = p {
                m.check_dim(p)?;
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn members(&self, label: usize) -> Vec<HpdMatrix> {
        self.items
            .iter()
            .filter(|(_, l)| *l == label)
            .map(|(m, _)| m.clone())
            .collect()
    }
}

#[derive(Clone, Debug)]
pub struct ClassCenters {
    /// Center of class `y` at index `y − 1`.
    pub centers: Vec<HpdMatrix>,
    pub params: MetricParams,
    /// Karcher gradient norm reached for each class.
    pub grad_norms: Vec<f64>,
}

/// One Karcher mean per class.
pub fn mdm_train(train: &LabeledCovSet, params: MetricParams, tol: f64, max_iter: usize) -> Result<ClassCenters> {
    train.validate()?;
    if let Some((m, _)) = train.items.first() {
        params.validate_for(m.dim())?;
    }
    let mut centers = Vec::with_capacity(train.class_count);
    let mut grad_norms = Vec::with_capacity(train.class_count);
    for label in 1..=train.class_count {
        let members = train.members(label);
        if members.is_empty() {
            return Err(Error::EmptyClass { label });
        }
        let r = karcher_mean(&members, tol, max_iter)?;
        if !r.converged {
            return Err(Error::NoConvergence {
                iterations: r.iterations,
            });
        }
        centers.push(r.mean);
        grad_norms.push(r.grad_norm);
    }
    Ok(ClassCenters {
        centers,
        params,
        grad_norms,
    })
}

/// Label of the nearest center; ties go to the smallest label.
pub fn mdm_predict(centers: &ClassCenters, sigma_hat: &HpdMatrix) -> Result<usize> {
    let mut best = (0, f64::INFINITY);
    for (i, c) in centers.centers.iter().enumerate() {
        let d = fisher_rao_distance_sq(c, sigma_hat, centers.params)?;
        if d < best.1 {
            best = (i + 1, d);
        }
    }
    if best.0 == 0 {
        return Err(Error::EmptyInput);
    }
    Ok(best.0)
}

/// Fraction of test items whose predicted label matches.
pub fn evaluate_accuracy(centers: &ClassCenters, test: &LabeledCovSet) -> Result<f64> {
    if test.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mut correct = 0usize;
    for (m, label) in &test.items {
        if mdm_predict(centers, m)? == *label {
            correct += 1;
        }
    }
    Ok(correct as f64 / test.len() as f64)
}

/// Synthetic labeled batches: class `y` draws from `models[y−1]` with scatter `scatters[y−1]`.
#[derive(Clone, Debug)]
pub struct MixtureScenario {
    /// Samples per batch.
    pub n: usize,
    pub train_per_class: usize,
    pub test_per_class: usize,
    pub scatters: Vec<HpdMatrix>,
    pub models: Vec<CesModel>,
    pub estimator: Estimator,
    pub seed: u64,
    /// Worker threads for batch estimation; 0 uses the rayon default.
    pub workers: usize,
}

impl MixtureScenario {
    pub fn class_count(&self) -> usize {
        self.scatters.len()
    }

    pub fn dim(&self) -> usize {
        self.scatters.first().map_or(0, |s| s.dim())
    }

    pub fn validate(&self) -> Result<()> {
        let z = self.scatters.len();
        if z == 0 {
            return Err(Error::EmptyInput);
        }
        if self.models.len() != z {
            return Err(Error::InvalidArgument(format!(
                "{} scatters but {} models",
                z,
                self.models.len()
            )));
        }
        let p = self.dim();
        for (s, m) in self.scatters.iter().zip(&self.models) {
            s.check_dim(p)?;
            if m.dim() != p {
                return Err(Error::DimensionMismatch {
                    expected: p,
                    found: m.dim(),
                });
            }
        }
        if self.n == 0 || self.train_per_class == 0 || self.test_per_class == 0 {
            return Err(Error::InvalidArgument(
                "batch counts and size must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// A raw batch with its label and split.
#[derive(Clone, Debug)]
pub struct LabeledBatch {
    pub label: usize,
    pub train: bool,
    pub batch: SampleBatch,
}

/// Draws every batch of the scenario. Batch `k` of class `y` (train batches
/// first) uses stream `(y, k)`, so the draws do not depend on the estimator.
pub fn synthetic_batches(scenario: &MixtureScenario) -> Result<Vec<LabeledBatch>> {
    scenario.validate()?;
    let per_class = scenario.train_per_class + scenario.test_per_class;
    let mut out = Vec::with_capacity(per_class * scenario.class_count());
    for (c, (scatter, model)) in scenario.scatters.iter().zip(&scenario.models).enumerate() {
        let label = c + 1;
        for k in 0..per_class {
            let mut rng = SeededRng::new(scenario.seed, SeededRng::stream_id(label as u64, k as u64));
            out.push(LabeledBatch {
                label,
                train: k < scenario.train_per_class,
                batch: sample_batch(scatter, model, scenario.n, &mut rng)?,
            });
        }
    }
    Ok(out)
}

/// Train and test sets plus the number of batches whose estimation failed.
#[derive(Clone, Debug)]
pub struct MixtureData {
    pub train: LabeledCovSet,
    pub test: LabeledCovSet,
    pub dropped: usize,
}

/// Estimates a covariance per batch; failed or non-converged estimates are dropped.
pub fn estimate_features(
    batches: &[LabeledBatch],
    class_count: usize,
    estimator: Estimator,
    config: &EstimationConfig,
    workers: usize,
) -> Result<MixtureData> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
    let estimates: Vec<Option<HpdMatrix>> = pool.install(|| {
        batches
            .par_iter()
            .map(|b| {
                let r = estimator.estimate(&b.batch, config).ok()?;
                r.converged.then_some(r.estimate)
            })
            .collect()
    });
    let mut train = Vec::new();
    let mut test = Vec::new();
    let mut dropped = 0;
    for (b, est) in batches.iter().zip(estimates) {
        match est {
            Some(m) if b.train => train.push((m, b.label)),
            Some(m) => test.push((m, b.label)),
            None => dropped += 1,
        }
    }
    if dropped > 0 {
        log::warn!("{}: dropped {dropped} batches", estimator.label());
    }
    Ok(MixtureData {
        train: LabeledCovSet::new(train, class_count)?,
        test: LabeledCovSet::new(test, class_count)?,
        dropped,
    })
}

/// [`synthetic_batches`] followed by [`estimate_features`] with the scenario's estimator.
pub fn synthetic_mixture(scenario: &MixtureScenario, config: &EstimationConfig) -> Result<MixtureData> {
    let batches = synthetic_batches(scenario)?;
    estimate_features(
        &batches,
        scenario.class_count(),
        scenario.estimator,
        config,
        scenario.workers,
    )
}
