//! Complex elliptically symmetric (CES) distributions.
//!
//! A centered CES vector admits the stochastic representation
//! `x = √Q Σ^{1/2} u`, with `u` uniform on the complex unit sphere and the
//! second-order modular variate `Q ≥ 0` independent of `u`. The density is
//! `f(x | Σ) ∝ |Σ|⁻¹ g(xᴴΣ⁻¹x)` for a density generator `g`.
//!
//! Two generators are provided:
//!
//! | generator      | `g(t)`                   | `ψ(t) = −g′/g`     | `Q`                        |
//! |----------------|--------------------------|--------------------|----------------------------|
//! | Gaussian       | `exp(−t)`                | `1`                | `Gamma(p, 1)`              |
//! | Student-t(d)   | `(1 + t/d)^{−(d+p)}`     | `(d+p)/(d+t)`      | `Gamma(p, 1) / (Gamma(d, 1)/d)` |
//!
//! The complex chi-square with `k` degrees of freedom is `Gamma(k, 1)`, the
//! law of `‖z‖²` for `z` standard complex normal in `ℂᵏ`. No `E[Q] = 1`
//! normalization is applied, so `E[xxᴴ] = (E[Q]/p) Σ`.

use nalgebra::Cholesky;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::geometry::MetricParams;
use crate::matrix::{CMatrix, CVector, HermitianMatrix, HpdMatrix};
use crate::rng::SeededRng;

/// Density generator family.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Generator {
    Gaussian,
    StudentT { dof: f64 },
}

/// A CES law in dimension `p`, up to its scatter matrix.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CesModel {
    dim: usize,
    generator: Generator,
}

/// Fisher metric coefficients `(α_g, β_g)` with `β_g = α_g − 1`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CesCoefficients {
    pub alpha_g: f64,
    pub beta_g: f64,
}

impl CesCoefficients {
    pub fn metric_params(&self) -> MetricParams {
        MetricParams {
            alpha: self.alpha_g,
            beta: self.beta_g,
        }
    }
}

impl CesModel {
    pub fn new(dim: usize, generator: Generator) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidArgument("dimension must be positive".into()));
        }
        if let Generator::StudentT { dof } = generator {
            if !(dof > 0.0 && dof.is_finite()) {
                return Err(Error::InvalidArgument(format!(
                    "degrees of freedom {dof} must be positive"
                )));
            }
        }
        Ok(Self { dim, generator })
    }

    pub fn gaussian(dim: usize) -> Self {
        Self::new(dim, Generator::Gaussian).expect("positive dimension")
    }

    pub fn student_t(dim: usize, dof: f64) -> Result<Self> {
        Self::new(dim, Generator::StudentT { dof })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn generator(&self) -> Generator {
        self.generator
    }

    /// Same generator in another dimension.
    pub fn with_dim(&self, dim: usize) -> Result<Self> {
        Self::new(dim, self.generator)
    }

    /// `log g(t)`.
    pub fn log_g(&self, t: f64) -> f64 {
        match self.generator {
            Generator::Gaussian => -t,
            Generator::StudentT { dof } => -(dof + self.dim as f64) * (t / dof).ln_1p(),
        }
    }

    /// `ψ(t) = −g′(t)/g(t)`, the fixed-point weight.
    pub fn psi(&self, t: f64) -> f64 {
        -self.phi(t)
    }

    /// `φ(t) = g′(t)/g(t)`.
    pub fn phi(&self, t: f64) -> f64 {
        match self.generator {
            Generator::Gaussian => -1.0,
            Generator::StudentT { dof } => -(dof + self.dim as f64) / (dof + t),
        }
    }

    /// `φ′(t)`, analytic.
    pub fn phi_prime(&self, t: f64) -> f64 {
        match self.generator {
            Generator::Gaussian => 0.0,
            Generator::StudentT { dof } => (dof + self.dim as f64) / ((dof + t) * (dof + t)),
        }
    }
}

/// `(α_g, β_g)`: `(1, 0)` for the Gaussian, `((d+p)/(d+p+1), −1/(d+p+1))` for Student-t.
pub fn coefficients(model: &CesModel) -> CesCoefficients {
    match model.generator {
        Generator::Gaussian => CesCoefficients {
            alpha_g: 1.0,
            beta_g: 0.0,
        },
        Generator::StudentT { dof } => {
            let m = dof + model.dim as f64;
            CesCoefficients {
                alpha_g: m / (m + 1.0),
                beta_g: -1.0 / (m + 1.0),
            }
        }
    }
}

/// `n` complex `p`-vectors, stored as the columns of a `p × n` matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleBatch {
    data: CMatrix,
}

impl SampleBatch {
    pub fn new(data: CMatrix) -> Result<Self> {
        if data.nrows() == 0 || data.ncols() == 0 {
            return Err(Error::EmptyInput);
        }
        if data.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::NonFinite);
        }
        Ok(Self { data })
    }

    pub fn from_samples(samples: &[CVector]) -> Result<Self> {
        let first = samples.first().ok_or(Error::EmptyInput)?;
        let p = first.len();
        if let Some(bad) = samples.iter().find(|s| s.len() != p) {
            return Err(Error::DimensionMismatch {
                expected: p,
                found: bad.len(),
            });
        }
        Self::new(CMatrix::from_fn(p, samples.len(), |i, j| samples[j][i]))
    }

    pub fn dim(&self) -> usize {
        self.data.nrows()
    }

    pub fn count(&self) -> usize {
        self.data.ncols()
    }

    pub fn data(&self) -> &CMatrix {
        &self.data
    }

    pub fn sample(&self, i: usize) -> CVector {
        self.data.column(i).into_owned()
    }

    /// `A xᵢ` for every sample.
    pub fn transform(&self, a: &CMatrix) -> Result<SampleBatch> {
        if a.ncols() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: a.ncols(),
            });
        }
        SampleBatch::new(a * &self.data)
    }

    pub(crate) fn check_dim(&self, p: usize) -> Result<()> {
        if self.dim() != p {
            return Err(Error::DimensionMismatch {
                expected: p,
                found: self.dim(),
            });
        }
        Ok(())
    }
}

/// `xᵢᴴ Σ⁻¹ xᵢ` for every sample, through a Cholesky factor of `Σ`.
pub(crate) fn quadratic_forms(batch: &SampleBatch, sigma: &CMatrix) -> Result<Vec<f64>> {
    let chol = Cholesky::new(sigma.clone()).ok_or(Error::NotPositiveDefinite {
        min_eigenvalue: f64::NAN,
        max_eigenvalue: f64::NAN,
    })?;
    let mut y = batch.data.clone();
    chol.l_dirty().solve_lower_triangular_mut(&mut y);
    Ok(y.column_iter().map(|c| c.norm_squared()).collect())
}

/// `n log det Σ − Σᵢ log g(xᵢᴴΣ⁻¹xᵢ)`, the negative log-likelihood without
/// its normalizing constant.
pub fn neg_log_likelihood(batch: &SampleBatch, sigma: &HpdMatrix, model: &CesModel) -> Result<f64> {
    batch.check_dim(sigma.dim())?;
    let q = quadratic_forms(batch, sigma.matrix())?;
    let n = batch.count() as f64;
    Ok(n * sigma.log_det() - q.iter().map(|&t| model.log_g(t)).sum::<f64>())
}

/// Uniform draw on the complex unit sphere of `ℂᵖ`.
pub fn sample_uniform_sphere(p: usize, rng: &mut SeededRng) -> CVector {
    loop {
        let z = rng.complex_normal_vector(p);
        let norm = z.norm();
        if norm > 0.0 {
            return z / Complex64::new(norm, 0.0);
        }
    }
}

/// One draw of the second-order modular variate `Q`.
pub fn sample_second_order_modular(model: &CesModel, rng: &mut SeededRng) -> f64 {
    let p = model.dim as f64;
    match model.generator {
        Generator::Gaussian => rng.gamma(p),
        Generator::StudentT { dof } => {
            let numerator = rng.gamma(p);
            let denominator = rng.gamma(dof) / dof;
            numerator / denominator
        }
    }
}

/// `n` i.i.d. draws `√Q Σ^{1/2} u`.
pub fn sample_batch(sigma: &HpdMatrix, model: &CesModel, n: usize, rng: &mut SeededRng) -> Result<SampleBatch> {
    let model = *model;
    sample_batch_with_modular(sigma, n, rng, move |r| sample_second_order_modular(&model, r))
}

/// Like [`sample_batch`] with a caller-supplied modular variate sampler.
pub fn sample_batch_with_modular(
    sigma: &HpdMatrix,
    n: usize,
    rng: &mut SeededRng,
    mut modular: impl FnMut(&mut SeededRng) -> f64,
) -> Result<SampleBatch> {
    if n == 0 {
        return Err(Error::EmptyInput);
    }
    let p = sigma.dim();
    let root = sigma.sqrt();
    let mut data = CMatrix::zeros(p, n);
    for j in 0..n {
        let u = sample_uniform_sphere(p, rng);
        let q = modular(rng);
        let x = root.as_matrix() * u * Complex64::new(q.sqrt(), 0.0);
        data.set_column(j, &x);
    }
    SampleBatch::new(data)
}

/// Monte-Carlo estimate of the single-sample Fisher inner product
/// `E[Dℒ(Σ)[ξ] · Dℒ(Σ)[η]]`, returned with its standard error.
///
/// The score of one sample is
/// `Dℒ(Σ)[ξ] = −tr(Σ⁻¹ξ) − φ(xᴴΣ⁻¹x) · xᴴΣ⁻¹ξΣ⁻¹x`.
pub fn fim_inner_mc(
    sigma: &HpdMatrix,
    xi: &HermitianMatrix,
    eta: &HermitianMatrix,
    model: &CesModel,
    n_draws: usize,
    rng: &mut SeededRng,
) -> Result<(f64, f64)> {
    if n_draws < 10_000 {
        return Err(Error::InvalidArgument(format!("n_draws={n_draws} below 10^4")));
    }
    let p = sigma.dim();
    xi.check_dim(p)?;
    eta.check_dim(p)?;
    if model.dim != p {
        return Err(Error::DimensionMismatch {
            expected: p,
            found: model.dim,
        });
    }
    let inv = sigma.inverse();
    let inv = inv.as_matrix();
    let tr_xi = (inv * xi.as_matrix()).trace().re;
    let tr_eta = (inv * eta.as_matrix()).trace().re;
    let root = sigma.sqrt();

    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for _ in 0..n_draws {
        let u = sample_uniform_sphere(p, rng);
        let q = sample_second_order_modular(model, rng);
        let x = root.as_matrix() * u * Complex64::new(q.sqrt(), 0.0);
        let v = inv * &x;
        let t = x.dotc(&v).re;
        let phi = model.phi(t);
        let score_xi = -tr_xi - phi * v.dotc(&(xi.as_matrix() * &v)).re;
        let score_eta = -tr_eta - phi * v.dotc(&(eta.as_matrix() * &v)).re;
        let prod = score_xi * score_eta;
        sum += prod;
        sum_sq += prod * prod;
    }
    let n = n_draws as f64;
    let mean = sum / n;
    let var = (sum_sq / n - mean * mean).max(0.0) * n / (n - 1.0);
    Ok((mean, (var / n).sqrt()))
}
