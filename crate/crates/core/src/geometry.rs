//! The affine-invariant metric family on Hermitian positive definite matrices.
//!
//! For `α > 0` and `β > −α/p` the inner product
//!
//! ```text
//! ⟨ξ, η⟩_Σ = α tr(Σ⁻¹ξΣ⁻¹η) + β tr(Σ⁻¹ξ) tr(Σ⁻¹η)
//! ```
//!
//! is a Riemannian metric. Every member of the family shares the same
//! Levi-Civita connection, hence the same geodesics, exponential and
//! logarithm maps; only lengths depend on `(α, β)`. That is why the geodesic
//! functions in this module take no [`MetricParams`].
//!
//! All maps are evaluated in the symmetric form `Σ^{1/2} f(Σ^{-1/2} · Σ^{-1/2}) Σ^{1/2}`
//! so intermediates stay Hermitian.

use crate::error::{Error, Result};
use crate::matrix::{eig_hermitian, HermitianMatrix, HpdMatrix, SpectralFn};

/// Coefficients `(α, β)` of the affine-invariant metric.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MetricParams {
    pub alpha: f64,
    pub beta: f64,
}

impl Default for MetricParams {
    /// The Gaussian Fisher-Rao metric `(1, 0)`.
    fn default() -> Self {
        Self::NATURAL
    }
}

impl MetricParams {
    pub const NATURAL: MetricParams = MetricParams { alpha: 1.0, beta: 0.0 };

    /// Checks `α > 0` and finiteness. The `β > −α/p` condition depends on the
    /// dimension and is checked by [`MetricParams::validate_for`].
    pub fn new(alpha: f64, beta: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha.is_finite() && beta.is_finite()) {
            return Err(Error::InvalidMetricParams { alpha, beta, p: 0 });
        }
        Ok(Self { alpha, beta })
    }

    pub fn validate_for(&self, p: usize) -> Result<()> {
        let ok = self.alpha > 0.0
            && self.alpha.is_finite()
            && self.beta.is_finite()
            && self.alpha + p as f64 * self.beta > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidMetricParams {
                alpha: self.alpha,
                beta: self.beta,
                p,
            })
        }
    }
}

fn check_same_dim(a: &HpdMatrix, b: &HpdMatrix) -> Result<usize> {
    b.check_dim(a.dim())?;
    Ok(a.dim())
}

/// `Σ^{-1/2} ξ Σ^{-1/2}`: the tangent vector pulled back to the identity.
pub fn whiten(sigma: &HpdMatrix, xi: &HermitianMatrix) -> Result<HermitianMatrix> {
    xi.check_dim(sigma.dim())?;
    Ok(xi.sandwich(&sigma.inv_sqrt()))
}

/// `Re(α tr(Σ⁻¹ξΣ⁻¹η) + β tr(Σ⁻¹ξ) tr(Σ⁻¹η))`.
pub fn metric_inner(
    sigma: &HpdMatrix,
    xi: &HermitianMatrix,
    eta: &HermitianMatrix,
    params: MetricParams,
) -> Result<f64> {
    params.validate_for(sigma.dim())?;
    let w = sigma.inv_sqrt();
    xi.check_dim(sigma.dim())?;
    eta.check_dim(sigma.dim())?;
    let a = xi.sandwich(&w);
    let b = eta.sandwich(&w);
    Ok(whitened_inner(&a, &b, params))
}

/// The metric evaluated on already-whitened tangent vectors.
pub(crate) fn whitened_inner(a: &HermitianMatrix, b: &HermitianMatrix, params: MetricParams) -> f64 {
    params.alpha * a.trace_inner(b) + params.beta * a.trace() * b.trace()
}

/// Norm of `ξ` at `Σ` in the metric `params`.
pub fn metric_norm(sigma: &HpdMatrix, xi: &HermitianMatrix, params: MetricParams) -> Result<f64> {
    Ok(metric_inner(sigma, xi, xi, params)?.max(0.0).sqrt())
}

/// `γ(t) = Σ^{1/2} exp(t Σ^{-1/2} ξ Σ^{-1/2}) Σ^{1/2}`.
pub fn geodesic_from_direction(sigma: &HpdMatrix, xi: &HermitianMatrix, t: f64) -> Result<HpdMatrix> {
    let s = sigma.sqrt();
    let a = whiten(sigma, xi)?.scale(t);
    let e = crate::matrix::spectral_map(&a, SpectralFn::Exp)?;
    HpdMatrix::new(e.sandwich(&s))
}

/// `Σ₁^{1/2} (Σ₁^{-1/2} Σ₂ Σ₁^{-1/2})^t Σ₁^{1/2}`.
pub fn geodesic_between(sigma1: &HpdMatrix, sigma2: &HpdMatrix, t: f64) -> Result<HpdMatrix> {
    check_same_dim(sigma1, sigma2)?;
    let w = sigma2.as_hermitian().sandwich(&sigma1.inv_sqrt());
    let wt = crate::matrix::spectral_map(&w, SpectralFn::Pow(t))?;
    HpdMatrix::new(wt.sandwich(&sigma1.sqrt()))
}

/// Riemannian exponential: the geodesic from `Σ` along `ξ` at `t = 1`.
pub fn riemannian_exp(sigma: &HpdMatrix, xi: &HermitianMatrix) -> Result<HpdMatrix> {
    geodesic_from_direction(sigma, xi, 1.0)
}

/// Riemannian logarithm `Σ^{1/2} log(Σ^{-1/2} Σ̂ Σ^{-1/2}) Σ^{1/2}`.
pub fn riemannian_log(sigma: &HpdMatrix, sigma_hat: &HpdMatrix) -> Result<HermitianMatrix> {
    Ok(whitened_log(sigma, sigma_hat)?.sandwich(&sigma.sqrt()))
}

/// `log(Σ^{-1/2} Σ̂ Σ^{-1/2})`, the logarithm expressed at the identity.
pub(crate) fn whitened_log(sigma: &HpdMatrix, sigma_hat: &HpdMatrix) -> Result<HermitianMatrix> {
    check_same_dim(sigma, sigma_hat)?;
    let w = sigma_hat.as_hermitian().sandwich(&sigma.inv_sqrt());
    crate::matrix::spectral_map(&w, SpectralFn::Log)
}

/// Eigenvalues of `Σ₁⁻¹Σ₂`, via the congruent Hermitian matrix.
fn relative_eigenvalues(sigma1: &HpdMatrix, sigma2: &HpdMatrix) -> Result<Vec<f64>> {
    check_same_dim(sigma1, sigma2)?;
    let w = sigma2.as_hermitian().sandwich(&sigma1.inv_sqrt());
    let eig = eig_hermitian(&w)?;
    if let Some(&bad) = eig.eigenvalues.iter().find(|&&l| l <= 0.0) {
        return Err(Error::DomainError { eigenvalue: bad });
    }
    Ok(eig.eigenvalues)
}

/// Squared geodesic distance `α‖log(Σ₁⁻¹Σ₂)‖_F² + β (log det(Σ₁⁻¹Σ₂))²`.
pub fn fisher_rao_distance_sq(sigma1: &HpdMatrix, sigma2: &HpdMatrix, params: MetricParams) -> Result<f64> {
    params.validate_for(sigma1.dim())?;
    let logs: Vec<f64> = relative_eigenvalues(sigma1, sigma2)?.into_iter().map(f64::ln).collect();
    let sq: f64 = logs.iter().map(|l| l * l).sum();
    let tr: f64 = logs.iter().sum();
    Ok((params.alpha * sq + params.beta * tr * tr).max(0.0))
}

/// `‖Σ₂ − Σ₁‖_F²`.
pub fn euclidean_distance_sq(sigma1: &HpdMatrix, sigma2: &HpdMatrix) -> Result<f64> {
    check_same_dim(sigma1, sigma2)?;
    Ok((sigma2.matrix() - sigma1.matrix()).norm_squared())
}

/// `R(ξ) = Σ + ξ`, failing with [`Error::LeftCone`] outside the cone.
pub fn retract_first_order(sigma: &HpdMatrix, xi: &HermitianMatrix) -> Result<HpdMatrix> {
    xi.check_dim(sigma.dim())?;
    let candidate = sigma.as_hermitian() + xi;
    HpdMatrix::new(candidate).map_err(|e| match e {
        Error::NotPositiveDefinite { .. } => Error::LeftCone,
        other => other,
    })
}

/// `R(ξ) = Σ + ξ + ½ ξΣ⁻¹ξ`, which never leaves the cone.
pub fn retract_second_order(sigma: &HpdMatrix, xi: &HermitianMatrix) -> Result<HpdMatrix> {
    // Σ^{1/2}(I + A + A²/2)Σ^{1/2} with A = Σ^{-1/2}ξΣ^{-1/2}; the eigenvalue
    // map λ ↦ 1 + λ + λ²/2 is bounded below by 1/2
    let a = whiten(sigma, xi)?;
    let eig = eig_hermitian(&a)?;
    let inner = eig.recompose_with(|l| 1.0 + l + 0.5 * l * l);
    HpdMatrix::new(inner.sandwich(&sigma.sqrt()))
}

/// Retraction choice for iterative solvers.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Retraction {
    FirstOrder,
    #[default]
    SecondOrder,
    Exponential,
}

impl Retraction {
    pub fn retract(self, sigma: &HpdMatrix, xi: &HermitianMatrix) -> Result<HpdMatrix> {
        match self {
            Retraction::FirstOrder => retract_first_order(sigma, xi),
            Retraction::SecondOrder => retract_second_order(sigma, xi),
            Retraction::Exponential => riemannian_exp(sigma, xi),
        }
    }
}

/// Finite-difference estimate of `‖∇_{γ̇}γ̇‖_F = ‖γ̈ − γ̇γ⁻¹γ̇‖_F` along the
/// geodesic through `(Σ, ξ)` at parameter `t`, with central step `h`.
///
/// Vanishes as `O(h²)` for a true geodesic.
pub fn connection_residual(sigma: &HpdMatrix, xi: &HermitianMatrix, t: f64, h: f64) -> Result<f64> {
    if !(h > 0.0 && h <= 1e-2) {
        return Err(Error::InvalidArgument(format!("step h={h} outside (0, 1e-2]")));
    }
    let minus = geodesic_from_direction(sigma, xi, t - h)?;
    let mid = geodesic_from_direction(sigma, xi, t)?;
    let plus = geodesic_from_direction(sigma, xi, t + h)?;
    let velocity = (plus.matrix() - minus.matrix()) / num_complex::Complex64::new(2.0 * h, 0.0);
    let accel = (plus.matrix() - mid.matrix() * num_complex::Complex64::new(2.0, 0.0) + minus.matrix())
        / num_complex::Complex64::new(h * h, 0.0);
    let correction = &velocity * mid.inverse().as_matrix() * &velocity;
    Ok((accel - correction).norm())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::{relative_error, CMatrix};
    use crate::rng::SeededRng;
    use num_complex::Complex64;
    use std::f64::consts::E;

    fn random_hpd(p: usize, rng: &mut SeededRng) -> HpdMatrix {
        let a = rng.complex_normal_matrix(p, p);
        let m = &a * a.adjoint() / Complex64::new(p as f64, 0.0) + CMatrix::identity(p, p) * Complex64::new(0.2, 0.0);
        HpdMatrix::from_matrix(m).unwrap()
    }

    fn random_hermitian(p: usize, rng: &mut SeededRng) -> HermitianMatrix {
        let a = rng.complex_normal_matrix(p, p);
        HermitianMatrix::from_symmetrized((&a + a.adjoint()) * Complex64::new(0.5, 0.0))
    }

    #[test]
    fn inner_product_trivial_values() {
        let i2 = HpdMatrix::identity(2);
        let x = HermitianMatrix::identity(2);
        assert!((metric_inner(&i2, &x, &x, MetricParams::NATURAL).unwrap() - 2.0).abs() < 1e-14);
        for p in [1, 3, 5] {
            let ip = HpdMatrix::identity(p);
            let x = HermitianMatrix::identity(p);
            let v = metric_inner(&ip, &x, &x, MetricParams::new(1.0, 1.0).unwrap()).unwrap();
            assert!((v - (p + p * p) as f64).abs() < 1e-12);
        }
    }

    #[test]
    fn invalid_params_and_dimensions() {
        let i3 = HpdMatrix::identity(3);
        let x = HermitianMatrix::identity(3);
        let bad = MetricParams { alpha: 1.0, beta: -0.5 };
        assert!(matches!(
            metric_inner(&i3, &x, &x, bad),
            Err(Error::InvalidMetricParams { .. })
        ));
        assert!(MetricParams::new(0.0, 0.0).is_err());
        let y = HermitianMatrix::identity(2);
        assert!(matches!(
            metric_inner(&i3, &x, &y, MetricParams::NATURAL),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn geodesic_diagonal_cases() {
        let i2 = HpdMatrix::identity(2);
        let xi = HermitianMatrix::from_diagonal(&[1.0, -1.0]);
        let g0 = geodesic_from_direction(&i2, &xi, 0.0).unwrap();
        assert!(relative_error(g0.matrix(), i2.matrix()) < 1e-15);
        let g1 = geodesic_from_direction(&i2, &xi, 1.0).unwrap();
        let expect = HermitianMatrix::from_diagonal(&[E, 1.0 / E]);
        assert!(relative_error(g1.matrix(), expect.as_matrix()) < 1e-14);

        let d = HpdMatrix::from_diagonal(&[4.0, 16.0]).unwrap();
        let mid = geodesic_between(&i2, &d, 0.5).unwrap();
        assert!(relative_error(mid.matrix(), HermitianMatrix::from_diagonal(&[2.0, 4.0]).as_matrix()) < 1e-14);
    }

    #[test]
    fn geodesic_endpoints_and_reversal() {
        let mut rng = SeededRng::new(21, 0);
        for p in [2, 4, 7] {
            let a = random_hpd(p, &mut rng);
            let b = random_hpd(p, &mut rng);
            assert!(relative_error(geodesic_between(&a, &b, 0.0).unwrap().matrix(), a.matrix()) < 1e-10);
            assert!(relative_error(geodesic_between(&a, &b, 1.0).unwrap().matrix(), b.matrix()) < 1e-10);
            for t in [0.2, 0.5, 0.7] {
                let fwd = geodesic_between(&a, &b, t).unwrap();
                let bwd = geodesic_between(&b, &a, 1.0 - t).unwrap();
                assert!(relative_error(fwd.matrix(), bwd.matrix()) < 1e-9);
            }
        }
    }

    #[test]
    fn exp_log_inverse_pair() {
        let i2 = HpdMatrix::identity(2);
        assert!(
            relative_error(
                riemannian_exp(&i2, &HermitianMatrix::zeros(2)).unwrap().matrix(),
                i2.matrix()
            ) < 1e-15
        );
        let d = HpdMatrix::from_diagonal(&[3.0, 0.5]).unwrap();
        let e = riemannian_exp(&i2, &d.log()).unwrap();
        assert!(relative_error(e.matrix(), d.matrix()) < 1e-14);

        let target = HpdMatrix::from_diagonal(&[E * E, 1.0]).unwrap();
        let l = riemannian_log(&i2, &target).unwrap();
        assert!((l.as_matrix() - HermitianMatrix::from_diagonal(&[2.0, 0.0]).as_matrix()).norm() < 1e-14);
        assert!(riemannian_log(&d, &d).unwrap().frobenius_norm() < 1e-13);

        let mut rng = SeededRng::new(22, 0);
        for p in [2, 5, 8] {
            let a = random_hpd(p, &mut rng);
            let b = random_hpd(p, &mut rng);
            let back = riemannian_exp(&a, &riemannian_log(&a, &b).unwrap()).unwrap();
            assert!(relative_error(back.matrix(), b.matrix()) < 1e-9);
        }
    }

    #[test]
    fn symmetric_and_asymmetric_forms_agree() {
        // Σ exp(Σ⁻¹ξ) computed from the eigendecomposition of Σ⁻¹ξ's similar matrix
        let mut rng = SeededRng::new(23, 0);
        let sigma = random_hpd(4, &mut rng);
        let xi = random_hermitian(4, &mut rng).scale(0.3);
        let sym = riemannian_exp(&sigma, &xi).unwrap();
        let m = sigma.inverse().as_matrix() * xi.as_matrix();
        let mut term = CMatrix::identity(4, 4);
        let mut series = CMatrix::identity(4, 4);
        for k in 1..60 {
            term = &term * &m / Complex64::new(k as f64, 0.0);
            series += &term;
        }
        let asym = sigma.matrix() * series;
        assert!(relative_error(&asym, sym.matrix()) < 1e-10);
    }

    #[test]
    fn distance_closed_forms() {
        let p = 2;
        let ip = HpdMatrix::identity(p);
        let ce = HpdMatrix::from_diagonal(&[E, E]).unwrap();
        let d = fisher_rao_distance_sq(&ip, &ce, MetricParams::NATURAL).unwrap();
        assert!((d - 2.0).abs() < 1e-13);
        let c = 3.0f64;
        let cp = HpdMatrix::from_diagonal(&[c, c]).unwrap();
        let params = MetricParams::new(0.7, 0.2).unwrap();
        let expect = (0.7 * p as f64 + 0.2 * (p * p) as f64) * c.ln().powi(2);
        assert!((fisher_rao_distance_sq(&ip, &cp, params).unwrap() - expect).abs() < 1e-12);

        let d2 = HpdMatrix::from_diagonal(&[E * E, 1.0 / (E * E)]).unwrap();
        let v = fisher_rao_distance_sq(&ip, &d2, MetricParams::new(1.0, 1.0).unwrap()).unwrap();
        assert!((v - 8.0).abs() < 1e-12);
        assert_eq!(fisher_rao_distance_sq(&d2, &d2, MetricParams::NATURAL).unwrap(), 0.0);
    }

    #[test]
    fn euclidean_distance_matches_entrywise_sum() {
        let i3 = HpdMatrix::identity(3);
        let two = HpdMatrix::from_diagonal(&[2.0; 3]).unwrap();
        assert!((euclidean_distance_sq(&i3, &two).unwrap() - 3.0).abs() < 1e-15);
        assert_eq!(euclidean_distance_sq(&two, &two).unwrap(), 0.0);
        let mut rng = SeededRng::new(24, 0);
        let a = random_hpd(5, &mut rng);
        let b = random_hpd(5, &mut rng);
        let mut oracle = 0.0;
        for i in 0..5 {
            for j in 0..5 {
                let z = b.matrix()[(i, j)] - a.matrix()[(i, j)];
                oracle += z.re * z.re + z.im * z.im;
            }
        }
        assert!((euclidean_distance_sq(&a, &b).unwrap() - oracle).abs() < 1e-12);
    }

    #[test]
    fn retractions() {
        let i = HpdMatrix::identity(3);
        let zero = HermitianMatrix::zeros(3);
        assert_eq!(retract_first_order(&i, &zero).unwrap(), i);
        assert_eq!(
            retract_first_order(&i, &HermitianMatrix::identity(3).scale(-2.0)),
            Err(Error::LeftCone)
        );
        let r = retract_first_order(&i, &HermitianMatrix::identity(3).scale(0.5)).unwrap();
        assert!(relative_error(r.matrix(), HermitianMatrix::identity(3).scale(1.5).as_matrix()) < 1e-15);

        assert!(relative_error(retract_second_order(&i, &zero).unwrap().matrix(), i.matrix()) < 1e-15);
        let r2 = retract_second_order(&i, &HermitianMatrix::identity(3).scale(-1.0)).unwrap();
        assert!(relative_error(r2.matrix(), HermitianMatrix::identity(3).scale(0.5).as_matrix()) < 1e-14);
        // the second order map survives directions that break the first order one
        assert!(retract_second_order(&i, &HermitianMatrix::identity(3).scale(-50.0)).is_ok());
    }

    #[test]
    fn second_order_retraction_error_is_cubic() {
        let mut rng = SeededRng::new(25, 0);
        for _ in 0..5 {
            let sigma = random_hpd(4, &mut rng);
            let xi = random_hermitian(4, &mut rng);
            let err = |t: f64| {
                let xi_t = xi.scale(t);
                let r = retract_second_order(&sigma, &xi_t).unwrap();
                let e = riemannian_exp(&sigma, &xi_t).unwrap();
                (r.matrix() - e.matrix()).norm()
            };
            let ratio = err(0.1) / err(0.05);
            assert!(ratio > 8.0 / 1.5 && ratio < 8.0 * 1.5, "ratio {ratio}");
        }
    }

    #[test]
    fn retractions_agree_to_first_order() {
        let mut rng = SeededRng::new(26, 0);
        let sigma = random_hpd(3, &mut rng);
        let xi = random_hermitian(3, &mut rng).scale(0.2);
        let mut prev = f64::INFINITY;
        for t in [1e-1, 1e-2, 1e-3] {
            for retraction in [Retraction::FirstOrder, Retraction::SecondOrder, Retraction::Exponential] {
                let r = retraction.retract(&sigma, &xi.scale(t)).unwrap();
                let dev = (r.matrix() - sigma.matrix() - xi.scale(t).as_matrix()).norm() / t;
                assert!(dev < 10.0 * t, "{retraction:?} t={t} dev={dev}");
            }
            let r = retract_second_order(&sigma, &xi.scale(t)).unwrap();
            let dev = (r.matrix() - sigma.matrix() - xi.scale(t).as_matrix()).norm() / t;
            assert!(dev < prev);
            prev = dev;
        }
    }

    #[test]
    fn connection_residual_behaviour() {
        let mut rng = SeededRng::new(27, 0);
        let sigma = random_hpd(3, &mut rng);
        assert_eq!(
            connection_residual(&sigma, &HermitianMatrix::zeros(3), 0.5, 1e-3).unwrap(),
            0.0
        );
        let xi = random_hermitian(3, &mut rng).scale(0.5);
        let r = connection_residual(&sigma, &xi, 0.5, 1e-3).unwrap();
        assert!(r < 1e-3 * xi.frobenius_norm().powi(2));
        let ratio =
            connection_residual(&sigma, &xi, 0.5, 1e-2).unwrap() / connection_residual(&sigma, &xi, 0.5, 5e-3).unwrap();
        assert!(ratio > 2.0 && ratio < 8.0, "ratio {ratio}");
        assert!(connection_residual(&sigma, &xi, 0.5, 0.1).is_err());
    }

    #[test]
    fn distance_equals_squared_norm_of_log() {
        let mut rng = SeededRng::new(28, 0);
        for params in [
            MetricParams::NATURAL,
            MetricParams::new(0.9, -0.1).unwrap(),
            MetricParams::new(2.0, 0.5).unwrap(),
        ] {
            let a = random_hpd(4, &mut rng);
            let b = random_hpd(4, &mut rng);
            let l = riemannian_log(&a, &b).unwrap();
            let via_log = metric_inner(&a, &l, &l, params).unwrap();
            let d = fisher_rao_distance_sq(&a, &b, params).unwrap();
            assert!((via_log - d).abs() < 1e-9 * d.max(1.0));
        }
    }
}
