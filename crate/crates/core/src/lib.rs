//! Estimation and geometry for complex elliptically symmetric (CES) scatter
//! matrices on the manifold of Hermitian positive definite matrices.
//!
//! ```
//! use cesgeo::{HpdMatrix, geometry::fisher_rao_distance_sq};
//!
//! let a = HpdMatrix::from_diagonal(&[1.0, 1.0]).unwrap();
//! let b = HpdMatrix::from_diagonal(&[std::f64::consts::E, 1.0]).unwrap();
//! let d2 = fisher_rao_distance_sq(&a, &b, Default::default()).unwrap();
//! assert!((d2 - 1.0).abs() < 1e-12);
//! ```

pub mod classify;
pub mod error;
pub mod estimation;
pub mod geometry;
pub mod icrb;
pub mod matrix;
pub mod models;
pub mod rng;

pub use error::{Error, Result};
pub use geometry::{MetricParams, Retraction};
pub use matrix::{CMatrix, CVector, HermitianMatrix, HpdMatrix};
pub use models::{CesModel, Generator, SampleBatch};
pub use rng::SeededRng;
