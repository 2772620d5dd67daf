//! Numerical laboratory for the parabolic Anderson model on the circle, the flat torus and the
//! round 2-sphere.
//!
//! Geometry, kernels and the three-distance function are generic over [`Scalar`] (`f32`/`f64`);
//! the moment engine and the Monte Carlo solver run in `f64`.

// `!(x > 0.0)` is used on purpose so NaN inputs are rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
// Kernel evaluations take point tuples and loop over several indexed arrays in lockstep.
#![allow(clippy::too_many_arguments, clippy::needless_range_loop)]

pub mod error;
pub mod fgeom;
pub mod manifold;
pub mod measure;
pub mod moments;
pub mod noise;
pub mod quadrature;
pub mod scalar;
pub mod solver;
pub mod spectral;
pub mod stats;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type ManifoldModel = manifold::ManifoldModel<f64>;
pub type Point = manifold::Point<f64>;
pub type QuadratureMesh = manifold::QuadratureMesh<f64>;
pub type SpectralBasis = spectral::SpectralBasis<f64>;
pub type GaussianComparison = spectral::GaussianComparison<f64>;
pub use manifold::ModelKind;
