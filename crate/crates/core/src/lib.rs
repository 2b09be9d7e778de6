//! Numerical laboratory for affine holonomy of Riemannian metric charts.
//!
//! A manifold enters as a [`chart::MetricChart`]: a coordinate box, a metric
//! function, optional analytic Christoffel symbols, and optional coordinate
//! periods. On top of that the crate provides
//!
//! * geometry kernels: Christoffel symbols, curvature operators, geodesics
//!   ([`chart`]),
//! * the affine isometry group of the tangent space and fixed-point solving
//!   ([`affine`]),
//! * parallel transport and development of loops, producing affine holonomy
//!   elements ([`transport`]),
//! * holonomy sampling, splitting into invariant factors, and classification
//!   of each factor as trivial, compact with a fixed point, or a full
//!   semidirect product ([`analysis`]),
//! * cone construction and cone certification through the radial-field
//!   identity `∇_X V + X = 0` ([`cone`]),
//! * a catalog of ready-made charts ([`catalog`]) and serializable reports
//!   ([`report`]).
//!
//! All numerics are generic over the scalar type through [`scalar::Real`];
//! the aliases below fix `f64`, which is what the shipped tolerances assume.

pub mod affine;
pub mod analysis;
pub mod catalog;
pub mod chart;
pub mod cone;
pub mod error;
pub mod linalg;
pub mod report;
pub mod scalar;
pub mod tolerances;
pub mod transport;

pub use error::{Error, Result};
pub use scalar::Real;
pub use tolerances::Tolerances;

/// Metric chart with `f64` scalars.
pub type Chart64 = chart::MetricChart<f64>;
/// Affine isometry with `f64` scalars.
pub type AffineIsometry64 = affine::AffineIsometry<f64>;
/// Affine frame with `f64` scalars.
pub type AffineFrame64 = affine::AffineFrame<f64>;
/// Orthonormal frame point with `f64` scalars.
pub type FramePoint64 = chart::FramePoint<f64>;
/// Loop specification with `f64` scalars.
pub type LoopSpec64 = transport::LoopSpec<f64>;
/// Holonomy sample with `f64` scalars.
pub type HolonomySample64 = transport::HolonomySample<f64>;
/// Classification report produced by [`analysis::classify`].
pub type ClassificationReport = analysis::ClassificationReport;
/// Cone certificate produced by [`cone::certify_cone`].
pub type ConeCertificate = cone::ConeCertificate;
