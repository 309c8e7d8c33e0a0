//! Numerical laboratory for quadratic optimal transport at desk scale.
//!
//! The crate solves small discrete optimal transport problems exactly,
//! interpolates them in time, compares them against harmonic (Neumann)
//! approximations with boundary-layer correctors, and iterates the
//! comparison to exhibit excess-energy decay and a pointwise regularity
//! classification. Every inequality used along the way is exposed as a
//! measurable diagnostic rather than assumed.

#![forbid(unsafe_code)]

pub mod boundary_layer;
pub mod density;
pub mod elliptic;
pub mod error;
pub mod eulerian;
pub mod linalg;
pub mod transport;

pub use boundary_layer::{Competitor, Corrector, TraceReport};
pub use density::{DensityPair, GridDensity, GridGeometry, GridSpec, ScalingRecord, TestDensityKind};
pub use elliptic::{BoundaryData, EstimateRow, HarmonicField};
pub use error::{Error, Result};
pub use eulerian::{FluxSamples, Interpolant};
pub use linalg::{LogLogFit, Mat2, Point};
pub use transport::{LinftyReport, MonotonicityReport, TransportSolution};
