//! Extremogram, extremal periodogram and integrated periodogram tools for
//! extremal serial dependence in stationary time series.
//!
//! Numerical kernels are generic over [`Scalar`] (`f32` or `f64`); the
//! aliases below fix the scalar to `f64` unless suffixed with `32`.

pub mod bootstrap;
pub mod cli;
pub mod error;
pub mod extremal;
pub mod igram;
pub mod limits;
pub mod models;
pub mod rng;
pub mod scalar;
pub mod spectral;

pub use error::{Error, ErrorClass, Result};
pub use extremal::{CenteringMode, ExtremeSet, IndicatorSeries, ThresholdSpec};
pub use models::{ModelKind, ModelSpec, Series};
pub use scalar::Scalar;

pub type Extremogram = extremal::ExtremogramEstimate<f64>;
pub type Extremogram32 = extremal::ExtremogramEstimate<f32>;
pub type Periodogram = spectral::PeriodogramEstimate<f64>;
pub type Periodogram32 = spectral::PeriodogramEstimate<f32>;
pub type Weight = spectral::WeightFunction<f64>;
pub type Weight32 = spectral::WeightFunction<f32>;
pub type Igram = igram::IgramCurve<f64>;
pub type Igram32 = igram::IgramCurve<f32>;
pub type Centering = igram::CenteringCurve<f64>;
pub type Centering32 = igram::CenteringCurve<f32>;
pub type Bootstrap = bootstrap::BootstrapDistribution<f64>;
pub type Bootstrap32 = bootstrap::BootstrapDistribution<f32>;
