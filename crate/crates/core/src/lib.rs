//! Spatial concentration and temporal rhythm analysis for point-event data.
//!
//! The crate turns raw geolocated events (offenses, incidents, calls) into
//! two families of measurements:
//!
//! * **Concentration**: equal-population regions, Lorenz curves and Gini,
//!   discrete power-law fits with likelihood-ratio model comparison, rank
//!   entropy of weekly hotspots, and Hoeffding's test of independence between
//!   a city-level covariate and the concentration exponent.
//! * **Rhythms**: Morlet continuous wavelet transform of weekly series,
//!   global spectrum against a red-noise null, scale-averaged band power,
//!   band reconstruction, and the composed band power across regions.
//!
//! Numeric routines are generic over [`Scalar`] (`f32` or `f64`); the type
//! aliases below fix the common `f64` instantiations.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod concentration;
pub mod error;
pub mod independence;
pub mod ingest;
pub mod rankdyn;
pub mod rhythms;
pub mod scalar;
pub mod synth;
pub mod tessellate;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type TimeSeries64 = rhythms::TimeSeries<f64>;
pub type TimeSeries32 = rhythms::TimeSeries<f32>;
pub type WaveletField64 = rhythms::WaveletField<f64>;
pub type WaveletField32 = rhythms::WaveletField<f32>;
pub type GlobalSpectrum64 = rhythms::GlobalSpectrum<f64>;
pub type BandPower64 = rhythms::BandPower<f64>;
pub type RegionSeriesSet64 = tessellate::RegionSeriesSet<f64>;
pub type LorenzCurve64 = concentration::LorenzCurve<f64>;
pub type EntropyProfile64 = rankdyn::EntropyProfile<f64>;
pub type PairedSample64 = independence::PairedSample<f64>;
