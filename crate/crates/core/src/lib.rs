//! Virtual metrology with photon pairs: a pair source, dispersive and
//! birefringent channels, photon counting detectors, four measurement
//! protocols and the estimators that turn their raw data into results.
//!
//! The numerical core is generic over the float type where it matters
//! (`Wavelength<T>`, `FiberSpec<T>`, `SpectralProfile<T>`, the least-squares
//! routines); the Monte Carlo protocols run in `f64`.

// `!(x > 0.0)` is how validation rejects NaN along with out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod detection;
pub mod error;
pub mod estimation;
pub mod experiments;
pub mod fiber;
pub mod io;
pub mod linalg;
pub mod numeric;
pub mod rng;
pub mod scalar;
pub mod source;
pub mod units;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// Single-precision aliases.
pub type Wavelength32 = units::Wavelength<f32>;
pub type FiberSpec32 = fiber::FiberSpec<f32>;
pub type SpectralProfile32 = source::SpectralProfile<f32>;

/// Double-precision aliases, the types the protocols use.
pub type Wavelength64 = units::Wavelength<f64>;
pub type FiberSpec64 = fiber::FiberSpec<f64>;
pub type SpectralProfile64 = source::SpectralProfile<f64>;
