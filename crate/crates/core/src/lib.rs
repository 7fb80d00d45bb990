//! Uniformity tests on the circle and the hypersphere.
//!
//! Statistics are generic over [`Scalar`] (`f32` or `f64`); null laws,
//! samplers and the Monte Carlo engine work in `f64`.

pub mod catalog;
pub mod circular;
pub mod error;
pub mod harmonics;
pub mod highdim;
pub mod mc;
pub mod nulldist;
pub mod projection;
pub mod rng;
pub mod sample;
pub mod samplers;
pub mod scalar;
pub mod sobolev;

pub use catalog::{run_tests, PValueMethod, PValueRequest, PreparedTest, TestId, TestOptions, TestOutcome};
pub use error::{Error, Result};
pub use sample::{DirectionalSample, Format, IngestOptions, OrderedCircular, Spacings};
pub use scalar::Scalar;

pub type Sample = DirectionalSample<f64>;
pub type Sample32 = DirectionalSample<f32>;
