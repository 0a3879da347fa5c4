//! Link-level simulation of feature-based semantic communication.
//!
//! A compact vision-language feature matrix is sent as analog complex symbols
//! over an AWGN or Rayleigh fading channel and compared against a classical
//! ASCII + Hamming(7,4) + 16-QAM text link on the same channel draws.

pub mod baseline;
pub mod bcr;
#[cfg(feature = "raster")]
pub mod bridge;
pub mod channel;
pub mod codec;
pub mod error;
pub mod feature_frame;
pub mod harness;
pub mod metrics;
#[cfg(feature = "raster")]
pub mod raster;

pub use error::{Error, Result};
