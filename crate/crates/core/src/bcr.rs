//! Bandwidth accounting: complex channel uses per source pixel value.

use std::fmt;

use num_rational::Ratio;

use crate::error::{Error, Result};
use crate::feature_frame::check_geometry;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ImageGeometry {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
}

impl ImageGeometry {
    pub const fn new(channels: usize, height: usize, width: usize) -> Self {
        Self {
            channels,
            height,
            width,
        }
    }

    pub const fn rgb(height: usize, width: usize) -> Self {
        Self::new(3, height, width)
    }

    pub fn len(&self) -> usize {
        self.channels * self.height * self.width
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn validate(&self) -> Result<()> {
        if self.channels == 0 || self.height == 0 || self.width == 0 {
            return Err(Error::Geometry(format!("zero-sized image {self}")));
        }
        Ok(())
    }
}

impl fmt::Display for ImageGeometry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}x{}", self.channels, self.height, self.width)
    }
}

/// Number of complex symbols needed for an `n_queries x dim` feature.
pub fn channel_uses(n_queries: usize, dim: usize) -> Result<usize> {
    check_geometry(n_queries, dim)?;
    Ok(n_queries * dim / 2)
}

/// Bandwidth compression ratio as an exact fraction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct Bcr(pub Ratio<u64>);

impl Bcr {
    pub fn numer(&self) -> u64 {
        *self.0.numer()
    }

    pub fn denom(&self) -> u64 {
        *self.0.denom()
    }

    pub fn to_f64(&self) -> f64 {
        self.numer() as f64 / self.denom() as f64
    }
}

impl fmt::Display for Bcr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.numer(), self.denom())
    }
}

pub fn compute_bcr(n_queries: usize, dim: usize, geom: &ImageGeometry) -> Result<Bcr> {
    let uses = channel_uses(n_queries, dim)?;
    geom.validate()?;
    Ok(Bcr(Ratio::new(uses as u64, geom.len() as u64)))
}

/// One row per geometry: `(geometry, channel uses, bcr)`.
pub fn bcr_table(
    n_queries: usize,
    dim: usize,
    geoms: &[ImageGeometry],
) -> Result<Vec<(ImageGeometry, usize, Bcr)>> {
    let uses = channel_uses(n_queries, dim)?;
    geoms
        .iter()
        .map(|g| Ok((*g, uses, compute_bcr(n_queries, dim, g)?)))
        .collect()
}
