//! Feature container and its analog mapping onto complex channel symbols.
//!
//! A [`FeatureFrame`] is an `n_queries x dim` real matrix. Packing walks the
//! matrix in row-major order and pairs consecutive elements into one complex
//! symbol (element `2k` is the real part and `2k + 1` the imaginary part of
//! symbol `k`). The whole frame is multiplied by a single scale factor so that
//! the mean symbol power equals the requested target power. The factor is
//! returned as a [`NormalizationRecord`] and is treated as ideal side
//! information at the receiver.

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Default number of query rows.
pub const DEFAULT_N_QUERIES: usize = 32;
/// Default feature width.
pub const DEFAULT_DIM: usize = 768;
/// Default average power per complex symbol.
pub const DEFAULT_TARGET_POWER: f64 = 1.0;

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureFrame {
    n_queries: usize,
    dim: usize,
    data: Vec<f64>,
}

impl FeatureFrame {
    /// Builds a frame from row-major data.
    pub fn new(n_queries: usize, dim: usize, data: Vec<f64>) -> Result<Self> {
        check_geometry(n_queries, dim)?;
        if data.len() != n_queries * dim {
            return Err(Error::Geometry(format!(
                "{} elements supplied for a {n_queries}x{dim} frame",
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::Data(format!("non-finite value at element {i}")));
        }
        Ok(Self {
            n_queries,
            dim,
            data,
        })
    }

    pub fn zeros(n_queries: usize, dim: usize) -> Result<Self> {
        Self::new(n_queries, dim, vec![0.0; n_queries * dim])
    }

    pub fn n_queries(&self) -> usize {
        self.n_queries
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Row-major view of the matrix.
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.dim)
    }

    pub fn same_geometry(&self, other: &FeatureFrame) -> bool {
        self.n_queries == other.n_queries && self.dim == other.dim
    }

    pub fn norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Unweighted mean over the query rows, giving a `dim`-vector.
    pub fn mean_pool(&self) -> Vec<f64> {
        let mut pooled = vec![0.0; self.dim];
        for row in self.rows() {
            for (acc, v) in pooled.iter_mut().zip(row) {
                *acc += v;
            }
        }
        let inv = 1.0 / self.n_queries as f64;
        pooled.iter_mut().for_each(|v| *v *= inv);
        pooled
    }

    /// Number of complex channel uses this frame occupies.
    pub fn channel_uses(&self) -> usize {
        self.data.len() / 2
    }
}

/// Checks that a frame of this shape can be paired into complex symbols.
pub(crate) fn check_geometry(n_queries: usize, dim: usize) -> Result<()> {
    if n_queries == 0 || dim == 0 {
        return Err(Error::Geometry(format!(
            "frame dimensions must be positive, got {n_queries}x{dim}"
        )));
    }
    let count = n_queries
        .checked_mul(dim)
        .ok_or_else(|| Error::Geometry(format!("{n_queries}x{dim} overflows")))?;
    if count % 2 != 0 {
        return Err(Error::Geometry(format!(
            "{n_queries}x{dim} has an odd element count and cannot be paired into complex symbols"
        )));
    }
    Ok(())
}

/// Complex baseband symbols with the normalization that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct SymbolFrame {
    symbols: Vec<Complex64>,
    scale: f64,
    target_power: f64,
}

impl SymbolFrame {
    pub fn new(symbols: Vec<Complex64>, scale: f64, target_power: f64) -> Result<Self> {
        if !(scale.is_finite() && scale > 0.0) {
            return Err(Error::Data(format!("scale must be positive, got {scale}")));
        }
        if !(target_power.is_finite() && target_power > 0.0) {
            return Err(Error::Data(format!(
                "target power must be positive, got {target_power}"
            )));
        }
        Ok(Self {
            symbols,
            scale,
            target_power,
        })
    }

    pub fn symbols(&self) -> &[Complex64] {
        &self.symbols
    }

    pub fn into_symbols(self) -> Vec<Complex64> {
        self.symbols
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn target_power(&self) -> f64 {
        self.target_power
    }

    pub fn mean_power(&self) -> f64 {
        mean_power(&self.symbols)
    }
}

pub(crate) fn mean_power(symbols: &[Complex64]) -> f64 {
    if symbols.is_empty() {
        return 0.0;
    }
    symbols.iter().map(|s| s.norm_sqr()).sum::<f64>() / symbols.len() as f64
}

/// Side information needed to undo [`pack_features`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalizationRecord {
    pub scale: f64,
    pub n_queries: usize,
    pub dim: usize,
}

pub fn pack_features(
    frame: &FeatureFrame,
    target_power: f64,
) -> Result<(SymbolFrame, NormalizationRecord)> {
    if !(target_power.is_finite() && target_power > 0.0) {
        return Err(Error::Data(format!(
            "target power must be positive and finite, got {target_power}"
        )));
    }
    let energy: f64 = frame.data.iter().map(|v| v * v).sum();
    if energy == 0.0 {
        return Err(Error::DegenerateFrame(
            "all-zero frame has no defined power normalization".into(),
        ));
    }
    let raw_power = energy / frame.channel_uses() as f64;
    let scale = (target_power / raw_power).sqrt();
    if !(scale.is_finite() && scale > 0.0) {
        return Err(Error::Data(format!(
            "frame power {raw_power} cannot be normalized"
        )));
    }
    let symbols = frame
        .data
        .chunks_exact(2)
        .map(|pair| Complex64::new(pair[0] * scale, pair[1] * scale))
        .collect();
    let record = NormalizationRecord {
        scale,
        n_queries: frame.n_queries,
        dim: frame.dim,
    };
    Ok((SymbolFrame::new(symbols, scale, target_power)?, record))
}

pub fn unpack_features(
    symbols: &SymbolFrame,
    record: &NormalizationRecord,
) -> Result<FeatureFrame> {
    check_geometry(record.n_queries, record.dim)?;
    if !(record.scale.is_finite() && record.scale > 0.0) {
        return Err(Error::Data(format!(
            "normalization scale must be positive, got {}",
            record.scale
        )));
    }
    let expected = record.n_queries * record.dim / 2;
    if symbols.len() != expected {
        return Err(Error::Geometry(format!(
            "{} symbols cannot fill a {}x{} frame ({expected} expected)",
            symbols.len(),
            record.n_queries,
            record.dim
        )));
    }
    let data = symbols
        .symbols()
        .iter()
        .flat_map(|s| [s.re / record.scale, s.im / record.scale])
        .collect();
    FeatureFrame::new(record.n_queries, record.dim, data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_frame(n: usize, d: usize, seed: u64) -> FeatureFrame {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = (0..n * d).map(|_| rng.random_range(-2.0..2.0)).collect();
        FeatureFrame::new(n, d, data).unwrap()
    }

    #[test]
    fn single_symbol_normalization() {
        let frame = FeatureFrame::new(1, 2, vec![3.0, 4.0]).unwrap();
        let (tx, rec) = pack_features(&frame, 1.0).unwrap();
        assert_eq!(tx.len(), 1);
        assert!((rec.scale - 0.2).abs() < 1e-15);
        assert!((tx.symbols()[0] - Complex64::new(0.6, 0.8)).norm() < 1e-15);
        assert!((tx.mean_power() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn all_ones_maps_to_diagonal_points() {
        let frame = FeatureFrame::new(4, 6, vec![1.0; 24]).unwrap();
        let (tx, _) = pack_features(&frame, 1.0).unwrap();
        let expected = Complex64::new(1.0, 1.0) / 2f64.sqrt();
        for s in tx.symbols() {
            assert!((s - expected).norm() < 1e-15);
        }
        assert!((tx.mean_power() - 1.0).abs() < 1e-15);
        let back = unpack_features(&tx, &pack_features(&frame, 1.0).unwrap().1).unwrap();
        assert!(back.as_slice().iter().all(|v| (v - 1.0).abs() < 1e-15));
    }

    #[test]
    fn default_geometry_power_and_length() {
        let frame = random_frame(DEFAULT_N_QUERIES, DEFAULT_DIM, 7);
        let (tx, rec) = pack_features(&frame, 1.0).unwrap();
        assert_eq!(tx.len(), 12288);
        let power: f64 = tx
            .symbols()
            .iter()
            .map(|s| s.re * s.re + s.im * s.im)
            .sum::<f64>()
            / 12288.0;
        assert!((power - 1.0).abs() < 1e-6);
        let back = unpack_features(&tx, &rec).unwrap();
        let max = frame.as_slice().iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for (a, b) in frame.as_slice().iter().zip(back.as_slice()) {
            assert!((a - b).abs() <= 1e-12 * max);
        }
    }

    #[test]
    fn rejects_bad_frames() {
        assert!(matches!(
            FeatureFrame::new(3, 3, vec![1.0; 9]),
            Err(Error::Geometry(_))
        ));
        assert!(matches!(
            FeatureFrame::new(1, 2, vec![1.0, f64::NAN]),
            Err(Error::Data(_))
        ));
        assert!(matches!(
            FeatureFrame::new(1, 2, vec![1.0]),
            Err(Error::Geometry(_))
        ));
        let zero = FeatureFrame::zeros(2, 4).unwrap();
        assert!(matches!(
            pack_features(&zero, 1.0),
            Err(Error::DegenerateFrame(_))
        ));
        let frame = FeatureFrame::new(1, 2, vec![1.0, 1.0]).unwrap();
        assert!(pack_features(&frame, 0.0).is_err());
    }

    #[test]
    fn unpack_rejects_geometry_mismatch() {
        let frame = random_frame(2, 4, 1);
        let (tx, mut rec) = pack_features(&frame, 1.0).unwrap();
        rec.n_queries = 4;
        assert!(matches!(
            unpack_features(&tx, &rec),
            Err(Error::Geometry(_))
        ));
    }

    #[test]
    fn mean_pool_averages_rows() {
        let frame = FeatureFrame::new(2, 2, vec![1.0, 2.0, 3.0, 6.0]).unwrap();
        assert_eq!(frame.mean_pool(), vec![2.0, 4.0]);
    }

    proptest! {
        #[test]
        fn roundtrip_and_power(
            n in 1usize..6,
            half_d in 1usize..8,
            seed in any::<u64>(),
            power in 0.01f64..100.0,
        ) {
            let frame = random_frame(n, 2 * half_d, seed);
            let (tx, rec) = pack_features(&frame, power).unwrap();
            prop_assert!((tx.mean_power() / power - 1.0).abs() < 1e-6);
            let back = unpack_features(&tx, &rec).unwrap();
            for (a, b) in frame.as_slice().iter().zip(back.as_slice()) {
                prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1e-300));
            }
        }

        #[test]
        fn permuting_elements_permutes_symbols(seed in any::<u64>()) {
            // swapping two symbol-sized blocks of the input swaps the symbols
            let frame = random_frame(2, 6, seed);
            let mut data = frame.as_slice().to_vec();
            data.swap(0, 4);
            data.swap(1, 5);
            let swapped = FeatureFrame::new(2, 6, data).unwrap();
            let (a, _) = pack_features(&frame, 1.0).unwrap();
            let (b, _) = pack_features(&swapped, 1.0).unwrap();
            // the energy sum is reordered, so the scale may differ in the last ulp
            let close = |x: Complex64, y: Complex64| (x - y).norm() <= 1e-14 * x.norm().max(1e-300);
            prop_assert!(close(a.symbols()[0], b.symbols()[2]));
            prop_assert!(close(a.symbols()[2], b.symbols()[0]));
            for k in [1, 3, 4, 5] {
                prop_assert!(close(a.symbols()[k], b.symbols()[k]));
            }
        }
    }
}
