//! Gray-labelled 16-QAM.
//!
//! A 4-bit label `b0 b1 b2 b3` (b0 first on the wire) selects the in-phase
//! level from `b0 b1` and the quadrature level from `b2 b3`, each through
//! `00 -> -3, 01 -> -1, 11 -> +1, 10 -> +3`, scaled by `1/sqrt(10)` for unit
//! mean energy.

use num_complex::Complex64;

use super::BitStream;
use crate::feature_frame::SymbolFrame;

const LEVELS: [f64; 4] = [-3.0, -1.0, 3.0, 1.0];

#[derive(Debug, Clone, PartialEq)]
pub struct Qam16 {
    points: [Complex64; 16],
}

impl Qam16 {
    pub fn new() -> Self {
        let norm = 1.0 / 10f64.sqrt();
        let points = std::array::from_fn(|label| {
            let i = LEVELS[label >> 2];
            let q = LEVELS[label & 0b11];
            Complex64::new(i * norm, q * norm)
        });
        Self { points }
    }

    pub fn point(&self, label: u8) -> Complex64 {
        self.points[usize::from(label & 0x0f)]
    }

    pub fn points(&self) -> &[Complex64; 16] {
        &self.points
    }

    /// Nearest point by Euclidean distance; ties go to the lower label.
    pub fn decide(&self, symbol: Complex64) -> u8 {
        let mut best = 0u8;
        let mut best_dist = f64::INFINITY;
        for (label, p) in self.points.iter().enumerate() {
            let d = (symbol - p).norm_sqr();
            if d < best_dist {
                best_dist = d;
                best = label as u8;
            }
        }
        best
    }
}

impl Default for Qam16 {
    fn default() -> Self {
        Self::new()
    }
}

/// Maps bits onto unit-energy 16-QAM symbols, zero-padding to a multiple of
/// four. Returns the symbols and the number of padding bits.
pub fn qam16_modulate(bits: &BitStream) -> (SymbolFrame, usize) {
    let qam = Qam16::new();
    let pad = (4 - bits.len() % 4) % 4;
    let mut padded = bits.bits.clone();
    padded.resize(bits.len() + pad, 0);
    let symbols = padded
        .chunks_exact(4)
        .map(|c| qam.point((c[0] << 3) | (c[1] << 2) | (c[2] << 1) | c[3]))
        .collect();
    let frame = SymbolFrame::new(symbols, 1.0, 1.0).expect("unit scale and power are valid");
    (frame, pad)
}

/// Hard-decision demodulation, dropping `pad_len` trailing bits.
pub fn qam16_demodulate(symbols: &[Complex64], pad_len: usize) -> BitStream {
    let qam = Qam16::new();
    let mut bits: Vec<u8> = symbols
        .iter()
        .flat_map(|&s| {
            let label = qam.decide(s);
            [
                (label >> 3) & 1,
                (label >> 2) & 1,
                (label >> 1) & 1,
                label & 1,
            ]
        })
        .collect();
    bits.truncate(bits.len().saturating_sub(pad_len));
    BitStream::new(bits)
}
