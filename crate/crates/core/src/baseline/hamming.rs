//! Systematic (7,4) Hamming code.
//!
//! Codewords are laid out as `d0 d1 d2 d3 p0 p1 p2` with
//! `p0 = d0^d1^d3`, `p1 = d0^d2^d3`, `p2 = d1^d2^d3`, i.e. `G = [I4 | A]` and
//! `H = [A^T | I3]`.

use super::BitStream;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Hamming74 {
    pub generator: [[u8; 7]; 4],
    pub parity_check: [[u8; 7]; 3],
}

pub const HAMMING74: Hamming74 = Hamming74 {
    generator: [
        [1, 0, 0, 0, 1, 1, 0],
        [0, 1, 0, 0, 1, 0, 1],
        [0, 0, 1, 0, 0, 1, 1],
        [0, 0, 0, 1, 1, 1, 1],
    ],
    parity_check: [
        [1, 1, 0, 1, 1, 0, 0],
        [1, 0, 1, 1, 0, 1, 0],
        [0, 1, 1, 1, 0, 0, 1],
    ],
};

impl Hamming74 {
    pub fn encode_block(&self, data: [u8; 4]) -> [u8; 7] {
        std::array::from_fn(|j| (0..4).fold(0, |acc, i| acc ^ (data[i] & self.generator[i][j])))
    }

    pub fn syndrome(&self, word: &[u8; 7]) -> [u8; 3] {
        std::array::from_fn(|r| (0..7).fold(0, |acc, j| acc ^ (word[j] & self.parity_check[r][j])))
    }

    /// Corrects at most one bit error and returns the data bits, plus whether
    /// a correction was applied.
    pub fn decode_block(&self, mut word: [u8; 7]) -> ([u8; 4], bool) {
        let syndrome = self.syndrome(&word);
        let corrected = syndrome != [0; 3];
        if corrected {
            // a nonzero syndrome always matches exactly one column of H
            if let Some(pos) =
                (0..7).find(|&j| (0..3).all(|r| self.parity_check[r][j] == syndrome[r]))
            {
                word[pos] ^= 1;
            }
        }
        ([word[0], word[1], word[2], word[3]], corrected)
    }
}

impl Default for Hamming74 {
    fn default() -> Self {
        HAMMING74
    }
}

/// Zero-pads to whole 4-bit blocks and encodes each block. The number of
/// padding bits added is recorded in the output `pad_len`.
pub fn hamming74_encode(data: &BitStream) -> BitStream {
    let pad = (4 - data.len() % 4) % 4;
    let mut padded = data.bits.clone();
    padded.resize(data.len() + pad, 0);
    let bits = padded
        .chunks_exact(4)
        .flat_map(|c| HAMMING74.encode_block([c[0], c[1], c[2], c[3]]))
        .collect();
    BitStream { bits, pad_len: pad }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HammingDecoded {
    pub data: BitStream,
    /// Blocks in which the syndrome was nonzero.
    pub corrected_blocks: usize,
}

pub fn hamming74_decode(coded: &BitStream) -> Result<HammingDecoded> {
    if !coded.len().is_multiple_of(7) {
        return Err(Error::Framing(format!(
            "{} coded bits is not a whole number of 7-bit codewords",
            coded.len()
        )));
    }
    let mut bits = Vec::with_capacity(coded.len() / 7 * 4);
    let mut corrected_blocks = 0;
    for chunk in coded.bits.chunks_exact(7) {
        let word: [u8; 7] = std::array::from_fn(|j| chunk[j] & 1);
        let (data, corrected) = HAMMING74.decode_block(word);
        corrected_blocks += usize::from(corrected);
        bits.extend_from_slice(&data);
    }
    if coded.pad_len > bits.len() {
        return Err(Error::Framing(format!(
            "pad of {} bits exceeds {} decoded bits",
            coded.pad_len,
            bits.len()
        )));
    }
    bits.truncate(bits.len() - coded.pad_len);
    Ok(HammingDecoded {
        data: BitStream::new(bits),
        corrected_blocks,
    })
}
