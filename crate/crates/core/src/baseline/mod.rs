//! Classical separate source/channel coding baseline.
//!
//! Text is mapped to 7-bit ASCII, protected with a systematic (7,4) Hamming
//! code, carried on Gray-labelled 16-QAM and hard-decision decoded after the
//! same channel used by the semantic path.

mod ascii;
mod hamming;
mod pipeline;
mod qam;

pub use ascii::{ascii_decode, ascii_encode, AsciiEncoding};
pub use hamming::{hamming74_decode, hamming74_encode, Hamming74, HammingDecoded, HAMMING74};
pub use pipeline::{baseline_pipeline, run_bit_link, BaselineOutcome, BitLinkResult};
pub use qam::{qam16_demodulate, qam16_modulate, Qam16};

/// Ordered bits, one `0`/`1` per byte, with a count of trailing pad bits.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct BitStream {
    pub bits: Vec<u8>,
    pub pad_len: usize,
}

impl BitStream {
    pub fn new(bits: Vec<u8>) -> Self {
        debug_assert!(bits.iter().all(|&b| b <= 1));
        Self { bits, pad_len: 0 }
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    /// Bits excluding the trailing padding.
    pub fn payload(&self) -> &[u8] {
        &self.bits[..self.bits.len() - self.pad_len.min(self.bits.len())]
    }
}

impl From<Vec<u8>> for BitStream {
    fn from(bits: Vec<u8>) -> Self {
        Self::new(bits)
    }
}
