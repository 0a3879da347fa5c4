use super::BitStream;
use crate::error::{Error, Result};

const SUBSTITUTE: u8 = b'?';

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AsciiEncoding {
    pub bits: BitStream,
    /// Characters outside 7-bit ASCII that were replaced by `?`.
    pub substituted: usize,
}

/// Seven bits per character, most significant bit first.
pub fn ascii_encode(text: &str) -> AsciiEncoding {
    let mut bits = Vec::with_capacity(text.len() * 7);
    let mut substituted = 0;
    for c in text.chars() {
        let code = if c.is_ascii() {
            c as u8
        } else {
            substituted += 1;
            SUBSTITUTE
        };
        bits.extend((0..7).rev().map(|shift| (code >> shift) & 1));
    }
    AsciiEncoding {
        bits: BitStream::new(bits),
        substituted,
    }
}

pub fn ascii_decode(bits: &BitStream) -> Result<String> {
    let payload = bits.payload();
    if !payload.len().is_multiple_of(7) {
        return Err(Error::Framing(format!(
            "{} payload bits is not a whole number of 7-bit characters",
            payload.len()
        )));
    }
    Ok(payload
        .chunks_exact(7)
        .map(|chunk| {
            let code = chunk.iter().fold(0u8, |acc, &b| (acc << 1) | (b & 1));
            match code {
                b'\n' | b'\t' => code as char,
                c if c.is_ascii_control() => SUBSTITUTE as char,
                c => c as char,
            }
        })
        .collect())
}
