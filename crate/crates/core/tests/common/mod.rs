//! Independent reference computations shared by the integration tests. None
//! of these call into the library code paths they are used to check.

#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vlf_link::bcr::ImageGeometry;
use vlf_link::codec::Image;
use vlf_link::harness::{Dataset, Sample};

/// Gaussian tail probability.
pub fn q_function(x: f64) -> f64 {
    0.5 * statrs::function::erf::erfc(x / std::f64::consts::SQRT_2)
}

/// Standard Gray-coded square M-QAM bit error approximation, with `snr_db`
/// the per-symbol SNR `Es / N0`:
/// `Pb ~ 4/log2(M) (1 - 1/sqrt(M)) Q(sqrt(3 Es/N0 / (M - 1)))`.
pub fn gray_mqam_ber(m: f64, snr_db: f64) -> f64 {
    let es_n0 = 10f64.powf(snr_db / 10.0);
    let k = m.log2();
    4.0 / k * (1.0 - 1.0 / m.sqrt()) * q_function((3.0 * es_n0 / (m - 1.0)).sqrt())
}

/// BLEU counted by scanning, without hash maps: each candidate position
/// contributes `min(count_cand, count_ref) / count_cand` of its n-gram, which
/// sums to the clipped count.
pub fn bleu_bruteforce(cand: &[String], reference: &[String], max_n: usize) -> f64 {
    if cand.is_empty() {
        return 0.0;
    }
    let order = max_n.min(cand.len());
    let count = |seq: &[String], gram: &[String]| -> usize {
        if seq.len() < gram.len() {
            return 0;
        }
        (0..=seq.len() - gram.len())
            .filter(|&j| seq[j..j + gram.len()] == *gram)
            .count()
    };
    let mut product = 1.0;
    for n in 1..=order {
        let positions = cand.len() - n + 1;
        let mut clipped = 0.0;
        for i in 0..positions {
            let gram = &cand[i..i + n];
            let c = count(cand, gram) as f64;
            let r = count(reference, gram) as f64;
            clipped += c.min(r) / c;
        }
        let clipped = clipped.round();
        if clipped == 0.0 {
            return 0.0;
        }
        product *= clipped / positions as f64;
    }
    let bp = if cand.len() < reference.len() {
        (1.0 - reference.len() as f64 / cand.len() as f64).exp()
    } else {
        1.0
    };
    product.powf(1.0 / order as f64) * bp
}

/// Hamming code codewords from the parity equations, by checking all 128
/// seven-bit words.
pub fn hamming_codewords_by_enumeration() -> Vec<[u8; 7]> {
    (0u8..128)
        .map(|w| std::array::from_fn(|i| (w >> (6 - i)) & 1))
        .filter(|w: &[u8; 7]| {
            w[4] == w[0] ^ w[1] ^ w[3] && w[5] == w[0] ^ w[2] ^ w[3] && w[6] == w[1] ^ w[2] ^ w[3]
        })
        .collect()
}

pub fn hamming_distance(a: &[u8], b: &[u8]) -> usize {
    a.iter().zip(b).filter(|(x, y)| x != y).count()
}

pub fn random_bits(n: usize, seed: u64) -> Vec<u8> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.random_range(0..2u8)).collect()
}

pub fn random_image(geom: ImageGeometry, seed: u64) -> Image {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Image::new(geom, (0..geom.len()).map(|_| rng.random::<f64>()).collect()).unwrap()
}

const WORDS: [&str; 16] = [
    "dog", "cat", "boat", "plane", "tree", "car", "horse", "bird", "house", "train", "beach",
    "river", "bridge", "flower", "street", "mountain",
];

/// `count` random RGB images with distinct captions.
pub fn synthetic_dataset(count: usize, geom: ImageGeometry, seed: u64) -> Dataset {
    Dataset::new(
        (0..count)
            .map(|i| Sample {
                id: format!("img-{i:02}"),
                image: Some(random_image(geom, seed.wrapping_add(i as u64))),
                caption: format!("a photo of a {} number {i}", WORDS[i % WORDS.len()]),
            })
            .collect(),
    )
}

pub fn random_tokens(rng: &mut ChaCha8Rng, max_len: usize, vocab: usize) -> Vec<String> {
    let len = rng.random_range(0..=max_len);
    (0..len)
        .map(|_| format!("w{}", rng.random_range(0..vocab)))
        .collect()
}
