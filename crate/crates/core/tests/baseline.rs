mod common;

use common::{hamming_codewords_by_enumeration, hamming_distance, random_bits};
use num_complex::Complex64;
use proptest::prelude::*;
use vlf_link::baseline::{
    hamming74_decode, hamming74_encode, qam16_demodulate, qam16_modulate, run_bit_link, BitStream,
    Qam16, HAMMING74,
};
use vlf_link::channel::ChannelConfig;

#[test]
fn encoder_table_matches_enumerated_code() {
    let enumerated = hamming_codewords_by_enumeration();
    assert_eq!(enumerated.len(), 16);
    for v in 0u8..16 {
        let data: [u8; 4] = std::array::from_fn(|i| (v >> (3 - i)) & 1);
        let cw = HAMMING74.encode_block(data);
        assert!(enumerated.contains(&cw), "{cw:?}");
    }
}

#[test]
fn codewords_form_a_linear_code_with_distance_three() {
    let words = hamming_codewords_by_enumeration();
    for a in &words {
        for b in &words {
            let sum: [u8; 7] = std::array::from_fn(|i| a[i] ^ b[i]);
            assert!(words.contains(&sum));
            if a != b {
                assert!(hamming_distance(a, b) >= 3);
            }
        }
    }
}

#[test]
fn single_error_syndromes_are_unique() {
    let mut seen = Vec::new();
    for pos in 0..7 {
        let mut e = [0u8; 7];
        e[pos] = 1;
        let s = HAMMING74.syndrome(&e);
        assert_ne!(s, [0; 3]);
        assert!(!seen.contains(&s));
        seen.push(s);
    }
}

#[test]
fn every_single_error_is_corrected() {
    let mut corrected = 0;
    for v in 0u8..16 {
        let data: Vec<u8> = (0..4).map(|i| (v >> (3 - i)) & 1).collect();
        let coded = hamming74_encode(&BitStream::new(data.clone()));
        for pos in 0..7 {
            let mut noisy = coded.clone();
            noisy.bits[pos] ^= 1;
            let out = hamming74_decode(&noisy).unwrap();
            assert_eq!(out.data.bits, data, "word {v:04b}, flip {pos}");
            assert_eq!(out.corrected_blocks, 1);
            corrected += 1;
        }
    }
    assert_eq!(corrected, 112);
}

#[test]
fn double_errors_decode_to_some_word() {
    let mut cases = 0;
    for v in 0u8..16 {
        let data: Vec<u8> = (0..4).map(|i| (v >> (3 - i)) & 1).collect();
        let coded = hamming74_encode(&BitStream::new(data));
        for i in 0..7 {
            for j in i + 1..7 {
                let mut noisy = coded.clone();
                noisy.bits[i] ^= 1;
                noisy.bits[j] ^= 1;
                let out = hamming74_decode(&noisy).unwrap();
                assert_eq!(out.data.len(), 4);
                cases += 1;
            }
        }
    }
    assert_eq!(cases, 16 * 21);
}

#[test]
fn constellation_energy_and_gray_adjacency() {
    let qam = Qam16::new();
    let pts = qam.points();
    let energy: f64 = pts.iter().map(|p| p.norm_sqr()).sum::<f64>() / 16.0;
    assert!((energy - 1.0).abs() < 1e-15);
    let step = 2.0 / 10f64.sqrt();
    let mut neighbours = 0;
    for a in 0..16u8 {
        for b in a + 1..16u8 {
            assert_ne!(pts[a as usize], pts[b as usize]);
            if ((pts[a as usize] - pts[b as usize]).norm() - step).abs() < 1e-12 {
                assert_eq!((a ^ b).count_ones(), 1, "{a:04b} vs {b:04b}");
                neighbours += 1;
            }
        }
    }
    // 4x4 grid: 2 * 4 * 3 nearest-neighbour pairs
    assert_eq!(neighbours, 24);
}

#[test]
fn every_label_survives_noiseless_modulation() {
    let qam = Qam16::new();
    for label in 0u8..16 {
        assert_eq!(qam.decide(qam.point(label)), label);
        let bits: Vec<u8> = (0..4).map(|i| (label >> (3 - i)) & 1).collect();
        let (frame, pad) = qam16_modulate(&BitStream::new(bits.clone()));
        assert_eq!(qam16_demodulate(frame.symbols(), pad).bits, bits);
    }
}

#[test]
fn coded_link_recovers_data_at_high_snr() {
    let data = BitStream::new(random_bits(4001, 77));
    let out = run_bit_link(&data, &ChannelConfig::rayleigh(1e300, 3), true).unwrap();
    assert_eq!(out.data, data);
    assert_eq!(out.ber_pre_fec, 0.0);
}

#[test]
fn fuzzed_symbols_demodulate_to_valid_bits() {
    let bits = random_bits(4000, 9);
    let (tx, pad) = qam16_modulate(&BitStream::new(bits.clone()));
    let noisy: Vec<Complex64> = tx
        .symbols()
        .iter()
        .enumerate()
        .map(|(i, s)| s * 50.0 * ((i % 7) as f64 - 3.0))
        .collect();
    let out = qam16_demodulate(&noisy, pad);
    assert_eq!(out.len(), bits.len());
    assert!(out.bits.iter().all(|&b| b <= 1));
}

proptest! {
    #[test]
    fn qam_roundtrip(bits in proptest::collection::vec(0u8..2, 0..200)) {
        let stream = BitStream::new(bits);
        let (frame, pad) = qam16_modulate(&stream);
        prop_assert_eq!(qam16_demodulate(frame.symbols(), pad), stream);
    }

    #[test]
    fn hamming_roundtrip(bits in proptest::collection::vec(0u8..2, 0..200)) {
        let stream = BitStream::new(bits);
        prop_assert_eq!(hamming74_decode(&hamming74_encode(&stream)).unwrap().data, stream);
    }
}
