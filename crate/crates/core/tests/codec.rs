mod common;

use common::random_image;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use vlf_link::bcr::ImageGeometry;
use vlf_link::channel::{recover, transmit, ChannelConfig};
use vlf_link::codec::{Image, SemanticCodec, ToyCodecConfig, ToyProjectionCodec};
use vlf_link::feature_frame::{pack_features, unpack_features, FeatureFrame};
use vlf_link::metrics::image_fidelity;

fn small_config() -> ToyCodecConfig {
    ToyCodecConfig {
        n_queries: 4,
        dim: 8,
        text_dim: 6,
        seed: 17,
    }
}

fn through_channel(frame: &FeatureFrame, cfg: &ChannelConfig) -> FeatureFrame {
    let (tx, rec) = pack_features(frame, 1.0).unwrap();
    let rx = transmit(&tx, cfg).unwrap();
    unpack_features(&recover(&rx).unwrap().frame, &rec).unwrap()
}

#[test]
fn encoding_never_increases_norm() {
    let geom = ImageGeometry::rgb(6, 5);
    let codec = ToyProjectionCodec::new(small_config(), geom).unwrap();
    for seed in 0..50 {
        let img = random_image(geom, seed);
        let f = codec.encode(&img).unwrap();
        assert!(f.norm() <= img.norm() * (1.0 + 1e-12));
    }
}

#[test]
fn zero_image_gives_zero_frame_that_pack_rejects() {
    let geom = ImageGeometry::rgb(6, 5);
    let codec = ToyProjectionCodec::new(small_config(), geom).unwrap();
    let f = codec.encode(&Image::zeros(geom).unwrap()).unwrap();
    assert!(f.as_slice().iter().all(|&v| v == 0.0));
    assert!(pack_features(&f, 1.0).is_err());
}

#[test]
fn row_space_images_are_reconstructed_exactly() {
    let geom = ImageGeometry::rgb(6, 5);
    let codec = ToyProjectionCodec::new(small_config(), geom).unwrap();
    let p = codec.projection();
    // x = P^T c, built from dense rows
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let coeffs: Vec<f64> = (0..p.output_len())
        .map(|_| rng.random_range(-1.0..1.0))
        .collect();
    let mut x = vec![0.0; geom.len()];
    for (i, c) in coeffs.iter().enumerate() {
        for (xj, rj) in x.iter_mut().zip(p.row(i)) {
            *xj += c * rj;
        }
    }
    let img = Image::new(geom, x.clone()).unwrap();
    let back = codec.decode_image(&codec.encode(&img).unwrap()).unwrap();
    for (a, b) in x.iter().zip(back.as_slice()) {
        assert!((a - b).abs() <= 1e-8);
    }
}

#[test]
fn noiseless_reconstruction_error_is_the_truncation_error() {
    let geom = ImageGeometry::new(1, 9, 7);
    let codec = ToyProjectionCodec::new(small_config(), geom).unwrap();
    let p = codec.projection();
    let rows: Vec<Vec<f64>> = (0..p.output_len()).map(|i| p.row(i)).collect();
    for seed in 0..20 {
        let img = random_image(geom, seed);
        let x = img.as_slice();
        // (I - P^T P) x with dense arithmetic
        let px: Vec<f64> = rows
            .iter()
            .map(|r| r.iter().zip(x).map(|(a, b)| a * b).sum())
            .collect();
        let mut residual = x.to_vec();
        for (r, c) in rows.iter().zip(&px) {
            for (res, rj) in residual.iter_mut().zip(r) {
                *res -= c * rj;
            }
        }
        let expected = residual.iter().map(|v| v * v).sum::<f64>() / geom.len() as f64;
        let recon = codec.decode_image(&codec.encode(&img).unwrap()).unwrap();
        let (mse, _) = image_fidelity(&img, &recon).unwrap();
        assert!(
            (mse - expected).abs() <= 1e-12 * expected.max(1e-12),
            "{mse} vs {expected}"
        );
    }
}

#[test]
fn low_snr_reconstruction_is_worse_in_paired_trials() {
    let geom = ImageGeometry::rgb(8, 8);
    let codec = ToyProjectionCodec::new(small_config(), geom).unwrap();
    let mut worse = 0;
    for trial in 0..200u64 {
        let img = random_image(geom, 1000 + trial);
        let clean = codec.encode(&img).unwrap();
        let mse_at = |snr: f64| {
            let noisy = through_channel(&clean, &ChannelConfig::awgn(snr, trial));
            image_fidelity(&img, &codec.decode_image(&noisy).unwrap())
                .unwrap()
                .0
        };
        if mse_at(0.0) > mse_at(10.0) {
            worse += 1;
        }
    }
    assert!(worse >= 190, "{worse}/200");
}

/// 16 prototypes from Gaussian frames, kept only if their text embeddings
/// have cosine at most 0.2 with every prototype already accepted.
fn constructed_bank(
    cfg: ToyCodecConfig,
    geom: ImageGeometry,
) -> (ToyProjectionCodec, Vec<FeatureFrame>) {
    let mut codec = ToyProjectionCodec::new(cfg, geom).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut protos: Vec<FeatureFrame> = Vec::new();
    while protos.len() < 16 {
        let data = (0..cfg.n_queries * cfg.dim)
            .map(|_| rng.sample(StandardNormal))
            .collect();
        let frame = FeatureFrame::new(cfg.n_queries, cfg.dim, data).unwrap();
        if protos
            .iter()
            .all(|p| embedding_cosine(&codec, p, &frame) <= 0.2)
        {
            protos.push(frame);
        }
    }
    for (i, p) in protos.iter().enumerate() {
        codec.add_label(format!("label {i}"), p).unwrap();
    }
    (codec, protos)
}

fn embedding_cosine(codec: &ToyProjectionCodec, a: &FeatureFrame, b: &FeatureFrame) -> f64 {
    let (x, y) = (
        codec.text_embedding(a).unwrap(),
        codec.text_embedding(b).unwrap(),
    );
    let dot: f64 = x.iter().zip(&y).map(|(p, q)| p * q).sum();
    let nx = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    let ny = y.iter().map(|v| v * v).sum::<f64>().sqrt();
    dot / (nx * ny)
}

#[test]
fn prototype_bank_decodes_under_noise() {
    let cfg = ToyCodecConfig::default();
    let geom = ImageGeometry::rgb(96, 96);
    let (codec, protos) = constructed_bank(cfg, geom);
    let mut max_cos: f64 = -1.0;
    for i in 0..16 {
        for j in i + 1..16 {
            max_cos = max_cos.max(embedding_cosine(&codec, &protos[i], &protos[j]));
        }
    }
    assert!(max_cos <= 0.2, "prototypes not separated: {max_cos}");

    for (i, p) in protos.iter().enumerate() {
        let est = codec.decode_text(p).unwrap();
        assert_eq!(est.text, format!("label {i}"));
        assert!((est.confidence - 1.0).abs() < 1e-9);
    }

    let mut correct = 0;
    for trial in 0..500u64 {
        let idx = (trial % 16) as usize;
        let noisy = through_channel(&protos[idx], &ChannelConfig::awgn(10.0, trial));
        if codec.decode_text(&noisy).unwrap().text == format!("label {idx}") {
            correct += 1;
        }
    }
    assert!(correct >= 475, "{correct}/500");
}

#[test]
fn label_accuracy_does_not_fall_with_snr() {
    let cfg = ToyCodecConfig::default();
    let geom = ImageGeometry::rgb(96, 96);
    let (codec, protos) = constructed_bank(cfg, geom);
    let snrs = [-5.0, -2.5, 0.0, 2.5, 5.0, 7.5, 10.0];
    let trials = 160u64;
    let acc: Vec<f64> = snrs
        .iter()
        .map(|&snr| {
            let hits = (0..trials)
                .filter(|&t| {
                    let idx = (t % 16) as usize;
                    // same seed at every SNR: only the noise scale changes
                    let noisy = through_channel(&protos[idx], &ChannelConfig::awgn(snr, t));
                    codec.decode_text(&noisy).unwrap().text == format!("label {idx}")
                })
                .count();
            hits as f64 / trials as f64
        })
        .collect();
    for w in acc.windows(2) {
        assert!(w[1] >= w[0], "{acc:?}");
    }
}

#[test]
fn decoders_survive_extreme_noise() {
    let geom = ImageGeometry::rgb(6, 5);
    let mut codec = ToyProjectionCodec::new(small_config(), geom).unwrap();
    codec
        .add_labelled_image("x", &random_image(geom, 1))
        .unwrap();
    codec
        .add_labelled_image("y", &random_image(geom, 2))
        .unwrap();
    let clean = codec.encode(&random_image(geom, 1)).unwrap();
    for seed in 0..50 {
        for snr in [-60.0, -30.0] {
            let noisy = through_channel(&clean, &ChannelConfig::rayleigh(snr, seed));
            let text = codec.decode_text(&noisy).unwrap();
            assert!(text.text == "x" || text.text == "y");
            assert!(text.confidence.is_finite());
            let img = codec.decode_image(&noisy).unwrap();
            assert!(img.as_slice().iter().all(|v| v.is_finite()));
        }
    }
}

#[test]
fn channel_uses_are_resolution_invariant() {
    for (h, w) in [(96, 96), (128, 128), (256, 256), (100, 300)] {
        let geom = ImageGeometry::rgb(h, w);
        let codec = ToyProjectionCodec::new(ToyCodecConfig::default(), geom).unwrap();
        let frame = codec.encode(&random_image(geom, h as u64)).unwrap();
        let (tx, _) = pack_features(&frame, 1.0).unwrap();
        assert_eq!(tx.len(), 12288, "{geom}");
    }
}

#[test]
fn encoding_is_reproducible() {
    let geom = ImageGeometry::rgb(96, 96);
    let img = random_image(geom, 3);
    let a = ToyProjectionCodec::new(ToyCodecConfig::default(), geom)
        .unwrap()
        .encode(&img)
        .unwrap();
    let b = ToyProjectionCodec::new(ToyCodecConfig::default(), geom)
        .unwrap()
        .encode(&img)
        .unwrap();
    let bits = |f: &FeatureFrame| f.as_slice().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(&a), bits(&b));
}

proptest! {
    #[test]
    fn pooling_is_linear(
        f in proptest::collection::vec(-64i32..64, 12),
        g in proptest::collection::vec(-64i32..64, 12),
        a in prop::sample::select(vec![-4.0, -2.0, -0.5, 0.5, 1.0, 2.0, 4.0]),
        b in prop::sample::select(vec![-4.0, -1.0, 0.25, 1.0, 8.0]),
    ) {
        // small integers and power-of-two weights keep every step exact
        let ff = FeatureFrame::new(4, 3, f.iter().map(|&v| f64::from(v)).collect()).unwrap();
        let gg = FeatureFrame::new(4, 3, g.iter().map(|&v| f64::from(v)).collect()).unwrap();
        let comb = FeatureFrame::new(
            4,
            3,
            ff.as_slice().iter().zip(gg.as_slice()).map(|(x, y)| a * x + b * y).collect(),
        ).unwrap();
        let lhs = comb.mean_pool();
        let rhs: Vec<f64> = ff.mean_pool().iter().zip(gg.mean_pool()).map(|(x, y)| a * x + b * y).collect();
        prop_assert_eq!(lhs, rhs);
    }

    #[test]
    fn label_is_scale_invariant(seed in any::<u64>(), scale in 1e-3f64..1e3) {
        let geom = ImageGeometry::rgb(6, 5);
        let mut codec = ToyProjectionCodec::new(small_config(), geom).unwrap();
        for i in 0..4 {
            codec.add_labelled_image(format!("l{i}"), &random_image(geom, i)).unwrap();
        }
        let frame = codec.encode(&random_image(geom, seed)).unwrap();
        let scaled = FeatureFrame::new(4, 8, frame.as_slice().iter().map(|v| v * scale).collect()).unwrap();
        prop_assert_eq!(codec.decode_text(&frame).unwrap().text, codec.decode_text(&scaled).unwrap().text);
    }
}
