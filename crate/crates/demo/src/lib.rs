//! Browser bindings for the link simulator. See `www/index.html`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vlf_link::baseline::{qam16_modulate, run_bit_link, BitStream, Qam16};
use vlf_link::bcr::ImageGeometry;
use vlf_link::channel::{recover, transmit, ChannelConfig, ChannelKind};
use vlf_link::codec::{Image, SemanticCodec, ToyCodecConfig, ToyProjectionCodec};
use vlf_link::feature_frame::FeatureFrame;
use vlf_link::harness::{semantic_trial, DEFAULT_SNR_LIST};
use wasm_bindgen::prelude::*;

/// Demo images are square; 96x96 RGB is the smallest size the default
/// 32x768 frame fits into.
pub const SIDE: usize = 96;

pub const PATTERNS: [&str; 4] = ["stripes", "circle", "checkerboard", "gradient"];

fn channel_kind(name: &str) -> Result<ChannelKind, JsError> {
    name.parse()
        .map_err(|e: vlf_link::Error| JsError::new(&e.to_string()))
}

fn js(e: vlf_link::Error) -> JsError {
    JsError::new(&e.to_string())
}

/// Procedural test pattern, values in `[0, 1]`.
pub fn pattern(index: usize) -> Image {
    let geom = ImageGeometry::rgb(SIDE, SIDE);
    let mut data = vec![0.0; geom.len()];
    let plane = SIDE * SIDE;
    for y in 0..SIDE {
        for x in 0..SIDE {
            let (fx, fy) = (x as f64 / SIDE as f64, y as f64 / SIDE as f64);
            let rgb = match index % PATTERNS.len() {
                0 => {
                    let on = (x / 8) % 2 == 0;
                    if on {
                        [0.9, 0.8, 0.1]
                    } else {
                        [0.1, 0.2, 0.6]
                    }
                }
                1 => {
                    let r = ((fx - 0.5).powi(2) + (fy - 0.5).powi(2)).sqrt();
                    if r < 0.3 {
                        [0.85, 0.1, 0.1]
                    } else {
                        [0.95, 0.95, 0.9]
                    }
                }
                2 => {
                    let on = (x / 12 + y / 12) % 2 == 0;
                    if on {
                        [0.05, 0.05, 0.05]
                    } else {
                        [0.9, 0.9, 0.9]
                    }
                }
                _ => [fx, 0.5 * (fx + fy), 1.0 - fy],
            };
            for (c, v) in rgb.into_iter().enumerate() {
                data[c * plane + y * SIDE + x] = v;
            }
        }
    }
    Image::new(geom, data).expect("pattern geometry")
}

/// RGBA bytes for a canvas `ImageData`.
pub fn to_rgba(image: &Image) -> Vec<u8> {
    let g = image.geometry();
    let mut out = Vec::with_capacity(g.height * g.width * 4);
    for y in 0..g.height {
        for x in 0..g.width {
            for c in 0..3 {
                let v = image.get(c.min(g.channels - 1), y, x);
                out.push((v.clamp(0.0, 1.0) * 255.0).round() as u8);
            }
            out.push(255);
        }
    }
    out
}

/// Equalized 16-QAM symbols after one channel pass.
#[wasm_bindgen]
pub struct Constellation {
    points: Vec<f64>,
    ber: f64,
}

#[wasm_bindgen]
impl Constellation {
    /// Interleaved `re, im, correct` triples; `correct` is 1 when the hard
    /// decision recovers the transmitted label.
    #[wasm_bindgen(getter)]
    pub fn points(&self) -> Vec<f64> {
        self.points.clone()
    }

    /// Uncoded bit error rate of the frame.
    #[wasm_bindgen(getter)]
    pub fn ber(&self) -> f64 {
        self.ber
    }
}

/// Sends `n_symbols` random 16-QAM symbols through the channel.
#[wasm_bindgen]
pub fn constellation(
    snr_db: f64,
    channel: &str,
    n_symbols: usize,
    seed: u32,
) -> Result<Constellation, JsError> {
    let kind = channel_kind(channel)?;
    let mut rng = ChaCha8Rng::seed_from_u64(u64::from(seed));
    let bits = BitStream::new(
        (0..4 * n_symbols.max(1))
            .map(|_| rng.random_range(0..2u8))
            .collect(),
    );
    let (tx, _) = qam16_modulate(&bits);
    let rx = transmit(&tx, &ChannelConfig::new(kind, snr_db, u64::from(seed))).map_err(js)?;
    let eq = recover(&rx).map_err(js)?;
    let qam = Qam16::new();
    let mut points = Vec::with_capacity(3 * tx.len());
    let mut bit_errors = 0u32;
    for (sent, got) in tx.symbols().iter().zip(eq.frame.symbols()) {
        let (a, b) = (qam.decide(*sent), qam.decide(*got));
        bit_errors += (a ^ b).count_ones();
        points.extend([got.re, got.im, f64::from(u8::from(a == b))]);
    }
    Ok(Constellation {
        points,
        ber: f64::from(bit_errors) / bits.len() as f64,
    })
}

/// Outcome of one semantic image transmission.
#[wasm_bindgen]
pub struct ImageLink {
    rgba: Vec<u8>,
    cosine: f64,
    psnr_db: f64,
    label: String,
    correct: bool,
}

#[wasm_bindgen]
impl ImageLink {
    /// Reconstructed image as RGBA bytes, `SIDE x SIDE`.
    #[wasm_bindgen(getter)]
    pub fn rgba(&self) -> Vec<u8> {
        self.rgba.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn cosine(&self) -> f64 {
        self.cosine
    }

    #[wasm_bindgen(getter)]
    pub fn psnr_db(&self) -> f64 {
        self.psnr_db
    }

    #[wasm_bindgen(getter)]
    pub fn label(&self) -> String {
        self.label.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn correct(&self) -> bool {
        self.correct
    }
}

/// Toy codec loaded with the demo patterns.
#[wasm_bindgen]
pub struct LinkDemo {
    codec: ToyProjectionCodec,
    images: Vec<Image>,
    clean: Vec<FeatureFrame>,
}

#[wasm_bindgen]
impl LinkDemo {
    #[wasm_bindgen(constructor)]
    pub fn new() -> Result<LinkDemo, JsError> {
        let geom = ImageGeometry::rgb(SIDE, SIDE);
        let mut codec = ToyProjectionCodec::new(ToyCodecConfig::default(), geom).map_err(js)?;
        let images: Vec<Image> = (0..PATTERNS.len()).map(pattern).collect();
        for (name, img) in PATTERNS.iter().zip(&images) {
            codec.add_labelled_image(*name, img).map_err(js)?;
        }
        let clean = images
            .iter()
            .map(|img| codec.encode(img))
            .collect::<Result<_, _>>()
            .map_err(js)?;
        Ok(LinkDemo {
            codec,
            images,
            clean,
        })
    }

    pub fn side(&self) -> usize {
        SIDE
    }

    pub fn pattern_names(&self) -> Vec<String> {
        PATTERNS.iter().map(|s| s.to_string()).collect()
    }

    /// Original pattern as RGBA bytes.
    pub fn original(&self, index: usize) -> Vec<u8> {
        to_rgba(&self.images[index % self.images.len()])
    }

    /// Encodes a pattern, sends its feature frame over the channel and decodes
    /// both a label and an image.
    pub fn transmit(
        &self,
        index: usize,
        snr_db: f64,
        channel: &str,
        seed: u32,
    ) -> Result<ImageLink, JsError> {
        let i = index % self.images.len();
        let ch = ChannelConfig::new(channel_kind(channel)?, snr_db, u64::from(seed));
        let (report, _, recon, text) = semantic_trial(
            &self.codec,
            &self.images[i],
            &self.clean[i],
            PATTERNS[i],
            &ch,
            1.0,
        )
        .map_err(js)?;
        Ok(ImageLink {
            rgba: to_rgba(&recon),
            cosine: report.feature_cosine.unwrap_or(f64::NAN),
            psnr_db: report.image_psnr_db.unwrap_or(f64::NAN),
            correct: report.label_correct == Some(true),
            label: text,
        })
    }

    /// Mean curves over the default SNR grid, flattened as rows of
    /// `snr_db, feature_cosine, label_accuracy, baseline_ber_post_fec`.
    pub fn curves(&self, channel: &str, trials: usize, seed: u32) -> Result<Vec<f64>, JsError> {
        let kind = channel_kind(channel)?;
        let trials = trials.max(1);
        let mut rng = ChaCha8Rng::seed_from_u64(u64::from(seed));
        let bits = BitStream::new((0..4 * 1024).map(|_| rng.random_range(0..2u8)).collect());
        let mut out = Vec::with_capacity(4 * DEFAULT_SNR_LIST.len());
        for &snr in &DEFAULT_SNR_LIST {
            let (mut cos, mut acc, mut ber) = (0.0, 0.0, 0.0);
            for t in 0..trials {
                let i = t % self.images.len();
                let ch = ChannelConfig::new(kind, snr, u64::from(seed) + t as u64);
                let (report, ..) = semantic_trial(
                    &self.codec,
                    &self.images[i],
                    &self.clean[i],
                    PATTERNS[i],
                    &ch,
                    1.0,
                )
                .map_err(js)?;
                cos += report.feature_cosine.unwrap_or(0.0);
                acc += f64::from(u8::from(report.label_correct == Some(true)));
                ber += run_bit_link(&bits, &ch, true).map_err(js)?.ber_post_fec;
            }
            let n = trials as f64;
            out.extend([snr, cos / n, acc / n, ber / n]);
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn patterns_are_distinct_and_decodable() {
        let demo = LinkDemo::new().unwrap();
        for (i, (frame, name)) in demo.clean.iter().zip(PATTERNS).enumerate() {
            assert_eq!(demo.codec.decode_text(frame).unwrap().text, name);
            assert_eq!(demo.original(i).len(), SIDE * SIDE * 4);
        }
        let link = demo.transmit(1, 1e300, "rayleigh", 3).unwrap();
        assert!(link.correct);
        assert!((link.cosine - 1.0).abs() < 1e-12);
    }

    #[test]
    fn constellation_is_clean_without_noise() {
        let c = constellation(1e300, "awgn", 256, 1).unwrap();
        assert_eq!(c.ber(), 0.0);
        assert_eq!(c.points.len(), 3 * 256);
        let noisy = constellation(0.0, "awgn", 4096, 1).unwrap();
        assert!(noisy.ber() > 0.1);
    }

    #[test]
    fn curves_cover_the_grid() {
        let demo = LinkDemo::new().unwrap();
        let v = demo.curves("awgn", 4, 9).unwrap();
        assert_eq!(v.len(), 4 * DEFAULT_SNR_LIST.len());
        let cos: Vec<f64> = v.chunks(4).map(|r| r[1]).collect();
        assert!(cos.last() > cos.first());
    }
}
