//! Semantic codec interface and a deterministic stand-in codec.
//!
//! The real system uses a vision-language encoder at the transmitter and
//! text and image generators at the receiver. [`SemanticCodec`] captures that
//! contract: images go in, a fixed-size [`FeatureFrame`] comes out, and both
//! decoders accept any finite frame of that size.
//!
//! [`ToyProjectionCodec`] implements the contract with a seeded linear map
//! whose rows are orthonormal. Every pixel is assigned to exactly one output
//! coefficient through a random permutation, with a random sign and a weight
//! of `1/sqrt(group size)`. Rows have disjoint support, so `P P^T = I` holds
//! exactly and `P^T` is the natural reconstruction. Text decoding pools the
//! query rows, applies a `dim -> k` projection and picks the nearest
//! prototype by cosine similarity.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;

use crate::bcr::ImageGeometry;
use crate::error::{Error, Result};
use crate::feature_frame::{check_geometry, FeatureFrame, DEFAULT_DIM, DEFAULT_N_QUERIES};

/// Default width of the pooled text embedding.
pub const DEFAULT_TEXT_DIM: usize = 64;

/// A `channels x height x width` tensor stored channel-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    geometry: ImageGeometry,
    data: Vec<f64>,
}

impl Image {
    pub fn new(geometry: ImageGeometry, data: Vec<f64>) -> Result<Self> {
        geometry.validate()?;
        if data.len() != geometry.len() {
            return Err(Error::Geometry(format!(
                "{} values supplied for a {geometry} image",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Data("image contains non-finite values".into()));
        }
        Ok(Self { geometry, data })
    }

    pub fn zeros(geometry: ImageGeometry) -> Result<Self> {
        Self::new(geometry, vec![0.0; geometry.len()])
    }

    pub fn geometry(&self) -> ImageGeometry {
        self.geometry
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Pixel at `(c, y, x)`.
    pub fn get(&self, c: usize, y: usize, x: usize) -> f64 {
        let g = self.geometry;
        self.data[(c * g.height + y) * g.width + x]
    }
}

/// Decoded text with the decoder's confidence in it.
#[derive(Debug, Clone, PartialEq)]
pub struct TextEstimate {
    pub text: String,
    pub confidence: f64,
}

pub trait SemanticCodec: Send + Sync {
    /// `(n_queries, dim)` of every frame this codec produces or accepts.
    fn frame_shape(&self) -> (usize, usize);

    fn encode(&self, image: &Image) -> Result<FeatureFrame>;

    fn decode_text(&self, frame: &FeatureFrame) -> Result<TextEstimate>;

    fn decode_image(&self, frame: &FeatureFrame) -> Result<Image>;

    fn check_frame(&self, frame: &FeatureFrame) -> Result<()> {
        let (n, d) = self.frame_shape();
        if frame.n_queries() != n || frame.dim() != d {
            return Err(Error::Geometry(format!(
                "codec expects {n}x{d} frames, got {}x{}",
                frame.n_queries(),
                frame.dim()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ToyCodecConfig {
    pub n_queries: usize,
    pub dim: usize,
    pub text_dim: usize,
    pub seed: u64,
}

impl Default for ToyCodecConfig {
    fn default() -> Self {
        Self {
            n_queries: DEFAULT_N_QUERIES,
            dim: DEFAULT_DIM,
            text_dim: DEFAULT_TEXT_DIM,
            seed: 0x5eed_c0de,
        }
    }
}

/// Sparse orthonormal-row projection from `input_len` to `output_len`.
#[derive(Debug, Clone, PartialEq)]
pub struct SignPoolProjection {
    output_len: usize,
    /// Output coefficient each input element contributes to.
    row_of: Vec<u32>,
    /// Signed weight of each input element in its row.
    weight: Vec<f64>,
}

impl SignPoolProjection {
    pub fn new(input_len: usize, output_len: usize, seed: u64) -> Result<Self> {
        if output_len == 0 || output_len > input_len {
            return Err(Error::Config(format!(
                "cannot project {input_len} values onto {output_len} orthonormal rows"
            )));
        }
        if output_len > u32::MAX as usize {
            return Err(Error::Config("projection too large".into()));
        }
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let mut order: Vec<usize> = (0..input_len).collect();
        order.shuffle(&mut rng);
        let base = input_len / output_len;
        let extra = input_len % output_len;
        let mut row_of = vec![0u32; input_len];
        let mut weight = vec![0.0; input_len];
        for (pos, &j) in order.iter().enumerate() {
            let row = pos % output_len;
            let size = base + usize::from(row < extra);
            let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
            row_of[j] = row as u32;
            weight[j] = sign / (size as f64).sqrt();
        }
        Ok(Self {
            output_len,
            row_of,
            weight,
        })
    }

    pub fn input_len(&self) -> usize {
        self.row_of.len()
    }

    pub fn output_len(&self) -> usize {
        self.output_len
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.output_len];
        for ((v, &r), w) in x.iter().zip(&self.row_of).zip(&self.weight) {
            out[r as usize] += w * v;
        }
        out
    }

    pub fn apply_transpose(&self, y: &[f64]) -> Vec<f64> {
        self.row_of
            .iter()
            .zip(&self.weight)
            .map(|(&r, w)| w * y[r as usize])
            .collect()
    }

    /// Dense row `i`, for inspection and tests.
    pub fn row(&self, i: usize) -> Vec<f64> {
        self.row_of
            .iter()
            .zip(&self.weight)
            .map(|(&r, &w)| if r as usize == i { w } else { 0.0 })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Prototype {
    label: String,
    embedding: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ToyProjectionCodec {
    config: ToyCodecConfig,
    image_geometry: ImageGeometry,
    projection: SignPoolProjection,
    /// Row-major `text_dim x dim`.
    text_projection: Vec<f64>,
    bank: Vec<Prototype>,
}

impl ToyProjectionCodec {
    pub fn new(config: ToyCodecConfig, image_geometry: ImageGeometry) -> Result<Self> {
        check_geometry(config.n_queries, config.dim)?;
        image_geometry.validate()?;
        if config.text_dim == 0 {
            return Err(Error::Config(
                "text projection width must be positive".into(),
            ));
        }
        let projection = SignPoolProjection::new(
            image_geometry.len(),
            config.n_queries * config.dim,
            config.seed,
        )?;
        let mut rng = ChaCha12Rng::seed_from_u64(config.seed ^ 0x7e47_9b0c_1d2e_3f40);
        let norm = 1.0 / (config.text_dim as f64).sqrt();
        let text_projection = (0..config.text_dim * config.dim)
            .map(|_| rng.sample::<f64, _>(StandardNormal) * norm)
            .collect();
        Ok(Self {
            config,
            image_geometry,
            projection,
            text_projection,
            bank: Vec::new(),
        })
    }

    pub fn config(&self) -> &ToyCodecConfig {
        &self.config
    }

    pub fn image_geometry(&self) -> ImageGeometry {
        self.image_geometry
    }

    pub fn projection(&self) -> &SignPoolProjection {
        &self.projection
    }

    pub fn labels(&self) -> impl Iterator<Item = &str> {
        self.bank.iter().map(|p| p.label.as_str())
    }

    /// Pooled and projected text embedding of a frame, before normalization.
    pub fn text_embedding(&self, frame: &FeatureFrame) -> Result<Vec<f64>> {
        self.check_frame(frame)?;
        let pooled = frame.mean_pool();
        Ok(self
            .text_projection
            .chunks_exact(self.config.dim)
            .map(|row| row.iter().zip(&pooled).map(|(a, b)| a * b).sum())
            .collect())
    }

    /// Adds a label whose prototype is `frame`.
    pub fn add_label(&mut self, label: impl Into<String>, frame: &FeatureFrame) -> Result<()> {
        let mut embedding = self.text_embedding(frame)?;
        let norm = embedding.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 || !norm.is_finite() {
            return Err(Error::DegenerateFrame(
                "prototype has no pooled text component".into(),
            ));
        }
        embedding.iter_mut().for_each(|v| *v /= norm);
        self.bank.push(Prototype {
            label: label.into(),
            embedding,
        });
        Ok(())
    }

    /// Encodes `image` and adds it to the bank under `label`.
    pub fn add_labelled_image(&mut self, label: impl Into<String>, image: &Image) -> Result<()> {
        let frame = self.encode(image)?;
        self.add_label(label, &frame)
    }

    fn check_image(&self, image: &Image) -> Result<()> {
        if image.geometry() != self.image_geometry {
            return Err(Error::Geometry(format!(
                "codec is configured for {} images, got {}",
                self.image_geometry,
                image.geometry()
            )));
        }
        Ok(())
    }
}

impl SemanticCodec for ToyProjectionCodec {
    fn frame_shape(&self) -> (usize, usize) {
        (self.config.n_queries, self.config.dim)
    }

    fn encode(&self, image: &Image) -> Result<FeatureFrame> {
        self.check_image(image)?;
        let data = self.projection.apply(image.as_slice());
        FeatureFrame::new(self.config.n_queries, self.config.dim, data)
    }

    fn decode_text(&self, frame: &FeatureFrame) -> Result<TextEstimate> {
        if self.bank.is_empty() {
            return Err(Error::Config("label bank is empty".into()));
        }
        let embedding = self.text_embedding(frame)?;
        let norm = embedding.iter().map(|v| v * v).sum::<f64>().sqrt();
        let mut best = 0;
        let mut best_cos = f64::NEG_INFINITY;
        for (i, proto) in self.bank.iter().enumerate() {
            let cos = if norm > 0.0 && norm.is_finite() {
                proto
                    .embedding
                    .iter()
                    .zip(&embedding)
                    .map(|(a, b)| a * b)
                    .sum::<f64>()
                    / norm
            } else {
                0.0
            };
            if cos > best_cos {
                best_cos = cos;
                best = i;
            }
        }
        Ok(TextEstimate {
            text: self.bank[best].label.clone(),
            confidence: best_cos.clamp(-1.0, 1.0),
        })
    }

    fn decode_image(&self, frame: &FeatureFrame) -> Result<Image> {
        self.check_frame(frame)?;
        Image::new(
            self.image_geometry,
            self.projection.apply_transpose(frame.as_slice()),
        )
    }
}
