//! Per-trial link metrics and the hook for externally computed scores.

use std::collections::HashMap;
use std::fmt;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::str::FromStr;
use std::sync::{Arc, Mutex};

use crate::codec::Image;
use crate::error::{Error, Result};
use crate::feature_frame::FeatureFrame;

/// PSNR reported for a bit-exact reconstruction, keeping the field finite.
pub const PSNR_CAP_DB: f64 = 200.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Pipeline {
    Semantic,
    Baseline,
}

impl fmt::Display for Pipeline {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Pipeline::Semantic => "semantic",
            Pipeline::Baseline => "baseline",
        })
    }
}

impl FromStr for Pipeline {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "semantic" => Ok(Pipeline::Semantic),
            "baseline" => Ok(Pipeline::Baseline),
            other => Err(Error::Config(format!("unknown pipeline `{other}`"))),
        }
    }
}

/// Outcome of one trial of one pipeline. Fields that do not apply to the
/// pipeline are `None`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkTrialReport {
    pub pipeline: Pipeline,
    pub snr_db: f64,
    pub seed: u64,
    pub feature_mse: Option<f64>,
    pub feature_cosine: Option<f64>,
    pub image_mse: Option<f64>,
    pub image_psnr_db: Option<f64>,
    pub label: Option<String>,
    pub label_correct: Option<bool>,
    pub bleu: Option<f64>,
    pub ber_pre_fec: Option<f64>,
    pub ber_post_fec: Option<f64>,
    pub cer: Option<f64>,
    pub erasures: usize,
    pub received_text: Option<String>,
    /// Values from registered external scorers, in registration order.
    pub external: Vec<(String, Option<f64>)>,
    pub metric_failed: bool,
}

impl LinkTrialReport {
    pub fn new(pipeline: Pipeline, snr_db: f64, seed: u64) -> Self {
        Self {
            pipeline,
            snr_db,
            seed,
            feature_mse: None,
            feature_cosine: None,
            image_mse: None,
            image_psnr_db: None,
            label: None,
            label_correct: None,
            bleu: None,
            ber_pre_fec: None,
            ber_post_fec: None,
            cer: None,
            erasures: 0,
            received_text: None,
            external: Vec::new(),
            metric_failed: false,
        }
    }

    /// Checks that every populated metric is finite and in range.
    pub fn validate(&self) -> Result<()> {
        let unit = [
            ("bleu", self.bleu),
            ("ber_pre_fec", self.ber_pre_fec),
            ("ber_post_fec", self.ber_post_fec),
            ("cer", self.cer),
        ];
        for (name, v) in unit {
            if let Some(v) = v {
                if !(0.0..=1.0).contains(&v) {
                    return Err(Error::Data(format!("{name} = {v} is outside [0, 1]")));
                }
            }
        }
        if let Some(c) = self.feature_cosine {
            if !(-1.0 - 1e-12..=1.0 + 1e-12).contains(&c) {
                return Err(Error::Data(format!(
                    "feature_cosine = {c} is outside [-1, 1]"
                )));
            }
        }
        for (name, v) in [
            ("feature_mse", self.feature_mse),
            ("image_mse", self.image_mse),
            ("image_psnr_db", self.image_psnr_db),
        ] {
            if let Some(v) = v {
                if !v.is_finite() {
                    return Err(Error::Data(format!("{name} is not finite")));
                }
            }
        }
        Ok(())
    }
}

/// Lowercase whitespace tokenization used for every BLEU computation.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split_whitespace().map(str::to_lowercase).collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BleuScore {
    pub score: f64,
    /// Set when the candidate had no tokens; the score is then 0.
    pub empty_candidate: bool,
}

/// Sentence BLEU without smoothing.
///
/// The n-gram order is capped at the candidate length, so a short but exact
/// candidate is not forced to zero. Any zero precision among the included
/// orders gives a score of 0.
pub fn bleu<S: AsRef<str>>(candidate: &[S], reference: &[S], max_n: usize) -> BleuScore {
    let cand: Vec<&str> = candidate.iter().map(AsRef::as_ref).collect();
    let refs: Vec<&str> = reference.iter().map(AsRef::as_ref).collect();
    if cand.is_empty() {
        return BleuScore {
            score: 0.0,
            empty_candidate: true,
        };
    }
    let order = max_n.min(cand.len());
    if order == 0 {
        return BleuScore {
            score: 0.0,
            empty_candidate: false,
        };
    }
    let mut log_sum = 0.0;
    for n in 1..=order {
        let mut ref_counts: HashMap<&[&str], usize> = HashMap::new();
        for gram in refs.windows(n) {
            *ref_counts.entry(gram).or_default() += 1;
        }
        let mut cand_counts: HashMap<&[&str], usize> = HashMap::new();
        for gram in cand.windows(n) {
            *cand_counts.entry(gram).or_default() += 1;
        }
        let clipped: usize = cand_counts
            .iter()
            .map(|(gram, &c)| c.min(ref_counts.get(gram).copied().unwrap_or(0)))
            .sum();
        if clipped == 0 {
            return BleuScore {
                score: 0.0,
                empty_candidate: false,
            };
        }
        let total = cand.len() + 1 - n;
        log_sum += (clipped as f64 / total as f64).ln();
    }
    let precision = (log_sum / order as f64).exp();
    let brevity = if cand.len() < refs.len() {
        (1.0 - refs.len() as f64 / cand.len() as f64).exp()
    } else {
        1.0
    };
    BleuScore {
        score: (precision * brevity).clamp(0.0, 1.0),
        empty_candidate: false,
    }
}

/// BLEU-4 on two raw strings after [`tokenize`].
pub fn bleu_text(candidate: &str, reference: &str) -> BleuScore {
    bleu(&tokenize(candidate), &tokenize(reference), 4)
}

/// Cosine of the flattened frames.
pub fn feature_cosine(a: &FeatureFrame, b: &FeatureFrame) -> Result<f64> {
    if !a.same_geometry(b) {
        return Err(Error::Geometry(format!(
            "{}x{} vs {}x{}",
            a.n_queries(),
            a.dim(),
            b.n_queries(),
            b.dim()
        )));
    }
    let (na, nb) = (a.norm(), b.norm());
    if na == 0.0 || nb == 0.0 {
        return Err(Error::DegenerateFrame("cosine of an all-zero frame".into()));
    }
    let dot: f64 = a
        .as_slice()
        .iter()
        .zip(b.as_slice())
        .map(|(x, y)| x * y)
        .sum();
    Ok((dot / (na * nb)).clamp(-1.0, 1.0))
}

/// Per-element mean squared error between two same-shaped frames.
pub fn feature_mse(a: &FeatureFrame, b: &FeatureFrame) -> Result<f64> {
    if !a.same_geometry(b) {
        return Err(Error::Geometry("frame shapes differ".into()));
    }
    Ok(mse(a.as_slice(), b.as_slice()))
}

pub(crate) fn mse(a: &[f64], b: &[f64]) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / a.len() as f64
}

/// Image MSE and PSNR for unit peak value.
pub fn image_fidelity(original: &Image, reconstructed: &Image) -> Result<(f64, f64)> {
    if original.geometry() != reconstructed.geometry() {
        return Err(Error::Geometry(format!(
            "image {} vs {}",
            original.geometry(),
            reconstructed.geometry()
        )));
    }
    let err = mse(original.as_slice(), reconstructed.as_slice());
    let psnr = if err > 0.0 {
        (-10.0 * err.log10()).min(PSNR_CAP_DB)
    } else {
        PSNR_CAP_DB
    };
    Ok((err, psnr))
}

/// Fraction of differing bit positions.
pub fn ber(sent: &[u8], received: &[u8]) -> Result<f64> {
    if sent.len() != received.len() {
        return Err(Error::Framing(format!(
            "cannot compare {} sent bits with {} received",
            sent.len(),
            received.len()
        )));
    }
    if sent.is_empty() {
        return Ok(0.0);
    }
    let errors = sent.iter().zip(received).filter(|(a, b)| a != b).count();
    Ok(errors as f64 / sent.len() as f64)
}

/// Positional character mismatches over the longer length.
pub fn character_error_rate(sent: &str, received: &str) -> f64 {
    let a: Vec<char> = sent.chars().collect();
    let b: Vec<char> = received.chars().collect();
    let len = a.len().max(b.len());
    if len == 0 {
        return 0.0;
    }
    let same = a.iter().zip(&b).filter(|(x, y)| x == y).count();
    (len - same) as f64 / len as f64
}

/// What an external scorer sees for one trial.
#[derive(Debug, Clone, Copy)]
pub struct ScoringInput<'a> {
    pub pipeline: Pipeline,
    pub snr_db: f64,
    pub reference_text: Option<&'a str>,
    pub candidate_text: Option<&'a str>,
    pub original_image: Option<&'a Image>,
    pub reconstructed_image: Option<&'a Image>,
}

pub type ScorerFn = dyn Fn(&ScoringInput<'_>) -> std::result::Result<f64, String> + Send + Sync;

#[derive(Clone)]
enum Scorer {
    Concurrent(Arc<ScorerFn>),
    Serialized(Arc<Mutex<Box<ScorerFn>>>),
}

/// Named scorers evaluated after each trial, such as neural perceptual or
/// semantic-similarity models served elsewhere.
#[derive(Clone, Default)]
pub struct MetricRegistry {
    scorers: Vec<(String, Scorer)>,
}

impl fmt::Debug for MetricRegistry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.names()).finish()
    }
}

impl MetricRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register_external_metric<F>(&mut self, name: &str, scorer: F) -> Result<()>
    where
        F: Fn(&ScoringInput<'_>) -> std::result::Result<f64, String> + Send + Sync + 'static,
    {
        self.insert(name, Scorer::Concurrent(Arc::new(scorer)))
    }

    /// Registers a scorer that must not be called from several threads at
    /// once. Calls are serialized behind a lock.
    pub fn register_single_threaded<F>(&mut self, name: &str, scorer: F) -> Result<()>
    where
        F: Fn(&ScoringInput<'_>) -> std::result::Result<f64, String> + Send + Sync + 'static,
    {
        self.insert(
            name,
            Scorer::Serialized(Arc::new(Mutex::new(Box::new(scorer)))),
        )
    }

    fn insert(&mut self, name: &str, scorer: Scorer) -> Result<()> {
        let valid = !name.is_empty()
            && name
                .chars()
                .all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-');
        if !valid {
            return Err(Error::Config(format!(
                "metric name `{name}` must be nonempty ASCII alphanumerics, '_' or '-'"
            )));
        }
        if self.scorers.iter().any(|(n, _)| n == name) {
            return Err(Error::Config(format!(
                "metric `{name}` is already registered"
            )));
        }
        self.scorers.push((name.to_owned(), scorer));
        Ok(())
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.scorers.iter().map(|(n, _)| n.as_str())
    }

    pub fn is_empty(&self) -> bool {
        self.scorers.is_empty()
    }

    /// Runs every scorer. A scorer that errors or panics leaves its column
    /// empty and marks the report as metric-failed.
    pub fn score_into(&self, input: &ScoringInput<'_>, report: &mut LinkTrialReport) {
        for (name, scorer) in &self.scorers {
            let outcome = catch_unwind(AssertUnwindSafe(|| match scorer {
                Scorer::Concurrent(f) => f(input),
                Scorer::Serialized(f) => {
                    let guard = f.lock().unwrap_or_else(|p| p.into_inner());
                    guard(input)
                }
            }));
            let value = match outcome {
                Ok(Ok(v)) if v.is_finite() => Some(v),
                Ok(Ok(v)) => {
                    log::warn!("metric {name} returned non-finite value {v}");
                    None
                }
                Ok(Err(msg)) => {
                    log::warn!("metric {name} failed: {msg}");
                    None
                }
                Err(_) => {
                    log::warn!("metric {name} panicked");
                    None
                }
            };
            report.metric_failed |= value.is_none();
            report.external.push((name.clone(), value));
        }
    }
}
