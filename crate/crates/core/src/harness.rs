//! Monte-Carlo SNR sweeps over the semantic and baseline pipelines.
//!
//! Every `(snr, trial, input)` cell gets a seed derived from a SHA-256 digest
//! of `(base_seed, snr index, trial, input id)`. Both pipelines in a cell use
//! that seed, so they see the same channel draws for the symbols they share.
//! Rows are sorted by `(snr index, trial, input, pipeline)` before writing,
//! which makes the CSV independent of scheduling.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use sha2::{Digest, Sha256};

use crate::baseline::baseline_pipeline;
use crate::channel::{recover, transmit, ChannelConfig, ChannelKind, Csi};
use crate::codec::{Image, SemanticCodec, ToyCodecConfig, ToyProjectionCodec};
use crate::error::{Error, Result};
use crate::feature_frame::{pack_features, unpack_features, FeatureFrame, DEFAULT_TARGET_POWER};
use crate::metrics::{
    bleu_text, feature_cosine, feature_mse, image_fidelity, LinkTrialReport, MetricRegistry,
    Pipeline, ScoringInput,
};

/// SNR points in dB: -5 to 10 in 2.5 dB steps.
pub const DEFAULT_SNR_LIST: [f64; 7] = [-5.0, -2.5, 0.0, 2.5, 5.0, 7.5, 10.0];
pub const DEFAULT_TRIALS: usize = 200;
pub const DEFAULT_BASE_SEED: u64 = 2024;
/// Environment variable naming the default output directory.
pub const OUTPUT_DIR_ENV: &str = "VLFSIM_OUTPUT_DIR";

/// Version written in the first column of every sweep CSV row.
pub const CSV_SCHEMA_VERSION: u32 = 1;
/// Fixed leading columns of the sweep CSV. External metric columns follow.
pub const CSV_COLUMNS: [&str; 20] = [
    "schema_version",
    "pipeline",
    "snr_db",
    "trial",
    "input_id",
    "seed",
    "channel",
    "csi",
    "status",
    "feature_mse",
    "feature_cosine",
    "image_mse",
    "image_psnr_db",
    "label",
    "label_correct",
    "bleu",
    "ber_pre_fec",
    "ber_post_fec",
    "cer",
    "erasures",
];

/// Numeric columns that `plot-data` turns into series.
const SERIES_COLUMNS: [&str; 10] = [
    "feature_mse",
    "feature_cosine",
    "image_mse",
    "image_psnr_db",
    "label_correct",
    "bleu",
    "ber_pre_fec",
    "ber_post_fec",
    "cer",
    "erasures",
];

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CodecChoice {
    Toy,
    /// External codec process speaking the bridge protocol over stdio.
    Bridge {
        command: String,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    pub snr_list: Vec<f64>,
    pub trials: usize,
    pub base_seed: u64,
    pub channel: ChannelKind,
    pub csi: Csi,
    pub codec: CodecChoice,
    pub pipelines: Vec<Pipeline>,
    pub output: Option<PathBuf>,
    pub target_power: f64,
    pub toy: ToyCodecConfig,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            snr_list: DEFAULT_SNR_LIST.to_vec(),
            trials: DEFAULT_TRIALS,
            base_seed: DEFAULT_BASE_SEED,
            channel: ChannelKind::Awgn,
            csi: Csi::Perfect,
            codec: CodecChoice::Toy,
            pipelines: vec![Pipeline::Semantic, Pipeline::Baseline],
            output: None,
            target_power: DEFAULT_TARGET_POWER,
            toy: ToyCodecConfig::default(),
        }
    }
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        if self.snr_list.is_empty() {
            return Err(Error::Config("snr_list must not be empty".into()));
        }
        if let Some(s) = self.snr_list.iter().find(|s| !s.is_finite()) {
            return Err(Error::Config(format!("SNR {s} is not finite")));
        }
        if self.trials == 0 {
            return Err(Error::Config("trials must be at least 1".into()));
        }
        if self.pipelines.is_empty() {
            return Err(Error::Config("no pipelines selected".into()));
        }
        if !(self.target_power.is_finite() && self.target_power > 0.0) {
            return Err(Error::Config("target_power must be positive".into()));
        }
        if matches!(&self.codec, CodecChoice::Bridge { command } if command.trim().is_empty()) {
            return Err(Error::Config("bridge codec needs bridge_command".into()));
        }
        Ok(())
    }

    /// Parses the flat `key = value` config format. Blank lines and lines
    /// starting with `#` are ignored; unknown keys are rejected.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        let mut bridge_command = None;
        let mut codec_name = None;
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("line {}: expected `key = value`", lineno + 1))
            })?;
            cfg.set(
                key.trim(),
                value.trim(),
                &mut codec_name,
                &mut bridge_command,
            )
            .map_err(|e| Error::Config(format!("line {}: {e}", lineno + 1)))?;
        }
        cfg.codec = resolve_codec(codec_name.as_deref(), bridge_command)?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// Applies one setting, as from a config line or command-line override.
    pub fn apply(&mut self, key: &str, value: &str) -> Result<()> {
        let (mut codec_name, mut bridge) = match &self.codec {
            CodecChoice::Toy => (None, None),
            CodecChoice::Bridge { command } => (Some("bridge".to_string()), Some(command.clone())),
        };
        self.set(key, value, &mut codec_name, &mut bridge)?;
        self.codec = resolve_codec(codec_name.as_deref(), bridge)?;
        Ok(())
    }

    fn set(
        &mut self,
        key: &str,
        value: &str,
        codec_name: &mut Option<String>,
        bridge_command: &mut Option<String>,
    ) -> Result<()> {
        match key {
            "snr_list" => self.snr_list = parse_list(value)?,
            "trials" => self.trials = parse_num(key, value)?,
            "base_seed" => self.base_seed = parse_num(key, value)?,
            "channel" => self.channel = value.parse()?,
            "csi" => self.csi = value.parse()?,
            "codec" => *codec_name = Some(value.to_ascii_lowercase()),
            "bridge_command" => *bridge_command = Some(value.to_string()),
            "pipelines" => {
                self.pipelines = value
                    .split(',')
                    .filter(|s| !s.trim().is_empty())
                    .map(Pipeline::from_str)
                    .collect::<Result<_>>()?;
                self.pipelines.sort();
                self.pipelines.dedup();
            }
            "output" => self.output = Some(PathBuf::from(value)),
            "target_power" => self.target_power = parse_num(key, value)?,
            "n_queries" => self.toy.n_queries = parse_num(key, value)?,
            "dim" => self.toy.dim = parse_num(key, value)?,
            "text_dim" => self.toy.text_dim = parse_num(key, value)?,
            "codec_seed" => self.toy.seed = parse_num(key, value)?,
            other => return Err(Error::Config(format!("unknown key `{other}`"))),
        }
        Ok(())
    }
}

fn resolve_codec(name: Option<&str>, bridge_command: Option<String>) -> Result<CodecChoice> {
    match name {
        None | Some("toy") => Ok(CodecChoice::Toy),
        Some("bridge") => Ok(CodecChoice::Bridge {
            command: bridge_command.unwrap_or_default(),
        }),
        Some(other) => Err(Error::Config(format!("unknown codec `{other}`"))),
    }
}

fn parse_num<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("invalid value `{value}` for {key}")))
}

/// Comma-separated list of reals.
pub fn parse_list(value: &str) -> Result<Vec<f64>> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse_num("snr_list", s))
        .collect()
}

/// Stable seed for one sweep cell.
pub fn derive_seed(base_seed: u64, snr_index: usize, trial: usize, input_id: &str) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(base_seed.to_le_bytes());
    hasher.update((snr_index as u64).to_le_bytes());
    hasher.update((trial as u64).to_le_bytes());
    hasher.update(input_id.as_bytes());
    let digest = hasher.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("digest is 32 bytes"))
}

/// One input: an optional image and the caption used as reference text.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub id: String,
    pub image: Option<Image>,
    pub caption: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Dataset {
    pub samples: Vec<Sample>,
    /// Inputs that were skipped, with the reason.
    pub warnings: Vec<String>,
}

impl Dataset {
    pub fn new(samples: Vec<Sample>) -> Self {
        Self {
            samples,
            warnings: Vec::new(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Adds one text-only sample per nonempty line.
    pub fn add_texts(&mut self, text: &str) {
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if !line.is_empty() {
                self.samples.push(Sample {
                    id: format!("text-{:04}", i + 1),
                    image: None,
                    caption: line.to_string(),
                });
            }
        }
    }

    /// Loads every raster file in `dir`, in name order. Captions come from
    /// `captions.txt` in the same directory (`file<TAB>caption` per line),
    /// falling back to the file stem with `_` and `-` read as spaces. Images
    /// whose geometry differs from the first one are skipped.
    #[cfg(feature = "raster")]
    pub fn load_images(&mut self, dir: &Path) -> Result<()> {
        use crate::raster::{is_raster_path, load_raster};

        let captions = match std::fs::read_to_string(dir.join("captions.txt")) {
            Ok(text) => parse_captions(&text),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => BTreeMap::new(),
            Err(e) => return Err(e.into()),
        };
        let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| is_raster_path(p))
            .collect();
        paths.sort();
        let mut geometry = self
            .samples
            .iter()
            .find_map(|s| s.image.as_ref().map(Image::geometry));
        for path in paths {
            let name = path
                .file_name()
                .and_then(|n| n.to_str())
                .unwrap_or_default()
                .to_string();
            let image = match load_raster(&path) {
                Ok(img) => img,
                Err(e) => {
                    log::warn!("skipping {}: {e}", path.display());
                    self.warnings.push(format!("{name}: {e}"));
                    continue;
                }
            };
            match geometry {
                Some(g) if g != image.geometry() => {
                    let msg = format!("{name}: geometry {} differs from {g}", image.geometry());
                    log::warn!("skipping {msg}");
                    self.warnings.push(msg);
                    continue;
                }
                _ => geometry = Some(image.geometry()),
            }
            let caption = captions.get(&name).cloned().unwrap_or_else(|| {
                let stem = path
                    .file_stem()
                    .and_then(|s| s.to_str())
                    .unwrap_or_default();
                stem.replace(['_', '-'], " ")
            });
            self.samples.push(Sample {
                id: name,
                image: Some(image),
                caption,
            });
        }
        Ok(())
    }
}

/// Parses `file<TAB>caption` lines.
pub fn parse_captions(text: &str) -> BTreeMap<String, String> {
    text.lines()
        .filter_map(|l| l.split_once('\t'))
        .map(|(f, c)| (f.trim().to_string(), c.trim().to_string()))
        .collect()
}

/// Builds the toy codec for the dataset's image geometry, with one bank
/// entry per image sample.
pub fn build_toy_codec(
    cfg: &ToyCodecConfig,
    dataset: &Dataset,
) -> Result<Option<ToyProjectionCodec>> {
    let Some(first) = dataset.samples.iter().find_map(|s| s.image.as_ref()) else {
        return Ok(None);
    };
    let mut codec = ToyProjectionCodec::new(*cfg, first.geometry())?;
    for sample in &dataset.samples {
        if let Some(img) = &sample.image {
            codec.add_labelled_image(sample.caption.clone(), img)?;
        }
    }
    Ok(Some(codec))
}

/// A report plus the coordinates that place it in the sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub snr_index: usize,
    pub trial: usize,
    pub input_index: usize,
    pub input_id: String,
    pub channel: ChannelKind,
    pub csi: Csi,
    pub report: LinkTrialReport,
    /// Set when the pipeline itself returned an error.
    pub error: Option<String>,
}

impl SweepRow {
    pub fn status(&self) -> &'static str {
        if self.error.is_some() {
            "failed"
        } else if self.report.metric_failed {
            "metric-failed"
        } else {
            "ok"
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub pipeline: Pipeline,
    pub snr_db: f64,
    pub metric: String,
    pub count: usize,
    pub mean: f64,
    pub stderr: f64,
}

#[derive(Debug, Clone)]
pub struct SweepOutcome {
    pub rows: Vec<SweepRow>,
    pub metric_names: Vec<String>,
    pub summary: Vec<SummaryRow>,
    pub failed_trials: usize,
    pub input_warnings: Vec<String>,
}

impl SweepOutcome {
    /// True when nothing failed fatally and no input was skipped.
    pub fn success(&self) -> bool {
        self.failed_trials == 0 && self.input_warnings.is_empty()
    }

    pub fn to_csv(&self) -> Result<Vec<u8>> {
        write_sweep_csv(&self.rows, &self.metric_names)
    }

    /// Human-readable `mean ± stderr` table.
    pub fn summary_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<9} {:>7} {:<15} {:>6} {:>12} {:>10}",
            "pipeline", "snr_db", "metric", "n", "mean", "stderr"
        );
        for row in &self.summary {
            let _ = writeln!(
                out,
                "{:<9} {:>7} {:<15} {:>6} {:>12.6} {:>10.6}",
                row.pipeline, row.snr_db, row.metric, row.count, row.mean, row.stderr
            );
        }
        out
    }
}

/// Per-trial semantic link: encode, pack, channel, recover, unpack, decode.
pub fn semantic_trial(
    codec: &dyn SemanticCodec,
    image: &Image,
    clean: &FeatureFrame,
    caption: &str,
    channel: &ChannelConfig,
    target_power: f64,
) -> Result<(LinkTrialReport, FeatureFrame, Image, String)> {
    let (tx, record) = pack_features(clean, target_power)?;
    let rx = transmit(&tx, channel)?;
    let eq = recover(&rx)?;
    let received = unpack_features(&eq.frame, &record)?;

    let mut report = LinkTrialReport::new(Pipeline::Semantic, channel.snr_db, channel.seed);
    report.erasures = eq.erasures;
    report.feature_mse = Some(feature_mse(clean, &received)?);
    report.feature_cosine = feature_cosine(clean, &received).ok();
    let text = codec.decode_text(&received)?;
    report.label_correct = Some(text.text == caption);
    report.bleu = Some(bleu_text(&text.text, caption).score);
    report.label = Some(text.text.clone());
    let reconstructed = codec.decode_image(&received)?;
    let (mse, psnr) = image_fidelity(image, &reconstructed)?;
    report.image_mse = Some(mse);
    report.image_psnr_db = Some(psnr);
    report.received_text = Some(text.text.clone());
    Ok((report, received, reconstructed, text.text))
}

struct Job {
    snr_index: usize,
    trial: usize,
    input_index: usize,
}

/// Runs the configured pipelines over every `(snr, trial, input)` cell.
pub fn run_sweep(
    cfg: &SweepConfig,
    dataset: &Dataset,
    codec: Option<&dyn SemanticCodec>,
    metrics: &MetricRegistry,
) -> Result<SweepOutcome> {
    cfg.validate()?;
    if dataset.is_empty() {
        return Err(Error::Config("no usable inputs".into()));
    }
    let wants_semantic = cfg.pipelines.contains(&Pipeline::Semantic);
    if wants_semantic && dataset.samples.iter().any(|s| s.image.is_some()) && codec.is_none() {
        return Err(Error::Config("semantic pipeline needs a codec".into()));
    }

    // clean features depend only on the input
    let mut clean: Vec<Option<std::result::Result<FeatureFrame, String>>> = Vec::new();
    for sample in &dataset.samples {
        clean.push(match (&sample.image, codec) {
            (Some(img), Some(c)) if wants_semantic => {
                Some(c.encode(img).map_err(|e| e.to_string()))
            }
            _ => None,
        });
    }

    let jobs: Vec<Job> = (0..cfg.snr_list.len())
        .flat_map(|snr_index| {
            (0..cfg.trials).flat_map(move |trial| {
                (0..dataset.samples.len()).map(move |input_index| Job {
                    snr_index,
                    trial,
                    input_index,
                })
            })
        })
        .collect();

    let run_job = |job: &Job| -> Vec<SweepRow> {
        let sample = &dataset.samples[job.input_index];
        let snr_db = cfg.snr_list[job.snr_index];
        let seed = derive_seed(cfg.base_seed, job.snr_index, job.trial, &sample.id);
        let channel = ChannelConfig::new(cfg.channel, snr_db, seed).with_csi(cfg.csi);
        let mut rows = Vec::new();
        for &pipeline in &cfg.pipelines {
            let outcome = match pipeline {
                Pipeline::Semantic => {
                    let (Some(image), Some(codec), Some(frame)) =
                        (&sample.image, codec, &clean[job.input_index])
                    else {
                        continue;
                    };
                    frame
                        .clone()
                        .map_err(Error::Data)
                        .and_then(|frame| {
                            semantic_trial(
                                codec,
                                image,
                                &frame,
                                &sample.caption,
                                &channel,
                                cfg.target_power,
                            )
                        })
                        .map(|(mut report, _, recon, text)| {
                            metrics.score_into(
                                &ScoringInput {
                                    pipeline,
                                    snr_db,
                                    reference_text: Some(&sample.caption),
                                    candidate_text: Some(&text),
                                    original_image: Some(image),
                                    reconstructed_image: Some(&recon),
                                },
                                &mut report,
                            );
                            report
                        })
                }
                Pipeline::Baseline => baseline_pipeline(&sample.caption, &channel).map(|out| {
                    let mut report = out.report;
                    metrics.score_into(
                        &ScoringInput {
                            pipeline,
                            snr_db,
                            reference_text: Some(&sample.caption),
                            candidate_text: Some(&out.received_text),
                            original_image: None,
                            reconstructed_image: None,
                        },
                        &mut report,
                    );
                    report
                }),
            };
            let (report, error) = match outcome.and_then(|r| r.validate().map(|_| r)) {
                Ok(r) => (r, None),
                Err(e) => {
                    log::error!(
                        "{pipeline} trial {} at {snr_db} dB on {} failed: {e}",
                        job.trial,
                        sample.id
                    );
                    (
                        LinkTrialReport::new(pipeline, snr_db, seed),
                        Some(e.to_string()),
                    )
                }
            };
            rows.push(SweepRow {
                snr_index: job.snr_index,
                trial: job.trial,
                input_index: job.input_index,
                input_id: sample.id.clone(),
                channel: cfg.channel,
                csi: cfg.csi,
                report,
                error,
            });
        }
        rows
    };

    #[cfg(feature = "parallel")]
    let mut rows: Vec<SweepRow> = {
        use rayon::prelude::*;
        jobs.par_iter().flat_map_iter(run_job).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let mut rows: Vec<SweepRow> = jobs.iter().flat_map(run_job).collect();

    rows.sort_by_key(|r| (r.snr_index, r.trial, r.input_index, r.report.pipeline));
    let metric_names: Vec<String> = metrics.names().map(str::to_owned).collect();
    let failed_trials = rows.iter().filter(|r| r.error.is_some()).count();
    let summary = summarize(&rows, &metric_names);
    Ok(SweepOutcome {
        rows,
        metric_names,
        summary,
        failed_trials,
        input_warnings: dataset.warnings.clone(),
    })
}

fn row_values(row: &SweepRow) -> Vec<(&'static str, Option<f64>)> {
    let r = &row.report;
    vec![
        ("feature_mse", r.feature_mse),
        ("feature_cosine", r.feature_cosine),
        ("image_mse", r.image_mse),
        ("image_psnr_db", r.image_psnr_db),
        (
            "label_correct",
            r.label_correct.map(|b| if b { 1.0 } else { 0.0 }),
        ),
        ("bleu", r.bleu),
        ("ber_pre_fec", r.ber_pre_fec),
        ("ber_post_fec", r.ber_post_fec),
        ("cer", r.cer),
    ]
}

/// Mean and standard error per `(pipeline, snr, metric)` over rows that
/// carry the metric. Failed rows are excluded.
pub fn summarize(rows: &[SweepRow], metric_names: &[String]) -> Vec<SummaryRow> {
    let mut acc: BTreeMap<(Pipeline, usize, usize), (f64, Vec<f64>)> = BTreeMap::new();
    let mut names: Vec<String> = row_values_names();
    names.extend(metric_names.iter().cloned());
    for row in rows.iter().filter(|r| r.error.is_none()) {
        let mut values: Vec<Option<f64>> = row_values(row).into_iter().map(|(_, v)| v).collect();
        values.extend(metric_names.iter().map(|m| {
            row.report
                .external
                .iter()
                .find(|(n, _)| n == m)
                .and_then(|(_, v)| *v)
        }));
        for (mi, v) in values.into_iter().enumerate() {
            if let Some(v) = v {
                acc.entry((row.report.pipeline, row.snr_index, mi))
                    .or_insert_with(|| (row.report.snr_db, Vec::new()))
                    .1
                    .push(v);
            }
        }
    }
    acc.into_iter()
        .map(|((pipeline, _, mi), (snr_db, vals))| {
            let (mean, stderr) = mean_stderr(&vals);
            SummaryRow {
                pipeline,
                snr_db,
                metric: names[mi].clone(),
                count: vals.len(),
                mean,
                stderr,
            }
        })
        .collect()
}

fn row_values_names() -> Vec<String> {
    [
        "feature_mse",
        "feature_cosine",
        "image_mse",
        "image_psnr_db",
        "label_accuracy",
        "bleu",
        "ber_pre_fec",
        "ber_post_fec",
        "cer",
    ]
    .map(String::from)
    .to_vec()
}

/// Sample mean and standard error of the mean (zero for a single value).
pub fn mean_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

/// Serializes rows with the v1 column layout.
pub fn write_sweep_csv(rows: &[SweepRow], metric_names: &[String]) -> Result<Vec<u8>> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    let mut header: Vec<&str> = CSV_COLUMNS.to_vec();
    header.extend(metric_names.iter().map(String::as_str));
    w.write_record(&header).map_err(csv_err)?;
    for row in rows {
        let r = &row.report;
        let mut rec = vec![
            CSV_SCHEMA_VERSION.to_string(),
            r.pipeline.to_string(),
            r.snr_db.to_string(),
            row.trial.to_string(),
            row.input_id.clone(),
            r.seed.to_string(),
            row.channel.to_string(),
            row.csi.to_string(),
            row.status().to_string(),
            fmt_opt(r.feature_mse),
            fmt_opt(r.feature_cosine),
            fmt_opt(r.image_mse),
            fmt_opt(r.image_psnr_db),
            r.label.clone().unwrap_or_default(),
            r.label_correct
                .map(|b| u8::from(b).to_string())
                .unwrap_or_default(),
            fmt_opt(r.bleu),
            fmt_opt(r.ber_pre_fec),
            fmt_opt(r.ber_post_fec),
            fmt_opt(r.cer),
            r.erasures.to_string(),
        ];
        for name in metric_names {
            let v = r
                .external
                .iter()
                .find(|(n, _)| n == name)
                .and_then(|(_, v)| *v);
            rec.push(fmt_opt(v));
        }
        w.write_record(&rec).map_err(csv_err)?;
    }
    w.into_inner().map_err(|e| Error::Io(e.into_error()))
}

fn csv_err(e: csv::Error) -> Error {
    Error::Data(format!("csv: {e}"))
}

/// Writes `bytes` to `path`, creating parent directories.
pub fn write_output(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent)
            .map_err(|e| Error::Config(format!("cannot create {}: {e}", parent.display())))?;
    }
    let mut f = std::fs::File::create(path)
        .map_err(|e| Error::Config(format!("cannot write {}: {e}", path.display())))?;
    f.write_all(bytes)
        .map_err(|e| Error::Config(format!("cannot write {}: {e}", path.display())))?;
    Ok(())
}

/// One point of a plotted series.
#[derive(Debug, Clone, PartialEq)]
pub struct SeriesPoint {
    pub pipeline: String,
    pub snr_db: f64,
    pub count: usize,
    pub mean: f64,
    pub stderr: f64,
}

/// Reads a sweep CSV and aggregates every numeric metric into
/// `(pipeline, snr) -> mean, stderr` series, keyed by metric name.
pub fn plot_series(csv_text: &[u8]) -> Result<BTreeMap<String, Vec<SeriesPoint>>> {
    let mut reader = csv::ReaderBuilder::new().from_reader(csv_text);
    let headers = reader.headers().map_err(csv_err)?.clone();
    if headers.is_empty() || headers.get(0) == Some("") {
        return Err(Error::Data("empty CSV".into()));
    }
    if headers.get(0) != Some("schema_version") {
        return Err(Error::Version("first column is not schema_version".into()));
    }
    let fixed: Vec<&str> = headers.iter().take(CSV_COLUMNS.len()).collect();
    if fixed != CSV_COLUMNS {
        return Err(Error::Version(
            "column layout does not match schema 1".into(),
        ));
    }
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .expect("fixed column")
    };
    let (pipe_col, snr_col, status_col) = (col("pipeline"), col("snr_db"), col("status"));
    let mut series_cols: Vec<(String, usize)> = SERIES_COLUMNS
        .iter()
        .map(|&m| {
            (
                if m == "label_correct" {
                    "label_accuracy".to_string()
                } else {
                    m.to_string()
                },
                col(m),
            )
        })
        .collect();
    series_cols.extend(
        headers
            .iter()
            .enumerate()
            .skip(CSV_COLUMNS.len())
            .map(|(i, h)| (h.to_string(), i)),
    );

    type Key = (String, u64);
    let mut acc: BTreeMap<String, BTreeMap<Key, (f64, Vec<f64>)>> = BTreeMap::new();
    let mut records = 0usize;
    for rec in reader.records() {
        let rec = rec.map_err(csv_err)?;
        records += 1;
        let version = rec.get(0).unwrap_or_default();
        if version != CSV_SCHEMA_VERSION.to_string() {
            return Err(Error::Version(format!(
                "row schema version `{version}`, expected {CSV_SCHEMA_VERSION}"
            )));
        }
        if rec.get(status_col) == Some("failed") {
            continue;
        }
        let pipeline = rec.get(pipe_col).unwrap_or_default().to_string();
        let snr: f64 = parse_num("snr_db", rec.get(snr_col).unwrap_or_default())?;
        for (name, i) in &series_cols {
            let field = rec.get(*i).unwrap_or_default();
            if field.is_empty() {
                continue;
            }
            let v: f64 = parse_num(name, field)?;
            // order-preserving key for the SNR so BTreeMap sorts numerically
            let key = (pipeline.clone(), ordered_bits(snr));
            acc.entry(name.clone())
                .or_default()
                .entry(key)
                .or_insert_with(|| (snr, Vec::new()))
                .1
                .push(v);
        }
    }
    if records == 0 {
        return Err(Error::Data("CSV has no data rows".into()));
    }
    Ok(acc
        .into_iter()
        .map(|(metric, points)| {
            let series = points
                .into_iter()
                .map(|((pipeline, _), (snr_db, vals))| {
                    let (mean, stderr) = mean_stderr(&vals);
                    SeriesPoint {
                        pipeline,
                        snr_db,
                        count: vals.len(),
                        mean,
                        stderr,
                    }
                })
                .collect();
            (metric, series)
        })
        .collect())
}

fn ordered_bits(v: f64) -> u64 {
    let bits = v.to_bits();
    if bits >> 63 == 1 {
        !bits
    } else {
        bits | (1 << 63)
    }
}

/// Writes one `series_<metric>.csv` per metric into `out_dir`. Nothing is
/// written unless the whole input parses.
pub fn emit_plots(csv_path: &Path, out_dir: &Path) -> Result<Vec<PathBuf>> {
    let bytes = std::fs::read(csv_path)?;
    let series = plot_series(&bytes)?;
    let mut rendered = Vec::new();
    for (metric, points) in &series {
        let mut text = String::from("pipeline,snr_db,n,mean,stderr\n");
        for p in points {
            let _ = writeln!(
                text,
                "{},{},{},{},{}",
                p.pipeline, p.snr_db, p.count, p.mean, p.stderr
            );
        }
        rendered.push((out_dir.join(format!("series_{metric}.csv")), text));
    }
    std::fs::create_dir_all(out_dir)?;
    let mut written = Vec::new();
    for (path, text) in rendered {
        write_output(&path, text.as_bytes())?;
        written.push(path);
    }
    Ok(written)
}

/// Row of the `baseline` subcommand output.
#[derive(Debug, Clone, PartialEq)]
pub struct BaselineRow {
    pub snr_db: f64,
    pub trial: usize,
    pub ber_pre_fec: f64,
    pub ber_post_fec: f64,
    pub cer: f64,
    pub bleu: f64,
}

/// Sends `text` through the digital baseline at every SNR, `trials` times.
pub fn run_baseline_sweep(
    text: &str,
    channel: ChannelKind,
    csi: Csi,
    snr_list: &[f64],
    trials: usize,
    base_seed: u64,
) -> Result<Vec<BaselineRow>> {
    let mut rows = Vec::with_capacity(snr_list.len() * trials);
    for (si, &snr_db) in snr_list.iter().enumerate() {
        for trial in 0..trials {
            let seed = derive_seed(base_seed, si, trial, "baseline");
            let cfg = ChannelConfig::new(channel, snr_db, seed).with_csi(csi);
            let out = baseline_pipeline(text, &cfg)?;
            let r = out.report;
            rows.push(BaselineRow {
                snr_db,
                trial,
                ber_pre_fec: r.ber_pre_fec.unwrap_or_default(),
                ber_post_fec: r.ber_post_fec.unwrap_or_default(),
                cer: r.cer.unwrap_or_default(),
                bleu: r.bleu.unwrap_or_default(),
            });
        }
    }
    Ok(rows)
}

pub fn write_baseline_csv(rows: &[BaselineRow]) -> String {
    let mut out = String::from("snr_db,trial,ber_pre_fec,ber_post_fec,cer,bleu\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            r.snr_db, r.trial, r.ber_pre_fec, r.ber_post_fec, r.cer, r.bleu
        );
    }
    out
}
