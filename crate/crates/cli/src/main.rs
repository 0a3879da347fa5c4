//! `vlfsim`: SNR sweeps, baseline runs, BCR tables, channel calibration and
//! plot-data export.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use vlf_link::bcr::{bcr_table, ImageGeometry};
use vlf_link::bridge::BridgeCodec;
use vlf_link::channel::{calibrate_snr, ChannelConfig, ChannelKind, Csi};
use vlf_link::codec::SemanticCodec;
use vlf_link::feature_frame::{DEFAULT_DIM, DEFAULT_N_QUERIES};
use vlf_link::harness::{
    build_toy_codec, derive_seed, emit_plots, parse_list, run_baseline_sweep, run_sweep,
    write_baseline_csv, write_output, CodecChoice, Dataset, SweepConfig, DEFAULT_BASE_SEED,
    DEFAULT_SNR_LIST, DEFAULT_TRIALS, OUTPUT_DIR_ENV,
};
use vlf_link::metrics::MetricRegistry;
use vlf_link::Error;

/// Exit status when trials failed or inputs were skipped.
const EXIT_TRIALS_FAILED: u8 = 1;
/// Exit status for configuration and I/O errors.
const EXIT_CONFIG: u8 = 2;

#[derive(Parser)]
#[command(
    name = "vlfsim",
    version,
    about = "Semantic vs. classical link simulator for low-rate channels"
)]
struct Cli {
    /// Log verbosity, overridden by RUST_LOG.
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Monte-Carlo SNR sweep over a dataset; writes one CSV row per trial and pipeline.
    Sweep(Box<SweepArgs>),
    /// Send a text file through the ASCII / Hamming(7,4) / 16-QAM baseline.
    Baseline(BaselineArgs),
    /// Bandwidth compression ratio table for a feature frame shape.
    Bcr(BcrArgs),
    /// Measure the realized SNR of the channel model with pilot symbols.
    Calibrate(CalibrateArgs),
    /// Aggregate a sweep CSV into per-metric series files.
    PlotData(PlotArgs),
}

#[derive(Args)]
struct SweepArgs {
    /// Flat `key = value` config file; flags below take precedence.
    #[arg(short, long)]
    config: Option<PathBuf>,
    /// Directory of PPM/PGM/PNM/farbfeld images, with optional captions.txt.
    #[arg(long)]
    images: Option<PathBuf>,
    /// Text file, one message per line.
    #[arg(long)]
    texts: Option<PathBuf>,
    /// Comma-separated SNR list in dB.
    #[arg(long, allow_hyphen_values = true)]
    snr_list: Option<String>,
    #[arg(long)]
    trials: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    /// awgn or rayleigh.
    #[arg(long)]
    channel: Option<String>,
    /// perfect or none.
    #[arg(long)]
    csi: Option<String>,
    /// toy or bridge.
    #[arg(long)]
    codec: Option<String>,
    /// Command that starts the codec bridge server.
    #[arg(long)]
    bridge_command: Option<String>,
    /// Metric served by the bridge, added as an extra CSV column. Repeatable.
    #[arg(long = "bridge-metric")]
    bridge_metrics: Vec<String>,
    /// Comma-separated subset of semantic,baseline.
    #[arg(long)]
    pipelines: Option<String>,
    /// Output CSV. Defaults to sweep.csv in $VLFSIM_OUTPUT_DIR or the current directory.
    #[arg(short, long)]
    output: Option<String>,
    /// Any other config key, as KEY=VALUE. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Args)]
struct BaselineArgs {
    /// Text file sent as a single message.
    #[arg(long)]
    text: PathBuf,
    #[arg(long, default_value = "awgn")]
    channel: ChannelKind,
    #[arg(long, default_value = "perfect")]
    csi: Csi,
    #[arg(long, allow_hyphen_values = true)]
    snr_list: Option<String>,
    #[arg(long, default_value_t = DEFAULT_TRIALS)]
    trials: usize,
    #[arg(long, default_value_t = DEFAULT_BASE_SEED)]
    seed: u64,
    /// Output CSV; standard output when omitted.
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct BcrArgs {
    #[arg(long, default_value_t = DEFAULT_N_QUERIES)]
    n_queries: usize,
    #[arg(long, default_value_t = DEFAULT_DIM)]
    dim: usize,
    /// Image size as HxW or CxHxW. Repeatable; a standard set is used when omitted.
    #[arg(long = "resolution")]
    resolutions: Vec<String>,
}

#[derive(Args)]
struct CalibrateArgs {
    /// Channel kinds to measure; both when omitted.
    #[arg(long)]
    channel: Vec<ChannelKind>,
    #[arg(long, allow_hyphen_values = true)]
    snr_list: Option<String>,
    #[arg(long, default_value_t = 100_000)]
    pilots: usize,
    #[arg(long, default_value_t = DEFAULT_BASE_SEED)]
    seed: u64,
}

#[derive(Args)]
struct PlotArgs {
    /// Sweep CSV written by `vlfsim sweep`.
    csv: PathBuf,
    /// Destination directory. Defaults to $VLFSIM_OUTPUT_DIR/plots, else next to the CSV.
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    let result = match cli.command {
        Command::Sweep(a) => sweep(*a),
        Command::Baseline(a) => baseline(a),
        Command::Bcr(a) => bcr(a),
        Command::Calibrate(a) => calibrate(a),
        Command::PlotData(a) => plot_data(a),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("vlfsim: {e}");
            ExitCode::from(EXIT_CONFIG)
        }
    }
}

fn output_dir() -> Option<PathBuf> {
    std::env::var_os(OUTPUT_DIR_ENV)
        .filter(|v| !v.is_empty())
        .map(PathBuf::from)
}

fn sweep_config(a: &SweepArgs) -> Result<SweepConfig, Error> {
    let mut cfg = match &a.config {
        Some(path) => SweepConfig::load(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?,
        None => SweepConfig::default(),
    };
    let flags = [
        ("snr_list", &a.snr_list),
        ("trials", &a.trials),
        ("base_seed", &a.seed),
        ("channel", &a.channel),
        ("csi", &a.csi),
        ("bridge_command", &a.bridge_command),
        ("codec", &a.codec),
        ("pipelines", &a.pipelines),
        ("output", &a.output),
    ];
    for kv in &a.overrides {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("--set expects KEY=VALUE, got `{kv}`")))?;
        cfg.apply(k.trim(), v.trim())?;
    }
    for (key, value) in flags {
        if let Some(v) = value {
            cfg.apply(key, v)?;
        }
    }
    if cfg.output.is_none() {
        cfg.output = Some(
            output_dir()
                .unwrap_or_else(|| PathBuf::from("."))
                .join("sweep.csv"),
        );
    }
    cfg.validate()?;
    Ok(cfg)
}

fn sweep(a: SweepArgs) -> Result<ExitCode, Error> {
    let cfg = sweep_config(&a)?;
    let mut data = Dataset::default();
    if let Some(dir) = &a.images {
        data.load_images(dir)
            .map_err(|e| Error::Config(format!("{}: {e}", dir.display())))?;
    }
    if let Some(path) = &a.texts {
        match std::fs::read_to_string(path) {
            Ok(text) => data.add_texts(&text),
            Err(e) => {
                log::warn!("skipping {}: {e}", path.display());
                data.warnings.push(format!("{}: {e}", path.display()));
            }
        }
    }
    if data.is_empty() {
        return Err(Error::Config(
            "no usable inputs; pass --images and/or --texts".into(),
        ));
    }

    let mut metrics = MetricRegistry::new();
    let codec: Option<Arc<dyn SemanticCodec>> = match &cfg.codec {
        CodecChoice::Toy => {
            build_toy_codec(&cfg.toy, &data)?.map(|c| Arc::new(c) as Arc<dyn SemanticCodec>)
        }
        CodecChoice::Bridge { command } => {
            let bridge = Arc::new(BridgeCodec::spawn(command, cfg.toy.n_queries, cfg.toy.dim)?);
            for name in &a.bridge_metrics {
                let b = Arc::clone(&bridge);
                let metric = name.clone();
                metrics.register_external_metric(name, move |input| {
                    let (Some(cand), Some(reference)) =
                        (input.candidate_text, input.reference_text)
                    else {
                        return Err("no text to score".into());
                    };
                    b.score(&metric, cand, reference).map_err(|e| e.to_string())
                })?;
            }
            Some(bridge)
        }
    };
    if !a.bridge_metrics.is_empty() && cfg.codec == CodecChoice::Toy {
        return Err(Error::Config("--bridge-metric needs codec = bridge".into()));
    }

    let out = run_sweep(&cfg, &data, codec.as_deref(), &metrics)?;
    let path = cfg.output.as_ref().expect("output resolved above");
    write_output(path, &out.to_csv()?)?;
    print!("{}", out.summary_table());
    println!(
        "rows: {}  failed trials: {}  wrote {}",
        out.rows.len(),
        out.failed_trials,
        path.display()
    );
    for w in &out.input_warnings {
        eprintln!("warning: skipped input {w}");
    }
    Ok(if out.success() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(EXIT_TRIALS_FAILED)
    })
}

fn snr_list(arg: &Option<String>) -> Result<Vec<f64>, Error> {
    let list = match arg {
        Some(s) => parse_list(s)?,
        None => DEFAULT_SNR_LIST.to_vec(),
    };
    if list.is_empty() || list.iter().any(|s| !s.is_finite()) {
        return Err(Error::Config("SNR list must be nonempty and finite".into()));
    }
    Ok(list)
}

fn baseline(a: BaselineArgs) -> Result<ExitCode, Error> {
    let text = std::fs::read_to_string(&a.text)
        .map_err(|e| Error::Config(format!("{}: {e}", a.text.display())))?;
    if a.trials == 0 {
        return Err(Error::Config("trials must be at least 1".into()));
    }
    let rows = run_baseline_sweep(
        &text,
        a.channel,
        a.csi,
        &snr_list(&a.snr_list)?,
        a.trials,
        a.seed,
    )?;
    let csv = write_baseline_csv(&rows);
    match &a.output {
        Some(path) => write_output(path, csv.as_bytes())?,
        None => print!("{csv}"),
    }
    Ok(ExitCode::SUCCESS)
}

fn parse_geometry(s: &str) -> Result<ImageGeometry, Error> {
    let dims: Vec<usize> = s
        .split(['x', 'X'])
        .map(|p| p.trim().parse())
        .collect::<Result<_, _>>()
        .map_err(|_| Error::Config(format!("bad resolution `{s}`")))?;
    let g = match dims[..] {
        [h, w] => ImageGeometry::rgb(h, w),
        [c, h, w] => ImageGeometry::new(c, h, w),
        _ => {
            return Err(Error::Config(format!(
                "bad resolution `{s}`, expected HxW or CxHxW"
            )))
        }
    };
    g.validate()?;
    Ok(g)
}

fn bcr(a: BcrArgs) -> Result<ExitCode, Error> {
    let geoms: Vec<ImageGeometry> = if a.resolutions.is_empty() {
        [96, 128, 224, 256, 384, 512]
            .iter()
            .map(|&s| ImageGeometry::rgb(s, s))
            .collect()
    } else {
        a.resolutions
            .iter()
            .map(|s| parse_geometry(s))
            .collect::<Result<_, _>>()?
    };
    println!(
        "{:<14} {:>10} {:>14} {:>10} {:>12}",
        "image", "values", "channel_uses", "bcr", "bcr_decimal"
    );
    for (g, uses, b) in bcr_table(a.n_queries, a.dim, &geoms)? {
        println!(
            "{:<14} {:>10} {:>14} {:>10} {:>12.6}",
            g.to_string(),
            g.len(),
            uses,
            b.to_string(),
            b.to_f64()
        );
    }
    Ok(ExitCode::SUCCESS)
}

fn calibrate(a: CalibrateArgs) -> Result<ExitCode, Error> {
    let kinds = if a.channel.is_empty() {
        vec![ChannelKind::Awgn, ChannelKind::Rayleigh]
    } else {
        a.channel
    };
    println!(
        "{:<9} {:>10} {:>12} {:>8}",
        "channel", "target_db", "measured_db", "error"
    );
    for kind in kinds {
        for (i, snr) in snr_list(&a.snr_list)?.into_iter().enumerate() {
            let cfg = ChannelConfig::new(kind, snr, derive_seed(a.seed, i, 0, "calibrate"));
            let measured = calibrate_snr(&cfg, a.pilots)?;
            println!(
                "{:<9} {:>10} {:>12.4} {:>+8.4}",
                kind.to_string(),
                snr,
                measured,
                measured - snr
            );
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn plot_data(a: PlotArgs) -> Result<ExitCode, Error> {
    let out_dir = a.out_dir.unwrap_or_else(|| match output_dir() {
        Some(d) => d.join("plots"),
        None => a.csv.parent().unwrap_or(Path::new(".")).join("plots"),
    });
    for path in emit_plots(&a.csv, &out_dir)? {
        println!("{}", path.display());
    }
    Ok(ExitCode::SUCCESS)
}
