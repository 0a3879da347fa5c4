//! Flat fading channel with additive white Gaussian noise.
//!
//! Each symbol sees `rx = h * tx + n`. For [`ChannelKind::Awgn`] the gain is
//! one; for [`ChannelKind::Rayleigh`] it is an independent circularly
//! symmetric complex Gaussian with `E[|h|^2] = 1`. The noise variance `sigma^2`
//! is the total over both quadratures, `sigma^2 = P * 10^(-snr_db / 10)`.
//!
//! The random stream draws four standard normals per symbol in a fixed order
//! (gain re, gain im, noise re, noise im), whatever the channel kind. The draw
//! for symbol `i` therefore depends only on the seed and `i`, and AWGN and
//! Rayleigh runs with the same seed share their noise samples.

use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::feature_frame::SymbolFrame;

/// Gains with magnitude below this are treated as erasures by the equalizer.
pub const ERASURE_THRESHOLD: f64 = 1e-12;

/// Smallest pilot count accepted by [`calibrate_snr`].
pub const MIN_CALIBRATION_PILOTS: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ChannelKind {
    Awgn,
    Rayleigh,
}

impl fmt::Display for ChannelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ChannelKind::Awgn => "awgn",
            ChannelKind::Rayleigh => "rayleigh",
        })
    }
}

impl FromStr for ChannelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "awgn" => Ok(ChannelKind::Awgn),
            "rayleigh" | "rayleigh-awgn" | "rayleighawgn" => Ok(ChannelKind::Rayleigh),
            other => Err(Error::Config(format!("unknown channel kind `{other}`"))),
        }
    }
}

/// Receiver knowledge of the channel gains.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Csi {
    Perfect,
    None,
}

impl fmt::Display for Csi {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Csi::Perfect => "perfect",
            Csi::None => "none",
        })
    }
}

impl FromStr for Csi {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "perfect" | "perfect-csi" => Ok(Csi::Perfect),
            "none" | "no-csi" => Ok(Csi::None),
            other => Err(Error::Config(format!("unknown CSI mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelConfig {
    pub kind: ChannelKind,
    pub snr_db: f64,
    pub csi: Csi,
    pub seed: u64,
}

impl ChannelConfig {
    pub fn new(kind: ChannelKind, snr_db: f64, seed: u64) -> Self {
        Self {
            kind,
            snr_db,
            csi: Csi::Perfect,
            seed,
        }
    }

    pub fn awgn(snr_db: f64, seed: u64) -> Self {
        Self::new(ChannelKind::Awgn, snr_db, seed)
    }

    pub fn rayleigh(snr_db: f64, seed: u64) -> Self {
        Self::new(ChannelKind::Rayleigh, snr_db, seed)
    }

    pub fn with_csi(mut self, csi: Csi) -> Self {
        self.csi = csi;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

/// Total complex noise variance for a given per-symbol power and SNR.
pub fn noise_variance(target_power: f64, snr_db: f64) -> f64 {
    target_power * 10f64.powf(-snr_db / 10.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    pub gains: Vec<Complex64>,
    pub noise: Vec<Complex64>,
    pub noise_variance: f64,
}

impl ChannelRealization {
    /// Draws gains and noise for `n_symbols` symbols.
    pub fn draw(kind: ChannelKind, noise_variance: f64, seed: u64, n_symbols: usize) -> Self {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let gain_sd = std::f64::consts::FRAC_1_SQRT_2;
        let noise_sd = (noise_variance / 2.0).sqrt();
        let mut gains = Vec::with_capacity(n_symbols);
        let mut noise = Vec::with_capacity(n_symbols);
        for _ in 0..n_symbols {
            let [gr, gi, nr, ni]: [f64; 4] = std::array::from_fn(|_| rng.sample(StandardNormal));
            gains.push(match kind {
                ChannelKind::Awgn => Complex64::new(1.0, 0.0),
                ChannelKind::Rayleigh => Complex64::new(gr * gain_sd, gi * gain_sd),
            });
            noise.push(Complex64::new(nr * noise_sd, ni * noise_sd));
        }
        Self {
            gains,
            noise,
            noise_variance,
        }
    }

    pub fn len(&self) -> usize {
        self.gains.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gains.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReceivedFrame {
    pub symbols: Vec<Complex64>,
    pub realization: ChannelRealization,
    pub csi_available: bool,
    /// Normalization of the transmitted frame, carried as side information.
    pub scale: f64,
    pub target_power: f64,
}

pub fn transmit(tx: &SymbolFrame, cfg: &ChannelConfig) -> Result<ReceivedFrame> {
    if tx.is_empty() {
        return Err(Error::Geometry("cannot transmit an empty frame".into()));
    }
    if !cfg.snr_db.is_finite() {
        return Err(Error::Config(format!(
            "SNR must be finite, got {}",
            cfg.snr_db
        )));
    }
    let sigma2 = noise_variance(tx.target_power(), cfg.snr_db);
    let realization = ChannelRealization::draw(cfg.kind, sigma2, cfg.seed, tx.len());
    Ok(pass_through(tx, realization, cfg.csi == Csi::Perfect))
}

/// Applies an existing realization to `tx`. The realization must cover at
/// least `tx.len()` symbols; extra entries are dropped.
pub fn pass_through(
    tx: &SymbolFrame,
    mut realization: ChannelRealization,
    csi: bool,
) -> ReceivedFrame {
    assert!(
        realization.len() >= tx.len(),
        "realization of {} symbols is too short for {}",
        realization.len(),
        tx.len()
    );
    realization.gains.truncate(tx.len());
    realization.noise.truncate(tx.len());
    let symbols = tx
        .symbols()
        .iter()
        .zip(&realization.gains)
        .zip(&realization.noise)
        .map(|((y, h), n)| h * y + n)
        .collect();
    ReceivedFrame {
        symbols,
        realization,
        csi_available: csi,
        scale: tx.scale(),
        target_power: tx.target_power(),
    }
}

/// Output of receiver-side recovery.
#[derive(Debug, Clone, PartialEq)]
pub struct Equalized {
    pub frame: SymbolFrame,
    /// Symbols whose gain fell below [`ERASURE_THRESHOLD`] and were zeroed.
    pub erasures: usize,
}

/// Zero-forcing equalization with perfect CSI.
pub fn equalize_zf(rx: &ReceivedFrame) -> Result<Equalized> {
    if !rx.csi_available {
        return Err(Error::CsiUnavailable);
    }
    let mut erasures = 0;
    let symbols = rx
        .symbols
        .iter()
        .zip(&rx.realization.gains)
        .map(|(r, h)| {
            if h.norm() < ERASURE_THRESHOLD {
                erasures += 1;
                Complex64::new(0.0, 0.0)
            } else {
                r / h
            }
        })
        .collect();
    Ok(Equalized {
        frame: SymbolFrame::new(symbols, rx.scale, rx.target_power)?,
        erasures,
    })
}

/// ZF when CSI is available, raw received symbols otherwise.
pub fn recover(rx: &ReceivedFrame) -> Result<Equalized> {
    if rx.csi_available {
        equalize_zf(rx)
    } else {
        Ok(Equalized {
            frame: SymbolFrame::new(rx.symbols.clone(), rx.scale, rx.target_power)?,
            erasures: 0,
        })
    }
}

/// Sends `n_symbols` unit-power pilots and measures the SNR from the
/// realized gains and noise.
pub fn calibrate_snr(cfg: &ChannelConfig, n_symbols: usize) -> Result<f64> {
    if n_symbols < MIN_CALIBRATION_PILOTS {
        return Err(Error::Config(format!(
            "calibration needs at least {MIN_CALIBRATION_PILOTS} pilots, got {n_symbols}"
        )));
    }
    let target_power = 1.0;
    let pilots = SymbolFrame::new(vec![Complex64::new(1.0, 0.0); n_symbols], 1.0, target_power)?;
    let rx = transmit(&pilots, cfg)?;
    let gain_power = rx
        .realization
        .gains
        .iter()
        .map(|h| h.norm_sqr())
        .sum::<f64>()
        / n_symbols as f64;
    // noise is measured from the received samples, not the stored draw
    let noise_power = rx
        .symbols
        .iter()
        .zip(pilots.symbols())
        .zip(&rx.realization.gains)
        .map(|((r, y), h)| (r - h * y).norm_sqr())
        .sum::<f64>()
        / n_symbols as f64;
    Ok(10.0 * (target_power * gain_power / noise_power).log10())
}
