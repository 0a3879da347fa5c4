use super::{
    ascii_decode, ascii_encode, hamming74_decode, hamming74_encode, qam16_demodulate,
    qam16_modulate, BitStream,
};
use crate::channel::{recover, transmit, ChannelConfig};
use crate::error::Result;
use crate::metrics::{ber, bleu_text, character_error_rate, LinkTrialReport, Pipeline};

#[derive(Debug, Clone, PartialEq)]
pub struct BitLinkResult {
    /// Recovered data bits, same length as the input.
    pub data: BitStream,
    /// Bit error rate of the channel bits before FEC decoding.
    pub ber_pre_fec: f64,
    /// Bit error rate of the data bits after FEC decoding.
    pub ber_post_fec: f64,
    pub erasures: usize,
}

/// Sends `data` through 16-QAM and the channel, optionally wrapped in the
/// (7,4) Hamming code.
pub fn run_bit_link(data: &BitStream, cfg: &ChannelConfig, fec: bool) -> Result<BitLinkResult> {
    if data.is_empty() {
        return Ok(BitLinkResult {
            data: data.clone(),
            ber_pre_fec: 0.0,
            ber_post_fec: 0.0,
            erasures: 0,
        });
    }
    let coded = if fec {
        hamming74_encode(data)
    } else {
        data.clone()
    };
    let (tx, qam_pad) = qam16_modulate(&coded);
    let rx = transmit(&tx, cfg)?;
    let eq = recover(&rx)?;
    let mut demod = qam16_demodulate(eq.frame.symbols(), qam_pad);
    let ber_pre_fec = ber(&coded.bits, &demod.bits)?;
    let received = if fec {
        demod.pad_len = coded.pad_len;
        hamming74_decode(&demod)?.data
    } else {
        demod
    };
    let ber_post_fec = ber(&data.bits, &received.bits)?;
    Ok(BitLinkResult {
        data: received,
        ber_pre_fec,
        ber_post_fec,
        erasures: eq.erasures,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct BaselineOutcome {
    pub received_text: String,
    pub report: LinkTrialReport,
}

/// ASCII, Hamming (7,4), 16-QAM, channel, and back.
pub fn baseline_pipeline(text: &str, cfg: &ChannelConfig) -> Result<BaselineOutcome> {
    let encoded = ascii_encode(text);
    let link = run_bit_link(&encoded.bits, cfg, true)?;
    let received_text = ascii_decode(&link.data)?;
    // compare against what was actually representable in 7-bit ASCII
    let sent_text = ascii_decode(&encoded.bits)?;
    let mut report = LinkTrialReport::new(Pipeline::Baseline, cfg.snr_db, cfg.seed);
    report.ber_pre_fec = Some(link.ber_pre_fec);
    report.ber_post_fec = Some(link.ber_post_fec);
    report.cer = Some(character_error_rate(&sent_text, &received_text));
    report.bleu = Some(bleu_text(&received_text, &sent_text).score);
    report.erasures = link.erasures;
    report.received_text = Some(received_text.clone());
    Ok(BaselineOutcome {
        received_text,
        report,
    })
}
