//! One luminaire's TDM slot, end to end: payload with the luminaire ID,
//! modem, LED, multipath channel, receiver AGC and noise, demodulation,
//! ID decoding and the channel DC gain estimate.
//!
//! The receiver front end is an ideal AGC: before noise is added, the
//! received waveform is scaled so its variance equals the configured drive
//! power. The SNR of every link is then exactly `target - noise` dB. The
//! receiver knows its AGC gain, so the gain is folded into the calibration
//! constant of the estimate.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{ExperimentConfig, Modulation};
use crate::channel::ImpulseResponse;
use crate::error::Result;
use crate::frontend::{convolve, dbm_to_watts, photodetect, set_signal_power, variance};
use crate::geometry::Luminaire;
use crate::ofdm::{equalize, estimate_dc_gain, training_channel, AcoOfdm, GainEstimate};
use crate::ook::{ook_detect, ook_estimate_dc_gain, ook_modulate};
use crate::qam::{demap_qam, map_bits_to_qam};

const TRAINING_SEED: u64 = 0x7EA1_4A11;
const SCRAMBLER_SEED: u64 = 0x5C4A_3B1E;
const ID_BITS: usize = 8;

/// Known QPSK training symbols, `per_symbol * count` of them.
pub fn training_symbols(per_symbol: usize, count: usize) -> Vec<Complex64> {
    let bits = training_bits(2 * per_symbol * count);
    map_bits_to_qam(&bits, 4).expect("even bit count")
}

/// Known pseudo-random training bits.
pub fn training_bits(n: usize) -> Vec<bool> {
    let mut rng = ChaCha8Rng::seed_from_u64(TRAINING_SEED);
    (0..n).map(|_| rng.random()).collect()
}

/// Known whitening sequence XORed onto the payload. Without it the
/// repeated ID makes each OFDM symbol periodic across subcarriers and the
/// waveform impulsive.
fn scrambler(n: usize) -> impl Iterator<Item = bool> {
    let mut rng = ChaCha8Rng::seed_from_u64(SCRAMBLER_SEED);
    (0..n).map(move |_| rng.random())
}

fn scramble(bits: &mut [bool]) {
    let n = bits.len();
    for (b, s) in bits.iter_mut().zip(scrambler(n)) {
        *b ^= s;
    }
}

/// Amplitude factor that brings a waveform of variance `variance` to
/// `target_dbm`. A silent waveform gets unit gain.
pub fn agc_gain(variance: f64, target_dbm: f64) -> f64 {
    if variance > 0.0 {
        (dbm_to_watts(target_dbm) / variance).sqrt()
    } else {
        1.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SlotSeeds {
    pub payload: u64,
    pub noise: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SlotOutcome {
    /// Configured ID recovered by majority vote, if any.
    pub decoded_id: Option<u8>,
    pub gain: Option<GainEstimate>,
    /// Received signal variance after the AGC, before noise.
    pub signal_variance: f64,
    /// Variance of the noise actually added.
    pub noise_variance: f64,
}

impl SlotOutcome {
    pub fn measured_snr_db(&self) -> f64 {
        10.0 * (self.signal_variance / self.noise_variance).log10()
    }
}

struct Received {
    samples: Vec<f64>,
    agc: f64,
    signal_variance: f64,
    noise_variance: f64,
}

/// Slot simulator with modem state prepared once per configuration. The
/// cyclic prefix is taken from `ofdm.cp_len` as given.
pub struct SlotRunner {
    cfg: ExperimentConfig,
    modem: AcoOfdm,
    training: Vec<Complex64>,
}

impl SlotRunner {
    pub fn new(cfg: &ExperimentConfig) -> Result<Self> {
        cfg.validate()?;
        let modem = AcoOfdm::new(cfg.ofdm.clone())?;
        let training = training_symbols(cfg.ofdm.data_per_symbol(), cfg.ofdm.n_training_symbols);
        Ok(Self {
            cfg: cfg.clone(),
            modem,
            training,
        })
    }

    pub fn config(&self) -> &ExperimentConfig {
        &self.cfg
    }

    /// Slot duration in seconds; the OOK burst matches the OFDM slot.
    pub fn slot_duration(&self) -> f64 {
        let p = &self.cfg.ofdm;
        let symbols = p.n_training_symbols + self.cfg.payload_symbols;
        (symbols * p.symbol_len()) as f64 / p.sample_rate
    }

    pub fn run(
        &self,
        lum: &Luminaire,
        ir: &ImpulseResponse,
        seeds: SlotSeeds,
    ) -> Result<SlotOutcome> {
        match self.cfg.modulation {
            Modulation::Ofdm => self.run_ofdm(lum, ir, seeds),
            Modulation::Ook => self.run_ook(lum, ir, seeds),
        }
    }

    fn propagate(&self, optical: &[f64], idle: f64, taps: &[f64], noise_seed: u64) -> Received {
        // idle light ahead of the slot fills the channel memory
        let guard = taps.len() - 1;
        let mut tx = vec![idle; guard];
        tx.extend_from_slice(optical);
        let conv = convolve(&tx, taps);
        let conv = &conv[guard..guard + optical.len()];
        let eta = self.cfg.receiver.responsivity;
        let clean_var = variance(conv) * eta * eta;
        let agc = agc_gain(clean_var, self.cfg.target_power_dbm);
        let samples = photodetect(conv, eta * agc, &self.cfg.noise.with_seed(noise_seed));
        let noise: Vec<f64> = samples
            .iter()
            .zip(conv)
            .map(|(r, c)| r - eta * agc * c)
            .collect();
        Received {
            samples,
            agc,
            signal_variance: clean_var * agc * agc,
            noise_variance: variance(&noise),
        }
    }

    fn run_ofdm(
        &self,
        lum: &Luminaire,
        ir: &ImpulseResponse,
        seeds: SlotSeeds,
    ) -> Result<SlotOutcome> {
        let p = self.modem.params();
        let per = p.data_per_symbol();
        let n_payload_bits = self.cfg.payload_symbols * p.bits_per_symbol();
        let (mut bits, reps) = payload_bits(lum.id_code, n_payload_bits, seeds.payload);
        scramble(&mut bits);
        let mut symbols = self.training.clone();
        symbols.extend(map_bits_to_qam(&bits, p.qam_order)?);

        let mut x = Vec::with_capacity(symbols.len() / per * p.symbol_len());
        for chunk in symbols.chunks(per) {
            x.extend(self.modem.modulate(chunk)?.samples);
        }
        let (drive, g_tx) = set_signal_power(&x, self.cfg.target_power_dbm)?;
        let led = &self.cfg.led;
        let optical: Vec<f64> = drive
            .iter()
            .map(|v| led.power(led.bias_voltage + v))
            .collect();
        let taps = ir.resample(p.sample_rate);
        let rx = self.propagate(&optical, led.power(led.bias_voltage), &taps, seeds.noise);

        let mut demod = Vec::with_capacity(symbols.len());
        for s in rx.samples.chunks_exact(p.symbol_len()) {
            demod.extend(self.modem.demodulate(s)?);
        }
        let (train_rx, payload_rx) = demod.split_at(self.training.len());

        let kappa = 0.5 * self.cfg.receiver.responsivity * led.small_signal_slope() * g_tx * rx.agc;
        let gain = estimate_dc_gain(train_rx, &self.training, kappa).ok();

        let decoded_id = training_channel(train_rx, &self.training, per)
            .and_then(|h| {
                let mut eq = Vec::with_capacity(payload_rx.len());
                for s in payload_rx.chunks_exact(per) {
                    eq.extend(equalize(s, &h)?);
                }
                demap_qam(&eq, p.qam_order)
            })
            .ok()
            .map(|mut bits| {
                scramble(&mut bits);
                bits
            })
            .and_then(|bits| self.decode_id(&bits, reps));

        Ok(SlotOutcome {
            decoded_id,
            gain,
            signal_variance: rx.signal_variance,
            noise_variance: rx.noise_variance,
        })
    }

    fn run_ook(
        &self,
        lum: &Luminaire,
        ir: &ImpulseResponse,
        seeds: SlotSeeds,
    ) -> Result<SlotOutcome> {
        let p = &self.cfg.ook;
        let n_train = p.n_training_bits;
        let total = ((self.slot_duration() * p.bit_rate).round() as usize).max(n_train + ID_BITS);
        let train = training_bits(n_train);
        let (mut id_bits, reps) = payload_bits(lum.id_code, total - n_train, seeds.payload);
        scramble(&mut id_bits);
        let mut bits = train.clone();
        bits.extend(&id_bits);

        let tx = ook_modulate(&bits, p);
        let taps = ir.resample(p.sample_rate());
        let rx = self.propagate(&tx, p.mid_level(), &taps, seeds.noise);

        let kappa = self.cfg.receiver.responsivity * rx.agc;
        let optical_gain = ook_estimate_dc_gain(&rx.samples, &train, p, kappa)?;
        let gain = (optical_gain > 0.0).then_some(GainEstimate {
            h_tilde: optical_gain * kappa,
            kappa,
            optical_gain,
        });

        let low = optical_gain * kappa * p.power_zero;
        let high = optical_gain * kappa * p.power_one;
        let span = n_train * p.samples_per_bit;
        let decoded_id = ook_detect(
            &rx.samples[span..],
            p.samples_per_bit,
            low,
            high,
            0.5 * (low + high),
        )
        .ok()
        .and_then(|mut bits| {
            scramble(&mut bits);
            self.decode_id(&bits, reps)
        });

        Ok(SlotOutcome {
            decoded_id,
            gain,
            signal_variance: rx.signal_variance,
            noise_variance: rx.noise_variance,
        })
    }

    /// Majority vote per ID bit over its repetitions. Ties, and IDs that
    /// name no configured luminaire, fail.
    fn decode_id(&self, bits: &[bool], reps: usize) -> Option<u8> {
        if reps == 0 || bits.len() < reps * ID_BITS {
            return None;
        }
        let mut id = 0u8;
        for j in 0..ID_BITS {
            let ones = (0..reps).filter(|r| bits[r * ID_BITS + j]).count();
            if 2 * ones == reps {
                return None;
            }
            id = (id << 1) | (2 * ones > reps) as u8;
        }
        self.cfg
            .luminaires
            .iter()
            .any(|l| l.id_code == id)
            .then_some(id)
    }
}

/// `n` payload bits: the 8-bit ID (MSB first) repeated as often as it fits,
/// then random filler. Returns the bits and the repetition count.
fn payload_bits(id: u8, n: usize, seed: u64) -> (Vec<bool>, usize) {
    let reps = n / ID_BITS;
    let mut bits = Vec::with_capacity(n);
    for _ in 0..reps {
        bits.extend((0..ID_BITS).rev().map(|b| (id >> b) & 1 == 1));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    bits.extend((bits.len()..n).map(|_| rng.random::<bool>()));
    (bits, reps)
}

/// Run one slot with freshly prepared modem state.
pub fn run_tdm_slot(
    lum: &Luminaire,
    ir: &ImpulseResponse,
    cfg: &ExperimentConfig,
    seeds: SlotSeeds,
) -> Result<SlotOutcome> {
    SlotRunner::new(cfg)?.run(lum, ir, seeds)
}
