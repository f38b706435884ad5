//! Single-carrier on-off keying baseline. NRZ pulses switch the LED between
//! two optical power levels; the receiver integrates each bit and has no
//! equalizer, so multipath spreading stays in the received signal.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OokParams {
    /// Optical power for a one, W.
    pub power_one: f64,
    /// Optical power for a zero, W.
    pub power_zero: f64,
    pub bit_rate: f64,
    pub n_training_bits: usize,
    pub samples_per_bit: usize,
}

impl Default for OokParams {
    fn default() -> Self {
        Self {
            power_one: 5.0,
            power_zero: 3.0,
            bit_rate: 25e6,
            n_training_bits: 16_384,
            samples_per_bit: 4,
        }
    }
}

impl OokParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.power_zero >= 0.0 && self.power_one > self.power_zero) {
            return Err(invalid(
                "ook.power_one",
                "levels must satisfy power_one > power_zero >= 0",
            ));
        }
        if !(self.bit_rate > 0.0) {
            return Err(invalid("ook.bit_rate", "must be > 0"));
        }
        if self.n_training_bits == 0 {
            return Err(invalid("ook.n_training_bits", "must be >= 1"));
        }
        if self.samples_per_bit == 0 {
            return Err(invalid("ook.samples_per_bit", "must be >= 1"));
        }
        Ok(())
    }

    pub fn sample_rate(&self) -> f64 {
        self.bit_rate * self.samples_per_bit as f64
    }

    pub fn level(&self, bit: bool) -> f64 {
        if bit {
            self.power_one
        } else {
            self.power_zero
        }
    }

    pub fn mid_level(&self) -> f64 {
        0.5 * (self.power_one + self.power_zero)
    }
}

/// Rectangular NRZ waveform, `samples_per_bit` samples per bit.
pub fn ook_modulate(bits: &[bool], params: &OokParams) -> Vec<f64> {
    bits.iter()
        .flat_map(|&b| std::iter::repeat_n(params.level(b), params.samples_per_bit))
        .collect()
}

/// Per-bit integrate-and-dump: the mean of each bit's samples.
pub fn integrate_bits(received: &[f64], samples_per_bit: usize) -> Vec<f64> {
    received
        .chunks_exact(samples_per_bit)
        .map(|c| c.iter().sum::<f64>() / samples_per_bit as f64)
        .collect()
}

/// Channel DC gain from the training span at the start of `received`:
/// per-bit integrated electrical level averaged over the span, divided by
/// the responsivity and by the mean transmitted optical power.
pub fn ook_estimate_dc_gain(
    received: &[f64],
    training_bits: &[bool],
    params: &OokParams,
    responsivity: f64,
) -> Result<f64> {
    let span = training_bits.len() * params.samples_per_bit;
    if training_bits.is_empty() || received.len() < span {
        return Err(Error::LengthMismatch {
            expected: span.max(1),
            actual: received.len(),
        });
    }
    let tx_mean =
        training_bits.iter().map(|&b| params.level(b)).sum::<f64>() / training_bits.len() as f64;
    if !(tx_mean > 0.0) {
        return Err(Error::ZeroSignal);
    }
    let per_bit = integrate_bits(&received[..span], params.samples_per_bit);
    let rx_mean = per_bit.iter().sum::<f64>() / per_bit.len() as f64;
    Ok(rx_mean / responsivity / tx_mean)
}

/// Hard decisions from per-bit integration against `threshold`, which must
/// lie strictly between the expected `low` and `high` received levels.
pub fn ook_detect(
    received: &[f64],
    samples_per_bit: usize,
    low: f64,
    high: f64,
    threshold: f64,
) -> Result<Vec<bool>> {
    if !(low < threshold && threshold < high) {
        return Err(Error::BadThreshold {
            threshold,
            low,
            high,
        });
    }
    if samples_per_bit == 0 {
        return Err(invalid("samples_per_bit", "must be >= 1"));
    }
    Ok(integrate_bits(received, samples_per_bit)
        .into_iter()
        .map(|v| v > threshold)
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::ImpulseResponse;
    use crate::frontend::{apply_channel, photodetect, NoiseModel};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn levels() {
        let p = OokParams::default();
        assert_eq!(ook_modulate(&[true], &p), vec![5.0; 4]);
        assert_eq!(ook_modulate(&[false], &p), vec![3.0; 4]);
        let sq = ook_modulate(&[true, false, true, false], &p);
        assert_eq!(&sq[..8], &[5.0, 5.0, 5.0, 5.0, 3.0, 3.0, 3.0, 3.0]);
        assert!(OokParams {
            power_one: 3.0,
            power_zero: 5.0,
            ..p
        }
        .validate()
        .is_err());
    }

    #[test]
    fn flat_channel_gain() {
        let p = OokParams::default();
        let bits: Vec<bool> = (0..64).map(|i| i % 3 == 0).collect();
        let g = 2.5e-5;
        let rx: Vec<f64> = ook_modulate(&bits, &p)
            .iter()
            .map(|v| v * g * 0.8)
            .collect();
        let est = ook_estimate_dc_gain(&rx, &bits, &p, 0.8).unwrap();
        assert!((est - g).abs() / g < 1e-12);
        let zero = vec![0.0; rx.len()];
        assert_eq!(ook_estimate_dc_gain(&zero, &bits, &p, 0.8).unwrap(), 0.0);
        assert!(ook_estimate_dc_gain(&rx[..10], &bits, &p, 0.8).is_err());
        let dark = OokParams {
            power_zero: 0.0,
            ..p.clone()
        };
        assert!(ook_estimate_dc_gain(&rx, &[false; 8], &dark, 1.0).is_err());
    }

    #[test]
    fn delayed_path_bias_matches_convolution_oracle() {
        // 3-bit pattern 1,0,1 preceded by idle zeros; one path of gain g
        // delayed by one sample (a quarter bit)
        let p = OokParams::default();
        let bits = [true, false, true];
        let g = 1e-5;
        let mut ir = ImpulseResponse::empty(1.0 / p.sample_rate(), 0.0, 1);
        ir.deposit(0, 0.0, 0.0);
        ir.deposit(0, 1.0 / p.sample_rate(), g);
        let mut tx = vec![p.power_zero; 4];
        tx.extend(ook_modulate(&bits, &p));
        let rx = apply_channel(&tx, &ir, p.sample_rate());
        let est = ook_estimate_dc_gain(&rx[4..], &bits, &p, 1.0).unwrap();
        // hand convolution: each bit loses a quarter to the next, the first
        // bit takes a quarter of the idle zero level
        let tx_mean = (5.0 + 3.0 + 5.0) / 3.0;
        let rx_bits = [
            g * (0.25 * 3.0 + 0.75 * 5.0),
            g * (0.25 * 5.0 + 0.75 * 3.0),
            g * (0.25 * 3.0 + 0.75 * 5.0),
        ];
        let oracle = rx_bits.iter().sum::<f64>() / 3.0 / tx_mean;
        assert!((est - oracle).abs() / oracle < 1e-12);
        assert!((est - g).abs() / g < 0.05);
    }

    #[test]
    fn detection() {
        let p = OokParams::default();
        let bits = [true, false, false, true, true, false];
        let rx = ook_modulate(&bits, &p);
        assert_eq!(ook_detect(&rx, 4, 3.0, 5.0, 4.0).unwrap(), bits);
        assert!(ook_detect(&rx, 4, 5.0, 3.0, 4.0).is_err());
        assert!(ook_detect(&rx, 4, 3.0, 5.0, 6.0).is_err());
    }

    #[test]
    fn clean_at_forty_db() {
        let p = OokParams::default();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let bits: Vec<bool> = (0..10_000).map(|_| rng.random()).collect();
        let tx = ook_modulate(&bits, &p);
        // signal variance 1 W^2 (levels 4 +- 1); 40 dB below is 1e-4
        let noise = NoiseModel {
            power_dbm: -10.0,
            ..NoiseModel::default()
        };
        let rx = photodetect(&tx, 1.0, &noise);
        let out = ook_detect(&rx, p.samples_per_bit, 3.0, 5.0, 4.0).unwrap();
        assert_eq!(out, bits);
    }
}
