//! Electro-optical chain: LED transfer curve, channel convolution,
//! photodetection with additive Gaussian noise, and drive power scaling.
//!
//! Electrical powers use a 1 ohm reference, so power is the mean square
//! amplitude and `dBm = 10 log10(P / 1 mW)`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::channel::ImpulseResponse;
use crate::error::{invalid, Error, Result};

pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

pub fn watts_to_dbm(w: f64) -> f64 {
    10.0 * w.log10() + 30.0
}

/// Fifth-order polynomial LED transfer curve, optical W against forward V.
///
/// The shipped coefficients are a synthetic curve for a 1 W white LED: the
/// exact interpolant through (2.7 V, 0 W), (3.0, 0.35), (3.25, 0.55),
/// (3.5, 0.70), (3.75, 0.80), (4.0, 0.85). It turns on near 2.7 V and
/// compresses towards 4 V. Override it in the config for a measured device.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LedModel {
    /// `a0..a5`, W per V^n.
    pub poly_coeffs: [f64; 6],
    pub bias_voltage: f64,
    pub v_min: f64,
    pub v_max: f64,
}

impl Default for LedModel {
    fn default() -> Self {
        Self {
            poly_coeffs: [
                -130.949_999_993_532_43,
                183.725_824_165_981_78,
                -104.299_572_643_607_63,
                29.838_217_336_417_596,
                -4.273_504_273_233_931_4,
                0.244_200_244_184_070_13,
            ],
            bias_voltage: 3.2,
            v_min: 3.0,
            v_max: 4.0,
        }
    }
}

impl LedModel {
    /// Affine stand-in matching the default curve's level and slope at bias,
    /// with no saturation.
    pub fn linear() -> Self {
        let reference = LedModel::default();
        let slope = reference.small_signal_slope();
        let level = reference.eval(reference.bias_voltage);
        Self {
            poly_coeffs: [
                level - slope * reference.bias_voltage,
                slope,
                0.0,
                0.0,
                0.0,
                0.0,
            ],
            bias_voltage: reference.bias_voltage,
            v_min: f64::NEG_INFINITY,
            v_max: f64::INFINITY,
        }
    }

    pub fn is_linear(&self) -> bool {
        self.poly_coeffs[2..].iter().all(|a| *a == 0.0)
    }

    /// Polynomial value without clamping.
    pub fn eval(&self, v: f64) -> f64 {
        self.poly_coeffs
            .iter()
            .rev()
            .fold(0.0, |acc, a| acc * v + a)
    }

    pub fn derivative(&self, v: f64) -> f64 {
        self.poly_coeffs
            .iter()
            .enumerate()
            .skip(1)
            .rev()
            .fold(0.0, |acc, (n, a)| acc * v + n as f64 * a)
    }

    /// Optical power at one drive voltage; inputs saturate at the range ends.
    pub fn power(&self, v: f64) -> f64 {
        self.eval(v.clamp(self.v_min, self.v_max))
    }

    /// dP/dV at the bias point, W/V.
    pub fn small_signal_slope(&self) -> f64 {
        self.derivative(self.bias_voltage)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.v_min < self.v_max) {
            return Err(invalid("led.v_min", "must be below led.v_max"));
        }
        if !(self.v_min..=self.v_max).contains(&self.bias_voltage) {
            return Err(invalid("led.bias_voltage", "must lie in [v_min, v_max]"));
        }
        if !(self.small_signal_slope() > 0.0) {
            return Err(invalid("led.poly_coeffs", "slope at bias must be positive"));
        }
        if self.v_min.is_finite() && self.v_max.is_finite() {
            let steps = 10_000;
            let dv = (self.v_max - self.v_min) / steps as f64;
            let mut prev = self.eval(self.v_min);
            if prev < 0.0 {
                return Err(invalid("led.poly_coeffs", "negative output at v_min"));
            }
            for i in 1..=steps {
                let p = self.eval(self.v_min + i as f64 * dv);
                if p < prev {
                    return Err(invalid(
                        "led.poly_coeffs",
                        "transfer curve is not monotone on [v_min, v_max]",
                    ));
                }
                prev = p;
            }
        }
        Ok(())
    }
}

/// Receiver noise: zero-mean real Gaussian of the given electrical power.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseModel {
    pub power_dbm: f64,
    /// Stream seed for standalone use; sweeps derive one stream per link
    /// from the run seed instead.
    #[serde(skip)]
    pub rng_seed: u64,
    pub enabled: bool,
}

impl Default for NoiseModel {
    fn default() -> Self {
        Self {
            power_dbm: -10.0,
            rng_seed: 0xC0FFEE,
            enabled: true,
        }
    }
}

impl NoiseModel {
    pub fn variance(&self) -> f64 {
        if self.enabled {
            dbm_to_watts(self.power_dbm)
        } else {
            0.0
        }
    }

    /// Same noise power on an independent stream.
    pub fn with_seed(&self, rng_seed: u64) -> Self {
        Self {
            rng_seed,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.power_dbm.is_finite() {
            return Err(invalid("noise.power_dbm", "must be finite"));
        }
        Ok(())
    }
}

/// LED optical output for each drive voltage sample.
pub fn led_transfer(voltages: &[f64], led: &LedModel) -> Vec<f64> {
    voltages.iter().map(|&v| led.power(v)).collect()
}

/// Linear convolution with the impulse response aggregated onto the
/// sampling grid. The output is `len(input) + taps - 1` samples long.
pub fn apply_channel(optical: &[f64], ir: &ImpulseResponse, sample_rate: f64) -> Vec<f64> {
    convolve(optical, &ir.resample(sample_rate))
}

pub fn convolve(x: &[f64], taps: &[f64]) -> Vec<f64> {
    if x.is_empty() || taps.is_empty() {
        return Vec::new();
    }
    let mut out = vec![0.0; x.len() + taps.len() - 1];
    for (k, &h) in taps.iter().enumerate() {
        if h == 0.0 {
            continue;
        }
        for (o, &v) in out[k..].iter_mut().zip(x) {
            *o += h * v;
        }
    }
    out
}

/// Photocurrent `responsivity * p` plus receiver noise.
pub fn photodetect(optical: &[f64], responsivity: f64, noise: &NoiseModel) -> Vec<f64> {
    let var = noise.variance();
    if var == 0.0 {
        return optical.iter().map(|p| responsivity * p).collect();
    }
    let normal = Normal::new(0.0, var.sqrt()).expect("finite noise power");
    let mut rng = ChaCha8Rng::seed_from_u64(noise.rng_seed);
    optical
        .iter()
        .map(|p| responsivity * p + normal.sample(&mut rng))
        .collect()
}

/// Scale `samples` so their mean square equals `target_dbm`. Returns the
/// scaled samples and the applied amplitude factor.
pub fn set_signal_power(samples: &[f64], target_dbm: f64) -> Result<(Vec<f64>, f64)> {
    if samples.is_empty() {
        return Err(Error::ZeroSignal);
    }
    let ms = samples.iter().map(|v| v * v).sum::<f64>() / samples.len() as f64;
    if !(ms > 0.0) {
        return Err(Error::ZeroSignal);
    }
    let gain = (dbm_to_watts(target_dbm) / ms).sqrt();
    Ok((samples.iter().map(|v| v * gain).collect(), gain))
}

/// Electrical SNR in dB for a drive power against a noise power.
pub fn snr_db(signal_dbm: f64, noise: &NoiseModel) -> f64 {
    signal_dbm - noise.power_dbm
}

/// Population variance.
pub fn variance(x: &[f64]) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n
}
