//! ACO-OFDM modulation, demodulation, single-tap equalization and
//! training-based channel DC gain estimation.
//!
//! Only odd subcarriers carry data. With the Hermitian layout
//! `[0, I0, 0, I1, ..., 0, I*1, 0, I*0]` the inverse DFT is real and
//! antisymmetric over half a frame, so clipping every negative sample to zero
//! halves the odd subcarriers and drops all clipping distortion on the even
//! ones. The inverse transform carries the `1/N` factor; the forward
//! transform is unnormalized, so `demodulate(modulate(I)) == I / 2`.

use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::qam;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OfdmParams {
    pub n_subcarriers: usize,
    pub qam_order: usize,
    /// Cyclic prefix, samples. Overwritten from the channel set when
    /// `auto_cp` is set.
    pub cp_len: usize,
    pub auto_cp: bool,
    pub n_training_symbols: usize,
    /// Samples per second.
    pub sample_rate: f64,
}

impl Default for OfdmParams {
    fn default() -> Self {
        Self {
            n_subcarriers: 512,
            qam_order: 4,
            cp_len: 0,
            auto_cp: true,
            n_training_symbols: 64,
            sample_rate: 50e6,
        }
    }
}

impl OfdmParams {
    pub fn validate(&self) -> Result<()> {
        let n = self.n_subcarriers;
        if n < 8 || !n.is_power_of_two() {
            return Err(invalid(
                "ofdm.n_subcarriers",
                format!("must be a power of two >= 8, got {n}"),
            ));
        }
        qam::bits_per_symbol(self.qam_order)?;
        if self.cp_len > n {
            return Err(invalid(
                "ofdm.cp_len",
                format!("prefix of {} exceeds the {n}-sample symbol", self.cp_len),
            ));
        }
        if self.n_training_symbols == 0 {
            return Err(invalid("ofdm.n_training_symbols", "must be >= 1"));
        }
        if !(self.sample_rate > 0.0 && self.sample_rate.is_finite()) {
            return Err(invalid("ofdm.sample_rate", "must be > 0"));
        }
        Ok(())
    }

    /// Data symbols carried per OFDM symbol.
    pub fn data_per_symbol(&self) -> usize {
        self.n_subcarriers / 4
    }

    pub fn bits_per_symbol(&self) -> usize {
        self.data_per_symbol() * self.qam_order.trailing_zeros() as usize
    }

    pub fn symbol_len(&self) -> usize {
        self.n_subcarriers + self.cp_len
    }

    /// Information bit rate, bits/s.
    pub fn bit_rate(&self) -> f64 {
        self.bits_per_symbol() as f64 * self.sample_rate / self.symbol_len() as f64
    }
}

/// One ACO-OFDM symbol at every stage of the transmit chain.
#[derive(Debug, Clone, PartialEq)]
pub struct OfdmFrame {
    pub data: Vec<Complex64>,
    pub mapped: Vec<Complex64>,
    /// Clipped time samples, cyclic prefix first.
    pub samples: Vec<f64>,
}

/// Ratio-based DC gain estimate from training symbols.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GainEstimate {
    /// Mean magnitude of received-over-sent training symbols.
    pub h_tilde: f64,
    /// Known end-to-end scale between optical gain and `h_tilde`.
    pub kappa: f64,
    pub optical_gain: f64,
}

/// Place `N/4` data symbols on the odd subcarriers with Hermitian symmetry.
pub fn hermitian_map(data: &[Complex64], n: usize) -> Result<Vec<Complex64>> {
    if n < 8 || !n.is_power_of_two() {
        return Err(invalid(
            "n_subcarriers",
            format!("{n} is not a power of two >= 8"),
        ));
    }
    if data.len() != n / 4 {
        return Err(Error::LengthMismatch {
            expected: n / 4,
            actual: data.len(),
        });
    }
    let mut s = vec![Complex64::new(0.0, 0.0); n];
    for (k, &sym) in data.iter().enumerate() {
        let q = 2 * k + 1;
        s[q] = sym;
        s[n - q] = sym.conj();
    }
    Ok(s)
}

/// Modem with FFT plans prepared for one subcarrier count.
pub struct AcoOfdm {
    params: OfdmParams,
    ifft: Arc<dyn Fft<f64>>,
    fft: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for AcoOfdm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("AcoOfdm")
            .field("params", &self.params)
            .finish()
    }
}

impl AcoOfdm {
    pub fn new(params: OfdmParams) -> Result<Self> {
        params.validate()?;
        let mut planner = FftPlanner::new();
        let ifft = planner.plan_fft_inverse(params.n_subcarriers);
        let fft = planner.plan_fft_forward(params.n_subcarriers);
        Ok(Self { params, ifft, fft })
    }

    pub fn params(&self) -> &OfdmParams {
        &self.params
    }

    /// Real time-domain samples of a mapped frame, before CP and clipping.
    pub fn unclipped(&self, mapped: &[Complex64]) -> Vec<f64> {
        let n = self.params.n_subcarriers;
        let mut buf = mapped.to_vec();
        self.ifft.process(&mut buf);
        buf.iter().map(|z| z.re / n as f64).collect()
    }

    pub fn modulate(&self, data: &[Complex64]) -> Result<OfdmFrame> {
        let n = self.params.n_subcarriers;
        let mapped = hermitian_map(data, n)?;
        let x = self.unclipped(&mapped);
        let cp = self.params.cp_len;
        let samples = x[n - cp..].iter().chain(&x).map(|v| v.max(0.0)).collect();
        Ok(OfdmFrame {
            data: data.to_vec(),
            mapped,
            samples,
        })
    }

    /// Full unnormalized DFT of one symbol after dropping its prefix.
    pub fn spectrum(&self, samples: &[f64]) -> Result<Vec<Complex64>> {
        let len = self.params.symbol_len();
        if samples.len() != len {
            return Err(Error::LengthMismatch {
                expected: len,
                actual: samples.len(),
            });
        }
        let mut buf: Vec<Complex64> = samples[self.params.cp_len..]
            .iter()
            .map(|&v| Complex64::new(v, 0.0))
            .collect();
        self.fft.process(&mut buf);
        Ok(buf)
    }

    /// Odd subcarriers `1, 3, ..., N/2 - 1`, in order, before equalization.
    pub fn demodulate(&self, samples: &[f64]) -> Result<Vec<Complex64>> {
        let spec = self.spectrum(samples)?;
        Ok(odd_subcarriers(&spec))
    }
}

pub(crate) fn odd_subcarriers(spec: &[Complex64]) -> Vec<Complex64> {
    let n = spec.len();
    (0..n / 4).map(|k| spec[2 * k + 1]).collect()
}

/// Modulate one symbol with freshly planned transforms.
pub fn aco_modulate(data: &[Complex64], params: &OfdmParams) -> Result<Vec<f64>> {
    Ok(AcoOfdm::new(params.clone())?.modulate(data)?.samples)
}

/// Demodulate one symbol with freshly planned transforms.
pub fn aco_demodulate(samples: &[f64], params: &OfdmParams) -> Result<Vec<Complex64>> {
    AcoOfdm::new(params.clone())?.demodulate(samples)
}

/// Single-tap equalizer: divide each subcarrier by its channel gain.
pub fn equalize(received: &[Complex64], gains: &[Complex64]) -> Result<Vec<Complex64>> {
    if received.len() != gains.len() {
        return Err(Error::LengthMismatch {
            expected: gains.len(),
            actual: received.len(),
        });
    }
    received
        .iter()
        .zip(gains)
        .enumerate()
        .map(|(q, (r, g))| {
            if g.norm_sqr() == 0.0 {
                Err(Error::ZeroGain(q))
            } else {
                Ok(r / g)
            }
        })
        .collect()
}

/// Per-subcarrier complex channel estimate: received over sent, averaged
/// over the training symbols. Both slices hold the training symbols back to
/// back, `N/4` entries each.
pub fn training_channel(
    received: &[Complex64],
    sent: &[Complex64],
    per_symbol: usize,
) -> Result<Vec<Complex64>> {
    check_training(received, sent, per_symbol)?;
    let n_sym = sent.len() / per_symbol;
    let mut h = vec![Complex64::new(0.0, 0.0); per_symbol];
    for (i, (r, s)) in received.iter().zip(sent).enumerate() {
        h[i % per_symbol] += r / s;
    }
    h.iter_mut().for_each(|v| *v /= n_sym as f64);
    Ok(h)
}

fn check_training(received: &[Complex64], sent: &[Complex64], per_symbol: usize) -> Result<()> {
    if received.len() != sent.len() {
        return Err(Error::LengthMismatch {
            expected: sent.len(),
            actual: received.len(),
        });
    }
    if sent.is_empty() || per_symbol == 0 || !sent.len().is_multiple_of(per_symbol) {
        return Err(Error::Empty("training symbols"));
    }
    if let Some(i) = sent.iter().position(|s| s.norm_sqr() == 0.0) {
        return Err(Error::ZeroTrainingSymbol(i));
    }
    Ok(())
}

/// DC gain from training symbols: the mean over every training symbol of
/// the per-symbol attenuation `|received / sent|`, then divided by `kappa`.
///
/// Magnitudes, not complex ratios, are averaged.
pub fn estimate_dc_gain(
    received: &[Complex64],
    sent: &[Complex64],
    kappa: f64,
) -> Result<GainEstimate> {
    check_training(received, sent, sent.len().max(1))?;
    if !(kappa > 0.0 && kappa.is_finite()) {
        return Err(invalid("kappa", format!("must be > 0, got {kappa}")));
    }
    let h_tilde = received
        .iter()
        .zip(sent)
        .map(|(r, s)| (r / s).norm())
        .sum::<f64>()
        / sent.len() as f64;
    Ok(GainEstimate {
        h_tilde,
        kappa,
        optical_gain: h_tilde / kappa,
    })
}
