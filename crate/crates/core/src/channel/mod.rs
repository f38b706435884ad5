//! Multipath impulse responses of luminaire-to-receiver links.
//!
//! The direct path is analytic. The first reflection is a deterministic sum
//! over small surface patches, each treated as a first-order Lambertian
//! re-emitter. Second and higher reflections are estimated by Monte Carlo
//! ray tracing with next-event estimation: every diffuse hit sends its
//! reflectivity-weighted Lambertian contribution straight to the receiver,
//! then the ray continues in a cosine-distributed direction. Rays are traced
//! to exactly `max_bounces` reflections; there is no Russian roulette.

mod trace;

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::geometry::{
    channel_dc_gain_los, los_geometry, Luminaire, ReceiverSpec, RoomModel, SPEED_OF_LIGHT,
};

pub use trace::RAYS_PER_BATCH;

/// Ray tracing and binning controls.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RayTraceParams {
    pub max_bounces: usize,
    /// Side of the square patches used for the deterministic first bounce, m.
    pub patch_side: f64,
    /// Rays launched per source for the Monte Carlo orders.
    pub rays_per_source: usize,
    pub rng_seed: u64,
    /// Delay bin width, s.
    pub bin_width: f64,
    /// Diagnostic: estimate the first bounce by Monte Carlo as well.
    pub first_bounce_monte_carlo: bool,
}

impl Default for RayTraceParams {
    fn default() -> Self {
        Self {
            max_bounces: 3,
            patch_side: 0.1,
            rays_per_source: 100_000,
            rng_seed: 0x5EED,
            bin_width: 0.2e-9,
            first_bounce_monte_carlo: false,
        }
    }
}

impl RayTraceParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.patch_side > 0.0 && self.patch_side.is_finite()) {
            return Err(invalid("channel.patch_side", "must be > 0"));
        }
        if self.rays_per_source == 0 {
            return Err(invalid("channel.rays_per_source", "must be > 0"));
        }
        if !(self.bin_width > 0.0 && self.bin_width.is_finite()) {
            return Err(invalid("channel.bin_width", "must be > 0"));
        }
        Ok(())
    }
}

/// Time-binned optical power gains of one link, split by reflection order.
///
/// Bin `i` of every order covers delays `[t0 + i*bin_width, t0 + (i+1)*bin_width)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ImpulseResponse {
    pub bin_width: f64,
    pub t0: f64,
    pub bins_by_order: Vec<Vec<f64>>,
    /// Monte Carlo standard error of each order's total gain; zero for the
    /// orders computed deterministically.
    pub std_error_by_order: Vec<f64>,
}

impl ImpulseResponse {
    pub fn empty(bin_width: f64, t0: f64, orders: usize) -> Self {
        Self {
            bin_width,
            t0,
            bins_by_order: vec![Vec::new(); orders],
            std_error_by_order: vec![0.0; orders],
        }
    }

    pub fn max_order(&self) -> usize {
        self.bins_by_order.len().saturating_sub(1)
    }

    fn bin_index(&self, delay: f64) -> usize {
        let i = ((delay - self.t0) / self.bin_width).floor();
        if i > 0.0 {
            i as usize
        } else {
            0
        }
    }

    /// Deposit `gain` at `delay` into reflection order `order`.
    pub fn deposit(&mut self, order: usize, delay: f64, gain: f64) {
        let i = self.bin_index(delay);
        let bins = &mut self.bins_by_order[order];
        if bins.len() <= i {
            bins.resize(i + 1, 0.0);
        }
        bins[i] += gain;
    }

    pub fn delay_of(&self, bin: usize) -> f64 {
        self.t0 + bin as f64 * self.bin_width
    }

    pub fn order_gain(&self, order: usize) -> f64 {
        self.bins_by_order
            .get(order)
            .map(|b| b.iter().sum())
            .unwrap_or(0.0)
    }

    /// Gains summed across orders, one entry per delay bin.
    pub fn combined(&self) -> Vec<f64> {
        let len = self.bins_by_order.iter().map(Vec::len).max().unwrap_or(0);
        let mut out = vec![0.0; len];
        for bins in &self.bins_by_order {
            for (o, b) in out.iter_mut().zip(bins) {
                *o += b;
            }
        }
        out
    }

    /// Power received through reflections relative to the total.
    pub fn non_los_fraction(&self) -> f64 {
        let total = dc_gain(self);
        if total == 0.0 {
            return 0.0;
        }
        (total - self.order_gain(0)) / total
    }

    /// Aggregate the response onto a sampling grid of rate `sample_rate`,
    /// referenced to the first bin: every bin whose delay rounds to sample `k`
    /// contributes to tap `k`. The tap sum equals the DC gain.
    pub fn resample(&self, sample_rate: f64) -> Vec<f64> {
        let combined = self.combined();
        let mut taps: Vec<f64> = Vec::new();
        for (i, g) in combined.iter().enumerate() {
            if *g == 0.0 {
                continue;
            }
            let k = ((i as f64 * self.bin_width) * sample_rate).round() as usize;
            if taps.len() <= k {
                taps.resize(k + 1, 0.0);
            }
            taps[k] += g;
        }
        if taps.is_empty() {
            taps.push(0.0);
        }
        taps
    }

    /// Write `order,delay_s,gain` rows for every nonzero bin.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["order", "delay_s", "gain"])?;
        for (order, bins) in self.bins_by_order.iter().enumerate() {
            for (i, g) in bins.iter().enumerate() {
                if *g != 0.0 {
                    wr.write_record([
                        order.to_string(),
                        format!("{:e}", self.delay_of(i)),
                        format!("{:e}", g),
                    ])?;
                }
            }
        }
        wr.flush()?;
        Ok(())
    }
}

/// Simulate the impulse response of one link up to `params.max_bounces`
/// reflections. Deterministic for a fixed `params.rng_seed`.
pub fn simulate_impulse_response(
    room: &RoomModel,
    src: &Luminaire,
    rcv: &ReceiverSpec,
    params: &RayTraceParams,
) -> Result<ImpulseResponse> {
    room.validate()?;
    src.validate(room)?;
    rcv.validate()?;
    params.validate()?;

    let los = los_geometry(src, rcv)?;
    let los_delay = los.distance / SPEED_OF_LIGHT;
    let t0 = (los_delay / params.bin_width).floor() * params.bin_width;
    let mut ir = ImpulseResponse::empty(params.bin_width, t0, params.max_bounces + 1);

    let los_gain = channel_dc_gain_los(src, rcv);
    if los_gain > 0.0 {
        ir.deposit(0, los_delay, los_gain);
    } else {
        // keep the LOS bin present so its delay stays readable
        ir.bins_by_order[0].push(0.0);
    }

    if params.max_bounces >= 1 && !params.first_bounce_monte_carlo {
        trace::first_bounce_deterministic(room, src, rcv, params.patch_side, &mut ir);
    }
    let first_mc_order = if params.first_bounce_monte_carlo {
        1
    } else {
        2
    };
    if params.max_bounces >= first_mc_order {
        trace::higher_bounces_monte_carlo(room, src, rcv, params, first_mc_order, &mut ir);
    }
    Ok(ir)
}

/// Channel DC gain: every bin of every order summed.
pub fn dc_gain(ir: &ImpulseResponse) -> f64 {
    ir.bins_by_order.iter().flatten().sum()
}

/// Gain-weighted RMS spread of the delays.
pub fn rms_delay_spread(ir: &ImpulseResponse) -> Result<f64> {
    let bins = ir.combined();
    let total: f64 = bins.iter().sum();
    if !(total > 0.0) {
        return Err(Error::ZeroGainResponse);
    }
    // delays relative to t0; the spread is shift invariant
    let mean = bins
        .iter()
        .enumerate()
        .map(|(i, g)| g * i as f64 * ir.bin_width)
        .sum::<f64>()
        / total;
    let var = bins
        .iter()
        .enumerate()
        .map(|(i, g)| {
            let dt = i as f64 * ir.bin_width - mean;
            g * dt * dt
        })
        .sum::<f64>()
        / total;
    Ok(var.max(0.0).sqrt())
}

/// Cyclic prefix length, in samples, covering three RMS delay spreads of
/// the worst response in `irs`.
pub fn worst_case_cp_samples(irs: &[ImpulseResponse], sample_rate: f64) -> Result<usize> {
    if irs.is_empty() {
        return Err(Error::Empty("impulse response list"));
    }
    let mut worst: f64 = 0.0;
    for ir in irs {
        worst = worst.max(rms_delay_spread(ir)?);
    }
    let samples = 3.0 * worst * sample_rate;
    // absorb representation error so exact products do not round up
    Ok((samples - 1e-9).ceil().max(0.0) as usize)
}
