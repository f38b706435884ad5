//! Experiment orchestration: configuration, TDM slots, grid sweeps and
//! their CSV outputs.

mod slot;
mod sweep;

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::channel::RayTraceParams;
use crate::error::{invalid, Error, Result};
use crate::frontend::{LedModel, NoiseModel};
use crate::geometry::{Luminaire, ReceiverSpec, RoomModel};
use crate::ofdm::OfdmParams;
use crate::ook::OokParams;

pub use slot::{
    agc_gain, run_tdm_slot, training_bits, training_symbols, SlotOutcome, SlotRunner, SlotSeeds,
};
pub use sweep::{
    compare_runs, read_points_csv, run_sweep, summarize, write_compare_csv, write_points_csv,
    write_summary_csv, ChannelCache, ErrorMap, PointRecord, RunMeta, Summary,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Modulation {
    Ofdm,
    Ook,
}

impl fmt::Display for Modulation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Modulation::Ofdm => "ofdm",
            Modulation::Ook => "ook",
        })
    }
}

impl FromStr for Modulation {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ofdm" => Ok(Modulation::Ofdm),
            "ook" => Ok(Modulation::Ook),
            _ => Err(invalid("modulation", format!("unknown modulation `{s}`"))),
        }
    }
}

/// Named configuration overlays. Several can be stacked.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    /// The shipped defaults with OFDM.
    PaperOfdm,
    /// The shipped defaults with the OOK baseline.
    PaperOok,
    /// Direct path only.
    LosOnly,
    /// Affine LED with no saturation.
    LinearLed,
}

impl Preset {
    pub const ALL: [Preset; 4] = [
        Preset::PaperOfdm,
        Preset::PaperOok,
        Preset::LosOnly,
        Preset::LinearLed,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Preset::PaperOfdm => "paper-ofdm",
            Preset::PaperOok => "paper-ook",
            Preset::LosOnly => "los-only",
            Preset::LinearLed => "linear-led",
        }
    }

    pub fn apply(self, cfg: &mut ExperimentConfig) {
        match self {
            Preset::PaperOfdm => cfg.modulation = Modulation::Ofdm,
            Preset::PaperOok => cfg.modulation = Modulation::Ook,
            Preset::LosOnly => cfg.channel.max_bounces = 0,
            Preset::LinearLed => cfg.led = LedModel::linear(),
        }
    }
}

impl FromStr for Preset {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Preset::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| invalid("preset", format!("unknown preset `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    /// Seed for payloads and receiver noise. Channels use `channel.rng_seed`.
    pub seed: u64,
    pub modulation: Modulation,
    /// Mean electrical drive power per LED, dBm.
    pub target_power_dbm: f64,
    pub grid_nx: usize,
    pub grid_ny: usize,
    /// OFDM symbols carrying the ID and payload after the training symbols.
    pub payload_symbols: usize,
    /// Slots per luminaire per point; their gain estimates are averaged.
    pub repeats: usize,
    pub output_dir: PathBuf,
    pub room: RoomModel,
    pub luminaires: Vec<Luminaire>,
    pub receiver: ReceiverSpec,
    pub channel: RayTraceParams,
    pub ofdm: OfdmParams,
    pub ook: OokParams,
    pub led: LedModel,
    pub noise: NoiseModel,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            modulation: Modulation::Ofdm,
            target_power_dbm: 5.0,
            grid_nx: 8,
            grid_ny: 8,
            payload_symbols: 1,
            repeats: 1,
            output_dir: PathBuf::from("out"),
            room: RoomModel::default(),
            luminaires: Luminaire::default_layout(),
            receiver: ReceiverSpec::default(),
            channel: RayTraceParams::default(),
            ofdm: OfdmParams::default(),
            ook: OokParams::default(),
            led: LedModel::default(),
            noise: NoiseModel::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(s)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let cfg: Self = toml::from_str(&text).map_err(|source| Error::ConfigParse {
            path: path.to_path_buf(),
            source,
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    pub fn with_presets(mut self, presets: &[Preset]) -> Self {
        for p in presets {
            p.apply(&mut self);
        }
        self
    }

    /// Drive power set from a target SNR against the configured noise.
    pub fn set_snr_db(&mut self, snr_db: f64) {
        self.target_power_dbm = self.noise.power_dbm + snr_db;
    }

    pub fn validate(&self) -> Result<()> {
        // TOML integers are signed 64-bit
        if self.seed > i64::MAX as u64 || self.channel.rng_seed > i64::MAX as u64 {
            return Err(invalid("seed", "must fit in a signed 64-bit integer"));
        }
        if !self.target_power_dbm.is_finite() {
            return Err(invalid("target_power_dbm", "must be finite"));
        }
        if self.grid_nx == 0 || self.grid_ny == 0 {
            return Err(invalid("grid_nx", "grid needs at least one point per axis"));
        }
        if self.repeats == 0 {
            return Err(invalid("repeats", "must be >= 1"));
        }
        self.room.validate()?;
        if self.luminaires.len() < 3 {
            return Err(invalid("luminaires", "lateration needs at least three"));
        }
        for (i, l) in self.luminaires.iter().enumerate() {
            l.validate(&self.room)?;
            if self.luminaires[..i].iter().any(|o| o.id_code == l.id_code) {
                return Err(invalid(
                    "luminaires",
                    format!("duplicate id_code {}", l.id_code),
                ));
            }
            if l.position.z <= self.receiver.position.z {
                return Err(invalid(
                    "luminaires",
                    "every luminaire must sit above the receiver plane",
                ));
            }
        }
        self.receiver.validate()?;
        if !(0.0..self.room.height).contains(&self.receiver.position.z) {
            return Err(invalid(
                "receiver.position",
                "height must lie inside the room",
            ));
        }
        self.channel.validate()?;
        self.ofdm.validate()?;
        self.ook.validate()?;
        self.led.validate()?;
        self.noise.validate()?;
        if self.payload_symbols * self.ofdm.bits_per_symbol() < 8 {
            return Err(invalid(
                "payload_symbols",
                "payload cannot hold the 8-bit luminaire ID; add symbols or subcarriers",
            ));
        }
        Ok(())
    }

    /// Receiver positions of the sweep, row-major in y then x, spanning the
    /// floor plan edge to edge.
    pub fn grid(&self) -> Vec<(f64, f64)> {
        let axis = |n: usize, len: f64| -> Vec<f64> {
            if n == 1 {
                vec![len / 2.0]
            } else {
                (0..n).map(|i| len * i as f64 / (n - 1) as f64).collect()
            }
        };
        let xs = axis(self.grid_nx, self.room.length);
        let ys = axis(self.grid_ny, self.room.width);
        ys.iter()
            .flat_map(|&y| xs.iter().map(move |&x| (x, y)))
            .collect()
    }

    /// Corner, edge-midpoint and center probes.
    pub fn probes(&self) -> [(f64, f64); 3] {
        let (l, w) = (self.room.length, self.room.width);
        [(0.0, 0.0), (l / 2.0, 0.0), (l / 2.0, w / 2.0)]
    }
}

/// Purposes of derived random streams.
#[derive(Debug, Clone, Copy)]
#[repr(u64)]
pub(crate) enum Stream {
    Channel = 0,
    Payload = 1,
    Noise = 2,
}

/// Independent 64-bit seed for one (position, link, repeat, purpose) tuple.
/// Positions are quantized to 0.1 mm so a probe and a coinciding grid point
/// see the same streams.
pub(crate) fn derive_seed(
    base: u64,
    pos: (f64, f64),
    link: usize,
    repeat: usize,
    purpose: Stream,
) -> u64 {
    let q = |v: f64| ((v * 1e4).round() as i64 as u64) & 0x3F_FFFF;
    let stream = (q(pos.0) << 42)
        | (q(pos.1) << 20)
        | ((link as u64 & 0xF) << 16)
        | ((repeat as u64 & 0xFFF) << 4)
        | purpose as u64;
    let mut rng = ChaCha8Rng::seed_from_u64(base);
    rng.set_stream(stream);
    rng.next_u64()
}
