//! Grid sweeps: channels per link, TDM slots per luminaire, lateration per
//! point, and the summary statistics and CSV files built from them.

use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::Path;
use std::sync::{Arc, Mutex};

use rayon::prelude::*;

use super::slot::{SlotRunner, SlotSeeds};
use super::{derive_seed, ExperimentConfig, Modulation, Stream};
use crate::channel::{
    dc_gain, simulate_impulse_response, worst_case_cp_samples, ImpulseResponse, RayTraceParams,
};
use crate::error::{Error, Result};
use crate::geometry::{Luminaire, ReceiverSpec, RoomModel};
use crate::positioning::{locate, Anchor, DistanceModel};

/// Impulse responses shared between sweeps. Keys cover every input of the
/// simulation, including the per-link seed.
#[derive(Debug, Default)]
pub struct ChannelCache {
    map: Mutex<HashMap<String, Arc<ImpulseResponse>>>,
}

impl ChannelCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.map.lock().expect("cache lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Link seed derived from the base seed, the receiver position and the
    /// luminaire's index in the configuration.
    pub fn link_params(base: &RayTraceParams, rcv: &ReceiverSpec, link: usize) -> RayTraceParams {
        let pos = (rcv.position.x, rcv.position.y);
        RayTraceParams {
            rng_seed: derive_seed(base.rng_seed, pos, link, 0, Stream::Channel),
            ..base.clone()
        }
    }

    pub fn get_or_simulate(
        &self,
        room: &RoomModel,
        lum: &Luminaire,
        link: usize,
        rcv: &ReceiverSpec,
        base: &RayTraceParams,
    ) -> Result<Arc<ImpulseResponse>> {
        let params = Self::link_params(base, rcv, link);
        // Debug output of f64 round-trips exactly
        let key = format!("{room:?}|{lum:?}|{rcv:?}|{params:?}");
        if let Some(ir) = self.map.lock().expect("cache lock").get(&key) {
            return Ok(Arc::clone(ir));
        }
        let ir = Arc::new(simulate_impulse_response(room, lum, rcv, &params)?);
        let mut map = self.map.lock().expect("cache lock");
        Ok(Arc::clone(map.entry(key).or_insert(ir)))
    }
}

/// One receiver location.
#[derive(Debug, Clone, PartialEq)]
pub struct PointRecord {
    pub x: f64,
    pub y: f64,
    pub error: Option<f64>,
    /// Anchors whose range was clamped to zero.
    pub clamped_anchors: usize,
    pub unresolved: bool,
    /// Estimated optical gain per slot, in luminaire order.
    pub gains: Vec<Option<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunMeta {
    pub modulation: Modulation,
    pub n_subcarriers: usize,
    pub qam_order: usize,
    pub power_dbm: f64,
    pub seed: u64,
    pub cp_len: usize,
    /// Bounding box of the luminaires: x0, x1, y0, y1.
    pub anchor_rect: [f64; 4],
}

impl RunMeta {
    pub fn from_config(cfg: &ExperimentConfig) -> Self {
        let xs = cfg.luminaires.iter().map(|l| l.position.x);
        let ys = cfg.luminaires.iter().map(|l| l.position.y);
        let rect = [
            xs.clone().fold(f64::INFINITY, f64::min),
            xs.fold(f64::NEG_INFINITY, f64::max),
            ys.clone().fold(f64::INFINITY, f64::min),
            ys.fold(f64::NEG_INFINITY, f64::max),
        ];
        Self {
            modulation: cfg.modulation,
            n_subcarriers: cfg.ofdm.n_subcarriers,
            qam_order: cfg.ofdm.qam_order,
            power_dbm: cfg.target_power_dbm,
            seed: cfg.seed,
            cp_len: cfg.ofdm.cp_len,
            anchor_rect: rect,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ErrorMap {
    pub meta: RunMeta,
    /// Grid points in grid order.
    pub points: Vec<PointRecord>,
    /// Corner, edge and center probes.
    pub probes: Vec<PointRecord>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub corner: f64,
    pub edge: f64,
    pub center: f64,
    pub rms_rect: f64,
    pub rms_total: f64,
    pub unresolved: usize,
    pub meta: RunMeta,
}

/// Simulate every grid point and probe of `cfg`.
pub fn run_sweep(cfg: &ExperimentConfig, cache: &ChannelCache) -> Result<ErrorMap> {
    cfg.validate()?;
    let grid = cfg.grid();
    let positions: Vec<(f64, f64)> = grid.iter().copied().chain(cfg.probes()).collect();

    let channels: Vec<Vec<Arc<ImpulseResponse>>> = positions
        .par_iter()
        .map(|&(x, y)| {
            let rcv = cfg.receiver.at(x, y);
            cfg.luminaires
                .iter()
                .enumerate()
                .map(|(k, lum)| cache.get_or_simulate(&cfg.room, lum, k, &rcv, &cfg.channel))
                .collect()
        })
        .collect::<Result<_>>()?;

    let mut run_cfg = cfg.clone();
    if cfg.modulation == Modulation::Ofdm && cfg.ofdm.auto_cp {
        let live: Vec<ImpulseResponse> = channels
            .iter()
            .flatten()
            .filter(|ir| dc_gain(ir) > 0.0)
            .map(|ir| (**ir).clone())
            .collect();
        let cp = if live.is_empty() {
            0
        } else {
            worst_case_cp_samples(&live, cfg.ofdm.sample_rate)?
        };
        run_cfg.ofdm.cp_len = cp.min(cfg.ofdm.n_subcarriers);
    }
    let runner = SlotRunner::new(&run_cfg)?;

    let mut records: Vec<PointRecord> = positions
        .par_iter()
        .zip(&channels)
        .map(|(&pos, irs)| evaluate_point(&runner, pos, irs))
        .collect::<Result<_>>()?;
    let probes = records.split_off(grid.len());
    Ok(ErrorMap {
        meta: RunMeta::from_config(&run_cfg),
        points: records,
        probes,
    })
}

fn evaluate_point(
    runner: &SlotRunner,
    pos: (f64, f64),
    irs: &[Arc<ImpulseResponse>],
) -> Result<PointRecord> {
    let cfg = runner.config();
    let rcv = cfg.receiver.at(pos.0, pos.1);
    let mut slots: Vec<(Option<u8>, Option<f64>)> = Vec::with_capacity(irs.len());
    for (k, (lum, ir)) in cfg.luminaires.iter().zip(irs).enumerate() {
        let mut votes: HashMap<u8, usize> = HashMap::new();
        let mut gains = Vec::with_capacity(cfg.repeats);
        for r in 0..cfg.repeats {
            let seeds = SlotSeeds {
                payload: derive_seed(cfg.seed, pos, k, r, Stream::Payload),
                noise: derive_seed(cfg.seed, pos, k, r, Stream::Noise),
            };
            let out = runner.run(lum, ir, seeds)?;
            if let Some(id) = out.decoded_id {
                *votes.entry(id).or_default() += 1;
            }
            if let Some(g) = out.gain {
                gains.push(g.optical_gain);
            }
        }
        let id = votes
            .into_iter()
            .find(|&(_, n)| 2 * n > cfg.repeats)
            .map(|(id, _)| id);
        let gain = (!gains.is_empty()).then(|| gains.iter().sum::<f64>() / gains.len() as f64);
        slots.push((id, gain));
    }

    let mut anchors = Vec::new();
    let mut models = Vec::new();
    let mut gains = Vec::new();
    for &(id, gain) in &slots {
        let (Some(id), Some(g)) = (id, gain) else {
            continue;
        };
        // an ID claimed by two slots cannot be trusted for either
        if slots.iter().filter(|s| s.0 == Some(id)).count() > 1 || !(g > 0.0) {
            continue;
        }
        let lum = cfg
            .luminaires
            .iter()
            .find(|l| l.id_code == id)
            .expect("decoded IDs are configured");
        anchors.push(Anchor::from(lum));
        models.push(DistanceModel::new(lum, &rcv));
        gains.push(g);
    }

    let fix = if anchors.len() >= 3 {
        locate(&anchors, &models, &gains, Some(pos)).ok()
    } else {
        None
    };
    Ok(PointRecord {
        x: pos.0,
        y: pos.1,
        error: fix.as_ref().and_then(|f| f.error),
        clamped_anchors: fix
            .as_ref()
            .map_or(0, |f| f.clamped.iter().filter(|c| **c).count()),
        unresolved: fix.is_none(),
        gains: slots.iter().map(|s| s.1).collect(),
    })
}

fn rms(values: impl Iterator<Item = f64>) -> f64 {
    let (n, ss) = values.fold((0usize, 0.0), |(n, ss), e| (n + 1, ss + e * e));
    if n == 0 {
        f64::NAN
    } else {
        (ss / n as f64).sqrt()
    }
}

/// Probe errors plus RMS error over the anchor rectangle and over the whole
/// grid. Unresolved points are left out of the RMS values and counted.
pub fn summarize(map: &ErrorMap) -> Summary {
    let probe = |i: usize| map.probes.get(i).and_then(|p| p.error).unwrap_or(f64::NAN);
    let [x0, x1, y0, y1] = map.meta.anchor_rect;
    let tol = 1e-9;
    let in_rect =
        |p: &PointRecord| p.x >= x0 - tol && p.x <= x1 + tol && p.y >= y0 - tol && p.y <= y1 + tol;
    Summary {
        corner: probe(0),
        edge: probe(1),
        center: probe(2),
        rms_rect: rms(map
            .points
            .iter()
            .filter(|p| in_rect(p))
            .filter_map(|p| p.error)),
        rms_total: rms(map.points.iter().filter_map(|p| p.error)),
        unresolved: map.points.iter().filter(|p| p.unresolved).count(),
        meta: map.meta.clone(),
    }
}

/// Sweep each configuration against one shared channel cache.
pub fn compare_runs(configs: &[ExperimentConfig], cache: &ChannelCache) -> Result<Vec<Summary>> {
    if configs.len() < 2 {
        return Err(Error::Empty("comparison needs at least two configurations"));
    }
    configs
        .iter()
        .map(|cfg| run_sweep(cfg, cache).map(|m| summarize(&m)))
        .collect()
}

fn opt(v: Option<f64>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

/// `x_m, y_m, error_m, clamped_anchors, unresolved, gain_1..gain_K`.
pub fn write_points_csv<W: Write>(w: W, points: &[PointRecord]) -> Result<()> {
    let k = points.first().map_or(0, |p| p.gains.len());
    let mut wr = csv::Writer::from_writer(w);
    let mut header: Vec<String> = ["x_m", "y_m", "error_m", "clamped_anchors", "unresolved"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    header.extend((1..=k).map(|i| format!("gain_{i}")));
    wr.write_record(&header)?;
    for p in points {
        let mut row = vec![
            p.x.to_string(),
            p.y.to_string(),
            opt(p.error),
            p.clamped_anchors.to_string(),
            (p.unresolved as u8).to_string(),
        ];
        row.extend(p.gains.iter().map(|g| opt(*g)));
        wr.write_record(&row)?;
    }
    wr.flush()?;
    Ok(())
}

/// Parse a file written by [`write_points_csv`].
pub fn read_points_csv<R: Read>(r: R) -> Result<Vec<PointRecord>> {
    let mut rd = csv::Reader::from_reader(r);
    let bad = |what: &str| Error::InvalidParameter {
        name: "points csv",
        reason: format!("malformed {what}"),
    };
    let num = |s: &str, what: &str| s.parse::<f64>().map_err(|_| bad(what));
    let maybe = |s: &str, what: &str| -> Result<Option<f64>> {
        if s.is_empty() {
            Ok(None)
        } else {
            num(s, what).map(Some)
        }
    };
    let mut out = Vec::new();
    for rec in rd.records() {
        let rec = rec?;
        if rec.len() < 5 {
            return Err(bad("row"));
        }
        out.push(PointRecord {
            x: num(&rec[0], "x_m")?,
            y: num(&rec[1], "y_m")?,
            error: maybe(&rec[2], "error_m")?,
            clamped_anchors: rec[3].parse().map_err(|_| bad("clamped_anchors"))?,
            unresolved: &rec[4] == "1",
            gains: rec
                .iter()
                .skip(5)
                .map(|s| maybe(s, "gain"))
                .collect::<Result<_>>()?,
        });
    }
    Ok(out)
}

const SUMMARY_HEADER: [&str; 10] = [
    "corner_m",
    "edge_m",
    "center_m",
    "rms_rect_m",
    "rms_total_m",
    "modulation",
    "N",
    "M",
    "power_dBm",
    "seed",
];

fn summary_row(s: &Summary) -> Vec<String> {
    vec![
        s.corner.to_string(),
        s.edge.to_string(),
        s.center.to_string(),
        s.rms_rect.to_string(),
        s.rms_total.to_string(),
        s.meta.modulation.to_string(),
        s.meta.n_subcarriers.to_string(),
        s.meta.qam_order.to_string(),
        s.meta.power_dbm.to_string(),
        s.meta.seed.to_string(),
    ]
}

pub fn write_summary_csv<W: Write>(w: W, summaries: &[Summary]) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(SUMMARY_HEADER)?;
    for s in summaries {
        wr.write_record(summary_row(s))?;
    }
    wr.flush()?;
    Ok(())
}

/// Summary rows prefixed with a label naming each configuration.
pub fn write_compare_csv<W: Write>(w: W, labels: &[String], summaries: &[Summary]) -> Result<()> {
    if labels.len() != summaries.len() {
        return Err(Error::LengthMismatch {
            expected: summaries.len(),
            actual: labels.len(),
        });
    }
    let mut wr = csv::Writer::from_writer(w);
    let mut header = vec!["label"];
    header.extend(SUMMARY_HEADER);
    wr.write_record(&header)?;
    for (label, s) in labels.iter().zip(summaries) {
        let mut row = vec![label.clone()];
        row.extend(summary_row(s));
        wr.write_record(&row)?;
    }
    wr.flush()?;
    Ok(())
}

impl ErrorMap {
    /// Write `config.toml`, `points.csv`, `probes.csv` and `summary.csv`
    /// into `dir`, creating it if needed.
    pub fn write_run(&self, dir: &Path, cfg: &ExperimentConfig) -> Result<Summary> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("config.toml"), cfg.to_toml_string()?)?;
        write_points_csv(std::fs::File::create(dir.join("points.csv"))?, &self.points)?;
        write_points_csv(std::fs::File::create(dir.join("probes.csv"))?, &self.probes)?;
        let summary = summarize(self);
        write_summary_csv(
            std::fs::File::create(dir.join("summary.csv"))?,
            std::slice::from_ref(&summary),
        )?;
        Ok(summary)
    }

    /// Rebuild a map from a run directory written by [`ErrorMap::write_run`].
    pub fn read_run(dir: &Path) -> Result<(ExperimentConfig, ErrorMap)> {
        let cfg = ExperimentConfig::load(&dir.join("config.toml"))?;
        let points = read_points_csv(std::fs::File::open(dir.join("points.csv"))?)?;
        let probes = match std::fs::File::open(dir.join("probes.csv")) {
            Ok(f) => read_points_csv(f)?,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Vec::new(),
            Err(e) => return Err(e.into()),
        };
        let meta = RunMeta::from_config(&cfg);
        Ok((
            cfg,
            ErrorMap {
                meta,
                points,
                probes,
            },
        ))
    }
}
