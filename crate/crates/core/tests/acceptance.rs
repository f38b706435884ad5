//! End-to-end acceptance checks. Runs without the libtest harness so the
//! PASS/FAIL line of every criterion is always printed; exits non-zero if any
//! criterion fails.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use vlp_core::channel::{simulate_impulse_response, ImpulseResponse, RayTraceParams};
use vlp_core::experiment::{
    run_sweep, run_tdm_slot, summarize, ChannelCache, ExperimentConfig, Preset, SlotSeeds, Summary,
};
use vlp_core::geometry::{channel_dc_gain_los, Luminaire, ReceiverSpec};
use vlp_core::ofdm::{AcoOfdm, OfdmParams};
use vlp_core::positioning::{laterate, Anchor, DistanceModel};

struct Report {
    failed: Vec<usize>,
}

impl Report {
    fn check(&mut self, id: usize, ok: bool, detail: String) {
        println!(
            "criterion {id:>2} {}: {detail}",
            if ok { "PASS" } else { "FAIL" }
        );
        if !ok {
            self.failed.push(id);
        }
    }
}

fn sweep(cfg: &ExperimentConfig, cache: &ChannelCache) -> Summary {
    summarize(&run_sweep(cfg, cache).expect("sweep"))
}

fn clipping_halving() -> (bool, String) {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst: f64 = 0.0;
    for n in [8, 64, 256] {
        let modem = AcoOfdm::new(OfdmParams {
            n_subcarriers: n,
            cp_len: 0,
            ..OfdmParams::default()
        })
        .unwrap();
        for _ in 0..1000 {
            let data: Vec<Complex64> = (0..n / 4)
                .map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
                .collect();
            let out = modem
                .demodulate(&modem.modulate(&data).unwrap().samples)
                .unwrap();
            let err: f64 = out
                .iter()
                .zip(&data)
                .map(|(o, d)| (o - d * 0.5).norm_sqr())
                .sum();
            let norm: f64 = data.iter().map(|d| (d * 0.5).norm_sqr()).sum();
            worst = worst.max((err / norm).sqrt());
        }
    }
    (
        worst < 1e-12,
        format!("worst relative error {worst:.2e} over 3000 frames"),
    )
}

fn lateration_oracle() -> (bool, String) {
    let anchors: Vec<Anchor> = Luminaire::default_layout()
        .iter()
        .map(Anchor::from)
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (mut worst_err, mut worst_res): (f64, f64) = (0.0, 0.0);
    for _ in 0..1000 {
        let p = (rng.random_range(0.0..6.0), rng.random_range(0.0..6.0));
        let ranges: Vec<f64> = anchors
            .iter()
            .map(|a| (p.0 - a.x).hypot(p.1 - a.y))
            .collect();
        let fix = laterate(&anchors, &ranges).unwrap();
        worst_err = worst_err.max((fix.x - p.0).hypot(fix.y - p.1));
        worst_res = worst_res.max(fix.residual_norm);
    }
    (
        worst_err < 1e-9 && worst_res < 1e-9,
        format!("max error {worst_err:.2e} m, max residual {worst_res:.2e} m"),
    )
}

fn gain_formula() -> (bool, String) {
    let src = Luminaire::new(2.0, 2.0, 3.3, 1);
    let rcv = ReceiverSpec::default().at(2.0, 2.0);
    let g = channel_dc_gain_los(&src, &rcv);
    let rel = (g - 1.839e-5).abs() / 1.839e-5;
    let mut worst: f64 = 0.0;
    let dh = src.position.z - rcv.position.z;
    for i in 0..=1000 {
        let d = 2.1 + 2.9 * i as f64 / 1000.0;
        let r = (d * d - dh * dh).max(0.0).sqrt();
        let at = rcv.at(2.0 + r, 2.0);
        // the geometric distance, not the nominal one, is the oracle
        let truth = src.position.distance(at.position);
        let est = DistanceModel::new(&src, &at)
            .distance(channel_dc_gain_los(&src, &at))
            .unwrap();
        worst = worst.max((est - truth).abs() / truth);
    }
    (
        rel < 1e-3 && worst < 1e-12,
        format!("gain {g:.6e} (rel {rel:.1e}); inversion worst rel {worst:.1e} on [2.1, 5] m"),
    )
}

fn flat_estimator_identity() -> (bool, String) {
    let g = 1.839e-5;
    let mut ir = ImpulseResponse::empty(0.2e-9, 0.0, 1);
    ir.deposit(0, 0.0, g);
    let mut worst: f64 = 0.0;
    let mut cfg = ExperimentConfig::default().with_presets(&[Preset::LinearLed]);
    cfg.noise.enabled = false;
    for m in [4, 16, 64] {
        for n in [64, 256, 512, 1024] {
            cfg.ofdm.qam_order = m;
            cfg.ofdm.n_subcarriers = n;
            let seeds = SlotSeeds {
                payload: 7,
                noise: 8,
            };
            let out = run_tdm_slot(&cfg.luminaires[0], &ir, &cfg, seeds).unwrap();
            let est = out.gain.unwrap().optical_gain;
            worst = worst.max((est - g).abs() / g);
        }
    }
    (
        worst < 1e-9,
        format!("worst relative error {worst:.2e} over M x N presets"),
    )
}

fn first_bounce_cross_check() -> (bool, String) {
    let cfg = ExperimentConfig::default();
    let rcv = cfg.receiver.at(3.0, 3.0);
    let base = RayTraceParams {
        max_bounces: 1,
        rays_per_source: 1_000_000,
        ..RayTraceParams::default()
    };
    let mut worst: f64 = 0.0;
    for lum in &cfg.luminaires {
        let det = simulate_impulse_response(&cfg.room, lum, &rcv, &base).unwrap();
        let mc = simulate_impulse_response(
            &cfg.room,
            lum,
            &rcv,
            &RayTraceParams {
                first_bounce_monte_carlo: true,
                ..base.clone()
            },
        )
        .unwrap();
        let (a, b) = (det.order_gain(1), mc.order_gain(1));
        worst = worst.max((a - b).abs() / a);
    }
    (
        worst < 0.05,
        format!("first bounce, deterministic vs Monte Carlo at 1e6 rays: worst rel {worst:.3}"),
    )
}

fn byte_identical_runs() -> (bool, String) {
    let cfg = ExperimentConfig::default();
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    for d in &dirs {
        // a fresh cache so channels are simulated again
        let map = run_sweep(&cfg, &ChannelCache::new()).unwrap();
        map.write_run(d.path(), &cfg).unwrap();
    }
    let files = ["config.toml", "points.csv", "probes.csv", "summary.csv"];
    let same = files.iter().all(|f| {
        std::fs::read(dirs[0].path().join(f)).unwrap()
            == std::fs::read(dirs[1].path().join(f)).unwrap()
    });
    (
        same,
        format!("{} identical across two runs", files.join(", ")),
    )
}

fn main() {
    let mut report = Report { failed: Vec::new() };
    let cache = ChannelCache::new();
    let base = ExperimentConfig::default();

    let (ok, d) = clipping_halving();
    report.check(1, ok, d);
    let (ok, d) = lateration_oracle();
    report.check(2, ok, d);
    let (ok, d) = gain_formula();
    report.check(3, ok, d);

    let mut exact = base
        .clone()
        .with_presets(&[Preset::LosOnly, Preset::LinearLed]);
    exact.noise.enabled = false;
    let map = run_sweep(&exact, &cache).unwrap();
    let worst = map
        .points
        .iter()
        .map(|p| p.error.unwrap_or(f64::INFINITY))
        .fold(0.0, f64::max);
    report.check(
        4,
        worst < 1e-3,
        format!("worst grid error {worst:.2e} m (los-only, linear-led, no noise)"),
    );

    let ofdm = sweep(&base, &cache);
    let ook = sweep(&base.clone().with_presets(&[Preset::PaperOok]), &cache);
    report.check(
        5,
        ofdm.rms_total <= 0.5 * ook.rms_total,
        format!(
            "rms_total OFDM {:.4} m vs OOK {:.4} m (ratio {:.3}); rect {:.4} vs {:.4} m",
            ofdm.rms_total,
            ook.rms_total,
            ofdm.rms_total / ook.rms_total,
            ofdm.rms_rect,
            ook.rms_rect
        ),
    );

    report.check(
        6,
        ofdm.corner > ofdm.edge && ofdm.edge > 10.0 * ofdm.center && ofdm.center < 1e-2,
        format!(
            "OFDM corner {:.4} m, edge {:.4} m, center {:.2e} m",
            ofdm.corner, ofdm.edge, ofdm.center
        ),
    );

    let at_snr = |snr: f64| {
        let mut c = base.clone();
        c.set_snr_db(snr);
        sweep(&c, &cache)
    };
    let (s0, s30) = (at_snr(0.0), at_snr(30.0));
    report.check(
        7,
        s0.rms_total > ofdm.rms_total,
        format!(
            "rms_total 0 dB {:.4} m > 15 dB {:.4} m; 30 dB (reported) {:.4} m",
            s0.rms_total, ofdm.rms_total, s30.rms_total
        ),
    );

    let at_m = |m: usize| {
        let mut c = base.clone();
        c.ofdm.qam_order = m;
        sweep(&c, &cache)
    };
    let (m16, m64) = (at_m(16), at_m(64));
    let dev = |s: &Summary| (s.rms_total - ofdm.rms_total).abs() / ofdm.rms_total;
    report.check(
        8,
        dev(&m16) <= 0.15 && dev(&m64) <= 0.15,
        format!(
            "rms_total M=4 {:.4}, M=16 {:.4} ({:+.1}%), M=64 {:.4} ({:+.1}%)",
            ofdm.rms_total,
            m16.rms_total,
            100.0 * (m16.rms_total / ofdm.rms_total - 1.0),
            m64.rms_total,
            100.0 * (m64.rms_total / ofdm.rms_total - 1.0)
        ),
    );

    let at_n = |n: usize| {
        let mut c = base.clone();
        c.ofdm.n_subcarriers = n;
        sweep(&c, &cache)
    };
    let (n64, n1024) = (at_n(64), at_n(1024));
    report.check(
        9,
        ofdm.rms_total < n64.rms_total,
        format!(
            "rms_total N=512 {:.4} m < N=64 {:.4} m; N=1024 (reported) {:.4} m",
            ofdm.rms_total, n64.rms_total, n1024.rms_total
        ),
    );

    let (ok, d) = flat_estimator_identity();
    report.check(10, ok, d);

    let (ok_a, da) = byte_identical_runs();
    let (ok_b, db) = first_bounce_cross_check();
    report.check(11, ok_a && ok_b, format!("{da}; {db}"));

    if !report.failed.is_empty() {
        eprintln!("failed criteria: {:?}", report.failed);
        std::process::exit(1);
    }
}
