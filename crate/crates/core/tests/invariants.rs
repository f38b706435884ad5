//! Cross-module invariants of the simulator.

use std::sync::{Arc, LazyLock};

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use vlp_core::channel::{
    rms_delay_spread, simulate_impulse_response, worst_case_cp_samples, ImpulseResponse,
    RayTraceParams,
};
use vlp_core::experiment::{
    run_sweep, ChannelCache, ExperimentConfig, Preset, SlotRunner, SlotSeeds,
};
use vlp_core::frontend::{apply_channel, led_transfer, LedModel};
use vlp_core::geometry::channel_dc_gain_los;
use vlp_core::ofdm::{AcoOfdm, OfdmParams};
use vlp_core::positioning::{locate, Anchor, DistanceModel};
use vlp_core::qam::constellation;

static CACHE: LazyLock<ChannelCache> = LazyLock::new(ChannelCache::new);

fn link(cfg: &ExperimentConfig, k: usize, x: f64, y: f64) -> Arc<ImpulseResponse> {
    let rcv = cfg.receiver.at(x, y);
    CACHE
        .get_or_simulate(&cfg.room, &cfg.luminaires[k], k, &rcv, &cfg.channel)
        .unwrap()
}

#[test]
fn linear_front_end_superposes() {
    let cfg = ExperimentConfig::default();
    let ir = link(&cfg, 0, 0.5, 0.5);
    let led = LedModel::linear();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let a: Vec<f64> = (0..512).map(|_| rng.random_range(-0.5..0.5)).collect();
    let b: Vec<f64> = (0..512).map(|_| rng.random_range(-0.5..0.5)).collect();
    let sum: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x + y).collect();
    let fs = cfg.ofdm.sample_rate;

    // the affine LED offset cancels in the difference form
    let base = led_transfer(&vec![led.bias_voltage; 512], &led);
    let through = |v: &[f64]| {
        let drive: Vec<f64> = v.iter().map(|x| x + led.bias_voltage).collect();
        let p: Vec<f64> = led_transfer(&drive, &led)
            .iter()
            .zip(&base)
            .map(|(p, q)| p - q)
            .collect();
        apply_channel(&p, &ir, fs)
    };
    let (ya, yb, ys) = (through(&a), through(&b), through(&sum));
    let scale = ys.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    for i in 0..ys.len() {
        assert!((ys[i] - ya[i] - yb[i]).abs() <= 1e-12 * scale);
    }
}

#[test]
fn monte_carlo_orders_agree_when_rays_double() {
    let cfg = ExperimentConfig::default();
    let rcv = cfg.receiver.at(1.0, 2.0);
    let run = |rays: usize| {
        let p = RayTraceParams {
            rays_per_source: rays,
            ..RayTraceParams::default()
        };
        simulate_impulse_response(&cfg.room, &cfg.luminaires[0], &rcv, &p).unwrap()
    };
    let (lo, hi) = (run(50_000), run(100_000));
    for order in 2..=3 {
        let (a, b) = (lo.order_gain(order), hi.order_gain(order));
        let se = lo.std_error_by_order[order].hypot(hi.std_error_by_order[order]);
        assert!(se > 0.0);
        assert!(
            (a - b).abs() < 3.0 * se,
            "order {order}: {a:e} vs {b:e}, se {se:e}"
        );
    }
}

#[test]
fn corner_sees_more_reflected_power_than_center() {
    let cfg = ExperimentConfig::default();
    let nlos = |x, y| link(&cfg, 0, x, y).non_los_fraction();
    let (corner, center) = (nlos(0.5, 0.5), nlos(3.0, 3.0));
    assert!(corner > center, "corner {corner}, center {center}");
}

#[test]
fn ook_gain_bias_grows_toward_the_corner() {
    let mut cfg = ExperimentConfig::default().with_presets(&[Preset::PaperOok, Preset::LinearLed]);
    cfg.noise.enabled = false;
    let runner = SlotRunner::new(&cfg).unwrap();
    let bias = |x, y| {
        // the link to the far luminaire is the weakest and most reflection dominated
        let k = 3;
        let ir = link(&cfg, k, x, y);
        let out = runner
            .run(
                &cfg.luminaires[k],
                &ir,
                SlotSeeds {
                    payload: 1,
                    noise: 2,
                },
            )
            .unwrap();
        let los = channel_dc_gain_los(&cfg.luminaires[k], &cfg.receiver.at(x, y));
        out.gain.unwrap().optical_gain / los - 1.0
    };
    let (corner, center) = (bias(0.5, 0.5), bias(3.0, 3.0));
    assert!(
        corner > center && center > 0.0,
        "corner {corner}, center {center}"
    );
}

/// Mirror images of corner (0, 0): the corner, the mirror map of luminaire
/// indices, for the default square layout.
fn mirrored_corners(cfg: &ExperimentConfig) -> [((f64, f64), [usize; 4]); 4] {
    let (l, w) = (cfg.room.length, cfg.room.width);
    let [a, b, c, d] =
        [0, 1, 2, 3].map(|k| (cfg.luminaires[k].position.x, cfg.luminaires[k].position.y));
    // the layout lists (lo, lo), (lo, hi), (hi, lo), (hi, hi)
    assert!(a.0 == b.0 && c.0 == d.0 && a.1 == c.1 && b.1 == d.1);
    [
        ((0.0, 0.0), [0, 1, 2, 3]),
        ((l, 0.0), [2, 3, 0, 1]),
        ((0.0, w), [1, 0, 3, 2]),
        ((l, w), [3, 2, 1, 0]),
    ]
}

#[test]
fn corner_gains_are_mirror_symmetric() {
    let mut cfg = ExperimentConfig::default();
    cfg.noise.enabled = false;
    let map = run_sweep(&cfg, &CACHE).unwrap();
    let gains = |(x, y): (f64, f64)| {
        map.points
            .iter()
            .find(|p| p.x == x && p.y == y)
            .map(|p| p.gains.iter().map(|g| g.unwrap()).collect::<Vec<_>>())
            .unwrap()
    };
    let corners = mirrored_corners(&cfg);
    let reference = gains(corners[0].0);
    for (pos, perm) in corners {
        let g = gains(pos);
        for k in 0..4 {
            let (a, b) = (reference[k], g[perm[k]]);
            // independent Monte Carlo streams per link break exact symmetry
            assert!(
                (a - b).abs() <= 0.05 * a,
                "{pos:?} link {k}: {a:e} vs {b:e}"
            );
        }
    }
}

#[test]
fn corner_error_spread_comes_from_lateration_reference() {
    // mirrored gains fed to the (0, 0) corner reproduce that corner's error,
    // whichever corner produced them: the reference equation, not the
    // channel, sets the corner-to-corner spread
    let mut cfg = ExperimentConfig::default();
    cfg.noise.enabled = false;
    let map = run_sweep(&cfg, &CACHE).unwrap();
    let anchors: Vec<Anchor> = cfg.luminaires.iter().map(Anchor::from).collect();
    let rcv = cfg.receiver.at(0.0, 0.0);
    let models: Vec<DistanceModel> = cfg
        .luminaires
        .iter()
        .map(|l| DistanceModel::new(l, &rcv))
        .collect();
    let point = |(x, y): (f64, f64)| map.points.iter().find(|p| p.x == x && p.y == y).unwrap();
    let corners = mirrored_corners(&cfg);
    let own = point(corners[0].0).error.unwrap();
    for (pos, perm) in corners {
        let g: Vec<f64> = perm.iter().map(|&k| point(pos).gains[k].unwrap()).collect();
        let e = locate(&anchors, &models, &g, Some((0.0, 0.0)))
            .unwrap()
            .error
            .unwrap();
        assert!(
            (e - own).abs() <= (0.25 * own).max(1e-3),
            "{pos:?}: {e} vs {own}"
        );
    }
}

#[test]
fn cached_channels_match_fresh_simulation() {
    let cfg = ExperimentConfig {
        grid_nx: 3,
        grid_ny: 3,
        ..ExperimentConfig::default()
    };
    let warm = run_sweep(&cfg, &CACHE).unwrap();
    let cold = run_sweep(&cfg, &ChannelCache::new()).unwrap();
    assert_eq!(warm.points, cold.points);
    assert_eq!(warm.probes, cold.probes);
}

#[test]
fn high_snr_multipath_decodes_every_grid_point() {
    let mut cfg = ExperimentConfig::default();
    cfg.set_snr_db(40.0);
    let grid = cfg.grid();
    let irs: Vec<Vec<Arc<ImpulseResponse>>> = grid
        .iter()
        .map(|&(x, y)| {
            (0..cfg.luminaires.len())
                .map(|k| link(&cfg, k, x, y))
                .collect()
        })
        .collect();
    let flat: Vec<ImpulseResponse> = irs.iter().flatten().map(|ir| (**ir).clone()).collect();
    cfg.ofdm.cp_len = worst_case_cp_samples(&flat, cfg.ofdm.sample_rate).unwrap();
    let runner = SlotRunner::new(&cfg).unwrap();
    for (i, links) in irs.iter().enumerate() {
        for (k, ir) in links.iter().enumerate() {
            let seeds = SlotSeeds {
                payload: i as u64,
                noise: 1000 + i as u64,
            };
            let out = runner.run(&cfg.luminaires[k], ir, seeds).unwrap();
            assert_eq!(
                out.decoded_id,
                Some(cfg.luminaires[k].id_code),
                "point {:?} link {k}",
                grid[i]
            );
        }
    }
}

#[test]
fn corner_delay_spread_regression() {
    let cfg = ExperimentConfig::default();
    let spread = rms_delay_spread(&link(&cfg, 0, 0.0, 0.0)).unwrap();
    assert!((spread - CORNER_SPREAD_S).abs() < 1e-12, "{spread:e}");
}

const CORNER_SPREAD_S: f64 = 6.815121904816731e-9;

#[test]
fn n8_lattice_round_trips_exactly() {
    let params = OfdmParams {
        n_subcarriers: 8,
        cp_len: 0,
        ..OfdmParams::default()
    };
    let modem = AcoOfdm::new(params).unwrap();
    for m in [4, 16, 64] {
        let points = constellation(m).unwrap();
        for a in &points {
            for b in &points {
                let data: [Complex64; 2] = [*a, *b];
                let out = modem
                    .demodulate(&modem.modulate(&data).unwrap().samples)
                    .unwrap();
                for (o, d) in out.iter().zip(&data) {
                    assert!((o - d * 0.5).norm() < 1e-12, "M={m} {data:?} -> {out:?}");
                }
            }
        }
    }
}
