use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{ImpulseResponse, RayTraceParams};
use crate::geometry::{Axis, Luminaire, ReceiverSpec, RoomModel, Surface, Vec3, SPEED_OF_LIGHT};

/// Rays per independent RNG stream. Each batch seeds its own stream from
/// (seed, batch index) so the result does not depend on scheduling.
pub const RAYS_PER_BATCH: usize = 4096;

/// Power reaching the receiver from a unit-power diffuse re-emitter at
/// `point` on `surface`, together with the re-emitter-to-receiver distance.
fn diffuse_to_receiver(surface: &Surface, point: Vec3, rcv: &ReceiverSpec) -> (f64, f64) {
    let (collect, d) = rcv.collection(point);
    if collect == 0.0 {
        return (0.0, d);
    }
    let cos_out = surface.normal().dot(rcv.position - point) / d;
    if cos_out <= 0.0 {
        return (0.0, d);
    }
    (cos_out / PI * collect, d)
}

pub(super) fn first_bounce_deterministic(
    room: &RoomModel,
    src: &Luminaire,
    rcv: &ReceiverSpec,
    patch_side: f64,
    ir: &mut ImpulseResponse,
) {
    for surface in room.surfaces() {
        if surface.reflectivity == 0.0 {
            continue;
        }
        let nu = (surface.extent.0 / patch_side).ceil().max(1.0) as usize;
        let nv = (surface.extent.1 / patch_side).ceil().max(1.0) as usize;
        let du = surface.extent.0 / nu as f64;
        let dv = surface.extent.1 / nv as f64;
        let patch_area = du * dv;
        let normal = surface.normal();
        for iu in 0..nu {
            for iv in 0..nv {
                let p = surface.point((iu as f64 + 0.5) * du, (iv as f64 + 0.5) * dv);
                let to_src = src.position - p;
                let d1 = to_src.norm();
                let cos_in = normal.dot(to_src) / d1;
                if cos_in <= 0.0 {
                    continue;
                }
                // source points down: cos(phi) = -dz / d
                let cos_phi = (src.position.z - p.z) / d1;
                let intensity = src.radiant_intensity(cos_phi);
                if intensity == 0.0 {
                    continue;
                }
                let (out, d2) = diffuse_to_receiver(&surface, p, rcv);
                if out == 0.0 {
                    continue;
                }
                let incident = intensity * patch_area * cos_in / (d1 * d1);
                let gain = incident * surface.reflectivity * out;
                ir.deposit(1, (d1 + d2) / SPEED_OF_LIGHT, gain);
            }
        }
    }
}

/// Orthonormal frame whose third axis is `n`.
fn frame(n: Vec3) -> (Vec3, Vec3) {
    let t = if n.x.abs() > 0.5 {
        Vec3::new(0.0, 1.0, 0.0)
    } else {
        Vec3::new(1.0, 0.0, 0.0)
    };
    // t - (t.n) n, normalized
    let u = t - n.scale(t.dot(n));
    let u = u.scale(1.0 / u.norm());
    let v = Vec3::new(
        n.y * u.z - n.z * u.y,
        n.z * u.x - n.x * u.z,
        n.x * u.y - n.y * u.x,
    );
    (u, v)
}

/// Direction about `n` with density proportional to cos^m of the polar angle.
fn sample_lobe<R: Rng>(rng: &mut R, n: Vec3, m: f64) -> Vec3 {
    let u1: f64 = rng.random();
    let u2: f64 = rng.random();
    let cos_t = (1.0 - u1).powf(1.0 / (m + 1.0));
    let sin_t = (1.0 - cos_t * cos_t).max(0.0).sqrt();
    let phi = 2.0 * PI * u2;
    let (a, b) = frame(n);
    a.scale(sin_t * phi.cos()) + b.scale(sin_t * phi.sin()) + n.scale(cos_t)
}

/// First room surface hit travelling from `p` along `dir`.
fn intersect(
    surfaces: &[Surface; 6],
    room: &RoomModel,
    p: Vec3,
    dir: Vec3,
) -> Option<(usize, Vec3, f64)> {
    let mut best: Option<(usize, f64)> = None;
    for (i, s) in surfaces.iter().enumerate() {
        let (pc, dc) = match s.axis {
            Axis::X => (p.x, dir.x),
            Axis::Y => (p.y, dir.y),
            Axis::Z => (p.z, dir.z),
        };
        // only planes the ray approaches from inside
        if dc * s.normal_sign >= 0.0 {
            continue;
        }
        let t = (s.offset - pc) / dc;
        if t > 1e-12 && best.is_none_or(|(_, bt)| t < bt) {
            best = Some((i, t));
        }
    }
    let (i, t) = best?;
    let hit = p + dir.scale(t);
    let clamped = Vec3::new(
        hit.x.clamp(0.0, room.length),
        hit.y.clamp(0.0, room.width),
        hit.z.clamp(0.0, room.height),
    );
    let s = &surfaces[i];
    let exact = s.point(
        match s.axis {
            Axis::X => clamped.y,
            _ => clamped.x,
        },
        match s.axis {
            Axis::Z => clamped.y,
            _ => clamped.z,
        },
    );
    Some((i, exact, t))
}

struct BatchTally {
    ir: ImpulseResponse,
    sum: Vec<f64>,
    sum_sq: Vec<f64>,
}

#[allow(clippy::too_many_arguments)]
fn trace_batch(
    room: &RoomModel,
    surfaces: &[Surface; 6],
    src: &Luminaire,
    rcv: &ReceiverSpec,
    params: &RayTraceParams,
    first_order: usize,
    n_rays: usize,
    batch: usize,
    template: &ImpulseResponse,
) -> BatchTally {
    let orders = params.max_bounces + 1;
    let mut tally = BatchTally {
        ir: ImpulseResponse::empty(template.bin_width, template.t0, orders),
        sum: vec![0.0; orders],
        sum_sq: vec![0.0; orders],
    };
    let mut rng = ChaCha8Rng::seed_from_u64(params.rng_seed);
    rng.set_stream(batch as u64);
    let total_rays = params.rays_per_source as f64;
    let start = batch * RAYS_PER_BATCH;
    let count = RAYS_PER_BATCH.min(n_rays - start);
    let mut per_ray = vec![0.0; orders];
    let down = Vec3::new(0.0, 0.0, -1.0);

    for _ in 0..count {
        per_ray.iter_mut().for_each(|c| *c = 0.0);
        let mut pos = src.position;
        let mut dir = sample_lobe(&mut rng, down, src.lambertian_mode);
        let mut power = 1.0;
        let mut path = 0.0;
        #[allow(clippy::needless_range_loop)]
        for order in 1..=params.max_bounces {
            let Some((si, hit, t)) = intersect(surfaces, room, pos, dir) else {
                break;
            };
            let surface = &surfaces[si];
            path += t;
            if surface.reflectivity == 0.0 {
                break;
            }
            if order >= first_order {
                let (out, d) = diffuse_to_receiver(surface, hit, rcv);
                if out > 0.0 {
                    let c = power * surface.reflectivity * out;
                    per_ray[order] += c;
                    tally
                        .ir
                        .deposit(order, (path + d) / SPEED_OF_LIGHT, c / total_rays);
                }
            }
            power *= surface.reflectivity;
            pos = hit;
            dir = sample_lobe(&mut rng, surface.normal(), 1.0);
        }
        for (o, c) in per_ray.iter().enumerate() {
            tally.sum[o] += c;
            tally.sum_sq[o] += c * c;
        }
    }
    tally
}

pub(super) fn higher_bounces_monte_carlo(
    room: &RoomModel,
    src: &Luminaire,
    rcv: &ReceiverSpec,
    params: &RayTraceParams,
    first_order: usize,
    ir: &mut ImpulseResponse,
) {
    let surfaces = room.surfaces();
    let n_rays = params.rays_per_source;
    let batches = n_rays.div_ceil(RAYS_PER_BATCH);
    let tallies: Vec<BatchTally> = (0..batches)
        .into_par_iter()
        .map(|b| {
            trace_batch(
                room,
                &surfaces,
                src,
                rcv,
                params,
                first_order,
                n_rays,
                b,
                ir,
            )
        })
        .collect();

    let orders = params.max_bounces + 1;
    let mut sum = vec![0.0; orders];
    let mut sum_sq = vec![0.0; orders];
    // merge in batch order so the floating-point sums are reproducible
    for t in &tallies {
        for (order, bins) in t.ir.bins_by_order.iter().enumerate() {
            let dst = &mut ir.bins_by_order[order];
            if dst.len() < bins.len() {
                dst.resize(bins.len(), 0.0);
            }
            for (d, b) in dst.iter_mut().zip(bins) {
                *d += b;
            }
        }
        for o in 0..orders {
            sum[o] += t.sum[o];
            sum_sq[o] += t.sum_sq[o];
        }
    }
    let n = n_rays as f64;
    for o in first_order..orders {
        let mean = sum[o] / n;
        let var = (sum_sq[o] / n - mean * mean).max(0.0);
        ir.std_error_by_order[o] = (var / n).sqrt();
    }
}
