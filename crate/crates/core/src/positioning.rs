//! Received-signal-strength positioning: estimated DC gains become
//! distances through the inverted Lambertian link budget, distances become
//! horizontal ranges at the known height difference, and the ranges are
//! laterated by linear least squares.
//!
//! The lateration linearizes the range circles by subtracting the first
//! anchor's equation from the others, giving `A X = B` with rows
//! `[x_j - x_1, y_j - y_1]` and
//! `((r_1^2 - r_j^2) + (x_j^2 + y_j^2) - (x_1^2 + y_1^2)) / 2`, solved as
//! `(A^T A)^-1 A^T B`.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::geometry::{Luminaire, ReceiverSpec};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Anchor {
    pub x: f64,
    pub y: f64,
    pub id_code: u8,
}

impl From<&Luminaire> for Anchor {
    fn from(l: &Luminaire) -> Self {
        Self {
            x: l.position.x,
            y: l.position.y,
            id_code: l.id_code,
        }
    }
}

/// Link-budget constants the receiver needs to turn a gain into a distance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DistanceModel {
    pub lambertian_mode: f64,
    pub area: f64,
    pub filter_gain: f64,
    /// Concentrator gain; constant inside the field of view, so the receiver
    /// can apply it without knowing the incidence angle.
    pub concentrator_gain: f64,
    pub source_height: f64,
    pub receiver_height: f64,
}

impl DistanceModel {
    pub fn new(src: &Luminaire, rcv: &ReceiverSpec) -> Self {
        Self {
            lambertian_mode: src.lambertian_mode,
            area: rcv.area,
            filter_gain: rcv.optical_filter_gain,
            concentrator_gain: rcv.concentrator_gain(),
            source_height: src.position.z,
            receiver_height: rcv.position.z,
        }
    }

    pub fn height_difference(&self) -> f64 {
        self.source_height - self.receiver_height
    }

    pub fn distance(&self, optical_gain: f64) -> Result<f64> {
        estimate_distance(
            optical_gain,
            self.lambertian_mode,
            self.area,
            self.filter_gain,
            self.concentrator_gain,
            self.source_height,
            self.receiver_height,
        )
    }
}

/// Invert the Lambertian DC gain for a coaxial down/up link:
/// `d^(m+3) = (m+1) A T_s g (H-h)^(m+1) / (2 pi gain)`.
pub fn estimate_distance(
    optical_gain: f64,
    m: f64,
    area: f64,
    filter_gain: f64,
    concentrator_gain: f64,
    source_height: f64,
    receiver_height: f64,
) -> Result<f64> {
    if !(optical_gain > 0.0) {
        return Err(Error::NonPositiveGain(optical_gain));
    }
    let dh = source_height - receiver_height;
    if !(dh > 0.0) {
        return Err(Error::DegenerateGeometry(format!(
            "height difference {dh} must be positive"
        )));
    }
    let rhs = (m + 1.0) * area * filter_gain * concentrator_gain * dh.powf(m + 1.0)
        / (2.0 * PI * optical_gain);
    Ok(rhs.powf(1.0 / (m + 3.0)))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HorizontalRange {
    pub range: f64,
    /// Set when the distance fell below the height difference and the range
    /// was clamped to zero.
    pub clamped: bool,
}

pub fn horizontal_range(
    distance: f64,
    source_height: f64,
    receiver_height: f64,
) -> HorizontalRange {
    let dh = source_height - receiver_height;
    if distance < dh {
        return HorizontalRange {
            range: 0.0,
            clamped: true,
        };
    }
    HorizontalRange {
        range: (distance * distance - dh * dh).max(0.0).sqrt(),
        clamped: false,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LaterationFix {
    pub x: f64,
    pub y: f64,
    /// Root sum square of `|X - anchor_k| - r_k` over the anchors, m.
    pub residual_norm: f64,
}

/// Linear least-squares lateration against the first anchor. Needs at
/// least three non-collinear anchors.
pub fn laterate(anchors: &[Anchor], ranges: &[f64]) -> Result<LaterationFix> {
    if anchors.len() != ranges.len() {
        return Err(Error::LengthMismatch {
            expected: anchors.len(),
            actual: ranges.len(),
        });
    }
    if anchors.len() < 3 {
        return Err(Error::SingularLateration);
    }
    let (a1, r1) = (anchors[0], ranges[0]);
    let k1 = a1.x * a1.x + a1.y * a1.y;
    // normal equations, accumulated row by row
    let (mut s_xx, mut s_xy, mut s_yy, mut b_x, mut b_y) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (a, r) in anchors[1..].iter().zip(&ranges[1..]) {
        let ax = a.x - a1.x;
        let ay = a.y - a1.y;
        let b = 0.5 * ((r1 * r1 - r * r) + (a.x * a.x + a.y * a.y) - k1);
        s_xx += ax * ax;
        s_xy += ax * ay;
        s_yy += ay * ay;
        b_x += ax * b;
        b_y += ay * b;
    }
    let det = s_xx * s_yy - s_xy * s_xy;
    let scale = (s_xx + s_yy) * (s_xx + s_yy);
    if !(det.abs() > 1e-12 * scale) {
        return Err(Error::SingularLateration);
    }
    let x = (s_yy * b_x - s_xy * b_y) / det;
    let y = (s_xx * b_y - s_xy * b_x) / det;
    let residual_norm = anchors
        .iter()
        .zip(ranges)
        .map(|(a, r)| {
            let e = ((x - a.x).powi(2) + (y - a.y).powi(2)).sqrt() - r;
            e * e
        })
        .sum::<f64>()
        .sqrt();
    Ok(LaterationFix {
        x,
        y,
        residual_norm,
    })
}

pub fn position_error(estimate: (f64, f64), truth: (f64, f64)) -> f64 {
    (estimate.0 - truth.0).hypot(estimate.1 - truth.1)
}

/// A receiver fix with per-anchor diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct PositionResult {
    pub x_hat: f64,
    pub y_hat: f64,
    pub ranges: Vec<f64>,
    pub clamped: Vec<bool>,
    pub residual_norm: f64,
    pub error: Option<f64>,
}

/// Gains to position: one gain per anchor, in anchor order.
pub fn locate(
    anchors: &[Anchor],
    models: &[DistanceModel],
    gains: &[f64],
    truth: Option<(f64, f64)>,
) -> Result<PositionResult> {
    if anchors.len() != gains.len() || models.len() != gains.len() {
        return Err(Error::LengthMismatch {
            expected: anchors.len(),
            actual: gains.len(),
        });
    }
    let mut ranges = Vec::with_capacity(gains.len());
    let mut clamped = Vec::with_capacity(gains.len());
    for (model, &g) in models.iter().zip(gains) {
        let d = model.distance(g)?;
        let hr = horizontal_range(d, model.source_height, model.receiver_height);
        ranges.push(hr.range);
        clamped.push(hr.clamped);
    }
    let fix = laterate(anchors, &ranges)?;
    Ok(PositionResult {
        x_hat: fix.x,
        y_hat: fix.y,
        error: truth.map(|t| position_error((fix.x, fix.y), t)),
        ranges,
        clamped,
        residual_norm: fix.residual_norm,
    })
}
