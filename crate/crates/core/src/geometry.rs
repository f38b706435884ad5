//! Room, luminaire and receiver geometry, and the closed-form line-of-sight
//! channel gain of a Lambertian source seen through a CPC concentrator.
//!
//! Orientation is fixed: luminaires point straight down, receivers straight
//! up. Under that constraint the irradiance angle at the source equals the
//! incidence angle at the receiver, which is what lets the positioning stage
//! invert a measured gain back into a distance.
//!
//! Two receiver parameters are not pinned by the reference system and are
//! exposed as plain configuration: the concentrator refractive index
//! (default 1.5) and the optical filter gain (default 1).

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Speed of light in vacuum, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Vec3 {
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn dot(self, other: Vec3) -> f64 {
        self.x * other.x + self.y * other.y + self.z * other.z
    }

    pub fn norm(self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn distance(self, other: Vec3) -> f64 {
        (other - self).norm()
    }

    pub fn scale(self, s: f64) -> Vec3 {
        Vec3::new(self.x * s, self.y * s, self.z * s)
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }
}

impl std::ops::Add for Vec3 {
    type Output = Vec3;
    fn add(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl std::ops::Sub for Vec3 {
    type Output = Vec3;
    fn sub(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

/// Rectangular room with ideal diffuse walls, ceiling and floor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RoomModel {
    pub length: f64,
    pub width: f64,
    pub height: f64,
    pub rho_wall: f64,
    pub rho_ceiling: f64,
    pub rho_floor: f64,
}

impl Default for RoomModel {
    fn default() -> Self {
        Self {
            length: 6.0,
            width: 6.0,
            height: 3.5,
            rho_wall: 0.66,
            rho_ceiling: 0.35,
            rho_floor: 0.60,
        }
    }
}

impl RoomModel {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("room.length", self.length),
            ("room.width", self.width),
            ("room.height", self.height),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(invalid(name, format!("must be > 0, got {v}")));
            }
        }
        for (name, v) in [
            ("room.rho_wall", self.rho_wall),
            ("room.rho_ceiling", self.rho_ceiling),
            ("room.rho_floor", self.rho_floor),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(invalid(name, format!("must lie in [0, 1], got {v}")));
            }
        }
        Ok(())
    }

    pub fn contains(&self, p: Vec3) -> bool {
        p.is_finite()
            && (0.0..=self.length).contains(&p.x)
            && (0.0..=self.width).contains(&p.y)
            && (0.0..=self.height).contains(&p.z)
    }

    /// Same room with every surface made perfectly absorbing.
    pub fn absorbing(&self) -> Self {
        Self {
            rho_wall: 0.0,
            rho_ceiling: 0.0,
            rho_floor: 0.0,
            ..self.clone()
        }
    }

    /// The six bounding planes, each with its inward normal and reflectivity.
    pub fn surfaces(&self) -> [Surface; 6] {
        let (l, w, h) = (self.length, self.width, self.height);
        [
            Surface::new(
                SurfaceKind::Floor,
                Axis::Z,
                0.0,
                1.0,
                self.rho_floor,
                (l, w),
            ),
            Surface::new(
                SurfaceKind::Ceiling,
                Axis::Z,
                h,
                -1.0,
                self.rho_ceiling,
                (l, w),
            ),
            Surface::new(SurfaceKind::Wall, Axis::X, 0.0, 1.0, self.rho_wall, (w, h)),
            Surface::new(SurfaceKind::Wall, Axis::X, l, -1.0, self.rho_wall, (w, h)),
            Surface::new(SurfaceKind::Wall, Axis::Y, 0.0, 1.0, self.rho_wall, (l, h)),
            Surface::new(SurfaceKind::Wall, Axis::Y, w, -1.0, self.rho_wall, (l, h)),
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SurfaceKind {
    Floor,
    Ceiling,
    Wall,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    X,
    Y,
    Z,
}

/// One axis-aligned face of the room.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Surface {
    pub kind: SurfaceKind,
    pub axis: Axis,
    /// Coordinate of the plane along `axis`.
    pub offset: f64,
    /// +1 or -1: direction of the inward normal along `axis`.
    pub normal_sign: f64,
    pub reflectivity: f64,
    /// Extent along the two in-plane axes, in (x, y, z) order skipping `axis`.
    pub extent: (f64, f64),
}

impl Surface {
    fn new(
        kind: SurfaceKind,
        axis: Axis,
        offset: f64,
        normal_sign: f64,
        reflectivity: f64,
        extent: (f64, f64),
    ) -> Self {
        Self {
            kind,
            axis,
            offset,
            normal_sign,
            reflectivity,
            extent,
        }
    }

    pub fn normal(&self) -> Vec3 {
        match self.axis {
            Axis::X => Vec3::new(self.normal_sign, 0.0, 0.0),
            Axis::Y => Vec3::new(0.0, self.normal_sign, 0.0),
            Axis::Z => Vec3::new(0.0, 0.0, self.normal_sign),
        }
    }

    /// Point on the plane from its two in-plane coordinates.
    pub fn point(&self, u: f64, v: f64) -> Vec3 {
        match self.axis {
            Axis::X => Vec3::new(self.offset, u, v),
            Axis::Y => Vec3::new(u, self.offset, v),
            Axis::Z => Vec3::new(u, v, self.offset),
        }
    }
}

/// A ceiling-mounted Lambertian LED luminaire.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Luminaire {
    pub position: Vec3,
    #[serde(default = "default_lambertian_mode")]
    pub lambertian_mode: f64,
    pub id_code: u8,
    #[serde(default = "default_source_elevation")]
    pub elevation_deg: f64,
    #[serde(default)]
    pub azimuth_deg: f64,
    /// Carried as metadata; no channel formula depends on it.
    #[serde(default = "default_wavelength")]
    pub wavelength_nm: f64,
}

fn default_lambertian_mode() -> f64 {
    1.0
}
fn default_source_elevation() -> f64 {
    -90.0
}
fn default_wavelength() -> f64 {
    420.0
}

impl Luminaire {
    pub fn new(x: f64, y: f64, z: f64, id_code: u8) -> Self {
        Self {
            position: Vec3::new(x, y, z),
            lambertian_mode: 1.0,
            id_code,
            elevation_deg: -90.0,
            azimuth_deg: 0.0,
            wavelength_nm: 420.0,
        }
    }

    /// The four-luminaire square layout at 3.3 m.
    pub fn default_layout() -> Vec<Luminaire> {
        vec![
            Luminaire::new(2.0, 2.0, 3.3, 1),
            Luminaire::new(2.0, 4.0, 3.3, 2),
            Luminaire::new(4.0, 2.0, 3.3, 3),
            Luminaire::new(4.0, 4.0, 3.3, 4),
        ]
    }

    pub fn validate(&self, room: &RoomModel) -> Result<()> {
        if !room.contains(self.position) {
            return Err(invalid(
                "luminaire.position",
                format!("{:?} lies outside the room", self.position),
            ));
        }
        if !(self.lambertian_mode.is_finite() && self.lambertian_mode >= 1.0) {
            return Err(invalid(
                "luminaire.lambertian_mode",
                format!("must be >= 1, got {}", self.lambertian_mode),
            ));
        }
        if self.elevation_deg != -90.0 {
            return Err(invalid(
                "luminaire.elevation_deg",
                "only downward-facing (-90 deg) luminaires are modeled",
            ));
        }
        Ok(())
    }

    /// Lambertian radiant intensity per unit emitted power, W/sr per W, at
    /// irradiance angle cosine `cos_phi`.
    pub fn radiant_intensity(&self, cos_phi: f64) -> f64 {
        if cos_phi <= 0.0 {
            return 0.0;
        }
        (self.lambertian_mode + 1.0) / (2.0 * PI) * cos_phi.powf(self.lambertian_mode)
    }
}

/// An upward-facing photodiode behind an optical filter and a CPC.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReceiverSpec {
    pub position: Vec3,
    /// Detector area, m^2.
    pub area: f64,
    pub fov_deg: f64,
    pub refractive_index: f64,
    pub optical_filter_gain: f64,
    /// Photodetector responsivity, A/W.
    pub responsivity: f64,
    pub elevation_deg: f64,
    pub azimuth_deg: f64,
}

impl Default for ReceiverSpec {
    fn default() -> Self {
        Self {
            position: Vec3::new(3.0, 3.0, 1.2),
            area: 1e-4,
            fov_deg: 70.0,
            refractive_index: 1.5,
            optical_filter_gain: 1.0,
            responsivity: 1.0,
            elevation_deg: 90.0,
            azimuth_deg: 0.0,
        }
    }
}

impl ReceiverSpec {
    pub fn at(&self, x: f64, y: f64) -> Self {
        Self {
            position: Vec3::new(x, y, self.position.z),
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.position.is_finite() {
            return Err(invalid("receiver.position", "non-finite coordinate"));
        }
        if !(self.area > 0.0) {
            return Err(invalid(
                "receiver.area",
                format!("must be > 0, got {}", self.area),
            ));
        }
        if !(self.fov_deg > 0.0 && self.fov_deg <= 90.0) {
            return Err(invalid(
                "receiver.fov_deg",
                format!("must lie in (0, 90], got {}", self.fov_deg),
            ));
        }
        if !(self.refractive_index >= 1.0) {
            return Err(invalid("receiver.refractive_index", "must be >= 1"));
        }
        if !(self.optical_filter_gain > 0.0) {
            return Err(invalid("receiver.optical_filter_gain", "must be > 0"));
        }
        if !(self.responsivity > 0.0) {
            return Err(invalid("receiver.responsivity", "must be > 0"));
        }
        if self.elevation_deg != 90.0 {
            return Err(invalid(
                "receiver.elevation_deg",
                "only upward-facing (+90 deg) receivers are modeled",
            ));
        }
        Ok(())
    }

    /// Concentrator gain inside the field of view.
    pub fn concentrator_gain(&self) -> f64 {
        cpc_gain(0.0, self.refractive_index, self.fov_deg)
    }

    /// Effective collection for light arriving from `from`: the product
    /// `A T_s g(psi) cos(psi) / d^2` together with the distance. Zero when the
    /// incidence angle exceeds the field of view.
    pub fn collection(&self, from: Vec3) -> (f64, f64) {
        let delta = from - self.position;
        let d2 = delta.dot(delta);
        let d = d2.sqrt();
        if d == 0.0 {
            return (0.0, 0.0);
        }
        let cos_psi = delta.z / d;
        if cos_psi <= 0.0 {
            return (0.0, d);
        }
        let psi = cos_psi.min(1.0).acos().to_degrees();
        let g = cpc_gain(psi, self.refractive_index, self.fov_deg);
        (self.area * self.optical_filter_gain * g * cos_psi / d2, d)
    }
}

/// Distance and angle cosines of the direct path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LosGeometry {
    pub distance: f64,
    pub cos_phi: f64,
    pub cos_psi: f64,
}

/// Direct-path geometry between a downward luminaire and an upward receiver.
pub fn los_geometry(src: &Luminaire, rcv: &ReceiverSpec) -> Result<LosGeometry> {
    let d = src.position.distance(rcv.position);
    if !(d > 0.0) {
        return Err(Error::DegenerateGeometry(
            "source and receiver coincide".into(),
        ));
    }
    let dz = src.position.z - rcv.position.z;
    if dz <= 0.0 {
        return Err(Error::DegenerateGeometry(format!(
            "source height {} not above receiver height {}",
            src.position.z, rcv.position.z
        )));
    }
    let c = dz / d;
    Ok(LosGeometry {
        distance: d,
        cos_phi: c,
        cos_psi: c,
    })
}

/// CPC concentrator gain `n^2 / sin^2(fov)` inside the field of view, 0
/// beyond it. Angles in degrees.
pub fn cpc_gain(psi_deg: f64, n: f64, fov_deg: f64) -> f64 {
    if (0.0..=fov_deg).contains(&psi_deg) {
        let s = fov_deg.to_radians().sin();
        n * n / (s * s)
    } else {
        0.0
    }
}

/// Line-of-sight channel DC gain. Returns 0 for a receiver outside the
/// source's field of view, or for a receiver not below the source.
pub fn channel_dc_gain_los(src: &Luminaire, rcv: &ReceiverSpec) -> f64 {
    let Ok(geo) = los_geometry(src, rcv) else {
        return 0.0;
    };
    let psi = geo.cos_psi.min(1.0).acos().to_degrees();
    let g = cpc_gain(psi, rcv.refractive_index, rcv.fov_deg);
    if g == 0.0 {
        return 0.0;
    }
    (src.lambertian_mode + 1.0) / (2.0 * PI * geo.distance * geo.distance)
        * rcv.area
        * geo.cos_phi.powf(src.lambertian_mode)
        * rcv.optical_filter_gain
        * g
        * geo.cos_psi
}
