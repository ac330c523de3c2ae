//! Surfaces, placement and the propagation medium.
//!
//! Every length is in meters. The receive surface of the canonical links lies
//! in the `z = 0` plane centered at the origin; the transmit surface sits at
//! height `d` above it, either parallel (`xy` orientation) or perpendicular
//! (`xz` orientation).

use std::f64::consts::PI;

use nalgebra::Vector3;
use thiserror::Error;

pub type Vec3 = Vector3<f64>;

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;
/// Vacuum permeability (CODATA 2018) in H/m.
pub const VACUUM_PERMEABILITY: f64 = 1.256_637_062_12e-6;
/// Characteristic impedance of free space in ohm.
pub const FREE_SPACE_IMPEDANCE: f64 = VACUUM_PERMEABILITY * SPEED_OF_LIGHT;

const ORTHONORMAL_TOL: f64 = 1e-12;
/// Relative slack allowed when a patch side has to tile a surface side.
const TILING_TOL: f64 = 1e-3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("wavelength must be positive and finite, got {0}")]
    InvalidWavelength(f64),
    #[error("{what} must be positive and finite, got {value}")]
    NonPositive { what: &'static str, value: f64 },
    #[error("surface axes are not orthonormal")]
    AxesNotOrthonormal,
    #[error(
        "surfaces are {separation:.4e} m apart, below the {required:.4e} m reactive near-field guard"
    )]
    ReactiveNearField { separation: f64, required: f64 },
    #[error("patch side {patch} m does not tile a side of length {side} m")]
    NonTiling { patch: f64, side: f64 },
}

/// Monochromatic free-space propagation context.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Medium {
    wavelength: f64,
}

impl Medium {
    pub fn new(wavelength: f64) -> Result<Self, GeometryError> {
        if !(wavelength.is_finite() && wavelength > 0.0) {
            return Err(GeometryError::InvalidWavelength(wavelength));
        }
        Ok(Self { wavelength })
    }

    pub fn from_frequency(hz: f64) -> Result<Self, GeometryError> {
        Self::new(SPEED_OF_LIGHT / hz)
    }

    pub fn wavelength(&self) -> f64 {
        self.wavelength
    }

    pub fn wavenumber(&self) -> f64 {
        2.0 * PI / self.wavelength
    }

    pub fn impedance(&self) -> f64 {
        FREE_SPACE_IMPEDANCE
    }

    pub fn speed_of_light(&self) -> f64 {
        SPEED_OF_LIGHT
    }

    pub fn angular_frequency(&self) -> f64 {
        self.wavenumber() * SPEED_OF_LIGHT
    }

    pub fn permeability(&self) -> f64 {
        VACUUM_PERMEABILITY
    }

    pub fn permittivity(&self) -> f64 {
        1.0 / (VACUUM_PERMEABILITY * SPEED_OF_LIGHT * SPEED_OF_LIGHT)
    }

    /// A copy of this medium with the wavelength multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Result<Self, GeometryError> {
        Self::new(self.wavelength * factor)
    }
}

/// Flat oriented rectangle. Local coordinates `(u, v)` are measured from the
/// center along `axis_u` and `axis_v`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RectSurface {
    center: Vec3,
    axis_u: Vec3,
    axis_v: Vec3,
    len_u: f64,
    len_v: f64,
}

impl RectSurface {
    pub fn new(
        center: Vec3,
        axis_u: Vec3,
        axis_v: Vec3,
        len_u: f64,
        len_v: f64,
    ) -> Result<Self, GeometryError> {
        check_positive("side length u", len_u)?;
        check_positive("side length v", len_v)?;
        if (axis_u.norm() - 1.0).abs() > ORTHONORMAL_TOL
            || (axis_v.norm() - 1.0).abs() > ORTHONORMAL_TOL
            || axis_u.dot(&axis_v).abs() > ORTHONORMAL_TOL
        {
            return Err(GeometryError::AxesNotOrthonormal);
        }
        Ok(Self {
            center,
            axis_u,
            axis_v,
            len_u,
            len_v,
        })
    }

    /// Rectangle in a plane of constant `z`, sides along `x` and `y`.
    pub fn horizontal(center: Vec3, len_x: f64, len_y: f64) -> Result<Self, GeometryError> {
        Self::new(center, Vec3::x(), Vec3::y(), len_x, len_y)
    }

    /// Rectangle in a plane of constant `y`, sides along `x` and `z`.
    pub fn vertical_xz(center: Vec3, len_x: f64, len_z: f64) -> Result<Self, GeometryError> {
        Self::new(center, Vec3::x(), Vec3::z(), len_x, len_z)
    }

    pub fn center(&self) -> Vec3 {
        self.center
    }

    pub fn axis_u(&self) -> Vec3 {
        self.axis_u
    }

    pub fn axis_v(&self) -> Vec3 {
        self.axis_v
    }

    pub fn len_u(&self) -> f64 {
        self.len_u
    }

    pub fn len_v(&self) -> f64 {
        self.len_v
    }

    pub fn normal(&self) -> Vec3 {
        self.axis_u.cross(&self.axis_v)
    }

    pub fn area(&self) -> f64 {
        self.len_u * self.len_v
    }

    pub fn point(&self, u: f64, v: f64) -> Vec3 {
        self.center + self.axis_u * u + self.axis_v * v
    }

    /// Corners in cyclic order: (-,-), (+,-), (+,+), (-,+).
    pub fn corners(&self) -> [Vec3; 4] {
        let (hu, hv) = (0.5 * self.len_u, 0.5 * self.len_v);
        [
            self.point(-hu, -hv),
            self.point(hu, -hv),
            self.point(hu, hv),
            self.point(-hu, hv),
        ]
    }

    /// Same orientation, all lengths and the center multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Result<Self, GeometryError> {
        Self::new(
            self.center * factor,
            self.axis_u,
            self.axis_v,
            self.len_u * factor,
            self.len_v * factor,
        )
    }

    /// Closest point of the rectangle to `p`.
    pub fn closest_point(&self, p: &Vec3) -> Vec3 {
        let rel = p - self.center;
        let u = rel.dot(&self.axis_u).clamp(-0.5 * self.len_u, 0.5 * self.len_u);
        let v = rel.dot(&self.axis_v).clamp(-0.5 * self.len_v, 0.5 * self.len_v);
        self.point(u, v)
    }

    fn edges(&self) -> [(Vec3, Vec3); 4] {
        let c = self.corners();
        [(c[0], c[1]), (c[1], c[2]), (c[2], c[3]), (c[3], c[0])]
    }

    /// Whether segment `a-b` pierces the rectangle.
    fn segment_crosses(&self, a: &Vec3, b: &Vec3) -> bool {
        let n = self.normal();
        let da = (a - self.center).dot(&n);
        let db = (b - self.center).dot(&n);
        if da * db > 0.0 || (da == 0.0 && db == 0.0) {
            return false;
        }
        let t = da / (da - db);
        let p = a + (b - a) * t;
        let rel = p - self.center;
        rel.dot(&self.axis_u).abs() <= 0.5 * self.len_u
            && rel.dot(&self.axis_v).abs() <= 0.5 * self.len_v
    }
}

/// Minimum Euclidean distance between two rectangles (0 when they intersect).
pub fn min_distance(a: &RectSurface, b: &RectSurface) -> f64 {
    for (p, q) in a.edges() {
        if b.segment_crosses(&p, &q) {
            return 0.0;
        }
    }
    for (p, q) in b.edges() {
        if a.segment_crosses(&p, &q) {
            return 0.0;
        }
    }
    let mut best = f64::INFINITY;
    for c in a.corners() {
        best = best.min((b.closest_point(&c) - c).norm());
    }
    for c in b.corners() {
        best = best.min((a.closest_point(&c) - c).norm());
    }
    for (p1, q1) in a.edges() {
        for (p2, q2) in b.edges() {
            best = best.min(segment_distance(&p1, &q1, &p2, &q2));
        }
    }
    best
}

fn segment_distance(p1: &Vec3, q1: &Vec3, p2: &Vec3, q2: &Vec3) -> f64 {
    let d1 = q1 - p1;
    let d2 = q2 - p2;
    let r = p1 - p2;
    let a = d1.dot(&d1);
    let e = d2.dot(&d2);
    let f = d2.dot(&r);
    let c = d1.dot(&r);
    let b = d1.dot(&d2);
    let denom = a * e - b * b;
    let mut s = if denom > 1e-300 {
        ((b * f - c * e) / denom).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let mut t = (b * s + f) / e;
    if t < 0.0 {
        t = 0.0;
        s = (-c / a).clamp(0.0, 1.0);
    } else if t > 1.0 {
        t = 1.0;
        s = ((b - c) / a).clamp(0.0, 1.0);
    }
    ((p1 + d1 * s) - (p2 + d2 * t)).norm()
}

/// Relative orientation of the canonical link constructors.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LinkKind {
    /// Transmit surface parallel to the receive plane, facing it.
    Parallel,
    /// Transmit surface in an `xz` plane above the receive plane.
    Perpendicular,
    /// Any other placement (e.g. a swapped link). Only the general numeric
    /// paths accept it.
    General,
}

/// Reactive near-field gate, expressed in wavelengths.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NearFieldGuard {
    pub min_distance_wavelengths: f64,
}

impl Default for NearFieldGuard {
    fn default() -> Self {
        Self {
            min_distance_wavelengths: 1.0,
        }
    }
}

/// A transmit/receive surface pair in a given medium.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkGeometry {
    tx: RectSurface,
    rx: RectSurface,
    medium: Medium,
    kind: LinkKind,
}

impl LinkGeometry {
    /// Generic constructor enforcing the near-field guard.
    pub fn new(
        tx: RectSurface,
        rx: RectSurface,
        medium: Medium,
        kind: LinkKind,
        guard: NearFieldGuard,
    ) -> Result<Self, GeometryError> {
        let required = guard.min_distance_wavelengths * medium.wavelength();
        let separation = min_distance(&tx, &rx);
        if !(separation >= required) || separation <= 0.0 {
            return Err(GeometryError::ReactiveNearField {
                separation,
                required,
            });
        }
        Ok(Self {
            tx,
            rx,
            medium,
            kind,
        })
    }

    /// Receive surface on `z = 0` centered at the origin, transmit surface
    /// parallel to it centered at `(x0, y0, d)`.
    pub fn parallel(
        d: f64,
        tx_size: (f64, f64),
        rx_size: (f64, f64),
        tx_offset: (f64, f64),
        medium: Medium,
    ) -> Result<Self, GeometryError> {
        Self::parallel_with_guard(d, tx_size, rx_size, tx_offset, medium, NearFieldGuard::default())
    }

    pub fn parallel_with_guard(
        d: f64,
        tx_size: (f64, f64),
        rx_size: (f64, f64),
        tx_offset: (f64, f64),
        medium: Medium,
        guard: NearFieldGuard,
    ) -> Result<Self, GeometryError> {
        check_link_distance(d, &medium, guard)?;
        let tx = RectSurface::horizontal(
            Vec3::new(tx_offset.0, tx_offset.1, d),
            tx_size.0,
            tx_size.1,
        )?;
        let rx = RectSurface::horizontal(Vec3::zeros(), rx_size.0, rx_size.1)?;
        Self::new(tx, rx, medium, LinkKind::Parallel, guard)
    }

    /// Receive surface on `z = 0`, transmit surface in the plane `y = y0`
    /// with sides `(L_x, L_z)` centered at `(x0, y0, d)`.
    pub fn perpendicular(
        d: f64,
        tx_size: (f64, f64),
        rx_size: (f64, f64),
        tx_offset: (f64, f64),
        medium: Medium,
    ) -> Result<Self, GeometryError> {
        Self::perpendicular_with_guard(
            d,
            tx_size,
            rx_size,
            tx_offset,
            medium,
            NearFieldGuard::default(),
        )
    }

    pub fn perpendicular_with_guard(
        d: f64,
        tx_size: (f64, f64),
        rx_size: (f64, f64),
        tx_offset: (f64, f64),
        medium: Medium,
        guard: NearFieldGuard,
    ) -> Result<Self, GeometryError> {
        check_link_distance(d, &medium, guard)?;
        let tx = RectSurface::vertical_xz(
            Vec3::new(tx_offset.0, tx_offset.1, d),
            tx_size.0,
            tx_size.1,
        )?;
        let rx = RectSurface::horizontal(Vec3::zeros(), rx_size.0, rx_size.1)?;
        Self::new(tx, rx, medium, LinkKind::Perpendicular, guard)
    }

    pub fn tx(&self) -> &RectSurface {
        &self.tx
    }

    pub fn rx(&self) -> &RectSurface {
        &self.rx
    }

    pub fn medium(&self) -> &Medium {
        &self.medium
    }

    pub fn kind(&self) -> LinkKind {
        self.kind
    }

    /// Separation of the surface centers measured along the receive normal.
    pub fn distance(&self) -> f64 {
        (self.tx.center - self.rx.center).dot(&self.rx.normal()).abs()
    }

    /// `F = d^2 / A_R`.
    pub fn fresnel_ratio(&self) -> f64 {
        let d = self.distance();
        d * d / self.rx.area()
    }

    pub fn fresnel_ratio_db(&self) -> f64 {
        10.0 * self.fresnel_ratio().log10()
    }

    /// `S_x / S_y` of the receive surface.
    pub fn aspect_ratio(&self) -> f64 {
        self.rx.len_u / self.rx.len_v
    }

    /// Transmit center offset in the receive plane coordinates.
    pub fn tx_offset(&self) -> (f64, f64) {
        let rel = self.tx.center - self.rx.center;
        (rel.dot(&self.rx.axis_u), rel.dot(&self.rx.axis_v))
    }

    /// True when the transmit center projects onto the receive center.
    pub fn is_centered(&self) -> bool {
        let (x0, y0) = self.tx_offset();
        let scale = self.distance().max(self.rx.len_u).max(self.rx.len_v);
        x0.abs() <= 1e-12 * scale && y0.abs() <= 1e-12 * scale
    }

    /// Roles of the two surfaces exchanged.
    pub fn swapped(&self) -> Self {
        Self {
            tx: self.rx,
            rx: self.tx,
            medium: self.medium,
            kind: LinkKind::General,
        }
    }

    /// All lengths (including the wavelength) multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Result<Self, GeometryError> {
        check_positive("scale factor", factor)?;
        Ok(Self {
            tx: self.tx.scaled(factor)?,
            rx: self.rx.scaled(factor)?,
            medium: self.medium.scaled(factor)?,
            kind: self.kind,
        })
    }
}

fn check_positive(what: &'static str, value: f64) -> Result<(), GeometryError> {
    if value.is_finite() && value > 0.0 {
        Ok(())
    } else {
        Err(GeometryError::NonPositive { what, value })
    }
}

fn check_link_distance(d: f64, medium: &Medium, guard: NearFieldGuard) -> Result<(), GeometryError> {
    check_positive("distance", d)?;
    let required = guard.min_distance_wavelengths * medium.wavelength();
    if d <= required {
        return Err(GeometryError::ReactiveNearField {
            separation: d,
            required,
        });
    }
    Ok(())
}

/// Uniform tiling of a surface into square-ish patches, sampled at the patch
/// centers. Sample `(iu, iv)` has flat index `iu * n_v + iv`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurfaceGrid {
    surface: RectSurface,
    n_u: usize,
    n_v: usize,
}

impl SurfaceGrid {
    pub fn new(surface: RectSurface, patch: f64) -> Result<Self, GeometryError> {
        check_positive("patch side", patch)?;
        let n_u = tile_count(surface.len_u, patch)?;
        let n_v = tile_count(surface.len_v, patch)?;
        Ok(Self { surface, n_u, n_v })
    }

    pub fn with_counts(surface: RectSurface, n_u: usize, n_v: usize) -> Self {
        assert!(n_u > 0 && n_v > 0, "grid needs at least one patch per side");
        Self { surface, n_u, n_v }
    }

    pub fn surface(&self) -> &RectSurface {
        &self.surface
    }

    pub fn n_u(&self) -> usize {
        self.n_u
    }

    pub fn n_v(&self) -> usize {
        self.n_v
    }

    pub fn len(&self) -> usize {
        self.n_u * self.n_v
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn patch_u(&self) -> f64 {
        self.surface.len_u / self.n_u as f64
    }

    pub fn patch_v(&self) -> f64 {
        self.surface.len_v / self.n_v as f64
    }

    pub fn patch_area(&self) -> f64 {
        self.patch_u() * self.patch_v()
    }

    /// Local coordinates of patch `(iu, iv)`.
    pub fn local(&self, iu: usize, iv: usize) -> (f64, f64) {
        let u = -0.5 * self.surface.len_u + (iu as f64 + 0.5) * self.patch_u();
        let v = -0.5 * self.surface.len_v + (iv as f64 + 0.5) * self.patch_v();
        (u, v)
    }

    pub fn index(&self, iu: usize, iv: usize) -> usize {
        iu * self.n_v + iv
    }

    pub fn unindex(&self, k: usize) -> (usize, usize) {
        (k / self.n_v, k % self.n_v)
    }

    pub fn point(&self, k: usize) -> Vec3 {
        let (iu, iv) = self.unindex(k);
        let (u, v) = self.local(iu, iv);
        self.surface.point(u, v)
    }

    pub fn points(&self) -> Vec<Vec3> {
        (0..self.len()).map(|k| self.point(k)).collect()
    }

    /// Whether the two grids sample the same points.
    pub fn matches(&self, other: &SurfaceGrid) -> bool {
        if self.n_u != other.n_u || self.n_v != other.n_v {
            return false;
        }
        let scale = self.surface.len_u.max(self.surface.len_v);
        let a = &self.surface;
        let b = &other.surface;
        (a.center - b.center).norm() <= 1e-9 * scale
            && (a.axis_u - b.axis_u).norm() <= 1e-9
            && (a.axis_v - b.axis_v).norm() <= 1e-9
            && (a.len_u - b.len_u).abs() <= 1e-9 * scale
            && (a.len_v - b.len_v).abs() <= 1e-9 * scale
    }
}

fn tile_count(side: f64, patch: f64) -> Result<usize, GeometryError> {
    let ratio = side / patch;
    let n = ratio.round();
    if n < 1.0 || (ratio - n).abs() > TILING_TOL * ratio {
        return Err(GeometryError::NonTiling { patch, side });
    }
    Ok(n as usize)
}
