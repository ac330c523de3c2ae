//! Degrees of freedom from the wavenumber support seen by the receive surface.
//!
//! A receive point `r` observes the wave from a source `s` with in-plane
//! wavenumber `k0 (p̂ - n̂ (p̂·n̂))`, `p̂ = (r - s)/|r - s|`. Sweeping `s` over
//! the transmit surface traces a region in the `(k_u, k_v)` plane whose area
//! `A(r)` is approximated by the quadrilateral through the images of the four
//! transmit corners. The DoF estimate is `D = (1/4π²) ∫ A(r) dr`.

use std::f64::consts::PI;

use thiserror::Error;

use crate::geometry::{LinkGeometry, LinkKind, Medium, RectSurface, Vec3};
use crate::quadrature::{integrate_surface, QuadratureError, QuadratureSpec};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DofError {
    #[error(transparent)]
    Quadrature(#[from] QuadratureError),
    #[error("observation and source points coincide")]
    CoincidentPoints,
    #[error("closed form needs a centered {0} link")]
    WrongGeometry(&'static str),
}

/// In-plane wavenumber observed at a receive point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WavenumberSample {
    pub k_x: f64,
    pub k_y: f64,
}

/// In-plane wavenumber at `r` (on a surface with axes `axis_u`, `axis_v`)
/// for a point source at `s`.
pub fn wavenumber_on(
    r: &Vec3,
    s: &Vec3,
    axis_u: &Vec3,
    axis_v: &Vec3,
    medium: &Medium,
) -> Result<WavenumberSample, DofError> {
    let d = r - s;
    let dist = d.norm();
    if dist == 0.0 {
        return Err(DofError::CoincidentPoints);
    }
    let k0 = medium.wavenumber();
    Ok(WavenumberSample {
        k_x: k0 * d.dot(axis_u) / dist,
        k_y: k0 * d.dot(axis_v) / dist,
    })
}

/// Wavenumber on the canonical receive plane (`x`, `y` axes).
pub fn wavenumber(r: &Vec3, s: &Vec3, medium: &Medium) -> Result<WavenumberSample, DofError> {
    wavenumber_on(r, s, &Vec3::x(), &Vec3::y(), medium)
}

/// Gauss (shoelace) area of a closed polygon given in cyclic order. Vertices
/// are taken relative to the first one so nearly coincident polygons far
/// from the origin keep their precision.
pub fn shoelace_area(vertices: &[(f64, f64)]) -> f64 {
    let Some(&(x0, y0)) = vertices.first() else {
        return 0.0;
    };
    let n = vertices.len();
    let mut twice = 0.0;
    for i in 0..n {
        let (xa, ya) = vertices[i];
        let (xb, yb) = vertices[(i + 1) % n];
        twice += (xa - x0) * (yb - y0) - (xb - x0) * (ya - y0);
    }
    0.5 * twice.abs()
}

/// Area of the wavenumber quadrilateral spanned at `r` by the given transmit
/// corners (cyclic order).
pub fn bandwidth_area_from_corners(
    r: &Vec3,
    corners: &[Vec3; 4],
    rx: &RectSurface,
    medium: &Medium,
) -> Result<f64, DofError> {
    let (au, av) = (rx.axis_u(), rx.axis_v());
    let mut poly = [(0.0, 0.0); 4];
    for (slot, c) in poly.iter_mut().zip(corners) {
        let k = wavenumber_on(r, c, &au, &av, medium)?;
        *slot = (k.k_x, k.k_y);
    }
    Ok(shoelace_area(&poly))
}

/// `A(r)` in rad²/m² for the transmit surface of `link`.
pub fn local_bandwidth_area(r: &Vec3, link: &LinkGeometry) -> Result<f64, DofError> {
    bandwidth_area_from_corners(r, &link.tx().corners(), link.rx(), link.medium())
}

/// Local spatial bandwidth `B(r) = A(r)/4`.
pub fn local_bandwidth(r: &Vec3, link: &LinkGeometry) -> Result<f64, DofError> {
    Ok(local_bandwidth_area(r, link)? / 4.0)
}

/// `D = (1/4π²) ∫_{S_R} A(r) dr`.
pub fn dof_numeric(link: &LinkGeometry, spec: &QuadratureSpec) -> Result<f64, DofError> {
    let corners = link.tx().corners();
    let rx = *link.rx();
    let medium = *link.medium();
    let mut failure = None;
    let est = integrate_surface(
        |r| match bandwidth_area_from_corners(r, &corners, &rx, &medium) {
            Ok(a) => a,
            Err(e) => {
                failure.get_or_insert(e);
                0.0
            }
        },
        &rx,
        spec,
    );
    if let Some(e) = failure {
        return Err(e);
    }
    Ok(est?.value / (4.0 * PI * PI))
}

/// Closed form for a centered parallel link (small transmit surface):
/// `(2 L_x L_y/λ²) [S_x atan(S_y/a)/a + S_y atan(S_x/b)/b]`,
/// `a = sqrt(4d² + S_x²)`, `b = sqrt(4d² + S_y²)`.
pub fn dof_closed_parallel(link: &LinkGeometry) -> Result<f64, DofError> {
    if link.kind() != LinkKind::Parallel || !link.is_centered() {
        return Err(DofError::WrongGeometry("parallel"));
    }
    let (tx, rx) = (link.tx(), link.rx());
    Ok(dof_parallel_formula(
        link.distance(),
        rx.len_u(),
        rx.len_v(),
        tx.area(),
        link.medium().wavelength(),
    ))
}

pub fn dof_parallel_formula(d: f64, sx: f64, sy: f64, area_t: f64, lambda: f64) -> f64 {
    let a = (4.0 * d * d + sx * sx).sqrt();
    let b = (4.0 * d * d + sy * sy).sqrt();
    2.0 * area_t / (lambda * lambda) * (sx * (sy / a).atan() / a + sy * (sx / b).atan() / b)
}

/// Limit for an unbounded receive surface, `π A_T / λ²`. Shared by both
/// orientations.
pub fn dof_asymptotic_parallel(area_t: f64, lambda: f64) -> f64 {
    PI * area_t / (lambda * lambda)
}

pub fn dof_asymptotic_perpendicular(area_t: f64, lambda: f64) -> f64 {
    dof_asymptotic_parallel(area_t, lambda)
}

/// Far-field count `Δx_T Δy_T Δx_R Δy_R / (d² λ²)`.
pub fn dof_farfield_miller(tx_aperture: (f64, f64), rx_aperture: (f64, f64), d: f64, lambda: f64) -> f64 {
    tx_aperture.0 * tx_aperture.1 * rx_aperture.0 * rx_aperture.1 / (d * d * lambda * lambda)
}

/// Closed form for a centered perpendicular link:
/// `2 L_x L_z [b acot(2d/S_x) - 2d atan(S_x/b)] / (λ² b)`, `b = sqrt(4d² + S_y²)`.
pub fn dof_closed_perpendicular(link: &LinkGeometry) -> Result<f64, DofError> {
    if link.kind() != LinkKind::Perpendicular || !link.is_centered() {
        return Err(DofError::WrongGeometry("perpendicular"));
    }
    let (tx, rx) = (link.tx(), link.rx());
    Ok(dof_perpendicular_formula(
        link.distance(),
        rx.len_u(),
        rx.len_v(),
        tx.area(),
        link.medium().wavelength(),
    ))
}

pub fn dof_perpendicular_formula(d: f64, sx: f64, sy: f64, area_t: f64, lambda: f64) -> f64 {
    let b = (4.0 * d * d + sy * sy).sqrt();
    // acot(2d/S_x) = atan(S_x/2d) for positive arguments.
    let acot = (sx / (2.0 * d)).atan();
    2.0 * area_t * (b * acot - 2.0 * d * (sx / b).atan()) / (lambda * lambda * b)
}

/// Far-field perpendicular count `A_T A_R S_y / (4 λ² d³)`.
pub fn dof_farfield_perpendicular(area_t: f64, sx: f64, sy: f64, d: f64, lambda: f64) -> f64 {
    area_t * sx * sy * sy / (4.0 * lambda * lambda * d * d * d)
}

/// Continuous DoF rounded to a usable mode count, never below 1.
pub fn rounded_dof(d: f64) -> usize {
    if d.is_finite() && d > 1.0 {
        d.round() as usize
    } else {
        1
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DofReport {
    pub d_numeric: Option<f64>,
    pub d_closed: f64,
    pub d_asymptotic: f64,
    /// Far-field baseline; the plain aperture product only exists for
    /// parallel links, the perpendicular row uses its own far-field law.
    pub d_farfield: f64,
    pub d_rounded: usize,
}

impl DofReport {
    /// Closed forms and baselines for a canonical centered link, plus the
    /// numeric estimate when `spec` is given.
    pub fn compute(link: &LinkGeometry, spec: Option<&QuadratureSpec>) -> Result<Self, DofError> {
        let lambda = link.medium().wavelength();
        let (tx, rx) = (link.tx(), link.rx());
        let d = link.distance();
        let (d_closed, d_farfield) = match link.kind() {
            LinkKind::Parallel => (
                dof_closed_parallel(link)?,
                dof_farfield_miller((tx.len_u(), tx.len_v()), (rx.len_u(), rx.len_v()), d, lambda),
            ),
            LinkKind::Perpendicular => (
                dof_closed_perpendicular(link)?,
                dof_farfield_perpendicular(tx.area(), rx.len_u(), rx.len_v(), d, lambda),
            ),
            LinkKind::General => return Err(DofError::WrongGeometry("parallel or perpendicular")),
        };
        let d_numeric = match spec {
            Some(spec) => Some(dof_numeric(link, spec)?),
            None => None,
        };
        Ok(Self {
            d_numeric,
            d_closed,
            d_asymptotic: dof_asymptotic_parallel(tx.area(), lambda),
            d_farfield,
            d_rounded: rounded_dof(d_closed),
        })
    }
}
