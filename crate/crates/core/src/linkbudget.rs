//! Coupling intensity, link power gain and capacity figures.
//!
//! All gains are dimensionless power ratios for an `x`-polarized transmit
//! current. The `y` and `z` excitations follow by exchanging axes and are not
//! provided.

use std::f64::consts::PI;

use log::warn;
use thiserror::Error;

use crate::geometry::{LinkGeometry, LinkKind, Vec3};
use crate::green::coupling_density_x;
use crate::quadrature::{integrate_double_surface, integrate_surface, QuadratureError, QuadratureSpec};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinkBudgetError {
    #[error(transparent)]
    Quadrature(#[from] QuadratureError),
    #[error("closed-form gain needs a centered parallel link")]
    NotCenteredParallel,
    #[error("{0}")]
    InvalidArgument(String),
}

/// Transmit sides larger than this fraction of `d` break the small-surface
/// approximation behind [`gain_numeric`] and the closed forms.
pub const SMALL_SURFACE_RATIO: f64 = 0.1;

/// `c_x = (1/λ²) ∬ ((r_y-s_y)² + (r_z-s_z)²) / |r-s|⁴ dr ds`.
pub fn coupling_intensity(link: &LinkGeometry, spec: &QuadratureSpec) -> Result<f64, LinkBudgetError> {
    let lambda = link.medium().wavelength();
    let est = integrate_double_surface(
        |s, r| coupling_density_x(&(r - s)),
        link.tx(),
        link.rx(),
        spec,
    )?;
    Ok(est.value / (lambda * lambda))
}

/// Whether the transmit surface is small enough against `d` for the
/// point-source approximation.
pub fn small_surface_regime(link: &LinkGeometry) -> bool {
    let tx = link.tx();
    tx.len_u().max(tx.len_v()) <= SMALL_SURFACE_RATIO * link.distance()
}

/// Integrand of the gain integral at receive point `r` for a transmit center
/// `s0`, including the `A_T/λ²` prefactor: the power flux through the receive
/// surface, `(A_T/λ²) ((r_y-y0)² + (r_z-z0)²) |(r-s0)·n̂| / |r-s0|⁵`.
pub fn gain_density(r: &Vec3, s0: &Vec3, normal: &Vec3, area_t: f64, lambda: f64) -> f64 {
    let d = r - s0;
    let dist2 = d.norm_squared();
    let dist = dist2.sqrt();
    area_t / (lambda * lambda) * (d.y * d.y + d.z * d.z) * d.dot(normal).abs()
        / (dist2 * dist2 * dist)
}

/// Link gain by quadrature over the receive surface, treating the transmit
/// surface as a point source of area `A_T` at its center. Accepts offset
/// centers; logs a warning outside the small-surface regime.
pub fn gain_numeric(link: &LinkGeometry, spec: &QuadratureSpec) -> Result<f64, LinkBudgetError> {
    if !small_surface_regime(link) {
        warn!(
            "transmit surface side exceeds d/10 (d = {} m); point-source gain is approximate",
            link.distance()
        );
    }
    let s0 = link.tx().center();
    let normal = link.rx().normal();
    let area_t = link.tx().area();
    let lambda = link.medium().wavelength();
    let est = integrate_surface(
        |r| gain_density(r, &s0, &normal, area_t, lambda),
        link.rx(),
        spec,
    )?;
    Ok(est.value)
}

/// Closed-form gain for a centered parallel link with a rectangular receive
/// surface.
pub fn gain_closed(link: &LinkGeometry) -> Result<f64, LinkBudgetError> {
    if link.kind() != LinkKind::Parallel || !link.is_centered() {
        return Err(LinkBudgetError::NotCenteredParallel);
    }
    let rx = link.rx();
    Ok(gain_closed_rect(
        link.distance(),
        rx.len_u(),
        rx.len_v(),
        link.tx().area(),
        link.medium().wavelength(),
    ))
}

/// `(8 A_T / 3λ²) [ S_x S_y d / ((S_x² + 4d²) q) + atan(S_x S_y / (2 d q)) ]`
/// with `q = sqrt(S_x² + S_y² + 4d²)`.
pub fn gain_closed_rect(d: f64, sx: f64, sy: f64, area_t: f64, lambda: f64) -> f64 {
    let q = (sx * sx + sy * sy + 4.0 * d * d).sqrt();
    8.0 * area_t / (3.0 * lambda * lambda)
        * (sx * sy * d / ((sx * sx + 4.0 * d * d) * q) + (sx * sy / (2.0 * d * q)).atan())
}

/// Square receive surface as a function of `F = d²/A_R`.
pub fn gain_closed_square(f: f64, area_t: f64, lambda: f64) -> f64 {
    let two_f = 2.0 * f;
    let acot = (1.0 / (8.0 * f * (1.0 + two_f)).sqrt()).atan();
    4.0 * area_t / (3.0 * lambda * lambda)
        * (two_f.sqrt() / ((1.0 + two_f).sqrt() * (1.0 + 4.0 * f)) + 2.0 * acot)
}

/// `A_T A_R / (λ² d²)`.
pub fn gain_friis(link: &LinkGeometry) -> f64 {
    let lambda = link.medium().wavelength();
    let d = link.distance();
    link.tx().area() * link.rx().area() / (lambda * lambda * d * d)
}

/// Saturation value `4π A_T / (3λ²)` reached when the receive surface grows
/// without bound.
pub fn gain_large_lis(area_t: f64, lambda: f64) -> f64 {
    4.0 * PI * area_t / (3.0 * lambda * lambda)
}

/// Aperture-antenna gain `4π A / λ²`.
pub fn aperture_gain(area: f64, lambda: f64) -> f64 {
    4.0 * PI * area / (lambda * lambda)
}

/// Isotropic free-space channel gain `λ² / (4π d)²`.
pub fn isotropic_channel_gain(d: f64, lambda: f64) -> f64 {
    let x = lambda / (4.0 * PI * d);
    x * x
}

/// Friis gain as `G_T G_R G_I`.
pub fn friis_factors(link: &LinkGeometry) -> (f64, f64, f64) {
    let lambda = link.medium().wavelength();
    (
        aperture_gain(link.tx().area(), lambda),
        aperture_gain(link.rx().area(), lambda),
        isotropic_channel_gain(link.distance(), lambda),
    )
}

/// Capacity with `modes` equal-power parallel channels relative to one
/// channel at the same total SNR (linear).
pub fn capacity_gain(modes: usize, snr: f64) -> Result<f64, LinkBudgetError> {
    if modes == 0 {
        return Err(LinkBudgetError::InvalidArgument("mode count must be >= 1".into()));
    }
    if !(snr > 0.0 && snr.is_finite()) {
        return Err(LinkBudgetError::InvalidArgument(format!("snr must be positive, got {snr}")));
    }
    let d = modes as f64;
    Ok(d * (1.0 + snr / d).log2() / (1.0 + snr).log2())
}

/// Orthogonal links per square meter of transmit surface.
pub fn spatial_density(modes: usize, area_t: f64) -> Result<f64, LinkBudgetError> {
    if !(area_t > 0.0 && area_t.is_finite()) {
        return Err(LinkBudgetError::InvalidArgument(format!(
            "transmit area must be positive, got {area_t}"
        )));
    }
    Ok(modes as f64 / area_t)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GainReport {
    pub g_numeric: f64,
    /// Present for centered parallel links only.
    pub g_closed: Option<f64>,
    pub g_friis: f64,
    pub g_large_lis: f64,
    /// Gain over `G_T = 4π A_T / λ²`, from the closed form when available.
    pub normalized_gain: f64,
    /// Transmit surface outside the small-surface regime.
    pub regime_warning: bool,
}

impl GainReport {
    pub fn compute(link: &LinkGeometry, spec: &QuadratureSpec) -> Result<Self, LinkBudgetError> {
        let lambda = link.medium().wavelength();
        let area_t = link.tx().area();
        let g_numeric = gain_numeric(link, spec)?;
        let g_closed = gain_closed(link).ok();
        let g = g_closed.unwrap_or(g_numeric);
        Ok(Self {
            g_numeric,
            g_closed,
            g_friis: gain_friis(link),
            g_large_lis: gain_large_lis(area_t, lambda),
            normalized_gain: g / aperture_gain(area_t, lambda),
            regime_warning: !small_surface_regime(link),
        })
    }
}
