//! Free-space tensor Green's function.
//!
//! Time convention `exp(+j w t)`, outgoing phase `exp(-j k0 r)`. With
//! `P = I - r̂ r̂ᵀ` and `Q = I - 3 r̂ r̂ᵀ` the full tensor is
//!
//! ```text
//! G(r) = -(j η e^{-j k0 r} / 2 λ r) [ P + (j λ / 2π r) Q - (λ / 2π r)² Q ]
//! ```
//!
//! and the far-field form keeps only the `P` term. Every integral in the crate
//! uses the far-field form; [`green_full`] exists for diagnostics.

use std::f64::consts::PI;

use nalgebra::{Matrix3, Vector3};
use num_complex::Complex64;
use thiserror::Error;

use crate::geometry::{Medium, Vec3};

pub type CVec3 = Vector3<Complex64>;

#[derive(Debug, Error, Clone, PartialEq)]
#[error("Green's function evaluated at zero displacement")]
pub struct ZeroDisplacement;

/// 3x3 complex tensor evaluated at a displacement `r = obs - src`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GreenTensor {
    displacement: Vec3,
    matrix: Matrix3<Complex64>,
}

impl GreenTensor {
    pub fn displacement(&self) -> Vec3 {
        self.displacement
    }

    pub fn matrix(&self) -> &Matrix3<Complex64> {
        &self.matrix
    }

    pub fn entry(&self, row: usize, col: usize) -> Complex64 {
        self.matrix[(row, col)]
    }

    /// Field radiated by a unit source polarized along axis `col`.
    pub fn column(&self, col: usize) -> CVec3 {
        self.matrix.column(col).into_owned()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.matrix.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        (0..3).all(|i| (0..3).all(|j| (self.matrix[(i, j)] - self.matrix[(j, i)]).norm() <= tol))
    }
}

impl std::ops::Sub for GreenTensor {
    type Output = Matrix3<Complex64>;

    fn sub(self, rhs: Self) -> Matrix3<Complex64> {
        self.matrix - rhs.matrix
    }
}

/// Transverse projector `I - r̂ r̂ᵀ`.
pub fn transverse_projector(direction: &Vec3) -> Matrix3<f64> {
    let u = direction.normalize();
    Matrix3::identity() - u * u.transpose()
}

fn unit_and_norm(displacement: &Vec3) -> Result<(Vec3, f64), ZeroDisplacement> {
    let r = displacement.norm();
    if r == 0.0 || !r.is_finite() {
        return Err(ZeroDisplacement);
    }
    Ok((displacement / r, r))
}

/// Common scalar prefactor `-j η e^{-j k0 r} / (2 λ r)`.
fn prefactor(r: f64, medium: &Medium) -> Complex64 {
    let lambda = medium.wavelength();
    let phase = Complex64::from_polar(1.0, -medium.wavenumber() * r);
    Complex64::new(0.0, -medium.impedance() / (2.0 * lambda * r)) * phase
}

/// The `1/r`, `1/r²` and `1/r³` contributions, in that order. Their sum is
/// [`green_full`].
pub fn green_terms(
    displacement: &Vec3,
    medium: &Medium,
) -> Result<[GreenTensor; 3], ZeroDisplacement> {
    let (u, r) = unit_and_norm(displacement)?;
    let outer = u * u.transpose();
    let p = Matrix3::<f64>::identity() - outer;
    let q = Matrix3::<f64>::identity() - outer * 3.0;
    let pre = prefactor(r, medium);
    let x = medium.wavelength() / (2.0 * PI * r);
    let make = |m: Matrix3<f64>, c: Complex64| GreenTensor {
        displacement: *displacement,
        matrix: m.map(|v| pre * c * v),
    };
    Ok([
        make(p, Complex64::new(1.0, 0.0)),
        make(q, Complex64::new(0.0, x)),
        make(q, Complex64::new(-x * x, 0.0)),
    ])
}

pub fn green_full(displacement: &Vec3, medium: &Medium) -> Result<GreenTensor, ZeroDisplacement> {
    let [a, b, c] = green_terms(displacement, medium)?;
    Ok(GreenTensor {
        displacement: *displacement,
        matrix: a.matrix + b.matrix + c.matrix,
    })
}

pub fn green_farfield(
    displacement: &Vec3,
    medium: &Medium,
) -> Result<GreenTensor, ZeroDisplacement> {
    let (u, r) = unit_and_norm(displacement)?;
    let p = Matrix3::<f64>::identity() - u * u.transpose();
    let pre = prefactor(r, medium);
    Ok(GreenTensor {
        displacement: *displacement,
        matrix: p.map(|v| pre * v),
    })
}

/// First column of the far-field tensor: the field of an `x`-polarized point
/// source.
pub fn green_column_x(displacement: &Vec3, medium: &Medium) -> Result<CVec3, ZeroDisplacement> {
    unit_and_norm(displacement)?;
    Ok(CVec3::from(column_x_unchecked(displacement, medium)))
}

/// Hot-loop variant of [`green_column_x`]; the caller guarantees `r != 0`.
#[inline]
pub(crate) fn column_x_unchecked(displacement: &Vec3, medium: &Medium) -> [Complex64; 3] {
    let r2 = displacement.norm_squared();
    let r = r2.sqrt();
    let pre = prefactor(r, medium);
    let (dx, dy, dz) = (displacement.x, displacement.y, displacement.z);
    [
        pre * (1.0 - dx * dx / r2),
        pre * (-dx * dy / r2),
        pre * (-dx * dz / r2),
    ]
}

/// `((r_y - s_y)² + (r_z - s_z)²) / |r - s|⁴`, the geometric part of
/// `(4/η²) λ² ‖G_x‖²`.
#[inline]
pub fn coupling_density_x(displacement: &Vec3) -> f64 {
    let r2 = displacement.norm_squared();
    (displacement.y * displacement.y + displacement.z * displacement.z) / (r2 * r2)
}

/// `‖G_x(r)‖²` of the far-field form.
#[inline]
pub fn column_x_norm_sqr(displacement: &Vec3, medium: &Medium) -> f64 {
    let eta = medium.impedance();
    let lambda = medium.wavelength();
    (eta * eta / (4.0 * lambda * lambda)) * coupling_density_x(displacement)
}
