//! Adaptive tensor-product Gauss–Legendre quadrature over rectangles.
//!
//! Each panel is integrated with an `n x n` Gauss–Legendre rule and once more
//! after bisecting it along each axis. The larger of the two differences is
//! the panel's error estimate, and the panel with the largest estimate is
//! bisected along the axis that produced it. Panels are summed in creation
//! order, so results are bit-identical across runs.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::ops::{Add, Mul, Sub};

use num_complex::Complex64;
use thiserror::Error;

use crate::geometry::{RectSurface, Vec3};

/// Scalar types the integrator can accumulate.
pub trait QuadValue:
    Copy + Add<Output = Self> + Sub<Output = Self> + Mul<f64, Output = Self>
{
    fn zero() -> Self;
    fn magnitude(&self) -> f64;
}

impl QuadValue for f64 {
    fn zero() -> Self {
        0.0
    }

    fn magnitude(&self) -> f64 {
        self.abs()
    }
}

impl QuadValue for Complex64 {
    fn zero() -> Self {
        Complex64::new(0.0, 0.0)
    }

    fn magnitude(&self) -> f64 {
        self.norm()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureSpec {
    /// Gauss–Legendre nodes per axis and panel.
    pub nodes: usize,
    pub rel_tol: f64,
    /// Absolute floor, useful for integrals that vanish.
    pub abs_tol: f64,
    /// Maximum number of bisections of the domain along either axis.
    pub max_subdivisions: u32,
    /// Hard cap on the number of live panels.
    pub max_panels: usize,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        Self {
            nodes: 32,
            rel_tol: 1e-6,
            abs_tol: 0.0,
            max_subdivisions: 12,
            max_panels: 4096,
        }
    }
}

impl QuadratureSpec {
    pub fn with_rel_tol(mut self, rel_tol: f64) -> Self {
        self.rel_tol = rel_tol;
        self
    }

    pub fn with_nodes(mut self, nodes: usize) -> Self {
        self.nodes = nodes;
        self
    }

    pub fn validate(&self) -> Result<(), QuadratureError> {
        if self.nodes < 2 {
            return Err(QuadratureError::InvalidSpec(format!(
                "nodes per axis must be >= 2, got {}",
                self.nodes
            )));
        }
        if !(self.rel_tol > 0.0 && self.rel_tol.is_finite()) {
            return Err(QuadratureError::InvalidSpec(format!(
                "rel_tol must be positive, got {}",
                self.rel_tol
            )));
        }
        if !(self.abs_tol >= 0.0) {
            return Err(QuadratureError::InvalidSpec(format!(
                "abs_tol must be non-negative, got {}",
                self.abs_tol
            )));
        }
        if self.max_panels == 0 {
            return Err(QuadratureError::InvalidSpec("max_panels must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QuadratureError {
    #[error("invalid quadrature settings: {0}")]
    InvalidSpec(String),
    #[error("quadrature did not converge: |value| = {magnitude:.6e}, error estimate {error:.3e} after {panels} panels")]
    NonConvergence {
        magnitude: f64,
        error: f64,
        panels: usize,
    },
    #[error("integrand is not finite at ({0}, {1})")]
    NonFinite(f64, f64),
}

/// Converged value with its error estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate<T> {
    pub value: T,
    pub error: f64,
    pub panels: usize,
}

impl<T: QuadValue> Estimate<T> {
    pub fn relative_error(&self) -> f64 {
        let m = self.value.magnitude();
        if m == 0.0 {
            if self.error == 0.0 {
                0.0
            } else {
                f64::INFINITY
            }
        } else {
            self.error / m
        }
    }
}

/// Gauss–Legendre rule on `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussLegendre {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussLegendre {
    /// Nodes by Newton iteration on the three-term Legendre recurrence.
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "rule needs at least one node");
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let nf = n as f64;
        for i in 0..n.div_ceil(2) {
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
            for _ in 0..100 {
                let (p, d) = legendre_with_derivative(n, x);
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, dp) = legendre_with_derivative(n, x);
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        if n % 2 == 1 {
            nodes[n / 2] = 0.0;
        }
        Self { nodes, weights }
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn integrate<T: QuadValue>(&self, mut f: impl FnMut(f64) -> T, a: f64, b: f64) -> T {
        let (mid, half) = (0.5 * (a + b), 0.5 * (b - a));
        let mut acc = T::zero();
        for (x, w) in self.nodes.iter().zip(&self.weights) {
            acc = acc + f(mid + half * x) * *w;
        }
        acc * half
    }

    /// Tensor-product rule on `[u0, u1] x [v0, v1]`.
    fn rect<T: QuadValue>(
        &self,
        f: &mut impl FnMut(f64, f64) -> T,
        u0: f64,
        u1: f64,
        v0: f64,
        v1: f64,
    ) -> Result<T, QuadratureError> {
        let (um, uh) = (0.5 * (u0 + u1), 0.5 * (u1 - u0));
        let (vm, vh) = (0.5 * (v0 + v1), 0.5 * (v1 - v0));
        let mut acc = T::zero();
        for (xu, wu) in self.nodes.iter().zip(&self.weights) {
            let u = um + uh * xu;
            let mut row = T::zero();
            for (xv, wv) in self.nodes.iter().zip(&self.weights) {
                let v = vm + vh * xv;
                let val = f(u, v);
                if !val.magnitude().is_finite() {
                    return Err(QuadratureError::NonFinite(u, v));
                }
                row = row + val * *wv;
            }
            acc = acc + row * *wu;
        }
        Ok(acc * (uh * vh))
    }
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

#[derive(Debug, Clone, Copy)]
struct Panel<T> {
    u: (f64, f64),
    v: (f64, f64),
    depth_u: u32,
    depth_v: u32,
    halves_u: [T; 2],
    halves_v: [T; 2],
    err_u: f64,
    err_v: f64,
}

impl<T: QuadValue> Panel<T> {
    fn error(&self) -> f64 {
        self.err_u.max(self.err_v)
    }

    /// Refined estimate along the axis that moved the most.
    fn value(&self) -> T {
        if self.err_u >= self.err_v {
            self.halves_u[0] + self.halves_u[1]
        } else {
            self.halves_v[0] + self.halves_v[1]
        }
    }

    /// Axis to bisect next (`true` = u), if any depth budget is left.
    fn split_axis(&self, max_depth: u32) -> Option<bool> {
        let prefer_u = self.err_u >= self.err_v;
        match (self.depth_u < max_depth, self.depth_v < max_depth) {
            (true, true) => Some(prefer_u),
            (true, false) => Some(true),
            (false, true) => Some(false),
            (false, false) => None,
        }
    }
}

fn eval_panel<T: QuadValue>(
    rule: &GaussLegendre,
    f: &mut impl FnMut(f64, f64) -> T,
    u: (f64, f64),
    v: (f64, f64),
    depth: (u32, u32),
    coarse: Option<T>,
) -> Result<Panel<T>, QuadratureError> {
    let coarse = match coarse {
        Some(c) => c,
        None => rule.rect(f, u.0, u.1, v.0, v.1)?,
    };
    let um = 0.5 * (u.0 + u.1);
    let vm = 0.5 * (v.0 + v.1);
    let halves_u = [
        rule.rect(f, u.0, um, v.0, v.1)?,
        rule.rect(f, um, u.1, v.0, v.1)?,
    ];
    let halves_v = [
        rule.rect(f, u.0, u.1, v.0, vm)?,
        rule.rect(f, u.0, u.1, vm, v.1)?,
    ];
    Ok(Panel {
        u,
        v,
        depth_u: depth.0,
        depth_v: depth.1,
        err_u: (halves_u[0] + halves_u[1] - coarse).magnitude(),
        err_v: (halves_v[0] + halves_v[1] - coarse).magnitude(),
        halves_u,
        halves_v,
    })
}

#[derive(PartialEq)]
struct HeapKey {
    error: f64,
    id: usize,
}

impl Eq for HeapKey {}

impl PartialOrd for HeapKey {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for HeapKey {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error
            .total_cmp(&other.error)
            .then_with(|| other.id.cmp(&self.id))
    }
}

fn totals<T: QuadValue>(panels: &[Option<Panel<T>>]) -> (T, f64, usize) {
    let mut value = T::zero();
    let mut error = 0.0;
    let mut live = 0;
    for p in panels.iter().flatten() {
        value = value + p.value();
        error += p.error();
        live += 1;
    }
    (value, error, live)
}

/// Adaptive integral of `f(u, v)` over `[u0, u1] x [v0, v1]`.
pub fn integrate_rect<T: QuadValue>(
    mut f: impl FnMut(f64, f64) -> T,
    u: (f64, f64),
    v: (f64, f64),
    spec: &QuadratureSpec,
) -> Result<Estimate<T>, QuadratureError> {
    spec.validate()?;
    let rule = GaussLegendre::new(spec.nodes);
    let root = eval_panel(&rule, &mut f, u, v, (0, 0), None)?;
    let mut heap = BinaryHeap::new();
    heap.push(HeapKey {
        error: root.error(),
        id: 0,
    });
    let mut panels = vec![Some(root)];
    loop {
        let (value, error, live) = totals(&panels);
        let target = (spec.rel_tol * value.magnitude()).max(spec.abs_tol);
        if error <= target {
            return Ok(Estimate {
                value,
                error,
                panels: live,
            });
        }
        let fail = QuadratureError::NonConvergence {
            magnitude: value.magnitude(),
            error,
            panels: live,
        };
        if live >= spec.max_panels {
            return Err(fail);
        }
        let Some(HeapKey { id, .. }) = heap.pop() else {
            return Err(fail);
        };
        let Some(panel) = panels[id].take() else {
            return Err(fail);
        };
        let Some(along_u) = panel.split_axis(spec.max_subdivisions) else {
            return Err(fail);
        };
        let children = if along_u {
            let um = 0.5 * (panel.u.0 + panel.u.1);
            let depth = (panel.depth_u + 1, panel.depth_v);
            [
                eval_panel(&rule, &mut f, (panel.u.0, um), panel.v, depth, Some(panel.halves_u[0]))?,
                eval_panel(&rule, &mut f, (um, panel.u.1), panel.v, depth, Some(panel.halves_u[1]))?,
            ]
        } else {
            let vm = 0.5 * (panel.v.0 + panel.v.1);
            let depth = (panel.depth_u, panel.depth_v + 1);
            [
                eval_panel(&rule, &mut f, panel.u, (panel.v.0, vm), depth, Some(panel.halves_v[0]))?,
                eval_panel(&rule, &mut f, panel.u, (vm, panel.v.1), depth, Some(panel.halves_v[1]))?,
            ]
        };
        for child in children {
            heap.push(HeapKey {
                error: child.error(),
                id: panels.len(),
            });
            panels.push(Some(child));
        }
    }
}

/// Composite rule on a uniform `panels x panels` partition, no adaptivity.
pub fn integrate_rect_fixed<T: QuadValue>(
    mut f: impl FnMut(f64, f64) -> T,
    u: (f64, f64),
    v: (f64, f64),
    nodes: usize,
    panels: usize,
) -> Result<T, QuadratureError> {
    let rule = GaussLegendre::new(nodes);
    let du = (u.1 - u.0) / panels as f64;
    let dv = (v.1 - v.0) / panels as f64;
    let mut acc = T::zero();
    for i in 0..panels {
        let u0 = u.0 + i as f64 * du;
        for j in 0..panels {
            let v0 = v.0 + j as f64 * dv;
            acc = acc + rule.rect(&mut f, u0, u0 + du, v0, v0 + dv)?;
        }
    }
    Ok(acc)
}

/// Integral of `f` over a rectangular surface (area element in m²).
pub fn integrate_surface<T: QuadValue>(
    mut f: impl FnMut(&Vec3) -> T,
    surface: &RectSurface,
    spec: &QuadratureSpec,
) -> Result<Estimate<T>, QuadratureError> {
    let hu = 0.5 * surface.len_u();
    let hv = 0.5 * surface.len_v();
    integrate_rect(|u, v| f(&surface.point(u, v)), (-hu, hu), (-hv, hv), spec)
}

/// Integral of `f(p, q)` with `p` on `outer` and `q` on `inner`, computed as
/// an adaptive integral over `outer` of adaptive integrals over `inner`. The
/// inner integrals run at a tenth of the requested relative tolerance.
pub fn integrate_double_surface<T: QuadValue>(
    mut f: impl FnMut(&Vec3, &Vec3) -> T,
    outer: &RectSurface,
    inner: &RectSurface,
    spec: &QuadratureSpec,
) -> Result<Estimate<T>, QuadratureError> {
    let inner_spec = QuadratureSpec {
        rel_tol: spec.rel_tol * 0.1,
        ..*spec
    };
    let mut inner_failure: Option<QuadratureError> = None;
    let mut worst_inner_rel: f64 = 0.0;
    let outer_est = integrate_surface(
        |p| {
            if inner_failure.is_some() {
                return T::zero();
            }
            match integrate_surface(|q| f(p, q), inner, &inner_spec) {
                Ok(e) => {
                    let rel = e.relative_error();
                    if rel.is_finite() {
                        worst_inner_rel = worst_inner_rel.max(rel);
                    }
                    e.value
                }
                Err(e) => {
                    inner_failure = Some(e);
                    T::zero()
                }
            }
        },
        outer,
        spec,
    );
    if let Some(e) = inner_failure {
        return Err(e);
    }
    let est = outer_est?;
    Ok(Estimate {
        value: est.value,
        error: est.error + worst_inner_rel * est.value.magnitude(),
        panels: est.panels,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn gauss_legendre_exactness() {
        let rule = GaussLegendre::new(5);
        // Exact for polynomials up to degree 9.
        let v = rule.integrate(|x: f64| x.powi(8) + 3.0 * x.powi(3), -1.0, 1.0);
        assert!((v - 2.0 / 9.0).abs() < 1e-15);
        let w: f64 = rule.weights().iter().sum();
        assert!((w - 2.0).abs() < 1e-14);
        let rule = GaussLegendre::new(32);
        let v = rule.integrate(|x: f64| x.cos(), 0.0, PI / 2.0);
        assert!((v - 1.0).abs() < 1e-14);
        assert!(rule.nodes().windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn constant_over_rectangle() {
        let s = RectSurface::horizontal(Vec3::new(1.0, 2.0, 3.0), 2.0, 3.0).unwrap();
        let e = integrate_surface(|_| 1.0, &s, &QuadratureSpec::default()).unwrap();
        assert!((e.value - 6.0).abs() < 1e-13);
    }

    #[test]
    fn x_squared() {
        let e = integrate_rect(|x, _| x * x, (-1.0, 1.0), (0.0, 1.0), &QuadratureSpec::default())
            .unwrap();
        assert!((e.value - 2.0 / 3.0).abs() < 1e-14);
    }

    #[test]
    fn peaked_integrand_converges_adaptively() {
        // Lorentzian bump of width 0.01 on [-1, 1]^2.
        let a = 0.01f64;
        let f = |x: f64, y: f64| a * a / ((x * x + a * a) * (y * y + a * a));
        let exact = (2.0 * (1.0 / a).atan()).powi(2);
        let spec = QuadratureSpec::default().with_nodes(8);
        let e = integrate_rect(f, (-1.0, 1.0), (-1.0, 1.0), &spec).unwrap();
        assert!(((e.value - exact) / exact).abs() < 1e-6, "{} vs {exact}", e.value);
        assert!(e.panels > 1);
    }

    #[test]
    fn complex_values() {
        let e = integrate_rect(
            |x, y| Complex64::from_polar(1.0, x + y),
            (0.0, PI),
            (0.0, PI),
            &QuadratureSpec::default(),
        )
        .unwrap();
        // (∫ e^{jx} dx)^2 over [0, π] = (2j)^2 = -4.
        assert!((e.value - Complex64::new(-4.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn zero_integrand_converges() {
        let e = integrate_rect(|_, _| 0.0, (0.0, 1.0), (0.0, 1.0), &QuadratureSpec::default())
            .unwrap();
        assert_eq!(e.value, 0.0);
        assert_eq!(e.error, 0.0);
    }

    #[test]
    fn non_convergence_is_reported() {
        let spec = QuadratureSpec {
            nodes: 2,
            rel_tol: 1e-14,
            max_subdivisions: 2,
            ..QuadratureSpec::default()
        };
        let err = integrate_rect(|x: f64, _| (50.0 * x).sin().abs(), (0.0, 1.0), (0.0, 1.0), &spec);
        assert!(matches!(err, Err(QuadratureError::NonConvergence { .. })));
    }

    #[test]
    fn non_finite_is_reported() {
        let err = integrate_rect(|x: f64, _| 1.0 / x, (0.0, 1.0), (0.0, 1.0), &QuadratureSpec::default());
        // Gauss nodes never touch the endpoint, so 1/x is finite but singular:
        // either it fails to converge or reports a non-finite sample.
        assert!(err.is_err());
    }

    #[test]
    fn invalid_spec() {
        let spec = QuadratureSpec {
            nodes: 1,
            ..QuadratureSpec::default()
        };
        assert!(matches!(
            integrate_rect(|_, _| 1.0, (0.0, 1.0), (0.0, 1.0), &spec),
            Err(QuadratureError::InvalidSpec(_))
        ));
        let spec = QuadratureSpec {
            rel_tol: 0.0,
            ..QuadratureSpec::default()
        };
        assert!(spec.validate().is_err());
    }

    #[test]
    fn double_surface_constant_and_fubini() {
        let a = RectSurface::horizontal(Vec3::zeros(), 2.0, 1.0).unwrap();
        let b = RectSurface::horizontal(Vec3::new(0.0, 0.0, 3.0), 0.5, 4.0).unwrap();
        let spec = QuadratureSpec::default().with_nodes(8);
        let e = integrate_double_surface(|_, _| 1.0, &a, &b, &spec).unwrap();
        assert!((e.value - 4.0).abs() < 1e-12);

        let g = |p: &Vec3| (p.x * 0.7).cos() + p.y * p.y;
        let h = |q: &Vec3| (-q.x * q.x).exp() * (1.0 + q.y);
        let e = integrate_double_surface(|p, q| g(p) * h(q), &a, &b, &spec).unwrap();
        let ga = integrate_surface(g, &a, &spec).unwrap().value;
        let hb = integrate_surface(h, &b, &spec).unwrap().value;
        assert!(((e.value - ga * hb) / (ga * hb)).abs() < 1e-6);
    }

    #[test]
    fn deterministic() {
        let f = |x: f64, y: f64| 1.0 / (0.1 + x * x + y * y);
        let spec = QuadratureSpec::default().with_nodes(6);
        let a = integrate_rect(f, (-1.0, 1.0), (-1.0, 1.0), &spec).unwrap();
        let b = integrate_rect(f, (-1.0, 1.0), (-1.0, 1.0), &spec).unwrap();
        assert_eq!(a.value.to_bits(), b.value.to_bits());
        assert_eq!(a.error.to_bits(), b.error.to_bits());
    }
}
