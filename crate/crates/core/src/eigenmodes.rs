//! Communication modes of a discretized link.
//!
//! Both surfaces are tiled into patches with piecewise-constant currents.
//! Each kernel entry is the far-field Green column for an `x`-polarized
//! source, weighted by `sqrt(patch area)` on both sides, so singular values
//! approximate those of the continuous operator and discrete inner products
//! approximate surface integrals.

use std::f64::consts::PI;
use std::ops::Range;

use faer::linalg::matmul::matmul;
use faer::{c64, Accum, Mat, MatRef, Par, Side};
use log::debug;
use rayon::prelude::*;
use thiserror::Error;

use crate::geometry::{GeometryError, LinkGeometry, Medium, SurfaceGrid, Vec3};
use crate::green::column_x_unchecked;
use crate::quadrature::{integrate_double_surface, QuadratureError, QuadratureSpec};

/// Default cap on stored complex kernel entries.
pub const DEFAULT_ENTRY_BUDGET: usize = 200_000_000;

const COLUMN_BLOCK: usize = 64;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EigenError {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("kernel needs {required} complex entries, budget is {budget}")]
    BudgetExceeded { required: usize, budget: usize },
    #[error("SVD failed: {0}")]
    Svd(String),
    #[error("mode {mode} out of range (numerical rank {rank})")]
    ModeOutOfRange { mode: usize, rank: usize },
    #[error("field does not live on the expected grid")]
    GridMismatch,
    #[error("coefficient vector has length {got}, expected {expected}")]
    CoefficientLength { got: usize, expected: usize },
    #[error("tx and rx patch centers coincide")]
    CoincidentPatches,
    #[error(transparent)]
    Quadrature(#[from] QuadratureError),
}

/// Which field components enter the kernel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum KernelMode {
    /// Scalar `G_xx`: `N_R x N_T`.
    XToX,
    /// Full field of an `x` source: `3 N_R x N_T`, row `3 i + c`.
    XToVector,
    /// Arbitrary source direction observed along `x`: `N_R x 3 N_T`,
    /// column `3 j + c`. This is the transpose of [`KernelMode::XToVector`]
    /// on the swapped link.
    VectorToX,
}

impl KernelMode {
    pub fn rx_components(self) -> usize {
        match self {
            KernelMode::XToVector => 3,
            _ => 1,
        }
    }

    pub fn tx_components(self) -> usize {
        match self {
            KernelMode::VectorToX => 3,
            _ => 1,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            KernelMode::XToX => "x_to_x",
            KernelMode::XToVector => "x_to_vector",
            KernelMode::VectorToX => "vector_to_x",
        }
    }
}

impl std::str::FromStr for KernelMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "x_to_x" => Ok(KernelMode::XToX),
            "x_to_vector" => Ok(KernelMode::XToVector),
            "vector_to_x" => Ok(KernelMode::VectorToX),
            other => Err(format!("unknown kernel mode `{other}`")),
        }
    }
}

/// Surface on which a mode lives.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SurfaceSide {
    Tx,
    Rx,
}

/// Entry generator shared by the dense and streamed paths.
struct Assembler {
    mode: KernelMode,
    medium: Medium,
    weight: f64,
    tx_points: Vec<Vec3>,
    rx_points: Vec<Vec3>,
}

impl Assembler {
    fn new(tx: &SurfaceGrid, rx: &SurfaceGrid, medium: Medium, mode: KernelMode) -> Result<Self, EigenError> {
        let tx_points = tx.points();
        let rx_points = rx.points();
        let scale = tx.patch_u().min(rx.patch_u()) * 1e-9;
        for r in &rx_points {
            if tx_points.iter().any(|s| (r - s).norm() <= scale) {
                return Err(EigenError::CoincidentPatches);
            }
        }
        Ok(Self {
            mode,
            medium,
            weight: tx.patch_area().sqrt() * rx.patch_area().sqrt(),
            tx_points,
            rx_points,
        })
    }

    fn nrows(&self) -> usize {
        self.rx_points.len() * self.mode.rx_components()
    }

    fn ncols(&self) -> usize {
        self.tx_points.len() * self.mode.tx_components()
    }

    fn column_x(&self, i: usize, j: usize) -> [c64; 3] {
        let g = column_x_unchecked(&(self.rx_points[i] - self.tx_points[j]), &self.medium);
        g.map(|v| c64::new(v.re * self.weight, v.im * self.weight))
    }

    /// Column `col` of the kernel.
    fn fill_column(&self, col: usize, out: &mut [c64]) {
        match self.mode {
            KernelMode::XToX => {
                for (i, o) in out.iter_mut().enumerate() {
                    *o = self.column_x(i, col)[0];
                }
            }
            KernelMode::XToVector => {
                for (i, o) in out.chunks_exact_mut(3).enumerate() {
                    o.copy_from_slice(&self.column_x(i, col));
                }
            }
            KernelMode::VectorToX => {
                // The far-field tensor is symmetric, so row x equals column x.
                let (j, c) = (col / 3, col % 3);
                for (i, o) in out.iter_mut().enumerate() {
                    *o = self.column_x(i, j)[c];
                }
            }
        }
    }

    /// Rows belonging to the receive points in `points`.
    fn row_block(&self, points: Range<usize>) -> Mat<c64> {
        let rc = self.mode.rx_components();
        let ncols = self.ncols();
        let mut block = Mat::<c64>::zeros(points.len() * rc, ncols);
        for (li, i) in points.enumerate() {
            for j in 0..self.tx_points.len() {
                let g = self.column_x(i, j);
                match self.mode {
                    KernelMode::XToX => block[(li, j)] = g[0],
                    KernelMode::XToVector => {
                        for (c, v) in g.iter().enumerate() {
                            block[(3 * li + c, j)] = *v;
                        }
                    }
                    KernelMode::VectorToX => {
                        for (c, v) in g.iter().enumerate() {
                            block[(li, 3 * j + c)] = *v;
                        }
                    }
                }
            }
        }
        block
    }
}

fn grids(link: &LinkGeometry, patch: f64) -> Result<(SurfaceGrid, SurfaceGrid), EigenError> {
    Ok((SurfaceGrid::new(*link.tx(), patch)?, SurfaceGrid::new(*link.rx(), patch)?))
}

fn check_budget(rows: usize, cols: usize, budget: usize) -> Result<(), EigenError> {
    let required = rows.saturating_mul(cols);
    if required > budget {
        return Err(EigenError::BudgetExceeded { required, budget });
    }
    Ok(())
}

/// Dense discretized Green operator.
#[derive(Debug, Clone)]
pub struct KernelMatrix {
    matrix: Mat<c64>,
    mode: KernelMode,
    tx: SurfaceGrid,
    rx: SurfaceGrid,
    medium: Medium,
}

impl KernelMatrix {
    pub fn matrix(&self) -> MatRef<'_, c64> {
        self.matrix.as_ref()
    }

    pub fn nrows(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn mode(&self) -> KernelMode {
        self.mode
    }

    pub fn tx_grid(&self) -> &SurfaceGrid {
        &self.tx
    }

    pub fn rx_grid(&self) -> &SurfaceGrid {
        &self.rx
    }

    pub fn medium(&self) -> &Medium {
        &self.medium
    }

    pub fn frobenius_sqr(&self) -> f64 {
        self.matrix.squared_norm_l2()
    }

    /// Same kernel multiplied by a complex constant.
    pub fn scaled(&self, factor: c64) -> Self {
        let mut out = self.clone();
        out.matrix = Mat::from_fn(self.nrows(), self.ncols(), |i, j| self.matrix[(i, j)] * factor);
        out
    }

    /// Field radiated by a transmit current.
    pub fn apply(&self, current: &FieldMap) -> Result<FieldMap, EigenError> {
        let x = current.to_vector_on(&self.tx, self.mode.tx_components())?;
        let y: Vec<c64> = (0..self.nrows())
            .map(|i| (0..self.ncols()).map(|j| self.matrix[(i, j)] * x[j]).sum())
            .collect();
        FieldMap::from_vector(self.rx, self.mode.rx_components(), &y)
    }
}

pub fn assemble_kernel(link: &LinkGeometry, patch: f64, mode: KernelMode) -> Result<KernelMatrix, EigenError> {
    assemble_kernel_with_budget(link, patch, mode, DEFAULT_ENTRY_BUDGET)
}

pub fn assemble_kernel_with_budget(
    link: &LinkGeometry,
    patch: f64,
    mode: KernelMode,
    budget: usize,
) -> Result<KernelMatrix, EigenError> {
    let (tx, rx) = grids(link, patch)?;
    check_budget(rx.len() * mode.rx_components(), tx.len() * mode.tx_components(), budget)?;
    let asm = Assembler::new(&tx, &rx, *link.medium(), mode)?;
    let (m, n) = (asm.nrows(), asm.ncols());
    debug!("assembling {m} x {n} kernel ({})", mode.name());
    let mut matrix = Mat::<c64>::zeros(m, n);
    for start in (0..n).step_by(COLUMN_BLOCK) {
        let end = (start + COLUMN_BLOCK).min(n);
        let cols: Vec<Vec<c64>> = (start..end)
            .into_par_iter()
            .map(|j| {
                let mut col = vec![c64::new(0.0, 0.0); m];
                asm.fill_column(j, &mut col);
                col
            })
            .collect();
        for (j, col) in (start..end).zip(cols) {
            for (i, v) in col.into_iter().enumerate() {
                matrix[(i, j)] = v;
            }
        }
    }
    Ok(KernelMatrix {
        matrix,
        mode,
        tx,
        rx,
        medium: *link.medium(),
    })
}

/// Singular values and phase-normalized singular vectors.
#[derive(Debug, Clone)]
pub struct ModeSpectrum {
    values: Vec<f64>,
    left: Mat<c64>,
    right: Mat<c64>,
    mode: KernelMode,
    tx: SurfaceGrid,
    rx: SurfaceGrid,
    pub threshold_db: f64,
}

/// Thin SVD with the first significant entry of each right vector made real
/// and positive; the left vector gets the same phase so `K v = ξ u` holds.
pub fn solve_modes(kernel: &KernelMatrix) -> Result<ModeSpectrum, EigenError> {
    let svd = kernel.matrix.thin_svd().map_err(|e| EigenError::Svd(format!("{e:?}")))?;
    let s = svd.S().column_vector();
    let values: Vec<f64> = (0..s.nrows()).map(|k| s[k].re).collect();
    let mut left = svd.U().to_owned();
    let mut right = svd.V().to_owned();
    for k in 0..values.len() {
        let col = right.col(k);
        let peak = (0..col.nrows()).map(|i| col[i].norm()).fold(0.0, f64::max);
        let Some(i0) = (0..col.nrows()).find(|&i| col[i].norm() > 1e-6 * peak) else {
            continue;
        };
        let z = col[i0];
        let fix = z.conj() / z.norm();
        for i in 0..right.nrows() {
            right[(i, k)] *= fix;
        }
        for i in 0..left.nrows() {
            left[(i, k)] *= fix;
        }
    }
    Ok(ModeSpectrum {
        values,
        left,
        right,
        mode: kernel.mode,
        tx: kernel.tx,
        rx: kernel.rx,
        threshold_db: 3.0,
    })
}

/// Number of values with `ξ_n² ≥ ξ_1² 10^(-t/10)`, never below 1. Ties
/// with the threshold within `1e-12` relative count as inside.
pub fn count_above_threshold(values: &[f64], threshold_db: f64) -> usize {
    let Some(&first) = values.first() else {
        return 1;
    };
    let floor = first * first * 10f64.powf(-threshold_db / 10.0) * (1.0 - 1e-12);
    values.iter().filter(|&&v| v * v >= floor).count().max(1)
}

impl ModeSpectrum {
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn mode(&self) -> KernelMode {
        self.mode
    }

    pub fn tx_grid(&self) -> &SurfaceGrid {
        &self.tx
    }

    pub fn rx_grid(&self) -> &SurfaceGrid {
        &self.rx
    }

    /// Left singular vectors (receive side) as columns.
    pub fn left(&self) -> MatRef<'_, c64> {
        self.left.as_ref()
    }

    /// Right singular vectors (transmit side) as columns.
    pub fn right(&self) -> MatRef<'_, c64> {
        self.right.as_ref()
    }

    pub fn left_vector(&self, k: usize) -> Vec<c64> {
        column(self.left.as_ref(), k)
    }

    pub fn right_vector(&self, k: usize) -> Vec<c64> {
        column(self.right.as_ref(), k)
    }

    pub fn sum_of_squares(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum()
    }

    /// Values above `ξ_1 max(m, n) ε`.
    pub fn rank(&self) -> usize {
        let Some(&first) = self.values.first() else {
            return 0;
        };
        let dim = self.left.nrows().max(self.right.nrows()) as f64;
        let tol = first * dim * f64::EPSILON;
        self.values.iter().filter(|&&v| v > tol).count()
    }

    /// `ξ_1 / ξ_min`, infinite when the smallest value vanishes.
    pub fn condition_number(&self) -> f64 {
        match (self.values.first(), self.values.last()) {
            (Some(&a), Some(&b)) if b > 0.0 => a / b,
            _ => f64::INFINITY,
        }
    }

    /// `ξ_n² / ξ_1²` in dB.
    pub fn relative_db(&self, k: usize) -> f64 {
        let r = self.values[k] / self.values[0];
        20.0 * r.log10()
    }

    pub fn count_dof(&self, threshold_db: f64) -> usize {
        count_above_threshold(&self.values, threshold_db)
    }

    /// Count at the spectrum's own threshold.
    pub fn dof(&self) -> usize {
        self.count_dof(self.threshold_db)
    }

    /// Largest deviation of `UᴴU` and `VᴴV` from the identity.
    pub fn orthonormality_error(&self) -> f64 {
        gram_deviation(self.left.as_ref()).max(gram_deviation(self.right.as_ref()))
    }
}

fn column(m: MatRef<'_, c64>, k: usize) -> Vec<c64> {
    (0..m.nrows()).map(|i| m[(i, k)]).collect()
}

fn gram_deviation(m: MatRef<'_, c64>) -> f64 {
    let g = m.adjoint() * m;
    let mut worst = 0.0f64;
    for i in 0..g.nrows() {
        for j in 0..g.ncols() {
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((g[(i, j)] - c64::new(target, 0.0)).norm());
        }
    }
    worst
}

/// `Σ conj(a_k) b_k`.
pub fn inner_product(a: &[c64], b: &[c64]) -> c64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

/// `Σ |a_k| |b_k|`.
pub fn amplitude_overlap(a: &[c64], b: &[c64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x.norm() * y.norm()).sum()
}

/// Discrete and continuous sides of the energy sum rule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SumRule {
    pub discrete: f64,
    pub continuous: f64,
}

impl SumRule {
    pub fn relative_error(&self) -> f64 {
        ((self.discrete - self.continuous) / self.continuous).abs()
    }
}

/// `∬ ‖G_x‖²` (or `∬ |G_xx|²` in scalar mode) over the two surfaces.
pub fn kernel_energy_integral(
    tx: &SurfaceGrid,
    rx: &SurfaceGrid,
    medium: &Medium,
    mode: KernelMode,
    spec: &QuadratureSpec,
) -> Result<f64, EigenError> {
    let medium = *medium;
    let est = integrate_double_surface(
        |s, r| {
            let g = column_x_unchecked(&(r - s), &medium);
            match mode {
                KernelMode::XToX => g[0].norm_sqr(),
                _ => g.iter().map(|v| v.norm_sqr()).sum(),
            }
        },
        tx.surface(),
        rx.surface(),
        spec,
    )?;
    Ok(est.value)
}

/// Frobenius norm² of the kernel against the continuous energy integral.
pub fn sum_rule_check(kernel: &KernelMatrix, spec: &QuadratureSpec) -> Result<SumRule, EigenError> {
    Ok(SumRule {
        discrete: kernel.frobenius_sqr(),
        continuous: kernel_energy_integral(&kernel.tx, &kernel.rx, &kernel.medium, kernel.mode, spec)?,
    })
}

/// Same check with the discrete side taken from the singular values.
pub fn sum_rule_from_spectrum(
    spectrum: &ModeSpectrum,
    medium: &Medium,
    spec: &QuadratureSpec,
) -> Result<SumRule, EigenError> {
    Ok(SumRule {
        discrete: spectrum.sum_of_squares(),
        continuous: kernel_energy_integral(&spectrum.tx, &spectrum.rx, medium, spectrum.mode, spec)?,
    })
}

/// Sum rule without storing the kernel, for grids too fine to assemble.
pub fn sum_rule_streamed(
    link: &LinkGeometry,
    patch: f64,
    mode: KernelMode,
    spec: &QuadratureSpec,
) -> Result<SumRule, EigenError> {
    let (tx, rx) = grids(link, patch)?;
    let asm = Assembler::new(&tx, &rx, *link.medium(), mode)?;
    let per_rx: Vec<f64> = (0..asm.rx_points.len())
        .into_par_iter()
        .map(|i| {
            (0..asm.tx_points.len())
                .map(|j| {
                    let g = asm.column_x(i, j);
                    match mode {
                        KernelMode::XToX => g[0].norm_sqr(),
                        _ => g.iter().map(|v| v.norm_sqr()).sum(),
                    }
                })
                .sum()
        })
        .collect();
    Ok(SumRule {
        discrete: per_rx.iter().sum(),
        continuous: kernel_energy_integral(&tx, &rx, link.medium(), mode, spec)?,
    })
}

/// Singular values from the eigenvalues of `KᴴK`, accumulated over row
/// blocks of at most `block_points` receive points. Memory is bounded by the
/// `ncols²` Gram matrix plus one block. Accuracy is limited to roughly
/// `sqrt(ε) ξ_1` for the smallest values.
pub fn gram_singular_values(
    link: &LinkGeometry,
    patch: f64,
    mode: KernelMode,
    block_points: usize,
) -> Result<Vec<f64>, EigenError> {
    let (tx, rx) = grids(link, patch)?;
    let asm = Assembler::new(&tx, &rx, *link.medium(), mode)?;
    let n = asm.ncols();
    let block_points = block_points.max(1);
    let mut gram = Mat::<c64>::zeros(n, n);
    let n_rx = asm.rx_points.len();
    for start in (0..n_rx).step_by(block_points) {
        let block = asm.row_block(start..(start + block_points).min(n_rx));
        matmul(gram.as_mut(), Accum::Add, block.adjoint(), block.as_ref(), c64::new(1.0, 0.0), Par::Seq);
    }
    let eig = gram
        .self_adjoint_eigenvalues(Side::Lower)
        .map_err(|e| EigenError::Svd(format!("{e:?}")))?;
    Ok(eig.into_iter().rev().map(|v| v.max(0.0).sqrt()).collect())
}

/// Samples of a (possibly vector) field on a surface grid.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldMap {
    grid: SurfaceGrid,
    components: usize,
    samples: Vec<[c64; 3]>,
}

impl FieldMap {
    /// `components` is 1 (scalar `x` field in slot 0) or 3.
    pub fn new(grid: SurfaceGrid, components: usize, samples: Vec<[c64; 3]>) -> Result<Self, EigenError> {
        if samples.len() != grid.len() || !(components == 1 || components == 3) {
            return Err(EigenError::GridMismatch);
        }
        Ok(Self {
            grid,
            components,
            samples,
        })
    }

    /// Inverse of [`FieldMap::to_vector`].
    pub fn from_vector(grid: SurfaceGrid, components: usize, v: &[c64]) -> Result<Self, EigenError> {
        if v.len() != grid.len() * components || !(components == 1 || components == 3) {
            return Err(EigenError::GridMismatch);
        }
        let zero = c64::new(0.0, 0.0);
        let samples = (0..grid.len())
            .map(|k| {
                let mut s = [zero; 3];
                s[..components].copy_from_slice(&v[k * components..(k + 1) * components]);
                s
            })
            .collect();
        Ok(Self {
            grid,
            components,
            samples,
        })
    }

    pub fn grid(&self) -> &SurfaceGrid {
        &self.grid
    }

    pub fn components(&self) -> usize {
        self.components
    }

    pub fn samples(&self) -> &[[c64; 3]] {
        &self.samples
    }

    /// Flat vector in kernel layout (`components` entries per sample).
    pub fn to_vector(&self) -> Vec<c64> {
        self.samples
            .iter()
            .flat_map(|s| s[..self.components].iter().copied())
            .collect()
    }

    fn to_vector_on(&self, grid: &SurfaceGrid, components: usize) -> Result<Vec<c64>, EigenError> {
        if !self.grid.matches(grid) || self.components != components {
            return Err(EigenError::GridMismatch);
        }
        Ok(self.to_vector())
    }

    pub fn amplitude(&self, component: usize) -> Vec<f64> {
        self.samples.iter().map(|s| s[component].norm()).collect()
    }

    /// Phase in `(-π, π]`.
    pub fn phase(&self, component: usize) -> Vec<f64> {
        self.samples.iter().map(|s| wrap_phase(s[component].arg())).collect()
    }

    pub fn power(&self) -> f64 {
        self.samples.iter().flat_map(|s| s.iter()).map(|v| v.norm_sqr()).sum()
    }
}

pub(crate) fn wrap_phase(p: f64) -> f64 {
    if p <= -PI {
        p + 2.0 * PI
    } else {
        p
    }
}

/// Mode `n` (1-based) mapped onto its surface.
pub fn eigenfunction_field(spectrum: &ModeSpectrum, n: usize, side: SurfaceSide) -> Result<FieldMap, EigenError> {
    let rank = spectrum.rank();
    if n == 0 || n > rank {
        return Err(EigenError::ModeOutOfRange { mode: n, rank });
    }
    match side {
        SurfaceSide::Tx => FieldMap::from_vector(spectrum.tx, spectrum.mode.tx_components(), &spectrum.right_vector(n - 1)),
        SurfaceSide::Rx => FieldMap::from_vector(spectrum.rx, spectrum.mode.rx_components(), &spectrum.left_vector(n - 1)),
    }
}

/// `a_n = ⟨φ_n, J⟩` for every mode.
pub fn project_current(current: &FieldMap, spectrum: &ModeSpectrum) -> Result<Vec<c64>, EigenError> {
    let j = current.to_vector_on(&spectrum.tx, spectrum.mode.tx_components())?;
    Ok((0..spectrum.len())
        .map(|k| {
            let col = spectrum.right.col(k);
            (0..j.len()).map(|i| col[i].conj() * j[i]).sum()
        })
        .collect())
}

/// `Σ_{n ≤ keep} ξ_n a_n ψ_n` on the receive grid.
pub fn synthesize_field(coefficients: &[c64], spectrum: &ModeSpectrum, keep: usize) -> Result<FieldMap, EigenError> {
    if coefficients.len() != spectrum.len() {
        return Err(EigenError::CoefficientLength {
            got: coefficients.len(),
            expected: spectrum.len(),
        });
    }
    let m = spectrum.left.nrows();
    let mut out = vec![c64::new(0.0, 0.0); m];
    for k in 0..keep.min(spectrum.len()) {
        let b = coefficients[k] * spectrum.values[k];
        let col = spectrum.left.col(k);
        for (i, o) in out.iter_mut().enumerate() {
            *o += b * col[i];
        }
    }
    FieldMap::from_vector(spectrum.rx, spectrum.mode.rx_components(), &out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn unit() -> Medium {
        Medium::new(1.0).unwrap()
    }

    /// Small centered link: tx 1x1, rx 4x4, d = 2, all in wavelengths.
    fn small() -> LinkGeometry {
        LinkGeometry::parallel(2.0, (1.0, 1.0), (4.0, 4.0), (0.0, 0.0), unit()).unwrap()
    }

    fn random_current(grid: SurfaceGrid, components: usize, seed: u64) -> FieldMap {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let v: Vec<c64> = (0..grid.len() * components)
            .map(|_| c64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
            .collect();
        FieldMap::from_vector(grid, components, &v).unwrap()
    }

    #[test]
    fn single_patch_entry() {
        let m = unit();
        let link = LinkGeometry::parallel(3.0, (0.5, 0.5), (0.5, 0.5), (0.0, 0.0), m).unwrap();
        let k = assemble_kernel(&link, 0.5, KernelMode::XToX).unwrap();
        assert_eq!((k.nrows(), k.ncols()), (1, 1));
        let expected = m.impedance() / (2.0 * 3.0) * 0.25;
        assert!((k.matrix()[(0, 0)].norm() - expected).abs() < 1e-12 * expected);
        let s = solve_modes(&k).unwrap();
        assert_eq!(s.rank(), 1);
    }

    #[test]
    fn single_patch_sum_rule_tight_when_small() {
        let link = LinkGeometry::parallel(5.0, (0.005, 0.005), (0.005, 0.005), (0.0, 0.0), unit()).unwrap();
        let k = assemble_kernel(&link, 0.005, KernelMode::XToVector).unwrap();
        let rule = sum_rule_check(&k, &QuadratureSpec::default()).unwrap();
        assert!(rule.relative_error() < 1e-6, "{rule:?}");
    }

    #[test]
    fn shapes() {
        let link = LinkGeometry::parallel(2.0, (1.0, 1.0), (2.0, 2.0), (0.0, 0.0), unit()).unwrap();
        let k = assemble_kernel(&link, 0.25, KernelMode::XToVector).unwrap();
        assert_eq!((k.nrows(), k.ncols()), (192, 16));
        let k = assemble_kernel(&link, 0.25, KernelMode::XToX).unwrap();
        assert_eq!((k.nrows(), k.ncols()), (64, 16));
        let k = assemble_kernel(&link, 0.25, KernelMode::VectorToX).unwrap();
        assert_eq!((k.nrows(), k.ncols()), (64, 48));
    }

    #[test]
    fn budget_and_tiling_errors() {
        let err = assemble_kernel_with_budget(&small(), 0.25, KernelMode::XToVector, 1000).unwrap_err();
        assert_eq!(
            err,
            EigenError::BudgetExceeded {
                required: 768 * 16,
                budget: 1000
            }
        );
        assert!(matches!(
            assemble_kernel(&small(), 0.3, KernelMode::XToX),
            Err(EigenError::Geometry(GeometryError::NonTiling { .. }))
        ));
    }

    #[test]
    fn dense_and_streamed_paths_agree() {
        for mode in [KernelMode::XToX, KernelMode::XToVector, KernelMode::VectorToX] {
            let k = assemble_kernel(&small(), 0.25, mode).unwrap();
            let s = solve_modes(&k).unwrap();
            let g = gram_singular_values(&small(), 0.25, mode, 7).unwrap();
            for n in 0..5 {
                assert!((g[n] - s.values()[n]).abs() < 1e-9 * s.values()[0], "{mode:?} {n}");
            }
            let spec = QuadratureSpec::default();
            let a = sum_rule_check(&k, &spec).unwrap();
            let b = sum_rule_streamed(&small(), 0.25, mode, &spec).unwrap();
            assert!((a.discrete - b.discrete).abs() < 1e-12 * a.discrete);
            assert!((s.sum_of_squares() - a.discrete).abs() < 1e-10 * a.discrete);
        }
    }

    #[test]
    fn spectrum_is_sorted_and_orthonormal() {
        let s = solve_modes(&assemble_kernel(&small(), 0.25, KernelMode::XToVector).unwrap()).unwrap();
        assert!(s.values().windows(2).all(|w| w[0] >= w[1]));
        assert!(s.orthonormality_error() < 1e-10);
        assert!(s.condition_number() >= 1.0);
    }

    #[test]
    fn reciprocity() {
        let k = assemble_kernel(&small(), 0.25, KernelMode::XToVector).unwrap();
        let kr = assemble_kernel(&small().swapped(), 0.25, KernelMode::VectorToX).unwrap();
        for i in 0..k.nrows() {
            for j in 0..k.ncols() {
                assert!((k.matrix()[(i, j)] - kr.matrix()[(j, i)]).norm() < 1e-12 * k.matrix()[(0, 0)].norm());
            }
        }
        let a = solve_modes(&k).unwrap();
        let b = solve_modes(&kr).unwrap();
        let rank = a.rank().min(b.rank());
        for n in 0..rank {
            assert!((a.values()[n] - b.values()[n]).abs() < 1e-8 * a.values()[0]);
        }
        let xx = solve_modes(&assemble_kernel(&small(), 0.25, KernelMode::XToX).unwrap()).unwrap();
        let xx_r = solve_modes(&assemble_kernel(&small().swapped(), 0.25, KernelMode::XToX).unwrap()).unwrap();
        for n in 0..xx.rank() {
            assert!((xx.values()[n] - xx_r.values()[n]).abs() < 1e-8 * xx.values()[0]);
        }
    }

    #[test]
    fn count_dof_definition() {
        assert_eq!(count_above_threshold(&[1.0, 0.9, 0.1], 3.0), 2);
        assert_eq!(count_above_threshold(&[1.0, 1.0, 1.0 - 1e-14, 0.99], 0.0), 3);
        assert_eq!(count_above_threshold(&[1.0, 0.1], 60.0), 2);
        assert_eq!(count_above_threshold(&[], 3.0), 1);
    }

    #[test]
    fn count_dof_ignores_complex_scaling() {
        let k = assemble_kernel(&small(), 0.25, KernelMode::XToVector).unwrap();
        let base = solve_modes(&k).unwrap();
        for factor in [c64::new(1e-6, 0.0), c64::new(0.0, 3.0), c64::new(-2.5, 7.0)] {
            let s = solve_modes(&k.scaled(factor)).unwrap();
            for t in [1.0, 3.0, 10.0] {
                assert_eq!(s.count_dof(t), base.count_dof(t));
            }
        }
    }

    #[test]
    fn phase_convention_is_deterministic() {
        let k = assemble_kernel(&small(), 0.25, KernelMode::XToVector).unwrap();
        let a = solve_modes(&k).unwrap();
        let b = solve_modes(&k).unwrap();
        assert_eq!(a.right_vector(0), b.right_vector(0));
        assert_eq!(a.left_vector(3), b.left_vector(3));
        let v = a.right_vector(0);
        let first = v.iter().find(|z| z.norm() > 1e-6).unwrap();
        assert!(first.im.abs() < 1e-15 && first.re > 0.0);
    }

    #[test]
    fn singular_triplets_hold() {
        let k = assemble_kernel(&small(), 0.25, KernelMode::XToVector).unwrap();
        let s = solve_modes(&k).unwrap();
        for n in 0..4 {
            let phi = FieldMap::from_vector(*k.tx_grid(), 1, &s.right_vector(n)).unwrap();
            let kv = k.apply(&phi).unwrap().to_vector();
            let u = s.left_vector(n);
            let err: f64 = kv.iter().zip(&u).map(|(a, b)| (a - b * s.values()[n]).norm_sqr()).sum();
            assert!(err.sqrt() < 1e-10 * s.values()[0]);
        }
    }

    #[test]
    fn mode_one_is_mirror_symmetric() {
        let s = solve_modes(&assemble_kernel(&small(), 0.25, KernelMode::XToVector).unwrap()).unwrap();
        for side in [SurfaceSide::Tx, SurfaceSide::Rx] {
            let f = eigenfunction_field(&s, 1, side).unwrap();
            assert!((f.power() - 1.0).abs() < 1e-12);
            let g = *f.grid();
            for c in 0..f.components() {
                let amp = f.amplitude(c);
                for iu in 0..g.n_u() {
                    for iv in 0..g.n_v() {
                        let a = amp[g.index(iu, iv)];
                        let mx = amp[g.index(g.n_u() - 1 - iu, iv)];
                        let my = amp[g.index(iu, g.n_v() - 1 - iv)];
                        assert!((a - mx).abs() < 1e-6 && (a - my).abs() < 1e-6);
                    }
                }
            }
        }
    }

    /// Whether the phase jumps by π between mirrored samples across one axis.
    fn has_pi_step(f: &FieldMap, c: usize) -> bool {
        let g = *f.grid();
        let amp = f.amplitude(c);
        let ph = f.phase(c);
        let peak = amp.iter().cloned().fold(0.0, f64::max);
        let odd = |mirror: &dyn Fn(usize, usize) -> usize| {
            (0..g.n_u()).all(|iu| {
                (0..g.n_v()).all(|iv| {
                    let k = g.index(iu, iv);
                    if amp[k] < 1e-3 * peak {
                        return true;
                    }
                    let d = (ph[k] - ph[mirror(iu, iv)]).rem_euclid(2.0 * PI);
                    (d - PI).abs() < 1e-6
                })
            })
        };
        odd(&|iu, iv| g.index(g.n_u() - 1 - iu, iv)) || odd(&|iu, iv| g.index(iu, g.n_v() - 1 - iv))
    }

    #[test]
    fn mode_two_has_pi_step() {
        let s = solve_modes(&assemble_kernel(&small(), 0.25, KernelMode::XToVector).unwrap()).unwrap();
        let tx = eigenfunction_field(&s, 2, SurfaceSide::Tx).unwrap();
        assert!(has_pi_step(&tx, 0));
        let rx = eigenfunction_field(&s, 2, SurfaceSide::Rx).unwrap();
        assert!(has_pi_step(&rx, 0));
        let one = eigenfunction_field(&s, 1, SurfaceSide::Tx).unwrap();
        assert!(!has_pi_step(&one, 0));
    }

    #[test]
    fn mode_index_bounds() {
        let s = solve_modes(&assemble_kernel(&small(), 0.25, KernelMode::XToX).unwrap()).unwrap();
        assert!(eigenfunction_field(&s, 0, SurfaceSide::Tx).is_err());
        assert!(eigenfunction_field(&s, s.rank() + 1, SurfaceSide::Rx).is_err());
        assert!(eigenfunction_field(&s, s.rank(), SurfaceSide::Rx).is_ok());
    }

    #[test]
    fn phase_range() {
        assert_eq!(wrap_phase(-PI), PI);
        let grid = SurfaceGrid::new(*small().tx(), 0.5).unwrap();
        let v = vec![c64::new(-1.0, -0.0), c64::new(-1.0, 0.0), c64::new(0.0, -1.0), c64::new(1.0, 0.0)];
        let f = FieldMap::from_vector(grid, 1, &v).unwrap();
        let p = f.phase(0);
        assert!(p.iter().all(|&x| x > -PI && x <= PI));
        assert_eq!(p[0], PI);
    }

    #[test]
    fn projection_and_synthesis() {
        let k = assemble_kernel(&small(), 0.25, KernelMode::XToVector).unwrap();
        let s = solve_modes(&k).unwrap();
        // φ_1 projects onto the first coefficient only.
        let phi = eigenfunction_field(&s, 1, SurfaceSide::Tx).unwrap();
        let a = project_current(&phi, &s).unwrap();
        assert!((a[0] - c64::new(1.0, 0.0)).norm() < 1e-12);
        assert!(a[1..].iter().all(|z| z.norm() < 1e-12));
        let e = synthesize_field(&a, &s, s.len()).unwrap().to_vector();
        let u = s.left_vector(0);
        assert!(e.iter().zip(&u).all(|(x, y)| (x - y * s.values()[0]).norm() < 1e-12 * s.values()[0]));

        let j = random_current(*k.tx_grid(), 1, 7);
        let a = project_current(&j, &s).unwrap();
        let direct = k.apply(&j).unwrap().to_vector();
        let full = synthesize_field(&a, &s, s.len()).unwrap().to_vector();
        let scale: f64 = direct.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        let err: f64 = direct.iter().zip(&full).map(|(x, y)| (x - y).norm_sqr()).sum::<f64>().sqrt();
        assert!(err < 1e-8 * scale);

        // Truncated synthesis leaves exactly the discarded modal energy.
        for keep in [1, 3, 6] {
            let part = synthesize_field(&a, &s, keep).unwrap().to_vector();
            let residual: f64 = direct.iter().zip(&part).map(|(x, y)| (x - y).norm_sqr()).sum();
            let tail: f64 = (keep..s.len()).map(|n| (a[n] * s.values()[n]).norm_sqr()).sum();
            assert!((residual - tail).abs() < 1e-9 * scale * scale);
        }

        let wrong = random_current(*k.rx_grid(), 1, 1);
        assert_eq!(project_current(&wrong, &s), Err(EigenError::GridMismatch));
        assert!(synthesize_field(&a[1..], &s, 2).is_err());
    }

    /// `‖K - Q Qᴴ K‖_F²` for the column space of a random `m x rank` matrix.
    fn best_fit_residual(k: MatRef<'_, c64>, rank: usize, rng: &mut ChaCha8Rng) -> f64 {
        let a = Mat::<c64>::from_fn(k.nrows(), rank, |_, _| c64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
        let q = a.qr().compute_thin_Q();
        let proj = q.adjoint() * k;
        k.squared_norm_l2() - proj.squared_norm_l2()
    }

    #[test]
    fn svd_truncation_beats_random_factorizations() {
        let k = assemble_kernel(&small(), 0.25, KernelMode::XToVector).unwrap();
        let s = solve_modes(&k).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..5 {
            let rank = rng.gen_range(1..10);
            let optimal: f64 = s.values()[rank..].iter().map(|v| v * v).sum();
            for _ in 0..20 {
                let r = best_fit_residual(k.matrix(), rank, &mut rng);
                assert!(optimal <= r * (1.0 + 1e-10));
            }
        }
    }

    #[test]
    fn refinement_shrinks_sum_rule_error() {
        let spec = QuadratureSpec::default();
        let coarse = sum_rule_streamed(&small(), 0.5, KernelMode::XToVector, &spec).unwrap();
        let fine = sum_rule_streamed(&small(), 0.25, KernelMode::XToVector, &spec).unwrap();
        assert!(fine.relative_error() < coarse.relative_error());
        assert!(fine.relative_error() < 0.02);
    }

    #[test]
    fn count_is_scale_invariant() {
        let a = solve_modes(&assemble_kernel(&small(), 0.25, KernelMode::XToVector).unwrap()).unwrap();
        let scaled = small().scaled(0.01).unwrap();
        let b = solve_modes(&assemble_kernel(&scaled, 0.0025, KernelMode::XToVector).unwrap()).unwrap();
        assert_eq!(a.count_dof(3.0), b.count_dof(3.0));
        for n in 0..8 {
            let ra = a.values()[n] / a.values()[0];
            let rb = b.values()[n] / b.values()[0];
            assert!((ra - rb).abs() < 1e-9);
        }
    }
}
