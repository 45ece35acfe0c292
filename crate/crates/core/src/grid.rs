//! Uniform grids, grid functions and the discrete integral operators used by
//! the steady-state scheme, the finite-volume engine and the diagnostics.

use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::error::{LabError, Result};
use crate::kernels::AttractionKernel;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    left: f64,
    right: f64,
    n_cells: usize,
}

impl Grid {
    pub fn new(left: f64, right: f64, n_cells: usize) -> Result<Self> {
        if !(left.is_finite() && right.is_finite()) || right <= left {
            return Err(LabError::InvalidParameter(format!(
                "grid needs left < right, got [{left}, {right}]"
            )));
        }
        if n_cells == 0 {
            return Err(LabError::InvalidParameter("grid needs at least one cell".into()));
        }
        Ok(Self { left, right, n_cells })
    }

    /// `[-half_width, half_width]`
    pub fn symmetric(half_width: f64, n_cells: usize) -> Result<Self> {
        Self::new(-half_width, half_width, n_cells)
    }

    pub fn left(&self) -> f64 {
        self.left
    }

    pub fn right(&self) -> f64 {
        self.right
    }

    pub fn n_cells(&self) -> usize {
        self.n_cells
    }

    pub fn n_nodes(&self) -> usize {
        self.n_cells + 1
    }

    pub fn dx(&self) -> f64 {
        (self.right - self.left) / self.n_cells as f64
    }

    pub fn node(&self, i: usize) -> f64 {
        if i == self.n_cells {
            self.right
        } else {
            self.left + i as f64 * self.dx()
        }
    }

    pub fn midpoint(&self, i: usize) -> f64 {
        self.left + (i as f64 + 0.5) * self.dx()
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.n_nodes()).map(|i| self.node(i)).collect()
    }

    pub fn midpoints(&self) -> Vec<f64> {
        (0..self.n_cells).map(|i| self.midpoint(i)).collect()
    }
}

/// Where the samples of a [`GridFunction`] live.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Layout {
    /// One value per node, piecewise linear in between; trapezoid quadrature.
    Nodal,
    /// One value per cell (cell average at the midpoint); midpoint quadrature.
    Cell,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    grid: Grid,
    layout: Layout,
    values: Vec<f64>,
}

impl GridFunction {
    pub fn new(grid: Grid, layout: Layout, values: Vec<f64>) -> Result<Self> {
        let expected = match layout {
            Layout::Nodal => grid.n_nodes(),
            Layout::Cell => grid.n_cells(),
        };
        if values.len() != expected {
            return Err(LabError::InvalidParameter(format!(
                "{layout:?} grid function needs {expected} values, got {}",
                values.len()
            )));
        }
        Ok(Self { grid, layout, values })
    }

    pub fn from_fn(grid: Grid, layout: Layout, f: impl Fn(f64) -> f64) -> Self {
        let values = match layout {
            Layout::Nodal => grid.nodes().into_iter().map(&f).collect(),
            Layout::Cell => grid.midpoints().into_iter().map(&f).collect(),
        };
        Self { grid, layout, values }
    }

    pub fn zeros(grid: Grid, layout: Layout) -> Self {
        Self::from_fn(grid, layout, |_| 0.0)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn layout(&self) -> Layout {
        self.layout
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn with_values(&self, values: Vec<f64>) -> Result<Self> {
        Self::new(self.grid, self.layout, values)
    }

    pub fn positions(&self) -> Vec<f64> {
        match self.layout {
            Layout::Nodal => self.grid.nodes(),
            Layout::Cell => self.grid.midpoints(),
        }
    }

    pub fn weights(&self) -> Vec<f64> {
        quadrature_weights(&self.grid, self.layout)
    }

    pub fn integral(&self) -> f64 {
        self.weighted_sum(|v| v)
    }

    pub fn weighted_sum(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.weights()
            .iter()
            .zip(&self.values)
            .map(|(w, &v)| w * f(v))
            .sum()
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Piecewise-linear interpolation through the samples, zero outside.
    pub fn interpolate(&self, x: f64) -> f64 {
        let n = self.values.len();
        let dx = self.grid.dx();
        let x0 = match self.layout {
            Layout::Nodal => self.grid.left(),
            Layout::Cell => self.grid.left() + 0.5 * dx,
        };
        let last = x0 + (n - 1) as f64 * dx;
        if n == 0 || x < x0 || x > last {
            return 0.0;
        }
        if n == 1 {
            return self.values[0];
        }
        let u = (x - x0) / dx;
        let k = (u.floor() as usize).min(n - 2);
        let s = u - k as f64;
        self.values[k] + s * (self.values[k + 1] - self.values[k])
    }

    pub fn sup_distance(&self, other: &GridFunction) -> f64 {
        assert_eq!(self.values.len(), other.values.len());
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

pub fn quadrature_weights(grid: &Grid, layout: Layout) -> Vec<f64> {
    let dx = grid.dx();
    match layout {
        Layout::Cell => vec![dx; grid.n_cells()],
        Layout::Nodal => {
            let mut w = vec![dx; grid.n_nodes()];
            w[0] = 0.5 * dx;
            w[grid.n_cells()] = 0.5 * dx;
            w
        }
    }
}

/// Linear interpolation on sorted abscissae; zero outside `[xs[0], xs[last]]`.
pub fn linear_interp(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    let n = xs.len();
    if n == 0 || x < xs[0] || x > xs[n - 1] {
        return 0.0;
    }
    if n == 1 {
        return ys[0];
    }
    let k = xs.partition_point(|&p| p <= x).clamp(1, n - 1);
    let (x0, x1) = (xs[k - 1], xs[k]);
    let s = if x1 > x0 { (x - x0) / (x1 - x0) } else { 0.0 };
    ys[k - 1] + s * (ys[k] - ys[k - 1])
}

/// Row-major dense square matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    n: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(n: usize) -> Self {
        Self { n, data: vec![0.0; n * n] }
    }

    pub fn from_fn(n: usize, f: impl Fn(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                data.push(f(i, j));
            }
        }
        Self { n, data }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_fn(n, |i, j| if i == j { 1.0 } else { 0.0 })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(v.len(), self.n);
        (0..self.n)
            .map(|i| self.row(i).iter().zip(v).map(|(a, b)| a * b).sum())
            .collect()
    }
}

fn check_half_domain(grid: &Grid) -> Result<()> {
    if grid.left() != 0.0 {
        return Err(LabError::InvalidParameter(format!(
            "half-domain operators need a grid on [0, L], got left = {}",
            grid.left()
        )));
    }
    Ok(())
}

/// Trapezoid approximation of `∫_{x_j}^{x_{j+1}} [G(x_{i+1/2}-y) - G(x_{i+1/2}+y)] dy`,
/// the discrete kernel acting on the piecewise constant derivative of ρ.
pub fn assemble_h_matrix<K: AttractionKernel + ?Sized>(kernel: &K, grid: &Grid) -> Result<Matrix> {
    check_half_domain(grid)?;
    let nodes = grid.nodes();
    let dx = grid.dx();
    let n = grid.n_cells();
    let mut data = vec![0.0; n * n];
    let mut h = vec![0.0; n + 1];
    for i in 0..n {
        let xm = grid.midpoint(i);
        for (hk, &y) in h.iter_mut().zip(&nodes) {
            *hk = kernel.eval(xm - y) - kernel.eval(xm + y);
        }
        let row = &mut data[i * n..(i + 1) * n];
        for (j, r) in row.iter_mut().enumerate() {
            *r = 0.5 * dx * (h[j] + h[j + 1]);
        }
    }
    Ok(Matrix { n, data })
}

/// `ℋ_L[u](x_{i+1/2})` for a cellwise-constant `u`, evaluated cell by cell with
/// the trapezoid rule without forming a matrix.
pub fn apply_hl<K: AttractionKernel + ?Sized>(kernel: &K, grid: &Grid, u: &[f64]) -> Result<Vec<f64>> {
    check_half_domain(grid)?;
    if u.len() != grid.n_cells() {
        return Err(LabError::InvalidParameter("ℋ_L needs cellwise values".into()));
    }
    let dx = grid.dx();
    Ok((0..grid.n_cells())
        .map(|i| {
            let x = grid.midpoint(i);
            let h = |y: f64| kernel.eval(x - y) - kernel.eval(x + y);
            u.iter()
                .enumerate()
                .map(|(j, &uj)| uj * 0.5 * dx * (h(grid.node(j)) + h(grid.node(j + 1))))
                .sum()
        })
        .collect())
}

/// Trapezoid discretization of
/// `𝒢_L[ρ](x) = ∫₀^L [G(x-y) + G(x+y) - G(L-y) - G(L+y)] ρ(y) dy` at the nodes.
pub fn apply_gl<K: AttractionKernel + ?Sized>(kernel: &K, rho: &GridFunction) -> Result<GridFunction> {
    let grid = *rho.grid();
    check_half_domain(&grid)?;
    if rho.layout() != Layout::Nodal {
        return Err(LabError::InvalidParameter("𝒢_L acts on nodal densities".into()));
    }
    let l = grid.right();
    let ys = grid.nodes();
    let w = rho.weights();
    let boundary: Vec<f64> = ys.iter().map(|&y| kernel.eval(l - y) + kernel.eval(l + y)).collect();
    let values = ys
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            if i == grid.n_cells() {
                return 0.0;
            }
            ys.iter()
                .zip(&w)
                .zip(rho.values())
                .zip(&boundary)
                .map(|(((&y, wk), rk), bk)| wk * rk * (kernel.eval(x - y) + kernel.eval(x + y) - bk))
                .sum()
        })
        .collect();
    GridFunction::new(grid, Layout::Nodal, values)
}

/// `(G∗ρ)` at the sample positions of `rho`, with the density taken as zero off
/// the grid: `Σ_k w_k G(x_j - x_k) ρ_k`. For cell layouts this is the
/// rectangle rule `Δx Σ_k G(x_j - x_k) ρ̄_k`.
pub fn convolve<K: AttractionKernel + ?Sized>(kernel: &K, rho: &GridFunction) -> GridFunction {
    let plan = ConvolutionPlan::new(kernel, rho.grid(), rho.layout());
    let values = plan.apply(rho.values());
    GridFunction { grid: *rho.grid(), layout: rho.layout(), values }
}

/// Precomputed Toeplitz convolution on a fixed uniform grid.
///
/// `apply_dense` is the O(N²) reference; `apply_fft` is the O(N log N) path
/// used for large grids.
#[derive(Clone)]
pub struct ConvolutionPlan {
    taps: Vec<f64>,
    weights: Vec<f64>,
    spectrum: Option<(Vec<Complex<f64>>, Arc<dyn Fft<f64>>, Arc<dyn Fft<f64>>)>,
}

impl std::fmt::Debug for ConvolutionPlan {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ConvolutionPlan")
            .field("len", &self.taps.len())
            .field("fft", &self.spectrum.is_some())
            .finish()
    }
}

const FFT_THRESHOLD: usize = 256;

impl ConvolutionPlan {
    pub fn new<K: AttractionKernel + ?Sized>(kernel: &K, grid: &Grid, layout: Layout) -> Self {
        let weights = quadrature_weights(grid, layout);
        let n = weights.len();
        let dx = grid.dx();
        let taps: Vec<f64> = (0..n).map(|d| kernel.eval(d as f64 * dx)).collect();
        let mut plan = Self { taps, weights, spectrum: None };
        if n >= FFT_THRESHOLD {
            plan.build_spectrum();
        }
        plan
    }

    fn build_spectrum(&mut self) {
        let n = self.taps.len();
        let size = 2 * n;
        let mut planner = FftPlanner::new();
        let fwd = planner.plan_fft_forward(size);
        let inv = planner.plan_fft_inverse(size);
        let mut buf = vec![Complex::new(0.0, 0.0); size];
        buf[0].re = self.taps[0];
        for d in 1..n {
            buf[d].re = self.taps[d];
            buf[size - d].re = self.taps[d];
        }
        fwd.process(&mut buf);
        self.spectrum = Some((buf, fwd, inv));
    }

    pub fn len(&self) -> usize {
        self.taps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.taps.is_empty()
    }

    pub fn apply(&self, rho: &[f64]) -> Vec<f64> {
        if self.spectrum.is_some() {
            self.apply_fft(rho)
        } else {
            self.apply_dense(rho)
        }
    }

    pub fn apply_dense(&self, rho: &[f64]) -> Vec<f64> {
        let n = self.taps.len();
        assert_eq!(rho.len(), n);
        let wr: Vec<f64> = rho.iter().zip(&self.weights).map(|(r, w)| r * w).collect();
        (0..n)
            .map(|j| {
                let mut s = 0.0;
                for (k, v) in wr.iter().enumerate() {
                    s += self.taps[j.abs_diff(k)] * v;
                }
                s
            })
            .collect()
    }

    pub fn apply_fft(&self, rho: &[f64]) -> Vec<f64> {
        let n = self.taps.len();
        assert_eq!(rho.len(), n);
        if self.spectrum.is_none() {
            let mut p = self.clone();
            p.build_spectrum();
            return p.apply_fft(rho);
        }
        let (spec, fwd, inv) = self.spectrum.as_ref().expect("spectrum");
        let size = spec.len();
        let mut buf = vec![Complex::new(0.0, 0.0); size];
        for (b, (r, w)) in buf.iter_mut().zip(rho.iter().zip(&self.weights)) {
            b.re = r * w;
        }
        fwd.process(&mut buf);
        for (b, s) in buf.iter_mut().zip(spec) {
            *b *= s;
        }
        inv.process(&mut buf);
        let scale = 1.0 / size as f64;
        buf[..n].iter().map(|c| c.re * scale).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::Kernel;
    use crate::quadrature::integrate;
    use proptest::prelude::*;

    fn g(x: f64) -> f64 {
        Kernel::Gaussian.eval(x)
    }

    #[test]
    fn grid_accessors() {
        let grid = Grid::new(0.0, 1.0, 4).unwrap();
        assert_eq!(grid.dx(), 0.25);
        assert_eq!(grid.nodes(), vec![0.0, 0.25, 0.5, 0.75, 1.0]);
        assert_eq!(grid.midpoint(0), 0.125);
        assert!(Grid::new(1.0, 1.0, 3).is_err());
        assert!(Grid::new(0.0, 1.0, 0).is_err());
        assert!(GridFunction::new(grid, Layout::Cell, vec![0.0; 5]).is_err());
    }

    #[test]
    fn h_matrix_small_gaussian() {
        let grid = Grid::new(0.0, 1.0, 4).unwrap();
        let m = assemble_h_matrix(&Kernel::Gaussian, &grid).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                assert!(m.get(i, j) > 0.0, "M[{i}][{j}] = {}", m.get(i, j));
            }
        }
        // hand trapezoid on the first cell: h(0) = 0, h(Δx) = G(-0.125) - G(0.375)
        let oracle = 0.25 * (0.0 + (g(-0.125) - g(0.375))) / 2.0;
        assert!((m.get(0, 0) - oracle).abs() < 1e-16);
        assert!((m.get(0, 0) - 0.002_997_824_134_372_6).abs() < 1e-15);
        assert!(assemble_h_matrix(&Kernel::Gaussian, &Grid::new(-1.0, 1.0, 4).unwrap()).is_err());
    }

    #[test]
    fn h_matrix_hat_has_zero_entries() {
        let grid = Grid::new(0.0, 3.0, 30).unwrap();
        let m = assemble_h_matrix(&Kernel::Hat, &grid).unwrap();
        assert!((0..30).any(|i| (0..30).any(|j| m.get(i, j) == 0.0)));
        assert!((0..30).all(|i| (0..30).all(|j| m.get(i, j) >= 0.0)));
    }

    #[test]
    fn h_matrix_matches_operator_form() {
        for k in Kernel::ALL {
            let grid = Grid::new(0.0, 2.5, 37).unwrap();
            let m = assemble_h_matrix(&k, &grid).unwrap();
            let u = vec![-0.7; 37];
            let a = m.mul_vec(&u);
            let b = apply_hl(&k, &grid, &u).unwrap();
            for (x, y) in a.iter().zip(&b) {
                assert!((x - y).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn h_operator_converges_to_exact_integral() {
        // constant u = 1: ℋ_L[1](x) = ∫₀^L G(x-y) - G(x+y) dy
        let l = 2.0;
        let mut errs = Vec::new();
        for n in [40, 80, 160] {
            let grid = Grid::new(0.0, l, n).unwrap();
            let got = apply_hl(&Kernel::Gaussian, &grid, &vec![1.0; n]).unwrap();
            let err = (0..n)
                .map(|i| {
                    let x = grid.midpoint(i);
                    let (exact, _) = integrate(|y| g(x - y) - g(x + y), 0.0, l, 1e-14, 1e-14);
                    (got[i] - exact).abs()
                })
                .fold(0.0, f64::max);
            errs.push(err);
        }
        assert!(errs[0] / errs[1] > 3.5 && errs[1] / errs[2] > 3.5, "{errs:?}");
    }

    #[test]
    fn gl_edge_cases() {
        let grid = Grid::new(0.0, 3.0, 30).unwrap();
        let zero = GridFunction::zeros(grid, Layout::Nodal);
        assert!(apply_gl(&Kernel::Gaussian, &zero).unwrap().values().iter().all(|&v| v == 0.0));
        let rho = GridFunction::from_fn(grid, Layout::Nodal, |x| (1.0 - x / 3.0).max(0.0));
        for k in Kernel::ALL {
            let out = apply_gl(&k, &rho).unwrap();
            assert!(out.values()[30].abs() < 1e-15);
        }
    }

    #[test]
    fn convolve_point_mass_reproduces_kernel() {
        // one cell carrying unit mass at the origin
        for n in [101, 201, 401] {
            let grid = Grid::symmetric(5.0, n).unwrap();
            let mut vals = vec![0.0; n];
            vals[n / 2] = 1.0 / grid.dx();
            let rho = GridFunction::new(grid, Layout::Cell, vals).unwrap();
            let out = convolve(&Kernel::Gaussian, &rho);
            for (x, v) in rho.positions().iter().zip(out.values()) {
                assert!((v - g(*x)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn convolve_symmetry_and_long_wave_limit() {
        let grid = Grid::symmetric(30.0, 600).unwrap();
        let rho = GridFunction::from_fn(grid, Layout::Cell, |x| (-(x * x) / 8.0).exp() * (1.0 + x * x));
        let out = convolve(&Kernel::Bessel, &rho);
        let v = out.values();
        for j in 0..300 {
            assert!((v[j] - v[599 - j]).abs() < 1e-13 * v[j].abs().max(1.0));
        }
        let c = 0.3;
        let flat = GridFunction::from_fn(grid, Layout::Cell, |_| c);
        let out = convolve(&Kernel::Gaussian, &flat);
        let mid = out.values()[300];
        assert!((mid - c * Kernel::Gaussian.l1_norm()).abs() < 1e-9, "{mid}");
    }

    #[test]
    fn convolve_second_order_against_gaussian_self_convolution() {
        // G∗G for unit Gaussians is the N(0, 2) density
        let exact = |x: f64| (-x * x / 4.0).exp() / (4.0 * std::f64::consts::PI).sqrt();
        let mut errs = Vec::new();
        for n in [50, 100, 200] {
            let grid = Grid::symmetric(12.0, n).unwrap();
            let rho = GridFunction::from_fn(grid, Layout::Cell, g);
            let outg = convolve(&Kernel::Gaussian, &rho);
            let err = rho
                .positions()
                .iter()
                .zip(outg.values())
                .map(|(x, v)| (v - exact(*x)).abs())
                .fold(0.0, f64::max);
            errs.push(err);
        }
        // the midpoint rule is spectrally accurate on smooth decaying integrands
        assert!(errs[2] < 1e-12, "{errs:?}");
        // the hat kernel has kinks, so the rectangle rule is genuinely second order
        let hat_exact = |x: f64| {
            let (v, _) = integrate(|y| Kernel::Hat.eval(x - y) * g(y), x - 1.0, x + 1.0, 1e-14, 1e-14);
            v
        };
        let mut errs = Vec::new();
        for n in [120, 240, 480] {
            let grid = Grid::symmetric(12.0, n).unwrap();
            let rho = GridFunction::from_fn(grid, Layout::Cell, g);
            let out = convolve(&Kernel::Hat, &rho);
            let err = rho
                .positions()
                .iter()
                .zip(out.values())
                .map(|(x, v)| (v - hat_exact(*x)).abs())
                .fold(0.0, f64::max);
            errs.push(err);
        }
        let r1 = errs[0] / errs[1];
        let r2 = errs[1] / errs[2];
        assert!(r1 > 3.5 && r2 > 3.5, "{errs:?}");
    }

    #[test]
    fn fft_path_agrees_with_dense() {
        for k in Kernel::ALL {
            let grid = Grid::symmetric(20.0, 1000).unwrap();
            let plan = ConvolutionPlan::new(&k, &grid, Layout::Cell);
            let rho: Vec<f64> = grid.midpoints().iter().map(|x| (x.sin() + 1.2) * (-x * x / 50.0).exp()).collect();
            let a = plan.apply_dense(&rho);
            let b = plan.apply_fft(&rho);
            for (x, y) in a.iter().zip(&b) {
                assert!((x - y).abs() < 1e-12, "{k}: {x} {y}");
            }
        }
    }

    proptest! {
        #[test]
        fn convolve_is_linear(
            a in -3.0f64..3.0,
            b in -3.0f64..3.0,
            r1 in proptest::collection::vec(0.0f64..2.0, 64),
            r2 in proptest::collection::vec(0.0f64..2.0, 64),
        ) {
            let grid = Grid::symmetric(4.0, 64).unwrap();
            let f1 = GridFunction::new(grid, Layout::Cell, r1.clone()).unwrap();
            let f2 = GridFunction::new(grid, Layout::Cell, r2.clone()).unwrap();
            let comb: Vec<f64> = r1.iter().zip(&r2).map(|(x, y)| a * x + b * y).collect();
            let fc = GridFunction::new(grid, Layout::Cell, comb).unwrap();
            let lhs = convolve(&Kernel::Bessel, &fc);
            let c1 = convolve(&Kernel::Bessel, &f1);
            let c2 = convolve(&Kernel::Bessel, &f2);
            for j in 0..64 {
                let rhs = a * c1.values()[j] + b * c2.values()[j];
                prop_assert!((lhs.values()[j] - rhs).abs() < 1e-13);
            }
        }
    }
}
