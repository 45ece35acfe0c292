//! Compactly supported steady states on a prescribed support `[-L, L]`.
//!
//! The profile is computed by alternating two steps. With the current density
//! frozen, the derivative equation
//!
//! ```text
//!   λ (m-1) ρ(x)^{m-2} e(x) = ∫₀^L [G(x-y) - G(x+y)] e(y) dy
//! ```
//!
//! is solved for its Perron eigenpair on a uniform grid (piecewise constant
//! `e`, weights at cell midpoints). The next density is the primitive of the
//! nonpositive eigenfunction, normalized to unit mass. At the fixed point the
//! eigenvalue is the diffusion coefficient ν belonging to the support size L.

use log::{debug, warn};
use rayon::prelude::*;

use crate::error::{LabError, Result};
use crate::grid::{apply_gl, assemble_h_matrix, Grid, GridFunction, Layout, Matrix};
use crate::kernels::{AttractionKernel, Kernel};
use crate::quadrature::brent;

/// Floor applied to midpoint densities before raising them to `m - 2`.
pub const MIDPOINT_FLOOR: f64 = 1e-14;

#[derive(Debug, Clone, PartialEq)]
pub struct EigenPair {
    pub lambda: f64,
    /// Cellwise values, nonpositive, with `Σ e_i Δx = -1`.
    pub e: Vec<f64>,
    pub iterations: usize,
}

#[derive(Debug, Clone, Copy)]
pub struct PowerIteration {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for PowerIteration {
    fn default() -> Self {
        Self { tol: 1e-12, max_iter: 100_000 }
    }
}

/// Perron eigenpair of `D⁻¹M` for the generalized problem `λ D g = M g`,
/// `D = diag(weights)`, by power iteration with sup-norm normalization.
///
/// `start` seeds the iteration (any positive vector); the returned vector is
/// flipped to be nonpositive and scaled to `Σ e_i dx = -1`.
pub fn leading_eigenpair(
    weights: &[f64],
    m: &Matrix,
    dx: f64,
    opts: PowerIteration,
    start: Option<&[f64]>,
) -> Result<EigenPair> {
    let n = m.dim();
    if weights.len() != n {
        return Err(LabError::InvalidParameter(format!(
            "{} weights for a {n}×{n} matrix",
            weights.len()
        )));
    }
    if let Some(bad) = weights.iter().find(|w| !(w.is_finite() && **w > 0.0)) {
        return Err(LabError::Degenerate(format!("eigen weight {bad} is not positive and finite")));
    }
    let inv_w: Vec<f64> = weights.iter().map(|w| 1.0 / w).collect();

    let mut v: Vec<f64> = match start {
        Some(s) if s.len() == n && s.iter().any(|x| *x != 0.0) => {
            let sign = if s.iter().sum::<f64>() < 0.0 { -1.0 } else { 1.0 };
            s.iter().map(|x| (sign * x).max(0.0)).collect()
        }
        _ => vec![1.0; n],
    };
    normalize_sup(&mut v);

    let mut lambda = 0.0;
    let mut last_change = f64::INFINITY;
    for it in 1..=opts.max_iter {
        let mut w = m.mul_vec(&v);
        for (wi, iw) in w.iter_mut().zip(&inv_w) {
            *wi *= iw;
        }
        let (imax, _) = v
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .expect("nonempty");
        let new_lambda = w[imax] / v[imax];
        let norm = normalize_sup(&mut w);
        if !(norm.is_finite() && norm > 0.0) {
            return Err(LabError::Degenerate("power iteration collapsed to zero".into()));
        }
        last_change = v.iter().zip(&w).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        v = w;
        let lambda_change = (new_lambda - lambda).abs();
        lambda = new_lambda;
        if last_change < opts.tol && lambda_change < opts.tol * lambda.abs().max(1.0) {
            let total: f64 = v.iter().sum::<f64>() * dx;
            let e = v.iter().map(|x| -x / total).collect();
            return Ok(EigenPair { lambda, e, iterations: it });
        }
    }
    Err(LabError::EigenNotConverged { iterations: opts.max_iter, last_change })
}

fn normalize_sup(v: &mut [f64]) -> f64 {
    let norm = v.iter().fold(0.0f64, |a, x| a.max(x.abs()));
    if norm > 0.0 {
        for x in v.iter_mut() {
            *x /= norm;
        }
    }
    norm
}

/// Which of the two equivalent normalizations a profile carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Normalization {
    /// `∫_{-L}^{L} ρ = 1`
    UnitMass,
    /// `ρ(0) = 1`
    PeakOne,
}

#[derive(Debug, Clone, Copy)]
pub struct SteadyOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub eigen: PowerIteration,
    pub normalization: Normalization,
}

impl Default for SteadyOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iter: 2000,
            eigen: PowerIteration::default(),
            normalization: Normalization::UnitMass,
        }
    }
}

/// A computed symmetric equilibrium, stored on the half-domain `[0, L]`.
#[derive(Debug, Clone)]
pub struct SteadyState {
    pub kernel: Kernel,
    /// Nodal, piecewise-linear density on `[0, L]`.
    pub rho: GridFunction,
    pub nu: f64,
    pub c: f64,
    pub m: f64,
    pub iterations: usize,
    /// `sup |ν ρ^{m-1} - 𝒢_L[ρ]|` over the nodes.
    pub residual_sup: f64,
    pub normalization: Normalization,
}

impl SteadyState {
    pub fn support_half_width(&self) -> f64 {
        self.rho.grid().right()
    }

    pub fn grid(&self) -> &Grid {
        self.rho.grid()
    }

    /// `∫_{-L}^{L} ρ`
    pub fn mass(&self) -> f64 {
        2.0 * self.rho.integral()
    }

    /// Evaluate the even extension anywhere on ℝ (zero off the support).
    pub fn profile(&self, x: f64) -> f64 {
        self.rho.interpolate(x.abs())
    }

    /// Mean of the even, piecewise-linear profile over `[a, b]`.
    pub fn cell_average(&self, a: f64, b: f64) -> f64 {
        // the profile is linear between nodes of the reflected grid, so
        // Simpson on each linear piece is exact
        let l = self.support_half_width();
        let dx = self.grid().dx();
        let lo = a.max(-l);
        let hi = b.min(l);
        if hi <= lo {
            return 0.0;
        }
        let mut breaks = vec![lo];
        let first = ((lo + l) / dx).floor() as i64 + 1;
        let mut k = first;
        loop {
            let x = -l + k as f64 * dx;
            if x >= hi {
                break;
            }
            if x > lo {
                breaks.push(x);
            }
            k += 1;
        }
        breaks.push(hi);
        let integral: f64 = breaks
            .windows(2)
            .map(|w| 0.5 * (w[1] - w[0]) * (self.profile(w[0]) + self.profile(w[1])))
            .sum();
        integral / (b - a)
    }

    /// The even extension as a nodal function on `[-L, L]`.
    pub fn reflected(&self) -> GridFunction {
        let n = self.grid().n_cells();
        let l = self.support_half_width();
        let grid = Grid::symmetric(l, 2 * n).expect("valid grid");
        let v = self.rho.values();
        let values = (0..=2 * n).map(|i| v[i.abs_diff(n)]).collect();
        GridFunction::new(grid, Layout::Nodal, values).expect("length matches")
    }

    /// Switch between the unit-mass and `ρ(0) = 1` normalizations.
    ///
    /// Scaling the density by a factor λ scales ν by `λ^{2-m}` and `C` by λ;
    /// the support is unchanged.
    pub fn renormalized(&self, target: Normalization) -> SteadyState {
        let factor = match target {
            Normalization::UnitMass => 1.0 / self.mass(),
            Normalization::PeakOne => 1.0 / self.rho.values()[0],
        };
        let (rho, nu, c) = rescale_density(&self.rho, self.nu, self.c, self.m, factor);
        SteadyState { rho, nu, c, normalization: target, ..self.clone() }
    }
}

/// Multiply a steady profile by `factor`, carrying ν and C along.
pub fn rescale_density(rho: &GridFunction, nu: f64, c: f64, m: f64, factor: f64) -> (GridFunction, f64, f64) {
    let values = rho.values().iter().map(|v| v * factor).collect();
    (
        rho.with_values(values).expect("same layout"),
        nu * factor.powf(2.0 - m),
        c * factor,
    )
}

/// Reusable pieces of the fixed-point iteration for one `(kernel, m, grid)`.
#[derive(Debug, Clone)]
pub struct SteadySolver {
    kernel: Kernel,
    m: f64,
    grid: Grid,
    matrix: Matrix,
    opts: SteadyOptions,
}

impl SteadySolver {
    pub fn new(kernel: Kernel, m: f64, grid: Grid, opts: SteadyOptions) -> Result<Self> {
        if !(m > 1.0 && m.is_finite()) {
            return Err(LabError::InvalidParameter(format!("exponent m must exceed 1, got {m}")));
        }
        let matrix = assemble_h_matrix(&kernel, &grid)?;
        Ok(Self { kernel, m, grid, matrix, opts })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn matrix(&self) -> &Matrix {
        &self.matrix
    }

    /// `(1 - x/L)` scaled to the requested normalization.
    pub fn initial_guess(&self) -> GridFunction {
        let l = self.grid.right();
        let scale = match self.opts.normalization {
            Normalization::UnitMass => 1.0 / l,
            Normalization::PeakOne => 1.0,
        };
        GridFunction::from_fn(self.grid, Layout::Nodal, |x| scale * (1.0 - x / l).max(0.0))
    }

    /// `(m-1) ρ(x_{i+1/2})^{m-2}` with midpoint densities averaged from nodes.
    pub fn weights(&self, rho: &[f64]) -> Result<(Vec<f64>, bool)> {
        let mut clamped = false;
        let w = rho
            .windows(2)
            .map(|p| {
                let mut mid = 0.5 * (p[0] + p[1]);
                if mid <= 0.0 && self.m != 2.0 {
                    return Err(LabError::Degenerate(
                        "density vanishes at a cell midpoint inside the support".into(),
                    ));
                }
                if mid < MIDPOINT_FLOOR {
                    mid = MIDPOINT_FLOOR;
                    clamped = true;
                }
                Ok((self.m - 1.0) * mid.powf(self.m - 2.0))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok((w, clamped))
    }

    /// Rebuild the nodal density from a nonpositive cellwise derivative.
    pub fn integrate_eigenfunction(&self, e: &[f64]) -> GridFunction {
        let n = self.grid.n_cells();
        let dx = self.grid.dx();
        let mut tail = vec![0.0; n + 1];
        for i in (0..n).rev() {
            tail[i] = tail[i + 1] + e[i] * dx;
        }
        let denom = match self.opts.normalization {
            // ∫₀^L x e dx, exact for piecewise constant e
            Normalization::UnitMass => {
                2.0 * (0..n).map(|j| self.grid.midpoint(j) * e[j] * dx).sum::<f64>()
            }
            Normalization::PeakOne => tail[0],
        };
        let values = tail.iter().map(|t| (t / denom).max(0.0)).collect();
        GridFunction::new(self.grid, Layout::Nodal, values).expect("nodal length")
    }

    /// One sweep of the scheme: eigenpair with frozen weights, then integrate.
    pub fn step(&self, rho: &GridFunction, warm: Option<&[f64]>) -> Result<(EigenPair, GridFunction)> {
        let v = rho.values();
        if v[0] <= 0.0 {
            return Err(LabError::Degenerate("ρ(0) must be positive".into()));
        }
        if v.iter().any(|x| *x < 0.0) {
            return Err(LabError::Degenerate("density must be nonnegative".into()));
        }
        let (w, clamped) = self.weights(v)?;
        if clamped {
            warn!("midpoint density clamped at {MIDPOINT_FLOOR:e} while forming eigen weights");
        }
        let pair = leading_eigenpair(&w, &self.matrix, self.grid.dx(), self.opts.eigen, warm)?;
        let next = self.integrate_eigenfunction(&pair.e);
        Ok((pair, next))
    }

    pub fn solve(&self) -> Result<SteadyState> {
        self.solve_from(self.initial_guess())
    }

    pub fn solve_from(&self, mut rho: GridFunction) -> Result<SteadyState> {
        if !self.kernel.strictly_decreasing() {
            warn!(
                "{} kernel is not strictly decreasing: equilibria are not unique, \
                 disjoint non-interacting bumps can also be stationary",
                self.kernel
            );
        }
        let mut warm: Option<Vec<f64>> = None;
        let mut change = f64::INFINITY;
        let mut lambda = f64::NAN;
        for it in 1..=self.opts.max_iter {
            let (pair, next) = self.step(&rho, warm.as_deref())?;
            change = rho.sup_distance(&next);
            debug!("steady iteration {it}: λ = {:.12}, change = {change:.3e}", pair.lambda);
            lambda = pair.lambda;
            warm = Some(pair.e);
            rho = next;
            if change < self.opts.tol {
                return Ok(self.finish(rho, lambda, it));
            }
        }
        let residual = residual_sup(&self.kernel, &rho, lambda, self.m).unwrap_or(f64::NAN);
        Err(LabError::SteadyNotConverged {
            iterations: self.opts.max_iter,
            last_change: change,
            residual,
            last_rho: rho.into_values(),
        })
    }

    fn finish(&self, rho: GridFunction, nu: f64, iterations: usize) -> SteadyState {
        let c = c_of_profile(&self.kernel, &rho);
        let residual_sup = residual_sup(&self.kernel, &rho, nu, self.m).unwrap_or(f64::NAN);
        SteadyState {
            kernel: self.kernel,
            rho,
            nu,
            c,
            m: self.m,
            iterations,
            residual_sup,
            normalization: self.opts.normalization,
        }
    }
}

/// One step of the scheme from `rho_k`; assembles the matrix on the fly.
pub fn iterate_step(rho_k: &GridFunction, kernel: Kernel, m: f64) -> Result<(f64, GridFunction)> {
    let solver = SteadySolver::new(kernel, m, *rho_k.grid(), SteadyOptions::default())?;
    let (pair, next) = solver.step(rho_k, None)?;
    Ok((pair.lambda, next))
}

pub fn solve_steady(kernel: Kernel, m: f64, l: f64, n_cells: usize, opts: SteadyOptions) -> Result<SteadyState> {
    if !(l > 0.0 && l.is_finite()) {
        return Err(LabError::InvalidParameter(format!("support half-width must be positive, got {l}")));
    }
    let grid = Grid::new(0.0, l, n_cells)?;
    SteadySolver::new(kernel, m, grid, opts)?.solve()
}

/// `C = G∗ρ(L) = ∫₀^L [G(L-y) + G(L+y)] ρ(y) dy` by the trapezoid rule.
pub fn compute_c(ss: &SteadyState) -> f64 {
    c_of_profile(&ss.kernel, &ss.rho)
}

fn c_of_profile<K: AttractionKernel + ?Sized>(kernel: &K, rho: &GridFunction) -> f64 {
    let l = rho.grid().right();
    rho.positions()
        .iter()
        .zip(rho.weights())
        .zip(rho.values())
        .map(|((y, w), r)| w * r * (kernel.eval(l - y) + kernel.eval(l + y)))
        .sum()
}

/// `sup_x |ν ρ(x)^{m-1} - 𝒢_L[ρ](x)|` at the nodes.
pub fn residual_sup<K: AttractionKernel + ?Sized>(kernel: &K, rho: &GridFunction, nu: f64, m: f64) -> Result<f64> {
    let gl = apply_gl(kernel, rho)?;
    Ok(rho
        .values()
        .iter()
        .zip(gl.values())
        .map(|(r, g)| (nu * r.max(0.0).powf(m - 1.0) - g).abs())
        .fold(0.0, f64::max))
}

#[derive(Debug)]
pub struct NuOfLRow {
    pub l: f64,
    pub result: Result<SteadyState>,
}

/// One solve per support size; failures are kept per row and the sweep goes on.
pub fn nu_of_l_curve(kernel: Kernel, m: f64, ls: &[f64], n_cells: usize, opts: SteadyOptions) -> Vec<NuOfLRow> {
    ls.par_iter()
        .map(|&l| NuOfLRow { l, result: solve_steady(kernel, m, l, n_cells, opts) })
        .collect()
}

/// The support size whose equilibrium has diffusion coefficient `nu`.
///
/// ν(L) is increasing, so the root is bracketed by growing L geometrically
/// from `l_start`; `cells_per_unit` fixes the spacing across solves.
pub fn solve_steady_for_nu(
    kernel: Kernel,
    m: f64,
    nu: f64,
    cells_per_unit: f64,
    l_start: f64,
    opts: SteadyOptions,
) -> Result<SteadyState> {
    let solve = |l: f64| {
        let n = ((l * cells_per_unit).ceil() as usize).max(8);
        solve_steady(kernel, m, l, n, opts)
    };
    let (mut lo, mut hi) = (l_start, l_start);
    let mut nu_at = solve(l_start)?.nu;
    if nu_at > nu {
        while nu_at > nu {
            hi = lo;
            lo *= 0.5;
            if lo < 1e-3 {
                return Err(LabError::RootNotFound(format!("ν = {nu} below every tried support")));
            }
            nu_at = solve(lo)?.nu;
        }
    } else {
        while nu_at < nu {
            lo = hi;
            hi *= 1.5;
            if hi > 400.0 {
                return Err(LabError::NoCompactSteadyState(format!(
                    "ν(L) stays below {nu} up to L = {lo:.1}"
                )));
            }
            nu_at = solve(hi)?.nu;
        }
    }
    let l = brent(|l| Ok(solve(l)?.nu - nu), lo, hi, 1e-9)?;
    solve(l)
}
