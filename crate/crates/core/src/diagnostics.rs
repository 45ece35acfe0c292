//! Energy, first variation, dissipation, symmetrization, merger detection and
//! the porous-medium Barenblatt oracle.

use crate::error::{LabError, Result};
use crate::grid::{convolve, Grid, GridFunction, Layout};
use crate::kernels::AttractionKernel;
use crate::quadrature::integrate;
use crate::steady::SteadyState;

/// Density values at or below this count as vacuum.
pub const SUPPORT_THRESHOLD: f64 = 1e-12;

/// `(∫F(ρ), ½∬Gρρ)` with `F(ρ) = (ν/m)ρ^m`, both using the layout's weights.
pub fn energy_terms(rho: &GridFunction, conv: &[f64], m: f64, nu: f64) -> (f64, f64) {
    let w = rho.weights();
    let mut internal = 0.0;
    let mut interaction = 0.0;
    for ((r, c), w) in rho.values().iter().zip(conv).zip(&w) {
        internal += w * r.powf(m);
        interaction += w * r * c;
    }
    (nu / m * internal, 0.5 * interaction)
}

/// `E[ρ] = ∫(ν/m)ρ^m - ½∬G(x-y)ρ(x)ρ(y)`.
pub fn energy<K: AttractionKernel + ?Sized>(rho: &GridFunction, kernel: &K, m: f64, nu: f64) -> f64 {
    let conv = convolve(kernel, rho);
    let (a, b) = energy_terms(rho, conv.values(), m, nu);
    a - b
}

/// `νρ^{m-1} - G∗ρ` from a precomputed convolution.
pub fn variation_from_conv(rho: &[f64], conv: &[f64], m: f64, nu: f64) -> Vec<f64> {
    rho.iter()
        .zip(conv)
        .map(|(r, c)| if *r > 0.0 { nu * r.powf(m - 1.0) - c } else { -c })
        .collect()
}

/// `δE/δρ = νρ^{m-1} - G∗ρ`.
pub fn variation<K: AttractionKernel + ?Sized>(rho: &GridFunction, kernel: &K, m: f64, nu: f64) -> GridFunction {
    let conv = convolve(kernel, rho);
    let v = variation_from_conv(rho.values(), conv.values(), m, nu);
    rho.with_values(v).expect("same length")
}

/// `-Σ ρ_i (∂ₓv)_i² w_i` with central differences of the variation.
pub fn dissipation_from_variation(rho: &GridFunction, v: &[f64]) -> f64 {
    let n = v.len();
    if n < 2 {
        return 0.0;
    }
    let dx = rho.grid().dx();
    let w = rho.weights();
    let r = rho.values();
    let mut acc = 0.0;
    for i in 0..n {
        if r[i] <= 0.0 {
            continue;
        }
        let d = if i == 0 {
            (v[1] - v[0]) / dx
        } else if i == n - 1 {
            (v[n - 1] - v[n - 2]) / dx
        } else {
            (v[i + 1] - v[i - 1]) / (2.0 * dx)
        };
        acc += r[i] * d * d * w[i];
    }
    -acc
}

/// `dE/dt = -∫ρ|∂ₓ(δE/δρ)|²`, always `≤ 0`.
pub fn dissipation<K: AttractionKernel + ?Sized>(rho: &GridFunction, kernel: &K, m: f64, nu: f64) -> f64 {
    let v = variation(rho, kernel, m, nu);
    dissipation_from_variation(rho, v.values())
}

/// Maximal index runs with `ρ > SUPPORT_THRESHOLD`, as inclusive `(first, last)`.
pub fn support_components(rho: &[f64]) -> Vec<(usize, usize)> {
    components_above(rho, SUPPORT_THRESHOLD)
}

/// Maximal index runs with `ρ > threshold`.
pub fn components_above(rho: &[f64], threshold: f64) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    let mut start = None;
    for (i, &r) in rho.iter().enumerate() {
        match (r > threshold, start) {
            (true, None) => start = Some(i),
            (false, Some(s)) => {
                out.push((s, i - 1));
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        out.push((s, rho.len() - 1));
    }
    out
}

/// Per-component spread `max v - min v` of the variation, restricted to the
/// part of each component where `ρ > core_fraction · max ρ` on that component.
pub fn variation_spread(rho: &GridFunction, v: &[f64], core_fraction: f64) -> Vec<f64> {
    variation_spread_above(rho, v, SUPPORT_THRESHOLD, core_fraction)
}

/// [`variation_spread`] with clumps taken as runs of `ρ > threshold`, for
/// densities whose tails never reach exact vacuum.
pub fn variation_spread_above(rho: &GridFunction, v: &[f64], threshold: f64, core_fraction: f64) -> Vec<f64> {
    let r = rho.values();
    components_above(r, threshold)
        .into_iter()
        .map(|(a, b)| {
            let peak = r[a..=b].iter().cloned().fold(0.0, f64::max);
            let vals: Vec<f64> = (a..=b).filter(|&i| r[i] > core_fraction * peak).map(|i| v[i]).collect();
            let hi = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lo = vals.iter().cloned().fold(f64::INFINITY, f64::min);
            hi - lo
        })
        .collect()
}

/// Symmetric rearrangement `ρ̃ = ((ρ̄(x)^{m-1} + ρ̄(-x)^{m-1})/2)^{1/(m-1)}` of the
/// density centred on the midpoint of its support. The output grid is
/// symmetric about 0 with the input spacing.
pub fn symmetrize(rho: &GridFunction, m: f64) -> Result<GridFunction> {
    let r = rho.values();
    let comps = support_components(r);
    let (Some(first), Some(last)) = (comps.first(), comps.last()) else {
        return Err(LabError::Degenerate("symmetrize needs a nonempty support".into()));
    };
    let (i, j) = (first.0, last.1);
    let n = r.len() as isize;
    // reflection about x0 maps index k to i + j - k
    let s = (i + j) as isize;
    let half = (s as f64 / 2.0).max((2 * (n - 1) - s) as f64 / 2.0);
    let lo_idx = s as f64 / 2.0 - half;
    let count = (2.0 * half).round() as usize + 1;
    let e = m - 1.0;
    let at = |k: isize| if (0..n).contains(&k) { r[k as usize] } else { 0.0 };
    let values: Vec<f64> = (0..count)
        .map(|q| {
            let k = (lo_idx + q as f64).round() as isize;
            let a = at(k);
            let b = at(s - k);
            (0.5 * (a.powf(e) + b.powf(e))).powf(1.0 / e)
        })
        .collect();
    let dx = rho.grid().dx();
    let span = half * dx;
    let grid = match rho.layout() {
        Layout::Nodal => Grid::new(-span, span, count - 1)?,
        Layout::Cell => Grid::new(-span - 0.5 * dx, span + 0.5 * dx, count)?,
    };
    GridFunction::new(grid, rho.layout(), values)
}

/// Translate by an integer number of grid steps, padding with vacuum.
pub fn shift_cells(rho: &GridFunction, shift: isize) -> GridFunction {
    let r = rho.values();
    let n = r.len() as isize;
    let v = (0..n)
        .map(|k| {
            let src = k - shift;
            if (0..n).contains(&src) {
                r[src as usize]
            } else {
                0.0
            }
        })
        .collect();
    rho.with_values(v).expect("same length")
}

/// Energy time series of a trajectory.
#[derive(Debug, Clone, Default)]
pub struct EnergyReport {
    pub times: Vec<f64>,
    pub energy: Vec<f64>,
    pub dissipation: Vec<f64>,
    pub mass: Vec<f64>,
    pub max_rho: Vec<f64>,
    /// `(t_merge, energy_drop)` sorted by time.
    pub events: Vec<(f64, f64)>,
}

impl EnergyReport {
    pub fn push(&mut self, t: f64, energy: f64, dissipation: f64, mass: f64, max_rho: f64) {
        self.times.push(t);
        self.energy.push(energy);
        self.dissipation.push(dissipation);
        self.mass.push(mass);
        self.max_rho.push(max_rho);
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Finite-difference `dE/dt` (one-sided at the ends).
    pub fn dedt(&self) -> Vec<f64> {
        let n = self.len();
        if n < 2 {
            return vec![0.0; n];
        }
        (0..n)
            .map(|i| {
                let (a, b) = if i == 0 {
                    (0, 1)
                } else if i == n - 1 {
                    (n - 2, n - 1)
                } else {
                    (i - 1, i + 1)
                };
                (self.energy[b] - self.energy[a]) / (self.times[b] - self.times[a])
            })
            .collect()
    }

    /// Largest `(E_{k+1} - E_k)/|E_k|` over consecutive samples.
    pub fn max_relative_increase(&self) -> f64 {
        self.energy
            .windows(2)
            .map(|w| (w[1] - w[0]) / w[0].abs().max(f64::MIN_POSITIVE))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn max_mass_drift(&self) -> f64 {
        let m0 = self.mass.first().copied().unwrap_or(0.0);
        self.mass.iter().map(|m| (m - m0).abs()).fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PlateauEvents {
    /// Metastable intervals between mergers, `(first, last)` flat sample times.
    pub plateaus: Vec<(f64, f64)>,
    /// `(time of steepest descent, energy drop)` per merger.
    pub mergers: Vec<(f64, f64)>,
}

/// Splits the series into flat stretches (`|dE/dt| < flat_threshold`) and
/// active stretches. An active stretch after the first plateau whose energy
/// drop exceeds `drop_threshold` is a merger; the initial transient is not.
/// Flat stretches separated only by smaller bumps form a single plateau.
pub fn detect_plateaus(report: &EnergyReport, drop_threshold: f64, flat_threshold: f64) -> PlateauEvents {
    let n = report.len();
    let mut out = PlateauEvents::default();
    if n < 2 {
        return out;
    }
    let d = report.dedt();
    let mut k = 0;
    // a plateau stays open across bumps whose drop is below the threshold
    let mut open: Option<(f64, f64)> = None;
    while k < n {
        let flat = d[k].abs() < flat_threshold;
        let start = k;
        while k < n && (d[k].abs() < flat_threshold) == flat {
            k += 1;
        }
        let end = k - 1;
        if flat {
            if end > start {
                let (t0, t1) = (report.times[start], report.times[end]);
                open = Some(open.map_or((t0, t1), |(a, _)| (a, t1)));
            }
        } else {
            let a = start.saturating_sub(1);
            let b = (end + 1).min(n - 1);
            let drop = report.energy[a] - report.energy[b];
            if let Some(p) = open {
                if drop > drop_threshold {
                    let steepest = (start..=end).max_by(|&i, &j| d[j].total_cmp(&d[i])).expect("nonempty");
                    out.mergers.push((report.times[steepest], drop));
                    out.plateaus.push(p);
                    open = None;
                }
            }
        }
    }
    out.plateaus.extend(open);
    out
}

/// `ρ̃(x̃) = λ^{-1} ρ(λ^{-1} x̃)` with `λ = max ρ`, returned on the scaled grid.
pub fn rescale_barenblatt(rho: &GridFunction) -> Result<GridFunction> {
    let lambda = rho.max();
    if !(lambda > 0.0) {
        return Err(LabError::Degenerate("rescaling needs a positive density".into()));
    }
    let g = rho.grid();
    let grid = Grid::new(lambda * g.left(), lambda * g.right(), g.n_cells())?;
    GridFunction::new(grid, rho.layout(), rho.values().iter().map(|v| v / lambda).collect())
}

/// Self-similar source solution of `ρ_t = ν((ρ^{m-1})_x ρ)_x = κ(ρ^m)_xx`,
/// `κ = ν(m-1)/m`, shifted in time by `t0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Barenblatt {
    pub m: f64,
    pub nu: f64,
    pub mass: f64,
    pub t0: f64,
    a: f64,
    k: f64,
    alpha: f64,
}

impl Barenblatt {
    pub fn new(m: f64, nu: f64, mass: f64, t0: f64) -> Result<Self> {
        if !(m > 1.0 && nu > 0.0 && mass > 0.0 && t0 > 0.0) {
            return Err(LabError::InvalidParameter(format!(
                "Barenblatt needs m > 1, ν > 0, mass > 0, t0 > 0 (got {m}, {nu}, {mass}, {t0})"
            )));
        }
        let alpha = 1.0 / (m + 1.0);
        let k = alpha * (m - 1.0) / (2.0 * m);
        let p = 1.0 / (m - 1.0);
        let (j, _) = integrate(|s: f64| (1.0 - s * s).max(0.0).powf(p), -1.0, 1.0, 1e-15, 1e-14);
        let a = (mass * k.sqrt() / j).powf(1.0 / (p + 0.5));
        Ok(Self { m, nu, mass, t0, a, k, alpha })
    }

    fn tau(&self, t: f64) -> f64 {
        self.nu * (self.m - 1.0) / self.m * (t + self.t0)
    }

    pub fn density(&self, x: f64, t: f64) -> f64 {
        let tau = self.tau(t);
        let s = tau.powf(-self.alpha);
        let xi = x * s;
        s * (self.a - self.k * xi * xi).max(0.0).powf(1.0 / (self.m - 1.0))
    }

    pub fn support_radius(&self, t: f64) -> f64 {
        (self.a / self.k).sqrt() * self.tau(t).powf(self.alpha)
    }

    /// Exact cell averages on `grid`.
    pub fn cell_averages(&self, grid: &Grid, t: f64) -> GridFunction {
        let dx = grid.dx();
        let r = self.support_radius(t);
        let vals = (0..grid.n_cells())
            .map(|i| {
                let a = grid.node(i).max(-r);
                let b = grid.node(i + 1).min(r);
                if b <= a {
                    return 0.0;
                }
                integrate(|x| self.density(x, t), a, b, 1e-15, 1e-12).0 / dx
            })
            .collect();
        GridFunction::new(*grid, Layout::Cell, vals).expect("cell count")
    }
}

/// `(C, -2E + ∫(2F - fρ))` for a steady state, evaluated on its reflected profile.
pub fn steady_energy_identity(ss: &SteadyState) -> (f64, f64) {
    let full = ss.reflected();
    let e = energy(&full, &ss.kernel, ss.m, ss.nu);
    let extra = (2.0 / ss.m - 1.0) * ss.nu * full.weighted_sum(|r| r.powf(ss.m));
    (ss.c, -2.0 * e + extra)
}
