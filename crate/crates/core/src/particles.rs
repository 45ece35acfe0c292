//! Microscopic particle system: ordered particles with nearest-neighbour
//! power-law repulsion `R(z) = (ν/m) z^{1-m}` and global pairwise attraction,
//!
//! `dX_i/dt = -N R'(N(X_i - X_{i-1})) + N R'(N(X_{i+1} - X_i)) + (1/N) Σ_{j≠i} G'(X_i - X_j)`,
//!
//! the gradient flow of `E = Σ_i R(N(X_i - X_{i-1})) - (1/2N) Σ_{i≠j} G(X_i - X_j)`.

use log::debug;

use crate::error::{LabError, Result};
use crate::grid::{Grid, GridFunction, Layout};
use crate::kernels::{AttractionKernel, Kernel};

#[derive(Debug, Clone, PartialEq)]
pub struct ParticleState {
    positions: Vec<f64>,
    pub t: f64,
}

impl ParticleState {
    pub fn new(positions: Vec<f64>, t: f64) -> Result<Self> {
        if positions.len() < 2 {
            return Err(LabError::InvalidParameter("need at least two particles".into()));
        }
        check_order(&positions)?;
        Ok(Self { positions, t })
    }

    /// `X_i = Q((i - ½)/N)` for a quantile function `Q`.
    pub fn from_quantiles(n: usize, quantile: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new((0..n).map(|i| quantile((i as f64 + 0.5) / n as f64)).collect(), 0.0)
    }

    pub fn positions(&self) -> &[f64] {
        &self.positions
    }

    pub fn n(&self) -> usize {
        self.positions.len()
    }

    pub fn center_of_mass(&self) -> f64 {
        self.positions.iter().sum::<f64>() / self.n() as f64
    }

    pub fn min_gap(&self) -> f64 {
        self.positions.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min)
    }
}

fn check_order(x: &[f64]) -> Result<()> {
    if x.iter().any(|v| !v.is_finite()) {
        return Err(LabError::OrderingViolation("non-finite particle position".into()));
    }
    if let Some(i) = x.windows(2).position(|w| !(w[1] > w[0])) {
        return Err(LabError::OrderingViolation(format!(
            "particles {i} and {} are not strictly ordered ({} ≥ {})",
            i + 1,
            x[i],
            x[i + 1]
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RepulsionLaw {
    pub nu: f64,
    pub m: f64,
}

impl RepulsionLaw {
    pub fn new(nu: f64, m: f64) -> Result<Self> {
        if !(nu > 0.0 && m > 1.0) {
            return Err(LabError::InvalidParameter(format!("need ν > 0 and m > 1, got {nu}, {m}")));
        }
        Ok(Self { nu, m })
    }

    /// `R(z) = (ν/m) z^{1-m}`
    pub fn r(&self, z: f64) -> f64 {
        self.nu / self.m * z.powf(1.0 - self.m)
    }

    /// `R'(z) = ν(1-m)/m · z^{-m}`
    pub fn r_prime(&self, z: f64) -> f64 {
        self.nu * (1.0 - self.m) / self.m * z.powf(-self.m)
    }

    /// `R''(z) = ν(m-1) z^{-m-1}`
    pub fn r_second(&self, z: f64) -> f64 {
        self.nu * (self.m - 1.0) * z.powf(-self.m - 1.0)
    }
}

/// `(Σ_{j<i} e^{-(X_i-X_j)}, Σ_{j>i} e^{-(X_j-X_i)})` for sorted positions, in O(N).
fn exponential_sums(x: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let n = x.len();
    let mut left = vec![0.0; n];
    let mut right = vec![0.0; n];
    for i in 1..n {
        left[i] = (-(x[i] - x[i - 1])).exp() * (left[i - 1] + 1.0);
    }
    for i in (0..n - 1).rev() {
        right[i] = (-(x[i + 1] - x[i])).exp() * (right[i + 1] + 1.0);
    }
    (left, right)
}

/// `(1/N) Σ_{j≠i} G'(X_i - X_j)`
fn attraction(x: &[f64], kernel: &Kernel) -> Vec<f64> {
    let n = x.len();
    let inv = 1.0 / n as f64;
    match kernel {
        Kernel::Bessel => {
            // G'(d) = -sign(d) e^{-|d|}/2
            let (l, r) = exponential_sums(x);
            l.iter().zip(&r).map(|(a, b)| 0.5 * (b - a) * inv).collect()
        }
        k => (0..n)
            .map(|i| {
                let s: f64 = (0..n).filter(|&j| j != i).map(|j| k.eval_derivative(x[i] - x[j])).sum();
                s * inv
            })
            .collect(),
    }
}

/// `Σ_{i≠j} G(X_i - X_j)`
fn pair_sum(x: &[f64], kernel: &Kernel) -> f64 {
    match kernel {
        Kernel::Bessel => exponential_sums(x).0.iter().sum::<f64>(),
        k => {
            let n = x.len();
            let mut s = 0.0;
            for i in 0..n {
                for j in 0..i {
                    s += k.eval(x[i] - x[j]);
                }
            }
            2.0 * s
        }
    }
}

/// Velocities of all particles; `kernel = None` switches attraction off.
pub fn particle_rhs(state: &ParticleState, kernel: Option<&Kernel>, law: &RepulsionLaw) -> Result<Vec<f64>> {
    velocities(&state.positions, kernel, law)
}

fn velocities(x: &[f64], kernel: Option<&Kernel>, law: &RepulsionLaw) -> Result<Vec<f64>> {
    check_order(x)?;
    let n = x.len();
    let nf = n as f64;
    // push[k] = N R'(N(X_{k+1} - X_k))
    let push: Vec<f64> = x.windows(2).map(|w| nf * law.r_prime(nf * (w[1] - w[0]))).collect();
    let mut v = match kernel {
        Some(k) => attraction(x, k),
        None => vec![0.0; n],
    };
    for i in 0..n {
        if i > 0 {
            v[i] -= push[i - 1];
        }
        if i + 1 < n {
            v[i] += push[i];
        }
    }
    Ok(v)
}

/// `E = Σ R(N·gap) - (1/2N) Σ_{i≠j} G(X_i - X_j)`
pub fn particle_energy(state: &ParticleState, kernel: Option<&Kernel>, law: &RepulsionLaw) -> Result<f64> {
    energy_of(&state.positions, kernel, law)
}

fn energy_of(x: &[f64], kernel: Option<&Kernel>, law: &RepulsionLaw) -> Result<f64> {
    let nf = x.len() as f64;
    let mut rep = 0.0;
    for w in x.windows(2) {
        let g = w[1] - w[0];
        if !(g > 0.0) {
            return Err(LabError::OrderingViolation(format!("zero gap at {}: infinite energy", w[0])));
        }
        rep += law.r(nf * g);
    }
    let att = kernel.map_or(0.0, |k| pair_sum(x, k) / (2.0 * nf));
    Ok(rep - att)
}

/// Largest stable explicit step: the repulsion Jacobian has spectral radius
/// at most `4N² R''(N g_min)`.
pub fn stiffness_dt(state: &ParticleState, law: &RepulsionLaw) -> f64 {
    let nf = state.n() as f64;
    let s = 4.0 * nf * nf * law.r_second(nf * state.min_gap());
    1.0 / (s + 1.0)
}

#[derive(Debug, Clone)]
pub struct ParticleTrajectory {
    pub snapshots: Vec<ParticleState>,
    pub times: Vec<f64>,
    pub energy: Vec<f64>,
    pub last: ParticleState,
    pub steps: usize,
    pub halvings: usize,
}

impl ParticleTrajectory {
    /// Largest `(E_{k+1} - E_k)/|E_k|`.
    pub fn max_relative_increase(&self) -> f64 {
        self.energy
            .windows(2)
            .map(|w| (w[1] - w[0]) / w[0].abs().max(f64::MIN_POSITIVE))
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

fn rk3_step(x: &[f64], dt: f64, kernel: Option<&Kernel>, law: &RepulsionLaw) -> Result<Vec<f64>> {
    let v0 = velocities(x, kernel, law)?;
    let x1: Vec<f64> = x.iter().zip(&v0).map(|(a, v)| a + dt * v).collect();
    let v1 = velocities(&x1, kernel, law)?;
    let x2: Vec<f64> = x.iter().zip(x1.iter().zip(&v1)).map(|(a, (b, v))| 0.75 * a + 0.25 * (b + dt * v)).collect();
    let v2 = velocities(&x2, kernel, law)?;
    let x3: Vec<f64> = x.iter().zip(x2.iter().zip(&v2)).map(|(a, (b, v))| a / 3.0 + 2.0 / 3.0 * (b + dt * v)).collect();
    check_order(&x3)?;
    Ok(x3)
}

/// SSP-RK3 with `dt = min(dt_max, stiffness_dt)`, halved on ordering
/// violations (at most 30 times per step). Energy is recorded every
/// `record_every` steps and at every snapshot.
pub fn evolve_particles(
    state: &ParticleState,
    kernel: Option<&Kernel>,
    law: &RepulsionLaw,
    t_end: f64,
    dt_max: f64,
    snapshot_times: &[f64],
    record_every: usize,
) -> Result<ParticleTrajectory> {
    let mut targets: Vec<f64> = snapshot_times.iter().copied().filter(|t| *t >= state.t && *t <= t_end).collect();
    targets.sort_by(f64::total_cmp);
    let mut next_snap = 0;
    let mut s = state.clone();
    let mut out = ParticleTrajectory {
        snapshots: Vec::new(),
        times: vec![s.t],
        energy: vec![energy_of(&s.positions, kernel, law)?],
        last: s.clone(),
        steps: 0,
        halvings: 0,
    };
    let every = record_every.max(1);
    loop {
        while next_snap < targets.len() && targets[next_snap] <= s.t {
            out.snapshots.push(s.clone());
            next_snap += 1;
        }
        if s.t >= t_end {
            break;
        }
        let stop = targets.get(next_snap).copied().unwrap_or(t_end).min(t_end);
        let mut dt = dt_max.min(stiffness_dt(&s, law));
        let land = s.t + dt >= stop;
        if land {
            dt = stop - s.t;
        }
        let mut h = dt;
        let mut tries = 0;
        let x = loop {
            match rk3_step(&s.positions, h, kernel, law) {
                Ok(x) => break x,
                Err(e) => {
                    tries += 1;
                    if tries > 30 {
                        return Err(LabError::StepFailure { t: s.t, reason: format!("dt underflow: {e}") });
                    }
                    debug!("particle step rejected at t = {}: {e}", s.t);
                    h *= 0.5;
                }
            }
        };
        out.halvings += tries;
        s.positions = x;
        s.t = if land && tries == 0 { stop } else { s.t + h };
        out.steps += 1;
        if out.steps % every == 0 || (land && tries == 0) {
            out.times.push(s.t);
            out.energy.push(energy_of(&s.positions, kernel, law)?);
        }
    }
    out.last = s;
    Ok(out)
}

/// Gap-based density `1/(N(X_{i+1} - X_i))` at gap midpoints, linearly
/// interpolated to `grid` (zero outside the particle cloud) and normalized
/// to unit mass.
pub fn empirical_density(state: &ParticleState, grid: Grid, layout: Layout) -> Result<GridFunction> {
    if state.n() < 3 {
        return Err(LabError::InvalidParameter("empirical density needs N ≥ 3".into()));
    }
    let nf = state.n() as f64;
    let x = state.positions();
    let mids: Vec<f64> = x.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
    let dens: Vec<f64> = x.windows(2).map(|w| 1.0 / (nf * (w[1] - w[0]))).collect();
    let raw = GridFunction::from_fn(grid, layout, |p| crate::grid::linear_interp(&mids, &dens, p));
    let mass = raw.integral();
    if !(mass > 0.0) {
        return Err(LabError::Degenerate("particle cloud falls between grid points".into()));
    }
    raw.with_values(raw.values().iter().map(|v| v / mass).collect())
}
