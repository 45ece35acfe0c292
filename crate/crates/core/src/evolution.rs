//! Positivity-preserving, energy-dissipating finite-volume solver for
//! `∂tρ = ∂x(ρ ∂x(νρ^{m-1} - G∗ρ))` on `[-L, L]` with zero-flux ends.
//!
//! With `ξ_j = Δx Σ_k G(x_j - x_k) ρ̄_k - ν ρ̄_j^{m-1}` the interface velocity is
//! `u_{j+1/2} = (ξ_{j+1} - ξ_j)/Δx` and the flux is upwinded on reconstructed
//! one-sided densities. Time stepping is SSP-RK3.

use log::{debug, warn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::diagnostics::{dissipation_from_variation, energy_terms, EnergyReport};
use crate::error::{LabError, Result};
use crate::grid::{linear_interp, ConvolutionPlan, Grid, GridFunction, Layout};
use crate::kernels::AttractionKernel;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Order {
    First,
    Second,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SchemeConfig {
    pub order: Order,
    pub cfl: f64,
    /// Retries with halved `dt` after a step produces negative density.
    pub max_halvings: u32,
}

impl Default for SchemeConfig {
    fn default() -> Self {
        Self { order: Order::Second, cfl: 0.4, max_halvings: 20 }
    }
}

/// Cell averages at time `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct FVState {
    pub rho: GridFunction,
    pub t: f64,
}

impl FVState {
    pub fn new(rho: GridFunction, t: f64) -> Result<Self> {
        if rho.layout() != Layout::Cell {
            return Err(LabError::InvalidParameter("finite-volume states hold cell averages".into()));
        }
        if rho.values().iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(LabError::InvalidParameter("density must be finite and nonnegative".into()));
        }
        Ok(Self { rho, t })
    }

    pub fn from_values(grid: Grid, values: Vec<f64>) -> Result<Self> {
        Self::new(GridFunction::new(grid, Layout::Cell, values)?, 0.0)
    }

    /// Midpoint samples of `f`, rescaled to unit mass.
    pub fn normalized_from_fn(grid: Grid, f: impl Fn(f64) -> f64) -> Result<Self> {
        let rho = GridFunction::from_fn(grid, Layout::Cell, f);
        let mass = rho.integral();
        if !(mass > 0.0) {
            return Err(LabError::Degenerate("initial density has no mass".into()));
        }
        let v = rho.values().iter().map(|r| r / mass).collect();
        Self::new(rho.with_values(v)?, 0.0)
    }

    pub fn grid(&self) -> &Grid {
        self.rho.grid()
    }

    pub fn mass(&self) -> f64 {
        self.rho.integral()
    }

    pub fn center_of_mass(&self) -> f64 {
        let dx = self.grid().dx();
        let num: f64 = self.rho.positions().iter().zip(self.rho.values()).map(|(x, r)| x * r).sum();
        num * dx / self.mass()
    }
}

fn minmod(a: f64, b: f64) -> f64 {
    if a * b <= 0.0 {
        0.0
    } else if a.abs() < b.abs() {
        a
    } else {
        b
    }
}

/// Time integrator for one `(kernel, m, ν, grid)`.
#[derive(Debug)]
pub struct FvScheme {
    grid: Grid,
    m: f64,
    nu: f64,
    cfg: SchemeConfig,
    plan: Option<ConvolutionPlan>,
}

impl FvScheme {
    /// `kernel = None` switches the attraction off (porous-medium equation).
    pub fn new<K: AttractionKernel + ?Sized>(
        kernel: Option<&K>,
        m: f64,
        nu: f64,
        grid: Grid,
        cfg: SchemeConfig,
    ) -> Result<Self> {
        if !(m > 1.0) || !(nu >= 0.0) {
            return Err(LabError::InvalidParameter(format!("need m > 1 and ν ≥ 0, got m = {m}, ν = {nu}")));
        }
        if !(cfg.cfl > 0.0 && cfg.cfl < 1.0) {
            return Err(LabError::InvalidParameter(format!("cfl must lie in (0, 1), got {}", cfg.cfl)));
        }
        let plan = kernel.map(|k| ConvolutionPlan::new(k, &grid, Layout::Cell));
        Ok(Self { grid, m, nu, cfg, plan })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn config(&self) -> SchemeConfig {
        self.cfg
    }

    /// `Δx Σ_k G(x_j - x_k) ρ̄_k`
    pub fn convolution(&self, rho: &[f64]) -> Vec<f64> {
        match &self.plan {
            Some(p) => p.apply(rho),
            None => vec![0.0; rho.len()],
        }
    }

    fn pressure(&self, r: f64) -> f64 {
        if r > 0.0 {
            self.nu * r.powf(self.m - 1.0)
        } else {
            0.0
        }
    }

    /// `ξ_j = G∗ρ̄ - νρ̄^{m-1}`
    pub fn xi(&self, rho: &[f64]) -> Vec<f64> {
        self.xi_with(rho, &self.convolution(rho))
    }

    fn xi_with(&self, rho: &[f64], conv: &[f64]) -> Vec<f64> {
        rho.iter().zip(conv).map(|(r, c)| c - self.pressure(*r)).collect()
    }

    fn velocities_from_xi(&self, xi: &[f64]) -> Vec<f64> {
        let n = xi.len();
        let dx = self.grid.dx();
        let mut u = vec![0.0; n + 1];
        for j in 0..n - 1 {
            u[j + 1] = (xi[j + 1] - xi[j]) / dx;
        }
        u
    }

    /// Interface velocities `u_{j+1/2}` for all `n + 1` interfaces; the two
    /// boundary entries are zero.
    pub fn interface_velocities(&self, rho: &[f64]) -> Vec<f64> {
        self.velocities_from_xi(&self.xi(rho))
    }

    /// Interior interface velocities only (`n - 1` values).
    pub fn velocities(&self, rho: &[f64]) -> Vec<f64> {
        let u = self.interface_velocities(rho);
        u[1..u.len() - 1].to_vec()
    }

    /// `(ρ^E_j, ρ^W_j)`: values at the east and west faces of each cell.
    pub fn reconstruct(&self, rho: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let n = rho.len();
        match self.cfg.order {
            Order::First => (rho.to_vec(), rho.to_vec()),
            Order::Second => {
                let mut east = vec![0.0; n];
                let mut west = vec![0.0; n];
                for j in 0..n {
                    let s = if j == 0 || j == n - 1 {
                        0.0
                    } else {
                        minmod(rho[j + 1] - rho[j], rho[j] - rho[j - 1])
                    };
                    east[j] = rho[j] + 0.5 * s;
                    west[j] = rho[j] - 0.5 * s;
                }
                (east, west)
            }
        }
    }

    /// Upwind flux `F_{j+1/2} = u⁺ρ^E_j + u⁻ρ^W_{j+1}` at all `n + 1` interfaces.
    pub fn numerical_flux(&self, rho: &[f64], u: &[f64]) -> Vec<f64> {
        let n = rho.len();
        let (east, west) = self.reconstruct(rho);
        let mut f = vec![0.0; n + 1];
        for j in 0..n - 1 {
            let v = u[j + 1];
            f[j + 1] = v.max(0.0) * east[j] + v.min(0.0) * west[j + 1];
        }
        f
    }

    fn rhs_from_flux(&self, f: &[f64]) -> Vec<f64> {
        let dx = self.grid.dx();
        f.windows(2).map(|w| -(w[1] - w[0]) / dx).collect()
    }

    /// `dρ̄_j/dt = -(F_{j+1/2} - F_{j-1/2})/Δx`
    pub fn rhs(&self, rho: &[f64]) -> Vec<f64> {
        self.rhs_with(rho, &self.convolution(rho))
    }

    fn rhs_with(&self, rho: &[f64], conv: &[f64]) -> Vec<f64> {
        let u = self.velocities_from_xi(&self.xi_with(rho, conv));
        self.rhs_from_flux(&self.numerical_flux(rho, &u))
    }

    /// `cfl · min(Δx/max|u|, Δx²/(2ν(m-1) max ρ̄^{m-1}))`
    pub fn stable_dt(&self, rho: &[f64]) -> f64 {
        self.stable_dt_with(rho, &self.convolution(rho))
    }

    fn stable_dt_with(&self, rho: &[f64], conv: &[f64]) -> f64 {
        let dx = self.grid.dx();
        let umax = self
            .velocities_from_xi(&self.xi_with(rho, conv)).iter().fold(0.0_f64, |a, v| a.max(v.abs()));
        let pmax = rho.iter().fold(0.0_f64, |a, r| a.max(*r));
        let diff = 2.0 * self.nu * (self.m - 1.0) * pmax.powf(self.m - 1.0) + 1e-300;
        let adv = if umax > 0.0 { dx / umax } else { f64::INFINITY };
        self.cfg.cfl * adv.min(dx * dx / diff)
    }

    fn euler(&self, rho: &[f64], dt: f64, conv: Option<&[f64]>) -> Vec<f64> {
        let l = match conv {
            Some(c) => self.rhs_with(rho, c),
            None => self.rhs(rho),
        };
        rho.iter().zip(l).map(|(r, d)| r + dt * d).collect()
    }

    /// One SSP-RK3 step of size `dt`; fails if any stage turns negative.
    pub fn step_ssprk3(&self, state: &FVState, dt: f64) -> Result<FVState> {
        self.step_with(state, dt, None)
    }

    fn step_with(&self, state: &FVState, dt: f64, conv0: Option<&[f64]>) -> Result<FVState> {
        let r0 = state.rho.values();
        let check = |v: &[f64], stage: &str| -> Result<()> {
            if let Some(bad) = v.iter().find(|x| !(**x >= 0.0)) {
                return Err(LabError::StepFailure {
                    t: state.t,
                    reason: format!("negative density {bad:.3e} after {stage} with dt = {dt:.3e}"),
                });
            }
            Ok(())
        };
        let r1 = self.euler(r0, dt, conv0);
        check(&r1, "stage 1")?;
        let e1 = self.euler(&r1, dt, None);
        let r2: Vec<f64> = r0.iter().zip(&e1).map(|(a, b)| 0.75 * a + 0.25 * b).collect();
        check(&r2, "stage 2")?;
        let e2 = self.euler(&r2, dt, None);
        let r3: Vec<f64> = r0.iter().zip(&e2).map(|(a, b)| a / 3.0 + 2.0 / 3.0 * b).collect();
        check(&r3, "stage 3")?;
        Ok(FVState { rho: state.rho.with_values(r3)?, t: state.t + dt })
    }

    /// A step of at most `dt`, halving on negativity up to `max_halvings` times.
    pub fn advance(&self, state: &FVState, dt: f64) -> Result<(FVState, f64, u32)> {
        self.advance_with(state, dt, &self.convolution(state.rho.values()))
    }

    fn advance_with(&self, state: &FVState, dt: f64, conv: &[f64]) -> Result<(FVState, f64, u32)> {
        let mut h = dt;
        let mut last = None;
        for tries in 0..=self.cfg.max_halvings {
            match self.step_with(state, h, Some(conv)) {
                Ok(next) => return Ok((next, h, tries)),
                Err(e) => {
                    debug!("step rejected at t = {}: {e}", state.t);
                    last = Some(e);
                    h *= 0.5;
                }
            }
        }
        Err(last.unwrap_or(LabError::StepFailure { t: state.t, reason: "no attempt".into() }))
    }

    /// `(E, dE/dt)` of a cell-average density.
    pub fn measure(&self, rho: &GridFunction) -> (f64, f64) {
        self.measure_with(rho, &self.convolution(rho.values()))
    }

    fn measure_with(&self, rho: &GridFunction, conv: &[f64]) -> (f64, f64) {
        let (a, b) = energy_terms(rho, conv, self.m, self.nu);
        let v: Vec<f64> = rho.values().iter().zip(conv).map(|(r, c)| self.pressure(*r) - c).collect();
        (a - b, dissipation_from_variation(rho, &v))
    }

    fn record(&self, report: &mut EnergyReport, s: &FVState, conv: &[f64]) {
        let (e, d) = self.measure_with(&s.rho, conv);
        report.push(s.t, e, d, s.mass(), s.rho.max());
    }

    /// Integrates to `t_end`, landing exactly on each requested snapshot time.
    /// A failed step ends the run early; the partial trajectory is kept.
    pub fn evolve(&self, init: &FVState, t_end: f64, snapshot_times: &[f64]) -> Trajectory {
        let mut targets: Vec<f64> = snapshot_times.iter().copied().filter(|t| *t >= init.t && *t <= t_end).collect();
        targets.sort_by(f64::total_cmp);
        targets.dedup();
        let mut next_snap = 0;
        let mut traj = Trajectory {
            snapshots: Vec::new(),
            report: EnergyReport::default(),
            steps: 0,
            rejections: 0,
            last: init.clone(),
            failure: None,
        };
        let mut s = init.clone();
        let mut conv = self.convolution(s.rho.values());
        self.record(&mut traj.report, &s, &conv);
        let mut warned = false;
        loop {
            while next_snap < targets.len() && targets[next_snap] <= s.t {
                traj.snapshots.push(s.clone());
                next_snap += 1;
            }
            if s.t >= t_end {
                break;
            }
            let stop = targets.get(next_snap).copied().unwrap_or(t_end).min(t_end);
            let mut dt = self.stable_dt_with(s.rho.values(), &conv);
            let snap = s.t + dt >= stop;
            if snap {
                dt = stop - s.t;
            }
            match self.advance_with(&s, dt, &conv) {
                Ok((next, _, tries)) => {
                    s = next;
                    if snap && tries == 0 {
                        s.t = stop;
                    }
                    traj.rejections += tries as usize;
                    traj.steps += 1;
                    conv = self.convolution(s.rho.values());
                    self.record(&mut traj.report, &s, &conv);
                }
                Err(e) => {
                    warn!("evolution stopped at t = {}: {e}", s.t);
                    traj.failure = Some(e);
                    break;
                }
            }
            if !warned {
                let v = s.rho.values();
                if v[0].max(v[v.len() - 1]) > 1e-10 {
                    warn!("density reaches the domain boundary at t = {:.3}; widen the domain", s.t);
                    warned = true;
                }
            }
        }
        traj.last = s;
        traj
    }
}

/// Output of [`FvScheme::evolve`].
#[derive(Debug)]
pub struct Trajectory {
    pub snapshots: Vec<FVState>,
    pub report: EnergyReport,
    pub steps: usize,
    pub rejections: usize,
    pub last: FVState,
    pub failure: Option<LabError>,
}

impl Trajectory {
    pub fn into_result(self) -> Result<Self> {
        match self.failure {
            Some(e) => Err(e),
            None => Ok(self),
        }
    }
}

/// Coarse uniform noise on `coarse_n` equispaced points, times a centred
/// Gaussian envelope, linearly interpolated to the cell midpoints and
/// normalized to unit mass.
pub fn random_initial_density(seed: u64, coarse_n: usize, envelope_sigma: f64, grid: Grid) -> Result<FVState> {
    if coarse_n < 2 || !(envelope_sigma > 0.0) {
        return Err(LabError::InvalidParameter(format!(
            "need coarse_n ≥ 2 and a positive envelope width (got {coarse_n}, {envelope_sigma})"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (a, b) = (grid.left(), grid.right());
    let xs: Vec<f64> = (0..coarse_n).map(|i| a + (b - a) * i as f64 / (coarse_n - 1) as f64).collect();
    let ys: Vec<f64> = (0..coarse_n).map(|_| rng.gen::<f64>()).collect();
    let c = 0.5 * (a + b);
    FVState::normalized_from_fn(grid, |x| {
        let z = (x - c) / envelope_sigma;
        linear_interp(&xs, &ys, x) * (-0.5 * z * z).exp()
    })
}

/// Unit-mass Gaussian `e^{-x²/(2σ²)}` sampled at cell midpoints.
pub fn gaussian_initial_density(grid: Grid, sigma2: f64) -> Result<FVState> {
    FVState::normalized_from_fn(grid, |x| (-x * x / (2.0 * sigma2)).exp())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diagnostics::Barenblatt;
    use crate::kernels::Kernel;
    use crate::steady::{solve_steady, SteadyOptions};

    fn scheme(kernel: Option<Kernel>, m: f64, nu: f64, grid: Grid, order: Order) -> FvScheme {
        let cfg = SchemeConfig { order, ..Default::default() };
        FvScheme::new(kernel.as_ref(), m, nu, grid, cfg).unwrap()
    }

    fn blob(grid: Grid, c: f64, w: f64) -> FVState {
        FVState::normalized_from_fn(grid, |x| (-(x - c) * (x - c) / (2.0 * w * w)).exp()).unwrap()
    }

    #[test]
    fn constant_state_has_no_interior_velocity() {
        let g = Grid::symmetric(20.0, 400).unwrap();
        let s = scheme(Some(Kernel::Gaussian), 2.0, 0.7, g, Order::Second);
        let rho = vec![0.3; 400];
        let u = s.velocities(&rho);
        assert_eq!(u.len(), 399);
        for (j, v) in u.iter().enumerate() {
            let x = g.node(j + 1);
            if x.abs() < 10.0 {
                assert!(v.abs() < 1e-12, "{x}: {v}");
            }
        }
    }

    #[test]
    fn attraction_points_toward_the_blob() {
        let g = Grid::symmetric(10.0, 400).unwrap();
        let s = scheme(Some(Kernel::Bessel), 3.0, 0.0, g, Order::Second);
        let st = blob(g, 2.0, 0.5);
        let u = s.interface_velocities(st.rho.values());
        for j in 1..400 {
            let x = g.node(j);
            if x < 1.5 {
                assert!(u[j] > 0.0, "{x}");
            } else if x > 2.5 {
                assert!(u[j] < 0.0, "{x}");
            }
        }
    }

    #[test]
    fn symmetric_density_gives_antisymmetric_velocity() {
        let g = Grid::symmetric(6.0, 120).unwrap();
        let s = scheme(Some(Kernel::Gaussian), 1.5, 0.4, g, Order::Second);
        let st = FVState::normalized_from_fn(g, |x| 1.0 + (x * 0.8).cos()).unwrap();
        let u = s.interface_velocities(st.rho.values());
        assert!(u[60].abs() < 1e-14);
        for j in 0..=120 {
            assert!((u[j] + u[120 - j]).abs() < 1e-13);
        }
    }

    #[test]
    fn flux_is_zero_without_velocity_and_upwind_otherwise() {
        let g = Grid::symmetric(1.0, 10).unwrap();
        let s = scheme(None, 2.0, 1.0, g, Order::First);
        let rho: Vec<f64> = (0..10).map(|i| 1.0 + i as f64).collect();
        assert!(s.numerical_flux(&rho, &[0.0; 11]).iter().all(|f| *f == 0.0));
        let u = vec![0.5; 11];
        let f = s.numerical_flux(&rho, &u);
        assert_eq!(f[0], 0.0);
        assert_eq!(f[10], 0.0);
        for j in 0..9 {
            assert_eq!(f[j + 1], 0.5 * rho[j]);
        }
        let f = s.numerical_flux(&rho, &[-0.5; 11]);
        for j in 0..9 {
            assert_eq!(f[j + 1], -0.5 * rho[j + 1]);
        }
    }

    #[test]
    fn minmod_reproduces_linear_data() {
        let g = Grid::symmetric(1.0, 10).unwrap();
        let s = scheme(None, 2.0, 1.0, g, Order::Second);
        let rho: Vec<f64> = (0..10).map(|i| 2.0 + 0.3 * i as f64).collect();
        let (e, w) = s.reconstruct(&rho);
        for j in 1..9 {
            assert!((e[j] - (rho[j] + 0.15)).abs() < 1e-14);
            assert!((w[j] - (rho[j] - 0.15)).abs() < 1e-14);
        }
        let peak = [0.0, 1.0, 3.0, 1.0, 0.0];
        let (e, w) = s.reconstruct(&peak);
        assert_eq!((e[2], w[2]), (3.0, 3.0));
    }

    #[test]
    fn rhs_is_conservative() {
        let g = Grid::new(-5.0, 7.0, 240).unwrap();
        for k in [Kernel::Gaussian, Kernel::Bessel, Kernel::Hat] {
            let s = scheme(Some(k), 3.0, 0.5, g, Order::Second);
            let st = random_initial_density(3, 12, 2.0, g).unwrap();
            let total: f64 = s.rhs(st.rho.values()).iter().sum::<f64>() * g.dx();
            assert!(total.abs() < 1e-14, "{total}");
        }
    }

    #[test]
    fn steady_state_rhs_vanishes_under_refinement() {
        let ss = solve_steady(Kernel::Bessel, 3.0, 2.0, 1600, SteadyOptions::default()).unwrap();
        let err = |n: usize| {
            let g = Grid::symmetric(3.0, n).unwrap();
            let x0 = g.left();
            let dx = g.dx();
            let v = (0..n).map(|i| ss.cell_average(x0 + i as f64 * dx, x0 + (i + 1) as f64 * dx)).collect();
            let st = FVState::from_values(g, v).unwrap();
            let s = scheme(Some(Kernel::Bessel), 3.0, ss.nu, g, Order::Second);
            s.rhs(st.rho.values()).iter().fold(0.0_f64, |a, r| a.max(r.abs()))
        };
        let (a, b) = (err(100), err(200));
        assert!(b < a && a / b > 1.8, "{a} {b}");
    }

    #[test]
    fn porous_medium_rhs_matches_barenblatt() {
        let b = Barenblatt::new(2.0, 1.0, 1.0, 1.0).unwrap();
        let err = |n: usize| {
            let g = Grid::symmetric(4.0, n).unwrap();
            let s = scheme(None, 2.0, 1.0, g, Order::Second);
            let k = 1e-4;
            let now = b.cell_averages(&g, 1.0);
            let plus = b.cell_averages(&g, 1.0 + k);
            let minus = b.cell_averages(&g, 1.0 - k);
            let r = s.rhs(now.values());
            // L¹: the moving front makes the cell-average derivative jump
            (0..n).map(|i| (r[i] - (plus.values()[i] - minus.values()[i]) / (2.0 * k)).abs()).sum::<f64>() * g.dx()
        };
        let (a, c) = (err(200), err(800));
        assert!(c < a / 3.0, "{a} {c}");
    }

    #[test]
    fn step_leaves_equilibrium_unchanged_and_conserves_mass() {
        let g = Grid::symmetric(3.0, 60).unwrap();
        let s = scheme(None, 2.0, 1.0, g, Order::Second);
        let st = FVState::from_values(g, vec![0.25; 60]).unwrap();
        let next = s.step_ssprk3(&st, 0.01).unwrap();
        assert_eq!(next.rho.values(), st.rho.values());
        let s = scheme(Some(Kernel::Gaussian), 3.0, 0.3, g, Order::Second);
        let st = blob(g, 0.4, 0.6);
        let dt = s.stable_dt(st.rho.values());
        let next = s.step_ssprk3(&st, dt).unwrap();
        assert!((next.mass() - st.mass()).abs() < 1e-14);
    }

    #[test]
    fn oversized_step_is_rejected_then_halved() {
        let g = Grid::symmetric(3.0, 60).unwrap();
        let s = scheme(Some(Kernel::Gaussian), 3.0, 0.3, g, Order::Second);
        let st = blob(g, 0.0, 0.3);
        let dt = 200.0 * s.stable_dt(st.rho.values());
        assert!(s.step_ssprk3(&st, dt).is_err());
        let (next, used, tries) = s.advance(&st, dt).unwrap();
        assert!(tries > 0 && used < dt);
        assert!(next.rho.min() >= 0.0);
    }

    #[test]
    fn temporal_order_of_ssprk3() {
        let g = Grid::symmetric(6.0, 200).unwrap();
        let s = scheme(Some(Kernel::Gaussian), 2.0, 0.5, g, Order::Second);
        let st = FVState::normalized_from_fn(g, |x| 0.1 + (-x * x).exp()).unwrap();
        let run = |steps: usize| {
            let mut x = st.clone();
            for _ in 0..steps {
                x = s.step_ssprk3(&x, 0.2 / steps as f64).unwrap();
            }
            x
        };
        let base = (0.4 / s.stable_dt(st.rho.values())).ceil() as usize;
        let (a, b, c) = (run(base), run(2 * base), run(4 * base));
        let e1 = a.rho.sup_distance(&b.rho);
        let e2 = b.rho.sup_distance(&c.rho);
        let order = (e1 / e2).log2();
        assert!(order >= 2.0, "order {order} ({e1:.3e}, {e2:.3e})");
    }

    #[test]
    fn evolution_preserves_structure() {
        let g = Grid::symmetric(8.0, 320).unwrap();
        for (k, m, nu) in [(Kernel::Gaussian, 1.5, 0.3), (Kernel::Bessel, 3.0, 0.4), (Kernel::Hat, 4.0, 0.2)] {
            let s = scheme(Some(k), m, nu, g, Order::Second);
            let init = random_initial_density(11, 10, 2.0, g).unwrap();
            let traj = s.evolve(&init, 2.0, &[0.5, 1.0]).into_result().unwrap();
            assert_eq!(traj.snapshots.len(), 2);
            assert_eq!(traj.snapshots[0].t, 0.5);
            assert!(traj.report.max_mass_drift() < 1e-12);
            assert!(traj.report.max_relative_increase() <= 1e-9, "{k}: {}", traj.report.max_relative_increase());
            assert!(traj.last.rho.min() >= 0.0);
            assert!(traj.report.dissipation.iter().all(|d| *d <= 0.0));
            assert_eq!(traj.last.t, 2.0);
        }
    }

    #[test]
    fn symmetric_data_keep_their_centre() {
        let g = Grid::symmetric(8.0, 320).unwrap();
        let s = scheme(Some(Kernel::Gaussian), 3.0, 0.5, g, Order::Second);
        let init = FVState::normalized_from_fn(g, |x| (-(x - 2.0).powi(2)).exp() + (-(x + 2.0).powi(2)).exp()).unwrap();
        let traj = s.evolve(&init, 3.0, &[]);
        assert!(traj.last.center_of_mass().abs() < 3e-10);
    }

    #[test]
    fn random_initial_density_properties() {
        let g = Grid::symmetric(30.0, 1200).unwrap();
        let a = random_initial_density(7, 40, 8.0, g).unwrap();
        let b = random_initial_density(7, 40, 8.0, g).unwrap();
        assert_eq!(a, b);
        assert!((a.mass() - 1.0).abs() < 1e-14);
        assert!(a.rho.min() >= 0.0);
        assert_ne!(a, random_initial_density(8, 40, 8.0, g).unwrap());
        let narrow = random_initial_density(5, 40, 1.0, g).unwrap();
        let c = narrow.center_of_mass();
        let inside: f64 = narrow
            .rho
            .positions()
            .iter()
            .zip(narrow.rho.values())
            .filter(|(x, _)| (*x - 0.0).abs() <= 3.0)
            .map(|(_, r)| r * g.dx())
            .sum();
        assert!(inside > 0.997, "{inside} (centre {c})");
        assert!(random_initial_density(5, 1, 1.0, g).is_err());
    }
}
