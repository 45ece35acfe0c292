//! Exact and semi-analytic equilibria.
//!
//! * Infinite-support limits `ν∞ ρ∞^{m-1} = G∗ρ∞` for `1 < m < 2`: a Gaussian
//!   for the Gaussian kernel and a `sech`-power for the Bessel kernel.
//! * For the Bessel kernel `e^{-|x|}/2`, `p = ρ^{m-1}` solves the ODE
//!   `p - p'' = (p^{1/(m-1)} - C)/ν` and the profile is known implicitly as
//!   `x(p) = ∫_p^{p(0)} B(q)^{-1/2} dq`. With `p(0) = 1` the unknown constant
//!   `C̄` is a fixed point of `I(C̄)`; rescaling to unit mass then yields ν(L).

use std::f64::consts::PI;

use log::{debug, info};

use crate::error::{LabError, Result};
use crate::grid::{Grid, GridFunction, Layout};
use crate::kernels::Kernel;
use crate::quadrature::{adaptive_panels, bisect, brent, gk15, integrate};
use crate::steady::{residual_sup, Normalization, SteadyState};

const QUAD_TOL: f64 = 1e-11;

fn check_sub_quadratic(m: f64) -> Result<()> {
    if !(m > 1.0 && m < 2.0) {
        return Err(LabError::InvalidParameter(format!(
            "limiting profiles exist only for 1 < m < 2, got m = {m}"
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LimitShape {
    /// `e^{-x²/(2σ²)} / √(2πσ²)`
    Gaussian { sigma2: f64 },
    /// `amplitude · sech(rate·x)^{power}`
    SechPower { amplitude: f64, rate: f64, power: f64 },
}

/// Solution of the infinite-support eigenvalue problem `ν∞ ρ∞^{m-1} = G∗ρ∞`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LimitProfile {
    pub kernel: Kernel,
    pub m: f64,
    pub nu_inf: f64,
    pub shape: LimitShape,
}

impl LimitProfile {
    pub fn density(&self, x: f64) -> f64 {
        match self.shape {
            LimitShape::Gaussian { sigma2 } => (-x * x / (2.0 * sigma2)).exp() / (2.0 * PI * sigma2).sqrt(),
            LimitShape::SechPower { amplitude, rate, power } => amplitude * sech(rate * x).powf(power),
        }
    }

    pub fn sigma2(&self) -> Option<f64> {
        match self.shape {
            LimitShape::Gaussian { sigma2 } => Some(sigma2),
            LimitShape::SechPower { .. } => None,
        }
    }

    /// `p∞ = ρ∞^{m-1}`
    pub fn p(&self, x: f64) -> f64 {
        self.density(x).powf(self.m - 1.0)
    }

    /// Analytic `p∞'`.
    pub fn p_derivative(&self, x: f64) -> f64 {
        let e = self.m - 1.0;
        match self.shape {
            LimitShape::Gaussian { sigma2 } => -e * x / sigma2 * self.p(x),
            LimitShape::SechPower { rate, power, .. } => -e * power * rate * (rate * x).tanh() * self.p(x),
        }
    }

    /// `p∞(0)`; for the Bessel kernel this is `(mν∞/(2(m-1)))^{(m-1)/(2-m)}`.
    pub fn p_at_origin(&self) -> f64 {
        self.p(0.0)
    }

    pub fn grid_function(&self, grid: Grid, layout: Layout) -> GridFunction {
        GridFunction::from_fn(grid, layout, |x| self.density(x))
    }
}

fn sech(x: f64) -> f64 {
    let a = x.abs();
    let e = (-a).exp();
    2.0 * e / (1.0 + e * e)
}

/// Gaussian-kernel limit: `σ² = (m-1)/(2-m)`,
/// `ν∞ = (2π)^{m/2-1} (m-1)^{(m-1)/2} (2-m)^{(2-m)/2}`.
pub fn gaussian_limit(m: f64) -> Result<LimitProfile> {
    check_sub_quadratic(m)?;
    let sigma2 = (m - 1.0) / (2.0 - m);
    let nu_inf = (2.0 * PI).powf(0.5 * m - 1.0) * (m - 1.0).powf(0.5 * (m - 1.0)) * (2.0 - m).powf(0.5 * (2.0 - m));
    Ok(LimitProfile { kernel: Kernel::Gaussian, m, nu_inf, shape: LimitShape::Gaussian { sigma2 } })
}

/// Bessel-kernel limit
/// `ρ∞(x) = (mν∞/(2(m-1)))^{1/(2-m)} [1 - tanh²((2-m)x/(2(m-1)))]^{1/(2-m)}`,
/// with ν∞ fixed by a root solve of the unit-mass condition.
pub fn bessel_limit(m: f64) -> Result<LimitProfile> {
    check_sub_quadratic(m)?;
    let rate = (2.0 - m) / (2.0 * (m - 1.0));
    let power = 2.0 / (2.0 - m);
    // ∫_ℝ sech(u)^power du, independent of ν
    let (half, _) = integrate(|u| sech(u).powf(power), 0.0, 60.0, 1e-15, 1e-14);
    let shape_integral = 2.0 * half / rate;
    let mass = |nu: f64| (m * nu / (2.0 * (m - 1.0))).powf(1.0 / (2.0 - m)) * shape_integral;
    let mut hi = 1.0;
    while mass(hi) < 1.0 {
        hi *= 2.0;
    }
    let nu_inf = brent(|nu| Ok(mass(nu) - 1.0), 0.0, hi, 1e-15)?;
    let amplitude = (m * nu_inf / (2.0 * (m - 1.0))).powf(1.0 / (2.0 - m));
    Ok(LimitProfile {
        kernel: Kernel::Bessel,
        m,
        nu_inf,
        shape: LimitShape::SechPower { amplitude, rate, power },
    })
}

/// Parameters of the implicit Bessel-kernel profile with `p(0) = p0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BesselShoot {
    pub p0: f64,
    pub cbar: f64,
    pub nubar: f64,
    pub m: f64,
}

impl BesselShoot {
    pub fn new(p0: f64, cbar: f64, nubar: f64, m: f64) -> Result<Self> {
        if !(p0 > 0.0 && p0 <= 1.0) {
            return Err(LabError::InvalidParameter(format!("p(0) must lie in (0, 1], got {p0}")));
        }
        if !(nubar > 0.0) || !(m > 1.0) || !(cbar >= 0.0) {
            return Err(LabError::InvalidParameter(format!(
                "need ν̄ > 0, m > 1, C̄ ≥ 0 (got ν̄ = {nubar}, m = {m}, C̄ = {cbar})"
            )));
        }
        Ok(Self { p0, cbar, nubar, m })
    }

    /// `p(0) = 1` normalization.
    pub fn normalized(cbar: f64, nubar: f64, m: f64) -> Result<Self> {
        Self::new(1.0, cbar, nubar, m)
    }

    /// Largest admissible `C̄` for `p(0) = 1`: `min(1 - ν̄, (m-1)/m - ν̄/2)`.
    pub fn c_upper_bound(nubar: f64, m: f64) -> f64 {
        (1.0 - nubar).min((m - 1.0) / m - 0.5 * nubar)
    }

    fn q(&self) -> f64 {
        self.m / (self.m - 1.0)
    }

    fn a(&self) -> f64 {
        2.0 * (self.m - 1.0) / (self.m * self.nubar)
    }

    fn b(&self) -> f64 {
        2.0 * self.cbar / self.nubar
    }

    /// `B(p0 - s) / s` for `s ∈ (0, p0]`, evaluated without cancellation.
    fn bracket_over_s(&self, s: f64) -> f64 {
        let p0 = self.p0;
        let q = self.q();
        let powdiff = p0.powf(q) * (q * (-s / p0).ln_1p()).exp_m1();
        if s == 0.0 {
            return self.bracket_slope();
        }
        -2.0 * p0 + s - self.a() * powdiff / s - self.b()
    }

    /// `-B'(p0)`, the limit of `B(p0 - s)/s` as `s → 0`.
    fn bracket_slope(&self) -> f64 {
        -2.0 * self.p0 + self.a() * self.q() * self.p0.powf(self.q() - 1.0) - self.b()
    }

    /// The bracket `B(p)` of the implicit solution.
    pub fn bracket(&self, p: f64) -> f64 {
        let s = self.p0 - p;
        s * self.bracket_over_s(s)
    }

    /// Checks `B > 0` on `[0, p0)`: the slope at `p0` must be strictly
    /// negative (`p''(0) < 0`) and `B(0) ≥ 0`; the interior is scanned.
    pub fn check_feasible(&self) -> Result<()> {
        if self.bracket_slope() <= 0.0 {
            return Err(LabError::Infeasible(format!(
                "p''(0) ≥ 0 at C̄ = {}, ν̄ = {} (C̄ must stay below 1 - ν̄ for p(0) = 1)",
                self.cbar, self.nubar
            )));
        }
        let b0 = self.bracket(0.0);
        if b0 < 0.0 {
            return Err(LabError::Infeasible(format!(
                "bracket is negative at p = 0 ({b0:.3e}) for C̄ = {}, ν̄ = {}",
                self.cbar, self.nubar
            )));
        }
        for k in 1..200 {
            let s = self.p0 * k as f64 / 200.0;
            if self.bracket_over_s(s) <= 0.0 {
                return Err(LabError::Infeasible(format!(
                    "bracket is negative at p = {}",
                    self.p0 - s
                )));
            }
        }
        Ok(())
    }

    /// `dx/dt` after the substitution `p = p0 - t²`, bounded at `t = 0`.
    fn dx_dt(&self, t: f64) -> f64 {
        2.0 / self.bracket_over_s(t * t).max(0.0).sqrt()
    }

    fn t_max(&self) -> f64 {
        self.p0.sqrt()
    }

    fn x_of_t(&self, t: f64) -> f64 {
        integrate(|u| self.dx_dt(u), 0.0, t, 1e-14, QUAD_TOL).0
    }

    /// `x(p)`, the inverse profile; `x(p0) = 0`, decreasing in `p`.
    pub fn implicit_x(&self, p: f64) -> Result<f64> {
        self.check_feasible()?;
        if !(0.0..=self.p0).contains(&p) {
            return Err(LabError::InvalidParameter(format!("p = {p} outside [0, {}]", self.p0)));
        }
        Ok(self.x_of_t((self.p0 - p).sqrt()))
    }

    /// `L = x(0)`.
    pub fn support_length(&self) -> Result<f64> {
        Ok(self.table()?.support())
    }

    /// Panels in `t` resolving both `dx/dt` and `ρ̄ dx/dt`, with cumulative `x`.
    pub fn table(&self) -> Result<ShootTable> {
        self.check_feasible()?;
        let e = 1.0 / (self.m - 1.0);
        let tmax = self.t_max();
        let panels = adaptive_panels(
            |t| self.dx_dt(t) * (1.0 + (self.p0 - t * t).max(0.0).powf(e)),
            0.0,
            tmax,
            1e-15,
            1e-13,
        );
        let mut x = 0.0;
        let mut rows = Vec::with_capacity(panels.len());
        for (lo, hi) in panels {
            rows.push((lo, hi, x));
            x += gk15(&mut |u| self.dx_dt(u), lo, hi).0;
        }
        Ok(ShootTable { shoot: *self, rows, support: x })
    }

    /// `p(x)` for `0 ≤ x ≤ L`.
    pub fn p_at(&self, x: f64) -> Result<f64> {
        Ok(self.table()?.p_at(x))
    }

    /// `∫_{-L}^{L} p^{1/(m-1)} dx`.
    pub fn mass(&self) -> Result<f64> {
        Ok(self.table()?.mass())
    }

    /// `I = ½ ∫₀^L (e^{-L-y} + e^{-L+y}) p(y)^{1/(m-1)} dy`, i.e. `G∗ρ(L)`.
    pub fn i_value(&self) -> Result<f64> {
        Ok(self.table()?.i_value())
    }
}

/// Tabulated implicit profile: Kronrod panels in `t = √(p0 - p)`.
#[derive(Debug, Clone)]
pub struct ShootTable {
    shoot: BesselShoot,
    rows: Vec<(f64, f64, f64)>,
    support: f64,
}

impl ShootTable {
    pub fn support(&self) -> f64 {
        self.support
    }

    fn rho_bar(&self, t: f64) -> f64 {
        (self.shoot.p0 - t * t).max(0.0).powf(1.0 / (self.shoot.m - 1.0))
    }

    /// `x(t)`
    pub fn x_at(&self, t: f64) -> f64 {
        let k = self.rows.partition_point(|r| r.1 < t).min(self.rows.len() - 1);
        let (lo, _, x0) = self.rows[k];
        x0 + gk15(&mut |u| self.shoot.dx_dt(u), lo, t).0
    }

    /// `∫ g(t, x(t)) dx/dt dt` over `[0, √p0]`.
    fn integrate_along<G: Fn(f64, f64) -> f64>(&self, g: G) -> f64 {
        self.rows
            .iter()
            .map(|&(lo, hi, x0)| {
                gk15(
                    &mut |t| {
                        let x = x0 + gk15(&mut |u| self.shoot.dx_dt(u), lo, t).0;
                        g(t, x) * self.shoot.dx_dt(t)
                    },
                    lo,
                    hi,
                )
                .0
            })
            .sum()
    }

    pub fn mass(&self) -> f64 {
        2.0 * self.integrate_along(|t, _| self.rho_bar(t))
    }

    pub fn i_value(&self) -> f64 {
        let l = self.support;
        self.integrate_along(|t, y| 0.5 * ((-l - y).exp() + (y - l).exp()) * self.rho_bar(t))
    }

    /// `p(x)` by safeguarded Newton on `x(t) = x`.
    pub fn p_at(&self, x: f64) -> f64 {
        let s = &self.shoot;
        if x <= 0.0 {
            return s.p0;
        }
        if x >= self.support {
            return 0.0;
        }
        let (mut lo, mut hi) = (0.0, s.t_max());
        let mut t = s.t_max() * x / self.support;
        for _ in 0..200 {
            let r = self.x_at(t) - x;
            if r.abs() < 1e-14 * self.support.max(1.0) {
                break;
            }
            if r > 0.0 {
                hi = t;
            } else {
                lo = t;
            }
            let mut next = t - r / s.dx_dt(t);
            if !(next > lo && next < hi) {
                next = 0.5 * (lo + hi);
            }
            if (next - t).abs() < 1e-16 {
                t = next;
                break;
            }
            t = next;
        }
        s.p0 - t * t
    }
}

/// `I(C̄)` for the `p(0) = 1` profile.
pub fn i_of_c(cbar: f64, nubar: f64, m: f64) -> Result<f64> {
    BesselShoot::normalized(cbar, nubar, m)?.i_value()
}

/// Map between the `ρ(0) = 1` and unit-mass normalizations: scaling by
/// `1/mass` sends `ρ → ρ/mass`, `ν → ν·mass^{m-2}`, `C → C/mass`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MassRescaling {
    pub mass: f64,
    pub m: f64,
}

impl MassRescaling {
    pub fn to_unit_mass(&self, rho: &[f64], nu: f64, c: f64) -> (Vec<f64>, f64, f64) {
        (
            rho.iter().map(|r| r / self.mass).collect(),
            nu * self.mass.powf(self.m - 2.0),
            c / self.mass,
        )
    }

    pub fn from_unit_mass(&self, rho: &[f64], nu: f64, c: f64) -> (Vec<f64>, f64, f64) {
        (
            rho.iter().map(|r| r * self.mass).collect(),
            nu * self.mass.powf(2.0 - self.m),
            c * self.mass,
        )
    }
}

#[derive(Debug, Clone)]
pub struct BesselSteady {
    /// The `p(0) = 1` parameters at the fixed point `I(C̄) = C̄`.
    pub shoot: BesselShoot,
    pub support: f64,
    /// `∫ ρ̄` of the `ρ̄(0) = 1` profile.
    pub mass_bar: f64,
    /// Unit-mass equilibrium sampled on `[0, L]`.
    pub steady: SteadyState,
    /// Sign changes of `I(C̄) - C̄` seen on the scan.
    pub sign_changes: usize,
}

/// Fixed point of `I(C̄) = C̄` by scan and bisection, then rescaled to unit mass
/// and sampled at `n_cells + 1` nodes on `[0, L]`.
pub fn solve_bessel_steady(nubar: f64, m: f64, n_cells: usize) -> Result<BesselSteady> {
    if !(nubar > 0.0 && m > 1.0) {
        return Err(LabError::InvalidParameter(format!("need ν̄ > 0 and m > 1, got {nubar}, {m}")));
    }
    let cmax = BesselShoot::c_upper_bound(nubar, m);
    if cmax <= 0.0 {
        return Err(LabError::NoCompactSteadyState(format!(
            "no admissible C̄ ≥ 0 for ν̄ = {nubar}, m = {m}"
        )));
    }
    let h = |c: f64| -> Result<f64> { Ok(i_of_c(c, nubar, m)? - c) };
    let top = cmax * (1.0 - 1e-9);
    let scan: Vec<(f64, f64)> = (0..=100)
        .map(|k| {
            let c = top * k as f64 / 100.0;
            h(c).map(|v| (c, v))
        })
        .collect::<Result<_>>()?;
    let changes: Vec<usize> = (0..100).filter(|&k| scan[k].1.signum() != scan[k + 1].1.signum()).collect();
    info!("I(C̄) - C̄ changes sign {} time(s) on [0, {top:.6}] for ν̄ = {nubar}", changes.len());
    let Some(&k) = changes.first() else {
        return Err(LabError::NoCompactSteadyState(format!(
            "I(C̄) - C̄ keeps one sign on [0, {top:.6}] for ν̄ = {nubar}, m = {m}"
        )));
    };
    let cbar = bisect(h, scan[k].0, scan[k + 1].0, 1e-10)?;
    let shoot = BesselShoot::normalized(cbar, nubar, m)?;
    let table = shoot.table()?;
    let support = table.support();
    let mass_bar = table.mass();
    debug!("bessel fixed point C̄ = {cbar:.12}, L = {support:.10}, ∫ρ̄ = {mass_bar:.10}");

    let grid = Grid::new(0.0, support, n_cells)?;
    let e = 1.0 / (m - 1.0);
    let rho_bar: Vec<f64> = grid
        .nodes()
        .iter()
        .map(|&x| table.p_at(x).max(0.0).powf(e))
        .collect();
    let scale = MassRescaling { mass: mass_bar, m };
    let (rho, nu, c) = scale.to_unit_mass(&rho_bar, nubar, cbar);
    let rho = GridFunction::new(grid, Layout::Nodal, rho)?;
    let residual = residual_sup(&Kernel::Bessel, &rho, nu, m)?;
    Ok(BesselSteady {
        shoot,
        support,
        mass_bar,
        steady: SteadyState {
            kernel: Kernel::Bessel,
            rho,
            nu,
            c,
            m,
            iterations: 0,
            residual_sup: residual,
            normalization: Normalization::UnitMass,
        },
        sign_changes: changes.len(),
    })
}
