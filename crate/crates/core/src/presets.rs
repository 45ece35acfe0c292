//! Figure reproduction presets. Each preset writes the data behind one figure
//! plus `anchors.txt`, a pass/fail list of the quantitative checks.

use std::fs;
use std::path::{Path, PathBuf};

use log::info;

use crate::closed_form::{gaussian_limit, solve_bessel_steady};
use crate::config::{Command, RunConfig};
use crate::diagnostics::{
    components_above, detect_plateaus, rescale_barenblatt, variation, Barenblatt, EnergyReport, PlateauEvents,
};
use crate::error::{LabError, Result};
use crate::evolution::{FVState, Order, Trajectory};
use crate::grid::GridFunction;
use crate::io::{write_manifest, AnchorReport, Table};
use crate::kernels::{AttractionKernel, Kernel};
use crate::runner::{energy_table, evolve_trajectory, i_scan_table, snapshots_table, steady_table};
use crate::quadrature::integrate;
use crate::steady::{nu_of_l_curve, solve_steady, solve_steady_for_nu, SteadyOptions, SteadyState};

pub const PRESETS: [&str; 6] = ["fig1", "fig2", "fig3", "fig4", "fig5", "fig6"];

#[derive(Debug)]
pub struct PresetOutput {
    pub dir: PathBuf,
    pub anchors: AnchorReport,
}

pub fn run_preset(name: &str, out: &Path) -> Result<PresetOutput> {
    let dir = out.join(name);
    fs::create_dir_all(&dir)?;
    info!("preset {name} into {}", dir.display());
    let mut anchors = AnchorReport::default();
    let params = match name {
        "fig1" => fig1(&dir, &mut anchors)?,
        "fig2" => fig2(&dir, &mut anchors)?,
        "fig3" => fig3(&dir, &mut anchors)?,
        "fig4" => fig4(&dir, &mut anchors)?,
        "fig5" => fig5(&dir, &mut anchors)?,
        "fig6" => fig6(&dir, &mut anchors)?,
        other => {
            return Err(LabError::Usage(format!(
                "unknown preset '{other}' (expected one of {})",
                PRESETS.join(", ")
            )))
        }
    };
    let mut entries = vec![("preset".to_string(), name.to_string())];
    entries.extend(params);
    write_manifest(&dir, &entries)?;
    anchors.write(&dir)?;
    Ok(PresetOutput { dir, anchors })
}

type Params = Vec<(String, String)>;

fn kv(k: &str, v: impl ToString) -> (String, String) {
    (k.to_string(), v.to_string())
}

fn fig1(dir: &Path, anchors: &mut AnchorReport) -> Result<Params> {
    let ms = [1.5, 1.8, 2.0, 2.2, 2.5, 3.0];
    let ls: Vec<f64> = (1..=16).map(|k| 0.5 * k as f64).collect();
    let n = 400;
    let mut t = Table::new(&["m", "L", "nu"]).meta("kernel", Kernel::Gaussian).meta("n", n);
    for m in ms {
        let rows = nu_of_l_curve(Kernel::Gaussian, m, &ls, n, SteadyOptions::default());
        let mut nus = Vec::new();
        for row in rows {
            let nu = row.result?.nu;
            t.push(vec![m, row.l, nu]);
            nus.push(nu);
        }
        let increasing = nus.windows(2).all(|w| w[1] > w[0] - 1e-9);
        anchors.check(&format!("nu(L) nondecreasing, m={m}"), increasing, format!("nu(8) = {:.6}", nus[nus.len() - 1]));
        if m < 2.0 {
            let lim = gaussian_limit(m)?.nu_inf;
            let gap = (lim - nus[nus.len() - 1]).abs();
            anchors.check(&format!("nu(8) near nu_inf, m={m}"), gap < 1e-2, format!("nu_inf = {lim:.6}, gap = {gap:.2e}"));
        }
    }
    t.write(dir.join("nu_of_l.csv"))?;
    Ok(vec![kv("kernel", "gaussian"), kv("n", n), kv("L", "0.5..8")])
}

/// Steady profiles at `L = 1..5` for `m = 2.2` and `m = 1.5`.
pub fn fig2_states() -> Result<Vec<SteadyState>> {
    let mut out = Vec::new();
    for m in [2.2, 1.5] {
        for l in 1..=5 {
            out.push(solve_steady(Kernel::Gaussian, m, l as f64, 800, SteadyOptions::default())?);
        }
    }
    Ok(out)
}

fn fig2(dir: &Path, anchors: &mut AnchorReport) -> Result<Params> {
    let states = fig2_states()?;
    let mut summary = Table::new(&["m", "L", "nu", "C"]).meta("kernel", Kernel::Gaussian);
    for ss in &states {
        let l = ss.support_half_width();
        summary.push(vec![ss.m, l, ss.nu, ss.c]);
        steady_table(ss).write(dir.join(format!("profile_m{}_L{}.csv", ss.m, l)))?;
    }
    summary.write(dir.join("nu_by_L.csv"))?;
    let anchor = states
        .iter()
        .find(|s| s.m == 1.5 && (s.support_half_width() - 5.0).abs() < 1e-12)
        .expect("L=5, m=1.5 is computed");
    anchors.check(
        "nu(L=5, m=1.5) = 0.4459 +- 0.005",
        (anchor.nu - 0.4459).abs() <= 0.005,
        format!("nu = {:.6}", anchor.nu),
    );
    Ok(vec![kv("kernel", "gaussian"), kv("n", 800), kv("m", "2.2;1.5"), kv("L", "1;2;3;4;5")])
}

/// The metastability run: `m = 4`, `ν = 0.6`, Bessel kernel, seeded random
/// datum on `[-30, 30]`.
pub fn fig3_config() -> RunConfig {
    let mut cfg = RunConfig::defaults(Command::Evolve);
    cfg.kernel = Kernel::Bessel;
    cfg.m = 4.0;
    cfg.nu = Some(0.6);
    cfg.half_width = 30.0;
    cfg.n_cells = 600;
    cfg.seed = FIG3_SEED;
    cfg.coarse = 60;
    cfg.envelope = FIG3_ENVELOPE;
    cfg.t_end = FIG3_T_END;
    cfg.snapshots = 80;
    cfg
}

pub const FIG3_SEED: u64 = 2;
pub const FIG3_ENVELOPE: f64 = 2.75;
pub const FIG3_T_END: f64 = 2000.0;
/// Flat and drop thresholds relative to `|E(0)|` for the metastable run.
pub const FIG3_FLAT: f64 = 1e-4;
pub const FIG3_DROP: f64 = 1e-2;

pub fn fig3_events(report: &EnergyReport) -> PlateauEvents {
    let e0 = report.energy[0].abs();
    detect_plateaus(report, FIG3_DROP * e0, FIG3_FLAT * e0)
}

/// Largest `|ρ̄_j - ρ_s(x_j - c)|` over the cells, where `ρ_s` is the steady
/// profile and `c` the centroid of the cells above `1e-3 · max ρ̄`, refined
/// by a local search over shifts. The finite-volume equilibrium is a
/// midpoint collocation of the steady equation, so the steady profile is
/// sampled at cell midpoints.
pub fn distance_to_steady(rho: &GridFunction, ss: &SteadyState) -> (f64, f64) {
    let g = rho.grid();
    let v = rho.values();
    let xs = g.midpoints();
    let peak = rho.max();
    let (mut w, mut wx) = (0.0, 0.0);
    for (x, r) in xs.iter().zip(v) {
        if *r > 1e-3 * peak {
            w += r;
            wx += r * x;
        }
    }
    let c0 = wx / w;
    let sup_at = |c: f64| xs.iter().zip(v).map(|(x, r)| (ss.profile(x - c) - r).abs()).fold(0.0, f64::max);
    let dx = g.dx();
    let mut best = (sup_at(c0), c0);
    for k in -100..=100 {
        let c = c0 + k as f64 * dx / 50.0;
        let s = sup_at(c);
        if s < best.0 {
            best = (s, c);
        }
    }
    best
}

/// Density level separating clumps from the near-vacuum tails.
pub const CLUMP_DENSITY: f64 = 1e-3;
/// Components carrying less than this share of the mass are remnants
/// being drained, not metastable clumps.
pub const CLUMP_MASS_SHARE: f64 = 0.02;
/// Cells below this fraction of a clump's peak are left out of its core.
pub const CLUMP_CORE: f64 = 0.1;

/// Largest `|v_i - v̄|` over the core cells of every clump, where `v` is the
/// variation and `v̄` its mass-weighted mean on that clump.
pub fn in_clump_deviation<K: AttractionKernel + ?Sized>(rho: &GridFunction, kernel: &K, m: f64, nu: f64) -> f64 {
    let v = variation(rho, kernel, m, nu);
    let (r, v) = (rho.values(), v.values());
    let total: f64 = r.iter().sum();
    let mut worst = 0.0f64;
    for (a, b) in components_above(r, CLUMP_DENSITY) {
        let mass: f64 = r[a..=b].iter().sum();
        if mass < CLUMP_MASS_SHARE * total {
            continue;
        }
        let peak = r[a..=b].iter().cloned().fold(0.0, f64::max);
        let core: Vec<usize> = (a..=b).filter(|&i| r[i] > CLUMP_CORE * peak).collect();
        let w: f64 = core.iter().map(|&i| r[i]).sum();
        let mean = core.iter().map(|&i| r[i] * v[i]).sum::<f64>() / w;
        worst = core.iter().map(|&i| (v[i] - mean).abs()).fold(worst, f64::max);
    }
    worst
}

/// [`in_clump_deviation`] maximized over the snapshots that fall inside a
/// plateau, with the number of snapshots inspected.
pub fn plateau_deviation(traj: &Trajectory, events: &PlateauEvents, kernel: Kernel, m: f64, nu: f64) -> (f64, usize) {
    let inside: Vec<&FVState> = traj
        .snapshots
        .iter()
        .filter(|s| events.plateaus.iter().any(|(a, b)| s.t >= *a && s.t <= *b))
        .collect();
    let worst = inside.iter().map(|s| in_clump_deviation(&s.rho, &kernel, m, nu)).fold(0.0, f64::max);
    (worst, inside.len())
}

/// Number of maximal runs of cells above `threshold`.
pub fn count_clumps(rho: &[f64], threshold: f64) -> usize {
    components_above(rho, threshold).len()
}

fn fig3(dir: &Path, anchors: &mut AnchorReport) -> Result<Params> {
    let cfg = fig3_config();
    let traj = evolve_trajectory(&cfg)?;
    let ev = fig3_events(&traj.report);
    write_evolution(dir, "", &traj, &ev)?;
    let ss = solve_steady_for_nu(Kernel::Bessel, 4.0, 0.6, 400.0, 2.0, SteadyOptions::default())?;
    steady_table(&ss).write(dir.join("steady.csv"))?;
    let (sup, _) = distance_to_steady(&traj.last.rho, &ss);
    anchors.check("at least 2 mergers", ev.mergers.len() >= 2, format!("{} mergers", ev.mergers.len()));
    anchors.check(
        "plateaus = mergers + 1",
        ev.plateaus.len() == ev.mergers.len() + 1,
        format!("{} plateaus", ev.plateaus.len()),
    );
    anchors.check("final profile within 1e-2 of steady state", sup <= 1e-2, format!("sup = {sup:.3e}"));
    let (dev, seen) = plateau_deviation(&traj, &ev, Kernel::Bessel, 4.0, 0.6);
    anchors.check(
        "variation constant per clump on plateaus (1e-3)",
        dev <= 1e-3 && seen > 0,
        format!("max deviation {dev:.2e} over {seen} snapshots"),
    );
    Ok(cfg.entries())
}

fn write_evolution(dir: &Path, suffix: &str, traj: &Trajectory, ev: &PlateauEvents) -> Result<()> {
    energy_table(traj).write(dir.join(format!("energy{suffix}.csv")))?;
    snapshots_table(traj).write(dir.join(format!("snapshots{suffix}.csv")))?;
    let mut events = Table::new(&["t", "drop"]);
    for (t, d) in &ev.mergers {
        events.push(vec![*t, *d]);
    }
    events.write(dir.join(format!("events{suffix}.csv")))?;
    Ok(())
}

fn fig4(dir: &Path, anchors: &mut AnchorReport) -> Result<Params> {
    let m = 3.0;
    for nubar in [0.1, 0.2, 0.3, 0.4] {
        i_scan_table(nubar, m, 100).write(dir.join(format!("i_scan_nubar{nubar}.csv")))?;
    }
    let mut curve = Table::new(&["nubar", "L", "nu", "cbar"]).meta("m", m);
    let mut ls = Vec::new();
    for k in 1..=12 {
        let nubar = 0.04 * k as f64;
        match solve_bessel_steady(nubar, m, 400) {
            Ok(bs) => {
                curve.push(vec![nubar, bs.support, bs.steady.nu, bs.shoot.cbar]);
                ls.push((bs.support, bs.steady.nu));
            }
            Err(e) => info!("no fixed point at nubar = {nubar}: {e}"),
        }
    }
    curve.write(dir.join("nu_of_l.csv"))?;
    anchors.check("fixed points found", ls.len() >= 6, format!("{} of 12", ls.len()));
    let mut sorted = ls.clone();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    let monotone = sorted.windows(2).all(|w| w[1].1 > w[0].1);
    anchors.check("nu increasing in L", monotone, format!("{} points", sorted.len()));
    let bs = solve_bessel_steady(0.3, m, 1600)?;
    let it = solve_steady(Kernel::Bessel, m, bs.support, 1600, SteadyOptions::default())?;
    let rel = (it.nu - bs.steady.nu).abs() / bs.steady.nu;
    anchors.check("shooting and iteration agree on nu", rel < 5e-3, format!("relative gap {rel:.2e}"));
    Ok(vec![kv("kernel", "bessel"), kv("m", m)])
}

pub const FIG5_HALF_WIDTH: f64 = 40.0;
pub const FIG5_CELLS: usize = 400;
/// End of the wide (`σ² = 50`) run.
pub const FIG5_T_END: f64 = 500.0;
/// End of the narrow (`σ² = 30`) run; the low-density tail drains into the
/// clump only algebraically in time.
pub const FIG5_SETTLE_T_END: f64 = 150_000.0;

/// `m = 1.8`, `ν = 0.6`, Gaussian kernel and a Gaussian datum of variance `sigma2`.
pub fn fig5_config(sigma2: f64, t_end: f64) -> RunConfig {
    let mut cfg = RunConfig::defaults(Command::Evolve);
    cfg.kernel = Kernel::Gaussian;
    cfg.m = 1.8;
    cfg.nu = Some(0.6);
    cfg.half_width = FIG5_HALF_WIDTH;
    cfg.n_cells = FIG5_CELLS;
    cfg.sigma2 = Some(sigma2);
    cfg.t_end = t_end;
    cfg.snapshots = 10;
    cfg.order = Order::Second;
    cfg
}

pub fn fig5_runs() -> Result<(Trajectory, Trajectory)> {
    Ok((
        evolve_trajectory(&fig5_config(30.0, FIG5_SETTLE_T_END))?,
        evolve_trajectory(&fig5_config(50.0, FIG5_T_END))?,
    ))
}

fn fig5_checks(
    anchors: &mut AnchorReport,
    narrow: &Trajectory,
    wide: &Trajectory,
) -> Result<()> {
    let ss = solve_steady_for_nu(Kernel::Gaussian, 1.8, 0.6, 40.0, 4.0, SteadyOptions::default())?;
    let (sup, _) = distance_to_steady(&narrow.last.rho, &ss);
    anchors.check("sigma2=30 converges to the steady state", sup <= 2e-2, format!("sup = {sup:.3e}"));
    let e_final = *narrow.report.energy.last().expect("nonempty");
    anchors.check("sigma2=30 final energy positive", e_final > 0.0, format!("E = {e_final:.6e}"));
    let r = &wide.report;
    let m0 = r.max_rho[0];
    let m1 = *r.max_rho.last().expect("nonempty");
    let k = r.times.iter().position(|t| *t >= 0.9 * FIG5_T_END).expect("late sample");
    anchors.check(
        "sigma2=50 decays",
        m1 < 0.5 * m0 && m1 < r.max_rho[k],
        format!("max rho {m0:.4e} -> {m1:.4e}"),
    );
    Ok(())
}

fn fig5(dir: &Path, anchors: &mut AnchorReport) -> Result<Params> {
    let (narrow, wide) = fig5_runs()?;
    write_evolution(dir, "_sigma2_30", &narrow, &PlateauEvents::default())?;
    write_evolution(dir, "_sigma2_50", &wide, &PlateauEvents::default())?;
    fig5_checks(anchors, &narrow, &wide)?;
    Ok(fig5_params())
}

fn fig5_params() -> Params {
    let mut p = fig5_config(30.0, FIG5_SETTLE_T_END).entries();
    p.retain(|(k, _)| k != "sigma2" && k != "t_end");
    p.push(kv("sigma2", "30;50"));
    p.push(kv("t_end", format!("{FIG5_SETTLE_T_END};{FIG5_T_END}")));
    p
}

/// Sup distance between the rescaled density and the rescaled Barenblatt
/// profile of the same mass, the latter averaged exactly over the rescaled
/// cells (centred at the centre of mass).
pub fn rescaled_barenblatt_distance(state: &FVState, m: f64, nu: f64) -> Result<f64> {
    let scaled = rescale_barenblatt(&state.rho)?;
    let b = Barenblatt::new(m, nu, state.mass(), 1.0)?;
    let (peak, r) = (b.density(0.0, 0.0), b.support_radius(0.0));
    let g = *scaled.grid();
    let xs = scaled.positions();
    let c = xs.iter().zip(scaled.values()).map(|(x, v)| x * v).sum::<f64>() / scaled.values().iter().sum::<f64>();
    // ρ̃(x̃) = ρ_B(x̃/peak)/peak, so a cell average is ∫ρ_B over the preimage / Δx̃
    let reference = |i: usize| {
        let lo = ((g.node(i) - c) / peak).max(-r);
        let hi = ((g.node(i + 1) - c) / peak).min(r);
        if hi <= lo {
            0.0
        } else {
            integrate(|y| b.density(y, 0.0), lo, hi, 1e-15, 1e-12).0 / g.dx()
        }
    };
    Ok(scaled.values().iter().enumerate().map(|(i, v)| (reference(i) - v).abs()).fold(0.0, f64::max))
}

fn fig6(dir: &Path, anchors: &mut AnchorReport) -> Result<Params> {
    let (narrow, wide) = fig5_runs()?;
    let mut energy = Table::new(&["t", "E_sigma2_30", "E_sigma2_50"]);
    let n = narrow.report.len().min(wide.report.len());
    let stride = (n / 2000).max(1);
    for i in (0..n).step_by(stride) {
        if narrow.report.times[i] != wide.report.times[i] {
            break;
        }
        energy.push(vec![narrow.report.times[i], narrow.report.energy[i], wide.report.energy[i]]);
    }
    energy_table(&narrow).write(dir.join("energy_sigma2_30.csv"))?;
    energy_table(&wide).write(dir.join("energy_sigma2_50.csv"))?;
    let mut t = Table::new(&["t", "x", "rho_rescaled"]);
    let mut dist = Table::new(&["t", "sup_distance"]);
    let mut ds = Vec::new();
    for s in wide.snapshots.iter().filter(|s| s.t > 0.0) {
        let scaled = rescale_barenblatt(&s.rho)?;
        for (x, r) in scaled.positions().into_iter().zip(scaled.values()) {
            t.push(vec![s.t, x, *r]);
        }
        let d = rescaled_barenblatt_distance(s, 1.8, 0.6)?;
        dist.push(vec![s.t, d]);
        ds.push(d);
    }
    t.write(dir.join("rescaled_sigma2_50.csv"))?;
    dist.write(dir.join("barenblatt_distance.csv"))?;
    let decreasing = ds.windows(2).all(|w| w[1] <= w[0]);
    anchors.check(
        "rescaled spreading solution approaches Barenblatt",
        decreasing,
        format!("distances {:?}", ds.iter().map(|d| format!("{d:.3e}")).collect::<Vec<_>>()),
    );
    let inc = narrow.report.max_relative_increase().max(wide.report.max_relative_increase());
    anchors.check("energies nonincreasing", inc <= 1e-9, format!("max relative increase {inc:.2e}"));
    Ok(fig5_params())
}
