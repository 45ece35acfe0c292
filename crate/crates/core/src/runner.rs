//! Executes a resolved [`RunConfig`], writing a manifest and CSV tables into
//! its output directory.

use std::fs;
use std::path::{Path, PathBuf};

use log::{info, warn};

use crate::closed_form::{bessel_limit, gaussian_limit, i_of_c, solve_bessel_steady, BesselShoot, LimitProfile};
use crate::config::{Command, RunConfig};
use crate::diagnostics::detect_plateaus;
use crate::error::{LabError, Result};
use crate::evolution::{gaussian_initial_density, random_initial_density, FvScheme, SchemeConfig, Trajectory};
use crate::grid::{Grid, Layout};
use crate::io::{render_manifest, Table};
use crate::kernels::Kernel;
use crate::particles::{empirical_density, evolve_particles, ParticleState, RepulsionLaw};
use crate::steady::{nu_of_l_curve, solve_steady, solve_steady_for_nu, SteadyOptions, SteadyState};

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub dir: PathBuf,
    pub files: Vec<String>,
    pub summary: Vec<(String, String)>,
}

/// Where a run writes. An `out` ending in `.csv` names the main table
/// itself; the other files land beside it, prefixed with its stem.
struct Sink {
    dir: PathBuf,
    file: Option<(String, String)>,
    primary: &'static str,
    files: Vec<String>,
    summary: Vec<(String, String)>,
}

impl Sink {
    fn new(out: &Path, primary: &'static str) -> Result<Self> {
        let is_csv = out.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv"));
        let (dir, file) = if is_csv {
            let dir = out.parent().map(Path::to_path_buf).unwrap_or_default();
            let name = out.file_name().unwrap_or_default().to_string_lossy().into_owned();
            let stem = out.file_stem().unwrap_or_default().to_string_lossy().into_owned();
            (dir, Some((name, stem)))
        } else {
            (out.to_path_buf(), None)
        };
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(&dir)?;
        }
        Ok(Self { dir, file, primary, files: Vec::new(), summary: Vec::new() })
    }

    fn name_for(&self, name: &str) -> String {
        match &self.file {
            Some((file, _)) if name == self.primary => file.clone(),
            Some((_, stem)) => format!("{stem}_{name}"),
            None => name.to_string(),
        }
    }

    fn table(&mut self, name: &str, table: &Table) -> Result<()> {
        let name = self.name_for(name);
        table.write(self.dir.join(&name))?;
        self.files.push(name);
        Ok(())
    }

    fn note(&mut self, key: &str, value: impl ToString) {
        self.summary.push((key.to_string(), value.to_string()));
    }

    fn finish(self, cfg: &RunConfig) -> Result<RunOutput> {
        let mut entries = cfg.entries();
        entries.extend(self.summary.iter().map(|(k, v)| (format!("result.{k}"), v.clone())));
        fs::write(self.dir.join(self.name_for("manifest.txt")), render_manifest(&entries))?;
        Ok(RunOutput { dir: self.dir, files: self.files, summary: self.summary })
    }
}

pub fn steady_options(cfg: &RunConfig) -> SteadyOptions {
    SteadyOptions { tol: cfg.tol, max_iter: cfg.max_iter, ..SteadyOptions::default() }
}

pub fn run(cfg: &RunConfig) -> Result<RunOutput> {
    let primary = match cfg.command {
        Command::Steady | Command::Bessel | Command::Limit => "profile.csv",
        Command::Evolve => "energy.csv",
        Command::Particles => "positions.csv",
        Command::Sweep => "nu_of_l.csv",
    };
    let mut sink = Sink::new(&cfg.out_dir, primary)?;
    info!("running {} into {}", cfg.command, cfg.out_dir.display());
    match cfg.command {
        Command::Steady => run_steady(cfg, &mut sink)?,
        Command::Bessel => run_bessel(cfg, &mut sink)?,
        Command::Limit => run_limit(cfg, &mut sink)?,
        Command::Evolve => run_evolve(cfg, &mut sink)?,
        Command::Particles => run_particles(cfg, &mut sink)?,
        Command::Sweep => run_sweep(cfg, &mut sink)?,
    }
    sink.finish(cfg)
}

pub fn steady_table(ss: &SteadyState) -> Table {
    let full = ss.reflected();
    let mut t = Table::new(&["x", "rho"])
        .meta("kernel", ss.kernel)
        .meta("m", ss.m)
        .meta("nu", ss.nu)
        .meta("L", ss.support_half_width())
        .meta("C", ss.c)
        .meta("residual", ss.residual_sup);
    for (x, r) in full.positions().into_iter().zip(full.values()) {
        t.push(vec![x, *r]);
    }
    t
}

fn note_steady(sink: &mut Sink, ss: &SteadyState) {
    sink.note("nu", format!("{:?}", ss.nu));
    sink.note("L", format!("{:?}", ss.support_half_width()));
    sink.note("C", format!("{:?}", ss.c));
    sink.note("iterations", ss.iterations);
    sink.note("residual_sup", format!("{:e}", ss.residual_sup));
}

fn run_steady(cfg: &RunConfig, sink: &mut Sink) -> Result<()> {
    let opts = steady_options(cfg);
    let ss = match (cfg.l, cfg.nu) {
        (Some(l), None) => solve_steady(cfg.kernel, cfg.m, l, cfg.n_cells, opts)?,
        (None, Some(nu)) => solve_steady_for_nu(cfg.kernel, cfg.m, nu, cfg.cells_per_unit, 2.0, opts)?,
        _ => return Err(LabError::Usage("steady takes exactly one of nu and L".into())),
    };
    sink.table("profile.csv", &steady_table(&ss))?;
    note_steady(sink, &ss);
    Ok(())
}

/// `I(C̄)` on `points` equispaced values below the feasibility bound;
/// infeasible points are skipped.
pub fn i_scan_table(nubar: f64, m: f64, points: usize) -> Table {
    let cmax = BesselShoot::c_upper_bound(nubar, m) * (1.0 - 1e-9);
    let mut t = Table::new(&["cbar", "I"]).meta("nubar", nubar).meta("m", m);
    for k in 1..=points {
        let c = cmax * k as f64 / points as f64;
        match i_of_c(c, nubar, m) {
            Ok(i) => t.push(vec![c, i]),
            Err(e) => warn!("I(C̄) undefined at C̄ = {c}: {e}"),
        }
    }
    t
}

fn run_bessel(cfg: &RunConfig, sink: &mut Sink) -> Result<()> {
    if cfg.kernel != Kernel::Bessel {
        warn!("bessel command always uses the bessel kernel (config says {})", cfg.kernel);
    }
    let nubar = cfg.nu.ok_or_else(|| LabError::Usage("bessel needs nu".into()))?;
    let scan = i_scan_table(nubar, cfg.m, 100);
    sink.table("i_scan.csv", &scan)?;
    let bs = solve_bessel_steady(nubar, cfg.m, cfg.n_cells)?;
    sink.table("profile.csv", &steady_table(&bs.steady))?;
    sink.note("cbar", format!("{:?}", bs.shoot.cbar));
    sink.note("sign_changes", bs.sign_changes);
    note_steady(sink, &bs.steady);
    Ok(())
}

pub fn limit_profile(kernel: Kernel, m: f64) -> Result<LimitProfile> {
    match kernel {
        Kernel::Gaussian => gaussian_limit(m),
        Kernel::Bessel => bessel_limit(m),
        Kernel::Hat => Err(LabError::InvalidParameter("no limiting profile is available for the hat kernel".into())),
    }
}

fn run_limit(cfg: &RunConfig, sink: &mut Sink) -> Result<()> {
    let lp = limit_profile(cfg.kernel, cfg.m)?;
    let grid = Grid::symmetric(cfg.half_width, cfg.n_cells)?;
    let mut t = Table::new(&["x", "rho"]).meta("kernel", cfg.kernel).meta("m", cfg.m).meta("nu_inf", lp.nu_inf);
    for x in grid.nodes() {
        t.push(vec![x, lp.density(x)]);
    }
    sink.table("profile.csv", &t)?;
    sink.note("nu_inf", format!("{:?}", lp.nu_inf));
    Ok(())
}

pub fn energy_table(traj: &Trajectory) -> Table {
    let r = &traj.report;
    let d = r.dedt();
    let mut t = Table::new(&["t", "E", "dEdt", "mass", "max_rho"]);
    for i in 0..r.len() {
        t.push(vec![r.times[i], r.energy[i], d[i], r.mass[i], r.max_rho[i]]);
    }
    t
}

pub fn snapshots_table(traj: &Trajectory) -> Table {
    let mut t = Table::new(&["t", "x", "rho"]);
    for s in &traj.snapshots {
        for (x, r) in s.rho.positions().into_iter().zip(s.rho.values()) {
            t.push(vec![s.t, x, *r]);
        }
    }
    t
}

/// Evolves the configured datum and returns the trajectory without writing.
pub fn evolve_trajectory(cfg: &RunConfig) -> Result<Trajectory> {
    let nu = cfg.nu.ok_or_else(|| LabError::Usage("evolve needs nu".into()))?;
    let grid = Grid::symmetric(cfg.half_width, cfg.n_cells)?;
    let init = match cfg.sigma2 {
        Some(s2) => gaussian_initial_density(grid, s2)?,
        None => random_initial_density(cfg.seed, cfg.coarse, cfg.envelope, grid)?,
    };
    let sc = SchemeConfig { order: cfg.order, cfl: cfg.cfl, ..SchemeConfig::default() };
    let scheme = FvScheme::new(Some(&cfg.kernel), cfg.m, nu, grid, sc)?;
    scheme.evolve(&init, cfg.t_end, &cfg.snapshot_times()).into_result()
}

fn run_evolve(cfg: &RunConfig, sink: &mut Sink) -> Result<()> {
    let traj = evolve_trajectory(cfg)?;
    let e0 = traj.report.energy[0].abs();
    let ev = detect_plateaus(&traj.report, 1e-2 * e0, 1e-6 * e0);
    let mut events = Table::new(&["t", "drop"]);
    for (t, drop) in &ev.mergers {
        events.push(vec![*t, *drop]);
    }
    sink.table("energy.csv", &energy_table(&traj).meta("kernel", cfg.kernel).meta("m", cfg.m))?;
    sink.table("events.csv", &events)?;
    sink.table("snapshots.csv", &snapshots_table(&traj))?;
    sink.note("steps", traj.steps);
    sink.note("rejections", traj.rejections);
    sink.note("final_energy", format!("{:?}", traj.report.energy.last().copied().unwrap_or(f64::NAN)));
    sink.note("mass_drift", format!("{:e}", traj.report.max_mass_drift()));
    sink.note("mergers", ev.mergers.len());
    Ok(())
}

fn run_particles(cfg: &RunConfig, sink: &mut Sink) -> Result<()> {
    let nu = cfg.nu.ok_or_else(|| LabError::Usage("particles needs nu".into()))?;
    let a = cfg.envelope;
    let init = ParticleState::from_quantiles(cfg.particles, |u| a * (2.0 * u - 1.0))?;
    let law = RepulsionLaw::new(nu, cfg.m)?;
    let times = cfg.snapshot_times();
    let traj = evolve_particles(&init, Some(&cfg.kernel), &law, cfg.t_end, cfg.dt_max, &times, 100)?;
    let mut energy = Table::new(&["t", "E"]);
    for (t, e) in traj.times.iter().zip(&traj.energy) {
        energy.push(vec![*t, *e]);
    }
    let mut columns = vec!["t".to_string()];
    columns.extend((1..=cfg.particles).map(|i| format!("X_{i}")));
    let columns: Vec<&str> = columns.iter().map(String::as_str).collect();
    let mut pos = Table::new(&columns);
    for s in &traj.snapshots {
        let mut row = vec![s.t];
        row.extend_from_slice(s.positions());
        pos.push(row);
    }
    let last = &traj.last;
    let c = last.center_of_mass();
    let reach = last.positions().iter().map(|x| (x - c).abs()).fold(0.0, f64::max);
    let grid = Grid::new(c - 1.5 * reach, c + 1.5 * reach, cfg.n_cells)?;
    let rho = empirical_density(last, grid, Layout::Cell)?;
    let mut dens = Table::new(&["x", "rho"]);
    for (x, r) in rho.positions().into_iter().zip(rho.values()) {
        dens.push(vec![x, *r]);
    }
    sink.table("energy.csv", &energy)?;
    sink.table("positions.csv", &pos)?;
    sink.table("density.csv", &dens)?;
    sink.note("steps", traj.steps);
    sink.note("halvings", traj.halvings);
    sink.note("max_relative_energy_increase", format!("{:e}", traj.max_relative_increase()));
    Ok(())
}

fn run_sweep(cfg: &RunConfig, sink: &mut Sink) -> Result<()> {
    let rows = nu_of_l_curve(cfg.kernel, cfg.m, &cfg.ls, cfg.n_cells, steady_options(cfg));
    let mut t = Table::new(&["L", "nu", "C", "residual_sup"]).meta("kernel", cfg.kernel).meta("m", cfg.m);
    let mut failures = 0;
    for row in &rows {
        match &row.result {
            Ok(ss) => t.push(vec![row.l, ss.nu, ss.c, ss.residual_sup]),
            Err(e) => {
                warn!("sweep point L = {} failed: {e}", row.l);
                failures += 1;
                t.push(vec![row.l, f64::NAN, f64::NAN, f64::NAN]);
            }
        }
    }
    sink.table("nu_of_l.csv", &t)?;
    sink.note("failures", failures);
    if failures == rows.len() {
        return Err(LabError::StepFailure { t: 0.0, reason: "every sweep point failed".into() });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::parse_config;

    fn cfg(cmd: &str, dir: &Path, pairs: &[(&str, &str)]) -> RunConfig {
        let mut flags: Vec<(String, String)> = pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect();
        flags.push(("out".into(), dir.display().to_string()));
        parse_config(cmd, None, &flags).unwrap()
    }

    #[test]
    fn steady_run_writes_manifest_and_profile() {
        let dir = tempfile::tempdir().unwrap();
        let c = cfg("steady", dir.path(), &[("m", "2.2"), ("L", "2"), ("n", "100")]);
        let out = run(&c).unwrap();
        assert_eq!(out.files, vec!["profile.csv"]);
        let manifest = fs::read_to_string(dir.path().join("manifest.txt")).unwrap();
        assert!(manifest.contains("m = 2.2"));
        assert!(manifest.contains("result.nu = "));
        let t = Table::read(dir.path().join("profile.csv")).unwrap();
        assert_eq!(t.rows.len(), 201);
    }

    #[test]
    fn evolve_is_bit_reproducible() {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let pairs = [("m", "3"), ("kernel", "bessel"), ("nu", "0.6"), ("half_width", "5"), ("n", "100"), ("t_end", "0.5"), ("seed", "3")];
        run(&cfg("evolve", a.path(), &pairs)).unwrap();
        run(&cfg("evolve", b.path(), &pairs)).unwrap();
        for f in ["energy.csv", "events.csv", "snapshots.csv"] {
            let x = fs::read(a.path().join(f)).unwrap();
            let y = fs::read(b.path().join(f)).unwrap();
            assert_eq!(x, y, "{f} differs");
        }
    }

    #[test]
    fn hat_has_no_limit() {
        let dir = tempfile::tempdir().unwrap();
        let c = cfg("limit", dir.path(), &[("m", "1.5"), ("kernel", "hat")]);
        assert_eq!(run(&c).unwrap_err().exit_code(), 1);
    }
}
