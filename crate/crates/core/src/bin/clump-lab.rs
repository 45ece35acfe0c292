use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::warn;

use clump_lab::config::parse_config;
use clump_lab::presets::run_preset;
use clump_lab::runner::run;
use clump_lab::LabError;

#[derive(Parser, Debug)]
#[command(name = "clump-lab", version, about = "Steady states and dynamics of 1D aggregation-diffusion equations")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Equilibrium by eigenvalue iteration, for a given support L or coefficient nu.
    Steady(Params),
    /// Bessel-kernel equilibrium by shooting (nu is the rescaled coefficient).
    Bessel(Params),
    /// Infinite-support limiting profile for 1 < m < 2.
    Limit(Params),
    /// Finite-volume evolution from a Gaussian (sigma2) or seeded random datum.
    Evolve(Params),
    /// Particle gradient flow.
    Particles(Params),
    /// nu(L) over a list of supports.
    Sweep(Params),
    /// Data and anchor checks for one of the figure presets.
    Preset {
        /// fig1 ... fig6
        name: String,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
}

#[derive(Args, Debug, Default)]
struct Params {
    /// `key = value` file; flags override its entries.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    kernel: Option<String>,
    #[arg(long)]
    m: Option<String>,
    /// Diffusion coefficient (the rescaled one for `bessel`).
    #[arg(long, visible_alias = "nubar")]
    nu: Option<String>,
    /// Support half-width (domain half-width for `evolve`).
    #[arg(long = "L")]
    l: Option<String>,
    /// Cells (particles for `particles`).
    #[arg(long)]
    n: Option<String>,
    #[arg(long, alias = "cells_per_unit")]
    cells_per_unit: Option<String>,
    #[arg(long)]
    tol: Option<String>,
    #[arg(long, alias = "max_iter")]
    max_iter: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    /// Output directory, or a `.csv` path for the main table.
    #[arg(long, visible_alias = "out-dir")]
    out: Option<String>,
    #[arg(long, alias = "t_end")]
    t_end: Option<String>,
    #[arg(long, alias = "half_width")]
    half_width: Option<String>,
    #[arg(long)]
    sigma2: Option<String>,
    #[arg(long)]
    coarse: Option<String>,
    #[arg(long)]
    envelope: Option<String>,
    /// Count of equal intervals, or a comma-separated list of times.
    #[arg(long)]
    snapshots: Option<String>,
    #[arg(long)]
    order: Option<String>,
    #[arg(long)]
    cfl: Option<String>,
    #[arg(long)]
    particles: Option<String>,
    #[arg(long, alias = "dt_max")]
    dt_max: Option<String>,
    #[arg(long)]
    ls: Option<String>,
}

impl Params {
    fn flags(&self) -> Vec<(String, String)> {
        let pairs = [
            ("kernel", &self.kernel),
            ("m", &self.m),
            ("nu", &self.nu),
            ("L", &self.l),
            ("n", &self.n),
            ("cells_per_unit", &self.cells_per_unit),
            ("tol", &self.tol),
            ("max_iter", &self.max_iter),
            ("seed", &self.seed),
            ("out", &self.out),
            ("t_end", &self.t_end),
            ("half_width", &self.half_width),
            ("sigma2", &self.sigma2),
            ("coarse", &self.coarse),
            ("envelope", &self.envelope),
            ("snapshots", &self.snapshots),
            ("order", &self.order),
            ("cfl", &self.cfl),
            ("particles", &self.particles),
            ("dt_max", &self.dt_max),
            ("ls", &self.ls),
        ];
        pairs
            .into_iter()
            .filter_map(|(k, v)| v.as_ref().map(|v| (k.to_string(), v.clone())))
            .collect()
    }
}

fn configure_threads() {
    let Ok(raw) = std::env::var("CLUMP_LAB_THREADS") else {
        return;
    };
    match raw.trim().parse::<usize>() {
        Ok(n) if n > 0 => {
            if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
                warn!("could not cap worker threads: {e}");
            }
        }
        _ => warn!("ignoring CLUMP_LAB_THREADS={raw}: expected a positive integer"),
    }
}

fn execute(cli: Cli) -> Result<(), LabError> {
    let (name, params) = match cli.command {
        Cmd::Preset { name, out } => {
            let res = run_preset(&name, &out)?;
            print!("{}", res.anchors.render());
            println!("wrote {}", res.dir.display());
            return Ok(());
        }
        Cmd::Steady(p) => ("steady", p),
        Cmd::Bessel(p) => ("bessel", p),
        Cmd::Limit(p) => ("limit", p),
        Cmd::Evolve(p) => ("evolve", p),
        Cmd::Particles(p) => ("particles", p),
        Cmd::Sweep(p) => ("sweep", p),
    };
    let file = match &params.config {
        Some(path) => Some(
            std::fs::read_to_string(path)
                .map_err(|e| LabError::Usage(format!("cannot read {}: {e}", path.display())))?,
        ),
        None => None,
    };
    let cfg = parse_config(name, file.as_deref(), &params.flags())?;
    let out = run(&cfg)?;
    for (k, v) in &out.summary {
        println!("{k} = {v}");
    }
    println!("wrote {}", out.dir.display());
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    configure_threads();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
