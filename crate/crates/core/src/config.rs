//! Run configuration resolved from a `key = value` file and command-line
//! overrides.

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use log::warn;

use crate::error::{LabError, Result};
use crate::evolution::Order;
use crate::io::parse_key_values;
use crate::kernels::Kernel;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Steady,
    Bessel,
    Limit,
    Evolve,
    Particles,
    Sweep,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Steady => "steady",
            Command::Bessel => "bessel",
            Command::Limit => "limit",
            Command::Evolve => "evolve",
            Command::Particles => "particles",
            Command::Sweep => "sweep",
        }
    }
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Command {
    type Err = LabError;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "steady" => Command::Steady,
            "bessel" => Command::Bessel,
            "limit" => Command::Limit,
            "evolve" => Command::Evolve,
            "particles" => Command::Particles,
            "sweep" => Command::Sweep,
            other => return Err(LabError::Usage(format!("unknown command '{other}'"))),
        })
    }
}

pub const KEYS: &[&str] = &[
    "kernel",
    "m",
    "nu",
    "L",
    "n",
    "cells_per_unit",
    "tol",
    "max_iter",
    "seed",
    "out",
    "t_end",
    "half_width",
    "sigma2",
    "coarse",
    "envelope",
    "snapshots",
    "order",
    "cfl",
    "particles",
    "dt_max",
    "ls",
];

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub command: Command,
    pub kernel: Kernel,
    pub m: f64,
    pub nu: Option<f64>,
    pub l: Option<f64>,
    pub n_cells: usize,
    pub cells_per_unit: f64,
    pub tol: f64,
    pub max_iter: usize,
    pub seed: u64,
    pub out_dir: PathBuf,
    pub t_end: f64,
    pub half_width: f64,
    /// Gaussian initial variance; a seeded random datum is used when absent.
    pub sigma2: Option<f64>,
    pub coarse: usize,
    pub envelope: f64,
    /// Number of equispaced snapshot intervals, used when `snapshot_list` is empty.
    pub snapshots: usize,
    pub snapshot_list: Vec<f64>,
    pub order: Order,
    pub cfl: f64,
    pub particles: usize,
    pub dt_max: f64,
    pub ls: Vec<f64>,
}

impl RunConfig {
    pub fn defaults(command: Command) -> Self {
        Self {
            command,
            kernel: if command == Command::Bessel { Kernel::Bessel } else { Kernel::Gaussian },
            m: 2.0,
            nu: None,
            l: None,
            n_cells: 800,
            cells_per_unit: 160.0,
            tol: 1e-8,
            max_iter: 2000,
            seed: 0,
            out_dir: PathBuf::from("out"),
            t_end: 100.0,
            half_width: 30.0,
            sigma2: None,
            coarse: 60,
            envelope: 2.0,
            snapshots: 10,
            snapshot_list: Vec::new(),
            order: Order::Second,
            cfl: 0.4,
            particles: 400,
            dt_max: 0.05,
            ls: vec![1.0, 2.0, 3.0, 4.0, 5.0],
        }
    }

    /// Every resolved parameter, in a fixed order, for the run manifest.
    pub fn entries(&self) -> Vec<(String, String)> {
        let opt = |v: Option<f64>| v.map_or("none".to_string(), |x| format!("{x:?}"));
        let ls: Vec<String> = self.ls.iter().map(|x| format!("{x:?}")).collect();
        vec![
            ("command".into(), self.command.to_string()),
            ("kernel".into(), self.kernel.to_string()),
            ("m".into(), format!("{:?}", self.m)),
            ("nu".into(), opt(self.nu)),
            ("L".into(), opt(self.l)),
            ("n".into(), self.n_cells.to_string()),
            ("cells_per_unit".into(), format!("{:?}", self.cells_per_unit)),
            ("tol".into(), format!("{:?}", self.tol)),
            ("max_iter".into(), self.max_iter.to_string()),
            ("seed".into(), self.seed.to_string()),
            ("out".into(), self.out_dir.display().to_string()),
            ("t_end".into(), format!("{:?}", self.t_end)),
            ("half_width".into(), format!("{:?}", self.half_width)),
            ("sigma2".into(), opt(self.sigma2)),
            ("coarse".into(), self.coarse.to_string()),
            ("envelope".into(), format!("{:?}", self.envelope)),
            ("snapshots".into(), self.snapshots_entry()),
            ("order".into(), if self.order == Order::First { "1" } else { "2" }.into()),
            ("cfl".into(), format!("{:?}", self.cfl)),
            ("particles".into(), self.particles.to_string()),
            ("dt_max".into(), format!("{:?}", self.dt_max)),
            ("ls".into(), ls.join(";")),
        ]
    }

    /// Snapshot times: the explicit list when given, else `snapshots`
    /// equal intervals of `[0, t_end]`.
    pub fn snapshot_times(&self) -> Vec<f64> {
        if !self.snapshot_list.is_empty() {
            return self.snapshot_list.clone();
        }
        let k = self.snapshots.max(1);
        (0..=k).map(|i| self.t_end * i as f64 / k as f64).collect()
    }

    fn snapshots_entry(&self) -> String {
        if self.snapshot_list.is_empty() {
            self.snapshots.to_string()
        } else {
            let v: Vec<String> = self.snapshot_list.iter().map(|x| format!("{x:?}")).collect();
            v.join(";")
        }
    }

    fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "kernel" => {
                self.kernel = value
                    .parse()
                    .map_err(|e: LabError| LabError::Usage(e.to_string()))?
            }
            "m" => self.m = number(key, value)?,
            "nu" => self.nu = Some(number(key, value)?),
            // evolution runs on [-L, L]; particle runs count particles with n
            "L" if self.command == Command::Evolve => self.half_width = number(key, value)?,
            "L" => self.l = Some(number(key, value)?),
            "n" if self.command == Command::Particles => self.particles = integer(key, value)?,
            "n" => self.n_cells = integer(key, value)?,
            "cells_per_unit" => self.cells_per_unit = number(key, value)?,
            "tol" => self.tol = number(key, value)?,
            "max_iter" => self.max_iter = integer(key, value)?,
            "seed" => self.seed = integer(key, value)?,
            "out" => self.out_dir = PathBuf::from(value),
            "t_end" => self.t_end = number(key, value)?,
            "half_width" => self.half_width = number(key, value)?,
            "sigma2" => self.sigma2 = Some(number(key, value)?),
            "coarse" => self.coarse = integer(key, value)?,
            "envelope" => self.envelope = number(key, value)?,
            "snapshots" if value.contains([',', ';']) => {
                self.snapshot_list = list(key, value)?;
            }
            "snapshots" => {
                self.snapshots = integer(key, value)?;
                self.snapshot_list.clear();
            }
            "order" => {
                self.order = match value {
                    "1" | "first" => Order::First,
                    "2" | "second" => Order::Second,
                    _ => return Err(LabError::Usage(format!("order must be 1 or 2, got '{value}'"))),
                }
            }
            "cfl" => self.cfl = number(key, value)?,
            "particles" => self.particles = integer(key, value)?,
            "dt_max" => self.dt_max = number(key, value)?,
            "ls" => self.ls = list(key, value)?,
            other => return Err(LabError::Usage(format!("unknown key '{other}'"))),
        }
        Ok(())
    }

    fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(LabError::Usage(msg));
        if !(self.m > 1.0) || !self.m.is_finite() {
            return bad(format!("m must exceed 1, got {}", self.m));
        }
        for (name, v) in [("nu", self.nu), ("L", self.l), ("sigma2", self.sigma2)] {
            if let Some(v) = v {
                if !(v > 0.0 && v.is_finite()) {
                    return bad(format!("{name} must be positive, got {v}"));
                }
            }
        }
        if !(self.tol > 0.0) || !(self.t_end >= 0.0) || !(self.half_width > 0.0) || !(self.envelope > 0.0) {
            return bad("tol, t_end, half_width and envelope must be positive".into());
        }
        if !(self.cfl > 0.0 && self.cfl <= 1.0) {
            return bad(format!("cfl must lie in (0, 1], got {}", self.cfl));
        }
        if let Some(t) = self.snapshot_list.iter().find(|t| !(**t >= 0.0 && **t <= self.t_end)) {
            return bad(format!("snapshot time {t} lies outside [0, t_end = {}]", self.t_end));
        }
        if self.n_cells < 4 || self.coarse < 2 || self.particles < 2 {
            return bad("n >= 4, coarse >= 2 and particles >= 2 are required".into());
        }
        match self.command {
            Command::Steady => match (self.nu, self.l) {
                (Some(_), Some(_)) => bad("steady takes either nu or L, not both".into()),
                (None, None) => bad("steady needs nu or L".into()),
                _ => Ok(()),
            },
            Command::Bessel => {
                if self.l.is_some() {
                    return bad("bessel is parametrized by nu, not L".into());
                }
                if self.nu.is_none() {
                    return bad("bessel needs nu".into());
                }
                Ok(())
            }
            Command::Evolve | Command::Particles => {
                if self.l.is_some() {
                    // only reachable for particles; evolve reads L as the half-width
                    return bad(format!("{} takes nu, not L", self.command));
                }
                if self.nu.is_none() {
                    return bad(format!("{} needs nu", self.command));
                }
                Ok(())
            }
            Command::Sweep => {
                if self.ls.is_empty() || self.ls.iter().any(|l| !(*l > 0.0)) {
                    return bad("sweep needs a nonempty list of positive ls".into());
                }
                Ok(())
            }
            Command::Limit => Ok(()),
        }
    }
}

fn number(key: &str, value: &str) -> Result<f64> {
    value
        .trim()
        .parse::<f64>()
        .map_err(|_| LabError::Usage(format!("{key}: '{value}' is not a number")))
}

fn list(key: &str, value: &str) -> Result<Vec<f64>> {
    value
        .split([',', ';'])
        .filter(|s| !s.trim().is_empty())
        .map(|s| number(key, s))
        .collect()
}

/// Accepts `t-end` for `t_end` and the spellings `nubar` and `out_dir`.
pub fn canonical_key(key: &str) -> String {
    let k = key.trim().trim_start_matches("--").replace('-', "_");
    match k.as_str() {
        "nubar" => "nu".into(),
        "out_dir" => "out".into(),
        _ => k,
    }
}

fn integer<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse::<T>()
        .map_err(|_| LabError::Usage(format!("{key}: '{value}' is not a nonnegative integer")))
}

/// Resolves a configuration. `file` is the text of an optional config file;
/// `flags` override it key by key.
pub fn parse_config(command: &str, file: Option<&str>, flags: &[(String, String)]) -> Result<RunConfig> {
    let command: Command = command.parse()?;
    let mut merged: BTreeMap<String, String> = BTreeMap::new();
    let mut order: Vec<String> = Vec::new();
    if let Some(text) = file {
        for (k, v) in parse_key_values(text)? {
            let k = canonical_key(&k);
            if !order.contains(&k) {
                order.push(k.clone());
            }
            merged.insert(k, v);
        }
    }
    for (k, v) in flags {
        let k = &canonical_key(k);
        if let Some(old) = merged.get(k) {
            if old != v {
                warn!("flag --{k}={v} overrides config file value {old}");
            }
        } else {
            order.push(k.clone());
        }
        merged.insert(k.clone(), v.clone());
    }
    let mut cfg = RunConfig::defaults(command);
    for k in &order {
        if !KEYS.contains(&k.as_str()) {
            return Err(LabError::Usage(format!("unknown key '{k}'")));
        }
        cfg.set(k, &merged[k])?;
    }
    cfg.validate()?;
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn flags(pairs: &[(&str, &str)]) -> Vec<(String, String)> {
        pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()
    }

    #[test]
    fn steady_from_flags() {
        let cfg = parse_config("steady", None, &flags(&[("m", "1.5"), ("kernel", "gaussian"), ("L", "5")])).unwrap();
        assert_eq!(cfg.command, Command::Steady);
        assert_eq!(cfg.kernel, Kernel::Gaussian);
        assert_eq!(cfg.m, 1.5);
        assert_eq!(cfg.l, Some(5.0));
        assert_eq!(cfg.n_cells, 800);
    }

    #[test]
    fn m_must_exceed_one() {
        let err = parse_config("steady", None, &flags(&[("m", "0.9"), ("L", "5")])).unwrap_err();
        assert!(matches!(err, LabError::Usage(_)));
        assert!(parse_config("limit", None, &flags(&[("m", "1")])).is_err());
    }

    #[test]
    fn flags_override_file() {
        let file = "m = 3\nkernel = bessel\nL = 2\n";
        let cfg = parse_config("steady", Some(file), &flags(&[("m", "2.5")])).unwrap();
        assert_eq!(cfg.m, 2.5);
        assert_eq!(cfg.kernel, Kernel::Bessel);
    }

    #[test]
    fn conflicts_and_junk_rejected() {
        assert!(parse_config("steady", None, &flags(&[("nu", "0.4"), ("L", "5")])).is_err());
        assert!(parse_config("steady", None, &[]).is_err());
        assert!(parse_config("steady", None, &flags(&[("L", "five")])).is_err());
        assert!(parse_config("steady", None, &flags(&[("L", "5"), ("kernel", "cauchy")])).is_err());
        assert!(parse_config("steady", None, &flags(&[("L", "5"), ("colour", "red")])).is_err());
        assert!(parse_config("plot", None, &[]).is_err());
        assert!(parse_config("bessel", None, &flags(&[("L", "1")])).is_err());
        assert!(parse_config("particles", None, &flags(&[("nu", "1"), ("L", "1")])).is_err());
        let late = flags(&[("nu", "1"), ("t_end", "10"), ("snapshots", "0,20")]);
        assert!(parse_config("evolve", None, &late).is_err());
    }

    #[test]
    fn documented_spellings() {
        let evolve = flags(&[
            ("kernel", "bessel"),
            ("m", "4"),
            ("nu", "0.6"),
            ("L", "30"),
            ("n", "1200"),
            ("t-end", "1000"),
            ("seed", "7"),
            ("snapshots", "0,125,425,1000"),
            ("out-dir", "run1/"),
        ]);
        let cfg = parse_config("evolve", None, &evolve).unwrap();
        assert_eq!(cfg.half_width, 30.0);
        assert_eq!(cfg.l, None);
        assert_eq!(cfg.n_cells, 1200);
        assert_eq!(cfg.t_end, 1000.0);
        assert_eq!(cfg.snapshot_times(), vec![0.0, 125.0, 425.0, 1000.0]);
        assert_eq!(cfg.out_dir, PathBuf::from("run1/"));

        let cfg = parse_config("bessel", None, &flags(&[("m", "3"), ("nubar", "0.3")])).unwrap();
        assert_eq!(cfg.nu, Some(0.3));
        let cfg = parse_config("particles", None, &flags(&[("n", "200"), ("nu", "0.4")])).unwrap();
        assert_eq!(cfg.particles, 200);
        assert_eq!(cfg.n_cells, 800);
    }

    #[test]
    fn every_key_appears_in_the_manifest() {
        let cfg = RunConfig::defaults(Command::Sweep);
        let names: Vec<String> = cfg.entries().into_iter().map(|(k, _)| k).collect();
        for k in KEYS {
            assert!(names.iter().any(|n| n == k), "{k} missing");
        }
    }

    #[test]
    fn sweep_list_parses() {
        let cfg = parse_config("sweep", None, &flags(&[("ls", "1,2.5,4")])).unwrap();
        assert_eq!(cfg.ls, vec![1.0, 2.5, 4.0]);
    }
}
