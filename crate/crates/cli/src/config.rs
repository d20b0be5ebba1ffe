//! Experiment configuration: defaults, then a `key=value` file, then flags.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::Parser;
use dydw::{EventKind, WebId};
use serde::Serialize;

use crate::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    DumpStream,
    Geometry,
    Estimate,
    Joint,
    Sweep,
    TauSet,
    SearchSub,
    SearchSuper,
    Sticking,
    Coupling,
    Modulus,
    Pivotal,
    Tail,
    Bounds,
    SecondMoment,
}

impl Experiment {
    pub const ALL: [Experiment; 15] = [
        Experiment::DumpStream,
        Experiment::Geometry,
        Experiment::Estimate,
        Experiment::Joint,
        Experiment::Sweep,
        Experiment::TauSet,
        Experiment::SearchSub,
        Experiment::SearchSuper,
        Experiment::Sticking,
        Experiment::Coupling,
        Experiment::Modulus,
        Experiment::Pivotal,
        Experiment::Tail,
        Experiment::Bounds,
        Experiment::SecondMoment,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Experiment::DumpStream => "dump-stream",
            Experiment::Geometry => "geometry",
            Experiment::Estimate => "estimate",
            Experiment::Joint => "joint",
            Experiment::Sweep => "sweep",
            Experiment::TauSet => "tau-set",
            Experiment::SearchSub => "search-sub",
            Experiment::SearchSuper => "search-super",
            Experiment::Sticking => "sticking",
            Experiment::Coupling => "coupling",
            Experiment::Modulus => "modulus",
            Experiment::Pivotal => "pivotal",
            Experiment::Tail => "tail",
            Experiment::Bounds => "bounds",
            Experiment::SecondMoment => "second-moment",
        }
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Experiment {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, CliError> {
        Experiment::ALL
            .into_iter()
            .find(|e| e.name() == s)
            .ok_or_else(|| {
                let names: Vec<_> = Experiment::ALL.iter().map(|e| e.name()).collect();
                CliError::Usage(format!(
                    "unknown experiment `{s}`; expected one of {}",
                    names.join(", ")
                ))
            })
    }
}

#[derive(Parser, Debug, Default)]
#[command(name = "dydw", version, about = "Dynamical discrete web experiments")]
pub struct Args {
    /// Experiment to run (dump-stream, geometry, estimate, joint, sweep,
    /// tau-set, search-sub, search-super, sticking, coupling, modulus,
    /// pivotal, tail, bounds, second-moment).
    pub experiment: String,
    /// key=value file; command-line flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub gamma: Option<String>,
    /// Width parameter of the superdiffusive rectangles.
    #[arg(long = "width-alpha")]
    pub width_alpha: Option<String>,
    /// Exponent in the modulus-of-continuity statistic.
    #[arg(long = "exponent-alpha")]
    pub exponent_alpha: Option<String>,
    #[arg(long)]
    pub beta: Option<String>,
    #[arg(long)]
    pub k: Option<String>,
    #[arg(long = "k-max")]
    pub k_max: Option<String>,
    /// Comma-separated rectangle levels for search-super.
    #[arg(long = "k-list")]
    pub k_list: Option<String>,
    #[arg(long)]
    pub tau: Option<String>,
    #[arg(long = "tau-prime")]
    pub tau_prime: Option<String>,
    /// Comma-separated τ′ values.
    #[arg(long = "tau-prime-grid")]
    pub tau_prime_grid: Option<String>,
    /// Dynamical-time window `a:b`.
    #[arg(long)]
    pub window: Option<String>,
    /// Replicate count.
    #[arg(long)]
    pub n: Option<String>,
    #[arg(long)]
    pub seed: Option<String>,
    #[arg(long = "output-dir")]
    pub output_dir: Option<String>,
    /// Worker threads for replicate parallelism.
    #[arg(long)]
    pub workers: Option<String>,
    /// Event kind: B, C, A_hat, Upsilon.
    #[arg(long)]
    pub event: Option<String>,
    #[arg(long)]
    pub x: Option<String>,
    #[arg(long)]
    pub t: Option<String>,
    /// main or secondary.
    #[arg(long)]
    pub web: Option<String>,
    /// K grid `start:stop:step`.
    #[arg(long = "K-grid")]
    pub k_grid: Option<String>,
    /// Cells for the second-moment quadrature.
    #[arg(long)]
    pub resolution: Option<String>,
    /// Step horizon for coupling traces.
    #[arg(long)]
    pub horizon: Option<String>,
}

impl Args {
    fn flag_values(&self) -> Vec<(&'static str, Option<&String>)> {
        vec![
            ("gamma", self.gamma.as_ref()),
            ("width-alpha", self.width_alpha.as_ref()),
            ("exponent-alpha", self.exponent_alpha.as_ref()),
            ("beta", self.beta.as_ref()),
            ("k", self.k.as_ref()),
            ("k-max", self.k_max.as_ref()),
            ("k-list", self.k_list.as_ref()),
            ("tau", self.tau.as_ref()),
            ("tau-prime", self.tau_prime.as_ref()),
            ("tau-prime-grid", self.tau_prime_grid.as_ref()),
            ("window", self.window.as_ref()),
            ("n", self.n.as_ref()),
            ("seed", self.seed.as_ref()),
            ("output-dir", self.output_dir.as_ref()),
            ("workers", self.workers.as_ref()),
            ("event", self.event.as_ref()),
            ("x", self.x.as_ref()),
            ("t", self.t.as_ref()),
            ("web", self.web.as_ref()),
            ("K-grid", self.k_grid.as_ref()),
            ("resolution", self.resolution.as_ref()),
            ("horizon", self.horizon.as_ref()),
        ]
    }
}

const KEYS: [&str; 22] = [
    "gamma",
    "width-alpha",
    "exponent-alpha",
    "beta",
    "k",
    "k-max",
    "k-list",
    "tau",
    "tau-prime",
    "tau-prime-grid",
    "window",
    "n",
    "seed",
    "output-dir",
    "workers",
    "event",
    "x",
    "t",
    "web",
    "K-grid",
    "resolution",
    "horizon",
];

/// Fully resolved configuration, echoed into every JSON summary.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Config {
    pub experiment: Experiment,
    pub gamma: f64,
    pub width_alpha: f64,
    pub exponent_alpha: f64,
    pub beta: f64,
    pub k: usize,
    pub k_max: usize,
    pub k_list: Vec<usize>,
    pub tau: f64,
    pub tau_prime: f64,
    pub tau_prime_grid: Vec<f64>,
    pub window: (f64, f64),
    pub n_replicates: u64,
    pub seed_root: u64,
    pub output_dir: PathBuf,
    /// `None` uses rayon's default pool size.
    pub workers: Option<usize>,
    #[serde(serialize_with = "display")]
    pub event: EventKind,
    pub x: i64,
    pub t: i64,
    #[serde(serialize_with = "web_name")]
    pub web: WebId,
    pub k_grid: Vec<f64>,
    pub resolution: usize,
    pub horizon: u64,
}

fn display<S: serde::Serializer, T: fmt::Display>(v: &T, s: S) -> Result<S::Ok, S::Error> {
    s.collect_str(v)
}

fn web_name<S: serde::Serializer>(v: &WebId, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_str(match v {
        WebId::Main => "main",
        WebId::Secondary => "secondary",
    })
}

/// Reads `key=value` lines; `#` starts a comment, blank lines are skipped.
pub fn read_config_file(path: &Path) -> Result<BTreeMap<String, String>, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    let mut out = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            CliError::Invalid(format!("{}:{}: expected key=value", path.display(), i + 1))
        })?;
        let key = key.trim().trim_start_matches("--").replace('_', "-");
        let key = if key.eq_ignore_ascii_case("k-grid") {
            "K-grid".to_string()
        } else {
            key
        };
        if !KEYS.contains(&key.as_str()) {
            return Err(CliError::Invalid(format!(
                "{}:{}: unknown key `{key}`",
                path.display(),
                i + 1
            )));
        }
        out.insert(key, value.trim().to_string());
    }
    Ok(out)
}

fn parse<T: FromStr>(key: &str, v: &str) -> Result<T, CliError> {
    v.trim()
        .parse()
        .map_err(|_| CliError::Invalid(format!("cannot parse {key} = `{v}`")))
}

fn parse_list<T: FromStr>(key: &str, v: &str) -> Result<Vec<T>, CliError> {
    v.split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| parse(key, s))
        .collect()
}

fn parse_range(key: &str, v: &str) -> Result<Vec<f64>, CliError> {
    let parts: Vec<f64> = v
        .split(':')
        .map(|s| parse(key, s))
        .collect::<Result<_, _>>()?;
    let [start, stop, step] = parts[..] else {
        return Err(CliError::Invalid(format!(
            "{key} must be start:stop:step, got `{v}`"
        )));
    };
    if !(step > 0.0 && start <= stop) {
        return Err(CliError::Invalid(format!(
            "{key} needs step > 0 and start ≤ stop, got `{v}`"
        )));
    }
    let count = ((stop - start) / step + 1e-9).floor() as usize + 1;
    if count > 100_000 {
        return Err(CliError::Invalid(format!(
            "{key} has too many points ({count})"
        )));
    }
    // generate from the index to avoid accumulated rounding
    Ok((0..count).map(|i| start + i as f64 * step).collect())
}

impl Config {
    pub fn from_args(args: &Args) -> Result<Self, CliError> {
        let experiment: Experiment = args.experiment.parse()?;
        let mut values = match &args.config {
            Some(path) => read_config_file(path)?,
            None => BTreeMap::new(),
        };
        for (key, v) in args.flag_values() {
            if let Some(v) = v {
                values.insert(key.to_string(), v.clone());
            }
        }
        let get = |key: &str| values.get(key).map(String::as_str);
        let num = |key: &str, default: f64| -> Result<f64, CliError> {
            get(key).map_or(Ok(default), |v| parse(key, v))
        };
        let k: usize = get("k").map_or(Ok(1), |v| parse("k", v))?;
        let k_max: usize = get("k-max").map_or(Ok(k.max(3)), |v| parse("k-max", v))?;
        let window = match get("window") {
            None => (0.0, 1.0),
            Some(v) => {
                let parts: Vec<f64> = v
                    .split(':')
                    .map(|s| parse("window", s))
                    .collect::<Result<_, _>>()?;
                let [a, b] = parts[..] else {
                    return Err(CliError::Invalid(format!("window must be a:b, got `{v}`")));
                };
                (a, b)
            }
        };
        let cfg = Config {
            experiment,
            gamma: num("gamma", 2.0)?,
            width_alpha: num("width-alpha", 0.5)?,
            exponent_alpha: num("exponent-alpha", 0.1)?,
            beta: num("beta", 0.5)?,
            k,
            k_max,
            k_list: get("k-list")
                .map_or_else(|| Ok((1..=k_max).collect()), |v| parse_list("k-list", v))?,
            tau: num("tau", 0.0)?,
            tau_prime: num("tau-prime", 0.1)?,
            tau_prime_grid: get("tau-prime-grid").map_or_else(
                || Ok(vec![0.02, 0.05, 0.1, 0.2, 0.5, 1.0, 2.0, 4.0, 8.0]),
                |v| parse_list("tau-prime-grid", v),
            )?,
            window,
            n_replicates: get("n").map_or(Ok(1000), |v| parse("n", v))?,
            seed_root: get("seed").map_or(Ok(1), |v| parse("seed", v))?,
            output_dir: PathBuf::from(get("output-dir").unwrap_or(".")),
            workers: get("workers").map(|v| parse("workers", v)).transpose()?,
            event: get("event").map_or(Ok(EventKind::C), |v| {
                v.parse()
                    .map_err(|e: dydw::Error| CliError::Invalid(e.to_string()))
            })?,
            x: get("x").map_or(Ok(0), |v| parse("x", v))?,
            t: get("t").map_or(Ok(0), |v| parse("t", v))?,
            web: match get("web").unwrap_or("main") {
                "main" => WebId::Main,
                "secondary" => WebId::Secondary,
                other => {
                    return Err(CliError::Invalid(format!(
                        "web must be main or secondary, got `{other}`"
                    )))
                }
            },
            k_grid: get("K-grid").map_or_else(
                || parse_range("K-grid", "0.5:5:0.5"),
                |v| parse_range("K-grid", v),
            )?,
            resolution: get("resolution").map_or(Ok(256), |v| parse("resolution", v))?,
            horizon: get("horizon").map_or(Ok(64), |v| parse("horizon", v))?,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Largest dynamical time any experiment touches.
    pub fn tau_max(&self) -> f64 {
        let grid_max = match self.experiment {
            Experiment::Sweep | Experiment::Sticking | Experiment::Modulus => {
                self.tau_prime_grid.iter().copied().fold(0.0, f64::max)
            }
            _ => 0.0,
        };
        [1.0, self.window.1, self.tau, self.tau_prime, grid_max]
            .into_iter()
            .fold(0.0, f64::max)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Invalid(m));
        if !(self.gamma.is_finite() && self.gamma > 1.0) {
            return bad(format!("gamma must exceed 1, got {}", self.gamma));
        }
        if !(self.width_alpha.is_finite() && self.width_alpha > 0.0) {
            return bad(format!(
                "width-alpha must be positive, got {}",
                self.width_alpha
            ));
        }
        if !(self.exponent_alpha.is_finite() && self.exponent_alpha > 0.0) {
            return bad(format!(
                "exponent-alpha must be positive, got {}",
                self.exponent_alpha
            ));
        }
        if !(self.beta > 0.0 && self.beta < 1.0) {
            return bad(format!("beta must lie in (0, 1), got {}", self.beta));
        }
        if self.k_max < 1 {
            return bad("k-max must be at least 1".into());
        }
        if self.k > self.k_max {
            return bad(format!("k = {} exceeds k-max = {}", self.k, self.k_max));
        }
        if self.k_list.is_empty()
            || self.k_list.windows(2).any(|w| w[0] >= w[1])
            || self.k_list.iter().any(|&k| k == 0 || k > self.k_max)
        {
            return bad(format!(
                "k-list must increase strictly within 1..={}",
                self.k_max
            ));
        }
        let (a, b) = self.window;
        if !(a.is_finite() && b.is_finite() && 0.0 <= a && a <= b) {
            return bad(format!("window must satisfy 0 ≤ a ≤ b, got {a}:{b}"));
        }
        for (name, v) in [("tau", self.tau), ("tau-prime", self.tau_prime)] {
            if !(v.is_finite() && v >= 0.0) {
                return bad(format!("{name} must be a nonnegative real, got {v}"));
            }
        }
        if self.tau_prime_grid.is_empty()
            || self
                .tau_prime_grid
                .iter()
                .any(|&v| !(v.is_finite() && v > 0.0))
        {
            return bad("tau-prime-grid entries must be positive".into());
        }
        if self.n_replicates == 0 {
            return bad("n must be at least 1".into());
        }
        if self.workers == Some(0) {
            return bad("workers must be at least 1".into());
        }
        if (self.x + self.t).rem_euclid(2) != 0 {
            return bad(format!(
                "site ({}, {}) is off the even lattice",
                self.x, self.t
            ));
        }
        if self.k_grid.iter().any(|&v| !(v > 0.0)) {
            return bad("K-grid values must be positive".into());
        }
        if self.resolution == 0 {
            return bad("resolution must be positive".into());
        }
        use Experiment::*;
        let e = self.experiment;
        if matches!(e, Sticking | Coupling) && self.tau >= self.tau_prime {
            return bad(format!(
                "need tau < tau-prime, got {} and {}",
                self.tau, self.tau_prime
            ));
        }
        if matches!(e, Sticking | Coupling | Modulus | Tail | Pivotal) && self.k == 0 {
            return bad(format!("{e} needs k ≥ 1"));
        }
        if matches!(e, Estimate | Joint | TauSet)
            && matches!(self.event, EventKind::AHat | EventKind::Upsilon)
            && self.k == 0
        {
            return bad(format!("event {} needs k ≥ 1", self.event));
        }
        if e == Sticking {
            if let Some(&g) = self.tau_prime_grid.iter().find(|&&g| g <= self.tau) {
                return bad(format!(
                    "tau-prime-grid entry {g} must exceed tau = {}",
                    self.tau
                ));
            }
        }
        Ok(())
    }
}
