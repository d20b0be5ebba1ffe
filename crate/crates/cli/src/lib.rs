//! Experiment runner behind the `dydw` binary.
//!
//! Every run resolves a [`Config`], dispatches to one experiment, writes CSV
//! data files into the output directory and finishes with a JSON summary
//! `{schema, experiment, config, results, runtime_seconds}`. Data files
//! contain no timing or host information, so identical configurations give
//! byte-identical CSV for any worker count.

// `!(x > y)` is used deliberately so that NaN fails validation
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
mod experiments;

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::Parser;
use serde_json::{json, Value};

pub use config::{Args, Config, Experiment};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 2;
pub const EXIT_DIAGNOSTIC: i32 = 3;
pub const EXIT_USAGE: i32 = 64;
pub const EXIT_IO: i32 = 74;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("invalid configuration: {0}")]
    Invalid(String),
    #[error(transparent)]
    Core(#[from] dydw::Error),
    #[error("i/o: {0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Invalid(_) => EXIT_INVALID,
            CliError::Io(_) => EXIT_IO,
            CliError::Core(e) if e.is_diagnostic() => EXIT_DIAGNOSTIC,
            CliError::Core(dydw::Error::Io(_) | dydw::Error::Csv(_)) => EXIT_IO,
            CliError::Core(_) => EXIT_INVALID,
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

/// Files written by one run.
#[derive(Clone, Debug)]
pub struct RunOutput {
    pub data_files: Vec<PathBuf>,
    pub summary: PathBuf,
    pub results: Value,
}

/// Parses arguments, runs, and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args = match Args::try_parse_from(args) {
        Ok(a) => a,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match Config::from_args(&args).and_then(|cfg| run(&cfg)) {
        Ok(out) => {
            eprintln!("dydw: summary written to {}", out.summary.display());
            EXIT_OK
        }
        Err(e) => {
            eprintln!("dydw: {e}");
            e.exit_code()
        }
    }
}

/// Runs a validated configuration.
pub fn run(cfg: &Config) -> Result<RunOutput, CliError> {
    cfg.validate()?;
    std::fs::create_dir_all(&cfg.output_dir)
        .map_err(|e| CliError::Io(format!("{}: {e}", cfg.output_dir.display())))?;
    let started = Instant::now();
    eprintln!(
        "dydw: running {} (seed {}, n {})",
        cfg.experiment, cfg.seed_root, cfg.n_replicates
    );
    let mut emitter = Emitter::new(&cfg.output_dir, stem(cfg));
    let results = match cfg.workers {
        Some(w) => rayon::ThreadPoolBuilder::new()
            .num_threads(w)
            .build()
            .map_err(|e| CliError::Invalid(format!("cannot start {w} workers: {e}")))?
            .install(|| experiments::dispatch(cfg, &mut emitter))?,
        None => experiments::dispatch(cfg, &mut emitter)?,
    };
    let summary_path = emitter.path(".json");
    let summary = json!({
        "schema": 1,
        "experiment": cfg.experiment.name(),
        "config": cfg,
        "results": results,
        "data_files": emitter.files.iter().map(|p| file_name(p)).collect::<Vec<_>>(),
        "runtime_seconds": started.elapsed().as_secs_f64(),
    });
    let mut f = std::fs::File::create(&summary_path)
        .map_err(|e| CliError::Io(format!("{}: {e}", summary_path.display())))?;
    serde_json::to_writer_pretty(&mut f, &summary).map_err(|e| CliError::Io(e.to_string()))?;
    writeln!(f)?;
    Ok(RunOutput {
        data_files: emitter.files,
        summary: summary_path,
        results,
    })
}

fn file_name(p: &Path) -> String {
    p.file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}

/// File stem naming the experiment, seed and the parameters it depends on.
pub fn stem(cfg: &Config) -> String {
    use Experiment::*;
    let g = format!("g{}", cfg.gamma);
    let ev = format!("{}{}", cfg.event, cfg.k);
    let params = match cfg.experiment {
        DumpStream => format!(
            "{}_x{}_t{}_taumax{}",
            match cfg.web {
                dydw::WebId::Main => "main",
                dydw::WebId::Secondary => "secondary",
            },
            cfg.x,
            cfg.t,
            cfg.window.1
        ),
        Geometry => format!("{g}_a{}_kmax{}", cfg.width_alpha, cfg.k_max),
        Estimate => format!(
            "{g}_a{}_{ev}_tau{}_n{}",
            cfg.width_alpha, cfg.tau, cfg.n_replicates
        ),
        Joint => format!(
            "{g}_a{}_{ev}_tau{}_taup{}_n{}",
            cfg.width_alpha, cfg.tau, cfg.tau_prime, cfg.n_replicates
        ),
        Sweep => format!("{g}_k{}_n{}", cfg.k, cfg.n_replicates),
        TauSet => format!(
            "{g}_a{}_{ev}_w{}-{}",
            cfg.width_alpha, cfg.window.0, cfg.window.1
        ),
        SearchSub => format!("{g}_n{}_w{}-{}", cfg.k, cfg.window.0, cfg.window.1),
        SearchSuper => format!(
            "{g}_a{}_k{}_n{}",
            cfg.width_alpha,
            cfg.k_list
                .iter()
                .map(|k| k.to_string())
                .collect::<Vec<_>>()
                .join("-"),
            cfg.n_replicates
        ),
        Sticking => format!(
            "{g}_k{}_tau{}_taup{}_b{}_n{}",
            cfg.k, cfg.tau, cfg.tau_prime, cfg.beta, cfg.n_replicates
        ),
        Coupling => format!(
            "{g}_k{}_tau{}_taup{}_h{}_n{}",
            cfg.k, cfg.tau, cfg.tau_prime, cfg.horizon, cfg.n_replicates
        ),
        Modulus => format!(
            "{g}_k{}_ea{}_b{}_n{}",
            cfg.k, cfg.exponent_alpha, cfg.beta, cfg.n_replicates
        ),
        Pivotal => format!("{g}_a{}_k{}_n{}", cfg.width_alpha, cfg.k, cfg.n_replicates),
        Tail => format!(
            "{g}_a{}_k{}_kmax{}_n{}",
            cfg.width_alpha, cfg.k, cfg.k_max, cfg.n_replicates
        ),
        Bounds => format!(
            "K{}-{}_{}pts",
            cfg.k_grid.first().copied().unwrap_or(0.0),
            cfg.k_grid.last().copied().unwrap_or(0.0),
            cfg.k_grid.len()
        ),
        SecondMoment => format!(
            "{g}_n{}_res{}_reps{}",
            cfg.k, cfg.resolution, cfg.n_replicates
        ),
    };
    format!("{}_seed{}_{}", cfg.experiment.name(), cfg.seed_root, params)
}

/// Creates data files next to each other under one stem.
pub(crate) struct Emitter {
    dir: PathBuf,
    stem: String,
    files: Vec<PathBuf>,
}

impl Emitter {
    fn new(dir: &Path, stem: String) -> Self {
        Self {
            dir: dir.to_path_buf(),
            stem,
            files: Vec::new(),
        }
    }

    fn path(&self, suffix: &str) -> PathBuf {
        self.dir.join(format!("{}{suffix}", self.stem))
    }

    fn create(&mut self, suffix: &str) -> Result<std::io::BufWriter<std::fs::File>, CliError> {
        let path = self.path(&format!("{suffix}.csv"));
        let f = std::fs::File::create(&path)
            .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        eprintln!("dydw: writing {}", path.display());
        self.files.push(path);
        Ok(std::io::BufWriter::new(f))
    }

    /// Writes with a module's own CSV writer.
    pub(crate) fn with<F>(&mut self, suffix: &str, write: F) -> Result<(), CliError>
    where
        F: FnOnce(&mut std::io::BufWriter<std::fs::File>) -> dydw::Result<()>,
    {
        let mut out = self.create(suffix)?;
        write(&mut out)?;
        out.flush()?;
        Ok(())
    }

    pub(crate) fn table(
        &mut self,
        suffix: &str,
        header: &[&str],
        rows: &[Vec<String>],
    ) -> Result<(), CliError> {
        let out = self.create(suffix)?;
        let mut w = csv::Writer::from_writer(out);
        w.write_record(header)?;
        for r in rows {
            w.write_record(r)?;
        }
        w.flush()?;
        Ok(())
    }
}
