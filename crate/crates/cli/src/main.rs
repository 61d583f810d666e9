//! `relaxlab`: run relaxation sweeps on a bosonic ring and the verification suite.
//!
//! Exit codes: 0 success, 1 configuration or I/O error, 2 no record admits the bound,
//! 3 verification failure.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::Context;
use clap::{Parser, ValueEnum};
use relaxlab::experiment::{metadata_json, run_experiment, write_csv, ExperimentConfig, Mode};
use relaxlab::verify::{verify_suite, Level};

const EXIT_CONFIG: u8 = 1;
const EXIT_REGIME: u8 = 2;
const EXIT_VERIFY: u8 = 3;

#[derive(Clone, Copy, Debug, ValueEnum)]
enum LevelArg {
    Quick,
    Full,
}

#[derive(Parser, Debug)]
#[command(name = "relaxlab", version, about = "Local relaxation sweeps for a bosonic hopping ring")]
struct Cli {
    /// Flat `key = value` config file; flags override its entries.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Ring size L.
    #[arg(long, value_name = "L")]
    length: Option<String>,
    /// START:STOP:COUNT[:log]
    #[arg(long, value_name = "GRID")]
    time_grid: Option<String>,
    /// Comma-separated 1-based sites, e.g. "1,2".
    #[arg(long, value_name = "SITES")]
    subsystem: Option<String>,
    /// fock:n1,...,nL | fock-uniform:n | thermal:nbar | mixture:w*SPEC+w*SPEC
    #[arg(long, value_name = "SPEC")]
    state: Option<String>,
    /// Largest |beta| per mode on the grid.
    #[arg(long, value_name = "R")]
    beta_max: Option<String>,
    /// Angles per radius on the beta grid.
    #[arg(long, value_name = "N")]
    beta_angles: Option<String>,
    /// bounds | dynamics | reconstruct | verify
    #[arg(long, value_name = "MODE")]
    mode: Option<String>,
    /// Relaxation tolerance for t_relax.
    #[arg(long, value_name = "E")]
    epsilon: Option<String>,
    /// Fock cutoff used in reconstruct mode.
    #[arg(long, value_name = "M")]
    cutoff: Option<String>,
    /// CSV output path; the JSON sidecar goes next to it. CSV goes to stdout when absent.
    #[arg(long, value_name = "PATH")]
    out: Option<String>,
    #[arg(long, value_name = "N", env = "RELAXLAB_THREADS")]
    threads: Option<String>,
    #[arg(long, value_name = "N")]
    seed: Option<String>,
    /// Verification depth in verify mode.
    #[arg(long, value_enum, default_value = "quick")]
    level: LevelArg,
}

impl Cli {
    fn overrides(&self) -> Vec<(&'static str, &String)> {
        let pairs = [
            ("length", &self.length),
            ("time_grid", &self.time_grid),
            ("subsystem", &self.subsystem),
            ("state", &self.state),
            ("beta_max", &self.beta_max),
            ("beta_angles", &self.beta_angles),
            ("mode", &self.mode),
            ("epsilon", &self.epsilon),
            ("cutoff", &self.cutoff),
            ("out", &self.out),
            ("threads", &self.threads),
            ("seed", &self.seed),
        ];
        pairs.into_iter().filter_map(|(k, v)| v.as_ref().map(|v| (k, v))).collect()
    }

    fn config(&self) -> anyhow::Result<ExperimentConfig> {
        let mut cfg = ExperimentConfig::default();
        if let Some(path) = &self.config {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            cfg.apply_text(&text)?;
        }
        for (k, v) in self.overrides() {
            cfg.set(k, v).with_context(|| format!("--{}", k.replace('_', "-")))?;
        }
        Ok(cfg)
    }
}

fn sidecar_path(csv: &Path) -> PathBuf {
    if csv.extension().is_some_and(|e| e == "csv") {
        csv.with_extension("json")
    } else {
        let mut s = csv.as_os_str().to_owned();
        s.push(".json");
        PathBuf::from(s)
    }
}

fn run_verify(level: LevelArg) -> anyhow::Result<u8> {
    let level = match level {
        LevelArg::Quick => Level::Quick,
        LevelArg::Full => Level::Full,
    };
    let report = verify_suite(level)?;
    let stdout = io::stdout();
    let mut out = stdout.lock();
    for c in &report.checks {
        writeln!(out, "{}", c.line())?;
    }
    Ok(if report.passed() { 0 } else { EXIT_VERIFY })
}

fn run(cli: &Cli) -> anyhow::Result<u8> {
    let cfg = cli.config()?;
    if cfg.mode == Mode::Verify {
        return run_verify(cli.level);
    }
    cfg.validate()?;
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cfg.threads {
        pool = pool.num_threads(n);
    }
    let pool = pool.build().context("building the worker pool")?;
    let start = Instant::now();
    let output = pool.install(|| run_experiment(&cfg))?;

    match &cfg.out {
        Some(path) => {
            let mut csv = Vec::new();
            write_csv(&output, &mut csv)?;
            fs::write(path, csv).with_context(|| format!("writing {}", path.display()))?;
            let side = sidecar_path(path);
            let mut json = serde_json::to_string_pretty(&metadata_json(&output))?;
            json.push('\n');
            fs::write(&side, json).with_context(|| format!("writing {}", side.display()))?;
        }
        None => {
            let stdout = io::stdout();
            write_csv(&output, &mut stdout.lock())?;
        }
    }
    let s = &output.summary;
    eprintln!(
        "{} records in {:.2}s; t_relax (measured) {:?}, t_relax (bound) {:?}, recurrence {:?}, t_rec {:.4}",
        output.records.len(),
        start.elapsed().as_secs_f64(),
        s.t_relax_measured,
        s.t_relax_bound,
        s.recurrence,
        s.t_rec
    );
    if output.all_inapplicable() {
        eprintln!("no record satisfies the regime conditions of the bound");
        return Ok(EXIT_REGIME);
    }
    Ok(0)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_CONFIG)
        }
    }
}
