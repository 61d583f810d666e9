//! Sweeps over a time grid: grid-sup characteristic-function distances, the bound F_S,
//! reconstructed trace distances, and the relaxation/recurrence summary.

use std::collections::BTreeMap;
use std::f64::consts::TAU;
use std::fmt;
use std::io::Write;
use std::path::PathBuf;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Serialize, Serializer};
use serde_json::json;

use crate::bounds::{
    correlation_regime, derive_constants, lemma2_report, lemma5_report, main_bound, relaxation_window, BoundReport,
    DerivedConstants, MomentContext,
};
use crate::error::{input, Error, Result};
use crate::lattice::{blocking_partition, RingLattice, SiteSet};
use crate::phase_space::{
    reconstruct, reconstruct_diagonal, thermal_reference, trace_norm_distance, FockDensityMatrix, QuadratureGrid,
};
use crate::propagator::{alpha_of_beta, PhaseVector, Propagator, C64};
use crate::states::{
    certify_assumptions, AssumptionConstants, CertifyOptions, GaussianState, InitialState, ProductFockState,
    StateMixture,
};

pub const MAX_GRID_POINTS: usize = 100_000;
/// Radial fractions of `beta_max` used on every mode.
pub const RADIAL_FRACTIONS: [f64; 5] = [0.125, 0.25, 0.5, 0.75, 1.0];
pub const QUADRATURE_TOLERANCE: f64 = 1e-8;
pub const MAX_CUTOFF: usize = 40;
/// A recurrence is a record exceeding this multiple of the plateau median.
pub const RECURRENCE_FACTOR: f64 = 3.0;
/// Plateau records needed before a recurrence can be declared.
pub const MIN_PLATEAU_RECORDS: usize = 3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Bounds,
    Dynamics,
    Reconstruct,
    Verify,
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "bounds" => Ok(Self::Bounds),
            "dynamics" => Ok(Self::Dynamics),
            "reconstruct" => Ok(Self::Reconstruct),
            "verify" => Ok(Self::Verify),
            other => input(format!("mode must be bounds, dynamics, reconstruct or verify, got {other:?}")),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TimeGrid {
    pub start: f64,
    pub stop: f64,
    pub count: usize,
    pub log: bool,
}

impl TimeGrid {
    pub fn points(&self) -> Vec<f64> {
        if self.count == 1 {
            return vec![self.start];
        }
        let k = (self.count - 1) as f64;
        (0..self.count)
            .map(|i| {
                let s = i as f64 / k;
                if i + 1 == self.count {
                    self.stop
                } else if self.log {
                    (self.start.ln() + s * (self.stop.ln() - self.start.ln())).exp()
                } else {
                    self.start + s * (self.stop - self.start)
                }
            })
            .collect()
    }

    fn validate(&self) -> Result<()> {
        if !self.start.is_finite() || !self.stop.is_finite() {
            return input("time grid: start and stop must be finite");
        }
        if self.count == 0 {
            return input("time grid: count must be at least 1");
        }
        if self.stop < self.start {
            return input(format!("time grid: stop {} is below start {}", self.stop, self.start));
        }
        if self.log && self.start <= 0.0 {
            return input("time grid: log spacing needs start > 0");
        }
        Ok(())
    }
}

impl FromStr for TimeGrid {
    type Err = Error;

    /// START:STOP:COUNT[:log|:linear]
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.trim().split(':').collect();
        if parts.len() < 3 || parts.len() > 4 {
            return input(format!("time grid must be START:STOP:COUNT[:log], got {s:?}"));
        }
        let num = |p: &str, what: &str| -> Result<f64> {
            p.trim()
                .parse::<f64>()
                .map_err(|_| Error::Input(format!("time grid: bad {what} {p:?}")))
        };
        let count = parts[2]
            .trim()
            .parse::<usize>()
            .map_err(|_| Error::Input(format!("time grid: bad count {:?}", parts[2])))?;
        let log = match parts.get(3).map(|p| p.trim()) {
            None | Some("linear") => false,
            Some("log") => true,
            Some(other) => return input(format!("time grid spacing must be log or linear, got {other:?}")),
        };
        let grid = Self {
            start: num(parts[0], "start")?,
            stop: num(parts[1], "stop")?,
            count,
            log,
        };
        grid.validate()?;
        Ok(grid)
    }
}

impl fmt::Display for TimeGrid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}:{}", self.start, self.stop, self.count)?;
        if self.log {
            write!(f, ":log")?;
        }
        Ok(())
    }
}

impl Serialize for TimeGrid {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

/// Textual initial-state description; `fock-uniform` and `thermal` take their size from L.
#[derive(Clone, Debug, PartialEq)]
pub enum StateSpec {
    Fock(Vec<u32>),
    FockUniform(u32),
    Thermal(f64),
    Mixture(Vec<(f64, StateSpec)>),
}

impl StateSpec {
    pub fn build(&self, len: usize) -> Result<InitialState> {
        Ok(match self {
            Self::Fock(occ) => {
                if occ.len() != len {
                    return input(format!("fock state lists {} occupations, ring has {len} sites", occ.len()));
                }
                ProductFockState::new(occ.clone())?.into()
            }
            Self::FockUniform(n) => ProductFockState::uniform(len, *n)?.into(),
            Self::Thermal(nbar) => GaussianState::thermal(len, *nbar)?.into(),
            Self::Mixture(parts) => {
                let mut weights = Vec::with_capacity(parts.len());
                let mut comps = Vec::with_capacity(parts.len());
                for (w, spec) in parts {
                    weights.push(*w);
                    comps.push(spec.build(len)?);
                }
                StateMixture::new(weights, comps)?.into()
            }
        })
    }
}

impl FromStr for StateSpec {
    type Err = Error;

    /// fock:1,0,2 | fock-uniform:n | thermal:nbar | mixture:w*SPEC+w*SPEC
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let (kind, rest) = s
            .split_once(':')
            .ok_or_else(|| Error::Input(format!("state must look like KIND:ARGS, got {s:?}")))?;
        match kind {
            "fock" => {
                let occ = rest
                    .split(',')
                    .map(|p| p.trim().parse::<u32>())
                    .collect::<std::result::Result<Vec<_>, _>>()
                    .map_err(|_| Error::Input(format!("fock occupations must be nonnegative integers, got {rest:?}")))?;
                Ok(Self::Fock(occ))
            }
            "fock-uniform" => rest
                .trim()
                .parse::<u32>()
                .map(Self::FockUniform)
                .map_err(|_| Error::Input(format!("fock-uniform needs a nonnegative integer, got {rest:?}"))),
            "thermal" => {
                let nbar: f64 = rest
                    .trim()
                    .parse()
                    .map_err(|_| Error::Input(format!("thermal needs a mean occupation, got {rest:?}")))?;
                if !(nbar >= 0.0) || !nbar.is_finite() {
                    return input(format!("thermal mean occupation must be finite and >= 0, got {nbar}"));
                }
                Ok(Self::Thermal(nbar))
            }
            "mixture" => {
                let mut parts = Vec::new();
                for term in rest.split('+') {
                    let (w, spec) = term
                        .split_once('*')
                        .ok_or_else(|| Error::Input(format!("mixture terms look like WEIGHT*SPEC, got {term:?}")))?;
                    let w: f64 = w
                        .trim()
                        .parse()
                        .map_err(|_| Error::Input(format!("bad mixture weight {w:?}")))?;
                    let spec: StateSpec = spec.parse()?;
                    if matches!(spec, Self::Mixture(_)) {
                        return input("mixtures cannot be nested");
                    }
                    parts.push((w, spec));
                }
                Ok(Self::Mixture(parts))
            }
            other => input(format!("unknown state kind {other:?} (fock, fock-uniform, thermal, mixture)")),
        }
    }
}

impl fmt::Display for StateSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Fock(occ) => {
                let s: Vec<String> = occ.iter().map(|n| n.to_string()).collect();
                write!(f, "fock:{}", s.join(","))
            }
            Self::FockUniform(n) => write!(f, "fock-uniform:{n}"),
            Self::Thermal(nbar) => write!(f, "thermal:{nbar}"),
            Self::Mixture(parts) => {
                let s: Vec<String> = parts.iter().map(|(w, p)| format!("{w}*{p}")).collect();
                write!(f, "mixture:{}", s.join("+"))
            }
        }
    }
}

impl Serialize for StateSpec {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub length: usize,
    pub subsystem: Vec<usize>,
    pub state: StateSpec,
    pub beta_max: f64,
    pub beta_angles: usize,
    pub time_grid: TimeGrid,
    pub mode: Mode,
    pub epsilon: f64,
    /// Fock cutoff for reconstruction; 16 for one site and 4 for two when unset.
    pub cutoff: Option<usize>,
    pub out: Option<PathBuf>,
    pub threads: Option<usize>,
    pub seed: u64,
    pub mu1: f64,
    pub eps1: f64,
    pub eps2: f64,
    pub eta: f64,
    pub c_cl: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            length: 0,
            subsystem: vec![1],
            state: StateSpec::FockUniform(1),
            beta_max: 2.0,
            beta_angles: 8,
            time_grid: TimeGrid {
                start: 0.0,
                stop: 40.0,
                count: 41,
                log: false,
            },
            mode: Mode::Dynamics,
            epsilon: 1e-2,
            cutoff: None,
            out: None,
            threads: None,
            seed: 0,
            mu1: 1.0,
            eps1: 1.0,
            eps2: 1.0,
            eta: 1.0,
            c_cl: 1.0,
        }
    }
}

/// Keys accepted by [`ExperimentConfig::set`], in config files and as flag names.
pub const CONFIG_KEYS: [&str; 17] = [
    "length",
    "subsystem",
    "state",
    "beta_max",
    "beta_angles",
    "time_grid",
    "mode",
    "epsilon",
    "cutoff",
    "out",
    "threads",
    "seed",
    "mu1",
    "eps1",
    "eps2",
    "eta",
    "c_cl",
];

fn parse_num<T: FromStr>(key: &str, v: &str) -> Result<T> {
    v.trim()
        .parse()
        .map_err(|_| Error::Input(format!("{key}: cannot parse {v:?}")))
}

impl ExperimentConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key.trim() {
            "length" => self.length = parse_num(key, value)?,
            "subsystem" => {
                self.subsystem = value
                    .split(',')
                    .map(|p| parse_num::<usize>(key, p))
                    .collect::<Result<Vec<_>>>()?
            }
            "state" => self.state = value.parse()?,
            "beta_max" => self.beta_max = parse_num(key, value)?,
            "beta_angles" => self.beta_angles = parse_num(key, value)?,
            "time_grid" => self.time_grid = value.parse()?,
            "mode" => self.mode = value.parse()?,
            "epsilon" => self.epsilon = parse_num(key, value)?,
            "cutoff" => self.cutoff = Some(parse_num(key, value)?),
            "out" => self.out = Some(PathBuf::from(value.trim())),
            "threads" => self.threads = Some(parse_num(key, value)?),
            "seed" => self.seed = parse_num(key, value)?,
            "mu1" => self.mu1 = parse_num(key, value)?,
            "eps1" => self.eps1 = parse_num(key, value)?,
            "eps2" => self.eps2 = parse_num(key, value)?,
            "eta" => self.eta = parse_num(key, value)?,
            "c_cl" => self.c_cl = parse_num(key, value)?,
            other => return input(format!("unknown config key {other:?}")),
        }
        Ok(())
    }

    /// Flat `key = value` lines; `#` starts a comment.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (no, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Input(format!("config line {}: expected key = value", no + 1)))?;
            self.set(k.trim(), v.trim())
                .map_err(|e| Error::Input(format!("config line {}: {}", no + 1, error_text(&e))))?;
        }
        Ok(())
    }

    pub fn lattice(&self) -> Result<RingLattice> {
        RingLattice::new(self.length)
    }

    pub fn subsystem_set(&self) -> Result<SiteSet> {
        let lat = self.lattice()?;
        let set = SiteSet::new(lat, self.subsystem.iter().copied())?;
        if set.len() != self.subsystem.len() {
            return input("subsystem lists a site twice");
        }
        Ok(set)
    }

    pub fn cutoff_for_subsystem(&self) -> usize {
        self.cutoff.unwrap_or(if self.subsystem.len() == 1 { 16 } else { 4 })
    }

    pub fn grid_size(&self) -> usize {
        let per_mode = RADIAL_FRACTIONS.len() * self.beta_angles + 1;
        let mut n: usize = 1;
        for _ in 0..self.subsystem.len() {
            n = n.saturating_mul(per_mode);
        }
        n - 1
    }

    /// Checks every precondition up front and names the one that fails.
    pub fn validate(&self) -> Result<()> {
        if self.length == 0 {
            return input("length is required");
        }
        let lat = self.lattice()?;
        if self.subsystem.is_empty() {
            return input("subsystem must list at least one site");
        }
        let s = self.subsystem_set()?;
        if s.len() == lat.len() {
            return input("subsystem must be a proper subset of the ring");
        }
        self.state.build(lat.len())?;
        if !(self.beta_max > 0.0) || !self.beta_max.is_finite() {
            return input(format!("beta_max must be positive and finite, got {}", self.beta_max));
        }
        if self.beta_angles == 0 {
            return input("beta_angles must be at least 1");
        }
        if self.grid_size() > MAX_GRID_POINTS {
            return input(format!(
                "beta grid has {} points, above {MAX_GRID_POINTS}; shrink the subsystem or beta_angles",
                self.grid_size()
            ));
        }
        self.time_grid.validate()?;
        if !(self.epsilon > 0.0) || !self.epsilon.is_finite() {
            return input(format!("epsilon must be positive and finite, got {}", self.epsilon));
        }
        if self.mode == Mode::Reconstruct && self.subsystem.len() > 2 {
            return input("reconstruct mode needs a subsystem of 1 or 2 sites");
        }
        if self.cutoff_for_subsystem() > MAX_CUTOFF {
            return input(format!("cutoff must be at most {MAX_CUTOFF}"));
        }
        if self.threads == Some(0) {
            return input("threads must be at least 1");
        }
        self.assumption_constants()?;
        Ok(())
    }

    fn certify_options(&self) -> CertifyOptions {
        CertifyOptions {
            mu1: self.mu1,
            eps1: self.eps1,
            eps2: self.eps2,
            eta: self.eta,
            c_cl: self.c_cl,
            seed: self.seed,
            ..CertifyOptions::default()
        }
    }

    fn assumption_constants(&self) -> Result<(InitialState, crate::states::Certification, DerivedConstants)> {
        let state = self.state.build(self.length)?;
        let cert = certify_assumptions(&state, &self.certify_options())?;
        cert.constants.validate()?;
        let derived = derive_constants(&cert.constants)?;
        Ok((state, cert, derived))
    }
}

fn error_text(e: &Error) -> String {
    match e {
        Error::Input(s) | Error::Regime(s) | Error::Unsupported(s) | Error::Size(s) => s.clone(),
    }
}

/// Per-mode points {0} ∪ {R f e^{iθ}}, combined as a product over modes without the origin.
pub fn beta_grid(modes: usize, beta_max: f64, angles: usize) -> Vec<Vec<C64>> {
    let mut per_mode = vec![C64::new(0.0, 0.0)];
    for f in RADIAL_FRACTIONS {
        for a in 0..angles {
            per_mode.push(C64::from_polar(beta_max * f, TAU * a as f64 / angles as f64));
        }
    }
    let mut out: Vec<Vec<C64>> = vec![Vec::new()];
    for _ in 0..modes {
        out = out
            .into_iter()
            .flat_map(|prefix| {
                per_mode.iter().map(move |z| {
                    let mut p = prefix.clone();
                    p.push(*z);
                    p
                })
            })
            .collect();
    }
    out.retain(|p| p.iter().any(|z| z.norm() > 0.0));
    out
}

/// Smallest margin per inequality over the β grid of one record.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MarginSummary {
    pub id: String,
    pub evaluated: usize,
    pub violations: usize,
    pub min_margin: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepRecord {
    pub t: f64,
    /// Measured: max over the grid of |χ_{ρ_S(t)}(β) - e^{σ_𝓛/2}|.
    pub sup_dist: f64,
    /// Certified: max over the grid of F_S; NaN unless every grid point is admissible.
    pub f_s: f64,
    /// The five terms of F_S at the maximising grid point.
    pub f_terms: [f64; 5],
    /// Measured: ‖ρ_S(t) - ρ_G(t)‖_tr after reconstruction; NaN outside reconstruct mode.
    pub trace_dist: f64,
    pub grid_points: usize,
    pub admissible_points: usize,
    pub regime_note: Option<String>,
    pub margins: Vec<MarginSummary>,
    pub reconstruction_warnings: Vec<String>,
    pub t_relax_flag: bool,
    pub recurrence_flag: bool,
}

impl SweepRecord {
    pub fn bound_applicable(&self) -> bool {
        !self.f_s.is_nan()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Summary {
    /// First time with sup_dist ≤ ε.
    pub t_relax_measured: Option<f64>,
    /// First time with F_S ≤ ε.
    pub t_relax_bound: Option<f64>,
    pub plateau_median: Option<f64>,
    pub recurrence: Option<f64>,
    /// L^{6/7}.
    pub t_rec: f64,
    pub applicable_records: usize,
    pub bound_violations: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct ExperimentOutput {
    pub config: ExperimentConfig,
    pub constants: AssumptionConstants,
    pub derived: DerivedConstants,
    pub certification_notes: Vec<String>,
    pub clustering_empirical: bool,
    pub records: Vec<SweepRecord>,
    pub summary: Summary,
}

impl ExperimentOutput {
    /// True when no record admits the bound.
    pub fn all_inapplicable(&self) -> bool {
        self.records.iter().all(|r| !r.bound_applicable())
    }
}

/// Index of t_relax, the plateau median and the index of the first recurrence.
///
/// The plateau starts at the first value ≤ ε. A later value is a recurrence when it exceeds
/// RECURRENCE_FACTOR times the median of the plateau values before it, provided at least
/// MIN_PLATEAU_RECORDS such values exist.
pub fn detect_recurrence(values: &[f64], eps: f64) -> (Option<usize>, Option<f64>, Option<usize>) {
    let Some(start) = values.iter().position(|v| *v <= eps) else {
        return (None, None, None);
    };
    let mut plateau: Vec<f64> = Vec::new();
    for (k, v) in values.iter().enumerate().skip(start) {
        if plateau.len() >= MIN_PLATEAU_RECORDS {
            let m = median(&plateau);
            if *v > RECURRENCE_FACTOR * m {
                return (Some(start), Some(m), Some(k));
            }
        }
        plateau.push(*v);
    }
    (Some(start), Some(median(&plateau)), None)
}

fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(|a, b| a.total_cmp(b));
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}

struct Shared<'a> {
    config: &'a ExperimentConfig,
    lattice: RingLattice,
    subsystem: SiteSet,
    state: InitialState,
    constants: AssumptionConstants,
    grid: Vec<Vec<C64>>,
}

fn record_margin(acc: &mut BTreeMap<String, MarginSummary>, r: &BoundReport) {
    if !r.applicable {
        return;
    }
    let e = acc.entry(r.id.clone()).or_insert_with(|| MarginSummary {
        id: r.id.clone(),
        evaluated: 0,
        violations: 0,
        min_margin: f64::INFINITY,
    });
    e.evaluated += 1;
    if !r.holds() {
        e.violations += 1;
    }
    e.min_margin = e.min_margin.min(r.margin);
}

fn evaluate_time(sh: &Shared, t: f64) -> Result<SweepRecord> {
    let prop = Propagator::build(sh.lattice, t)?;
    let partition = match correlation_regime(sh.lattice.len(), t, derive_constants(&sh.constants)?.mu) {
        Ok(()) => match blocking_partition(sh.lattice, &sh.subsystem, t, sh.constants.mu1) {
            Ok(p) => Ok(p),
            Err(Error::Regime(why)) => Err(why),
            Err(e) => return Err(e),
        },
        Err(why) => Err(why),
    };
    let mut sup_dist = 0.0f64;
    let mut best: Option<(f64, [f64; 5])> = None;
    let mut admissible = 0usize;
    let mut regime_note = partition.as_ref().err().cloned();
    let mut margins: BTreeMap<String, MarginSummary> = BTreeMap::new();
    for beta in &sh.grid {
        let bv = PhaseVector::on_set(&sh.subsystem, beta.clone())?;
        let ctx = MomentContext::new(&sh.state, &sh.constants, &prop, &sh.subsystem, &bv)?;
        let chi = sh.state.weyl_expectation(&ctx.alpha)?;
        let sigma = sh.state.sigma(&ctx.alpha, &ctx.alpha)?;
        sup_dist = sup_dist.max((chi - (0.5 * sigma).exp()).norm());
        let Ok(part) = &partition else { continue };
        match main_bound(&ctx, part) {
            Ok(mb) => {
                admissible += 1;
                record_margin(
                    &mut margins,
                    &BoundReport::evaluated("main-bound", mb.measured_lhs, mb.f_s),
                );
                if best.is_none_or(|(f, _)| mb.f_s > f) {
                    best = Some((mb.f_s, mb.terms));
                }
            }
            Err(Error::Regime(why)) => {
                if regime_note.is_none() {
                    regime_note = Some(why);
                }
            }
            Err(e) => return Err(e),
        }
        if sh.config.mode == Mode::Bounds {
            for r in lemma5_report(&ctx, part)? {
                record_margin(&mut margins, &r);
            }
            record_margin(&mut margins, &lemma2_report(&ctx, part.rooms())?);
        }
    }
    let (f_s, f_terms) = match best {
        Some((f, terms)) if admissible == sh.grid.len() => (f, terms),
        _ => (f64::NAN, [f64::NAN; 5]),
    };
    let (trace_dist, reconstruction_warnings) = if sh.config.mode == Mode::Reconstruct {
        reconstructed_distance(sh, &prop)?
    } else {
        (f64::NAN, Vec::new())
    };
    Ok(SweepRecord {
        t,
        sup_dist,
        f_s,
        f_terms,
        trace_dist,
        grid_points: sh.grid.len(),
        admissible_points: admissible,
        regime_note,
        margins: margins.into_values().collect(),
        reconstruction_warnings,
        t_relax_flag: false,
        recurrence_flag: false,
    })
}

/// ‖ρ_S(t) - ρ_G(t)‖_tr from the reconstructed reduced state and its Gaussian counterpart.
fn reconstructed_distance(sh: &Shared, prop: &Propagator) -> Result<(f64, Vec<String>)> {
    let m = sh.config.cutoff_for_subsystem();
    let grid = QuadratureGrid::for_cutoff(m, QUADRATURE_TOLERANCE)?;
    let units: Vec<PhaseVector> = sh
        .subsystem
        .members()
        .iter()
        .map(|&site| {
            let beta = PhaseVector::on_set(
                &sh.subsystem,
                sh.subsystem
                    .members()
                    .iter()
                    .map(|&k| C64::new(if k == site { 1.0 } else { 0.0 }, 0.0))
                    .collect(),
            )?;
            alpha_of_beta(prop, &sh.subsystem, &beta)
        })
        .collect::<Result<_>>()?;
    let state = &sh.state;
    if units.len() == 1 {
        let u = &units[0];
        let nbar = 0.5 * (-state.sigma(u, u)?.re - 1.0);
        let rec = reconstruct_diagonal(
            |r| {
                state
                    .weyl_expectation(&u.scaled(C64::new(r, 0.0)))
                    .map(|z| z.re)
                    .unwrap_or(f64::NAN)
            },
            m,
            &grid,
        )?;
        let rho = FockDensityMatrix::from_diagonal(&rec.probabilities)?;
        let target = thermal_reference(nbar.max(0.0), m)?;
        return Ok((trace_norm_distance(&rho, &target)?, rec.warnings));
    }
    // σ is sesquilinear, so the Gaussian χ needs only the 2×2 matrix σ(u_j, u_k).
    let mut sig = [[C64::new(0.0, 0.0); 2]; 2];
    for j in 0..2 {
        for k in 0..2 {
            sig[j][k] = state.sigma(&units[j], &units[k])?;
        }
    }
    let combine = |a: &[C64]| -> PhaseVector {
        units[0]
            .scaled(a[0])
            .add(&units[1].scaled(a[1]))
            .expect("same ring")
    };
    let rho = reconstruct(
        |a| state.weyl_expectation(&combine(a)).unwrap_or(C64::new(f64::NAN, 0.0)),
        2,
        m,
        &grid,
    )?;
    let gauss = reconstruct(
        |a| {
            let mut q = C64::new(0.0, 0.0);
            for j in 0..2 {
                for k in 0..2 {
                    q += a[j] * a[k].conj() * sig[j][k];
                }
            }
            (0.5 * q).exp()
        },
        2,
        m,
        &grid,
    )?;
    let mut warnings = rho.meta().map(|q| q.warnings.clone()).unwrap_or_default();
    warnings.extend(gauss.meta().map(|q| q.warnings.clone()).unwrap_or_default());
    Ok((trace_norm_distance(&rho, &gauss)?, warnings))
}

/// Runs the sweep in the current rayon pool; records come back in t-order.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentOutput> {
    config.validate()?;
    if config.mode == Mode::Verify {
        return input("verify mode runs the verification suite, not a sweep");
    }
    let (state, cert, derived) = config.assumption_constants()?;
    let lattice = config.lattice()?;
    let shared = Shared {
        config,
        lattice,
        subsystem: config.subsystem_set()?,
        state,
        constants: cert.constants,
        grid: beta_grid(config.subsystem.len(), config.beta_max, config.beta_angles),
    };
    let times = config.time_grid.points();
    let mut records: Vec<SweepRecord> = times
        .par_iter()
        .map(|t| evaluate_time(&shared, *t))
        .collect::<Result<_>>()?;

    let dists: Vec<f64> = records.iter().map(|r| r.sup_dist).collect();
    let (relax, plateau_median, rec) = detect_recurrence(&dists, config.epsilon);
    if let Some(k) = relax {
        records[k].t_relax_flag = true;
    }
    if let Some(k) = rec {
        records[k].recurrence_flag = true;
    }
    let bound_values: Vec<Option<f64>> = records
        .iter()
        .map(|r| if r.bound_applicable() { Some(r.f_s) } else { None })
        .collect();
    let window = relaxation_window(lattice.len(), &times, &bound_values, config.epsilon)?;
    let summary = Summary {
        t_relax_measured: relax.map(|k| times[k]),
        t_relax_bound: window.t_relax,
        plateau_median,
        recurrence: rec.map(|k| times[k]),
        t_rec: window.t_rec,
        applicable_records: records.iter().filter(|r| r.bound_applicable()).count(),
        bound_violations: records
            .iter()
            .flat_map(|r| r.margins.iter())
            .map(|m| m.violations)
            .sum(),
    };
    Ok(ExperimentOutput {
        config: config.clone(),
        constants: cert.constants,
        derived,
        certification_notes: cert.notes,
        clustering_empirical: cert.clustering_empirical,
        records,
        summary,
    })
}

pub const CSV_HEADER: &str =
    "t,sup_dist,F_S,F_term_1,F_term_2,F_term_3,F_term_4,F_term_5,trace_dist,t_relax_flag,recurrence_flag";

fn num(v: f64) -> String {
    if v.is_nan() {
        "NaN".into()
    } else {
        format!("{v:.16e}")
    }
}

pub fn write_csv<W: Write>(out: &ExperimentOutput, w: &mut W) -> std::io::Result<()> {
    writeln!(w, "{CSV_HEADER}")?;
    for r in &out.records {
        let mut cols = vec![num(r.t), num(r.sup_dist), num(r.f_s)];
        cols.extend(r.f_terms.iter().map(|v| num(*v)));
        cols.push(num(r.trace_dist));
        cols.push((r.t_relax_flag as u8).to_string());
        cols.push((r.recurrence_flag as u8).to_string());
        writeln!(w, "{}", cols.join(","))?;
    }
    Ok(())
}

/// The JSON sidecar: column kinds, config echo, constants, per-record extras and the summary.
pub fn metadata_json(out: &ExperimentOutput) -> serde_json::Value {
    let extras: Vec<serde_json::Value> = out
        .records
        .iter()
        .map(|r| {
            json!({
                "t": r.t,
                "grid_points": r.grid_points,
                "admissible_points": r.admissible_points,
                "regime_note": r.regime_note,
                "margins": r.margins,
                "reconstruction_warnings": r.reconstruction_warnings,
            })
        })
        .collect();
    json!({
        "version": env!("CARGO_PKG_VERSION"),
        "columns": {
            "t": "grid",
            "sup_dist": "measured (grid-sup over beta, not a true supremum)",
            "F_S": "certified bound (max over the beta grid; NaN unless every point is admissible)",
            "F_term_1": "certified bound term", "F_term_2": "certified bound term",
            "F_term_3": "certified bound term", "F_term_4": "certified bound term",
            "F_term_5": "certified bound term",
            "trace_dist": "measured (reconstructed)",
            "t_relax_flag": "derived from sup_dist",
            "recurrence_flag": "derived from sup_dist",
        },
        "config": out.config,
        "constants": out.constants,
        "derived_constants": out.derived,
        "certification_notes": out.certification_notes,
        "clustering_empirical": out.clustering_empirical,
        "beta_grid": {
            "radial_fractions": RADIAL_FRACTIONS,
            "beta_max": out.config.beta_max,
            "angles": out.config.beta_angles,
        },
        "records": extras,
        "summary": out.summary,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config(len: usize) -> ExperimentConfig {
        ExperimentConfig {
            length: len,
            ..ExperimentConfig::default()
        }
    }

    #[test]
    fn parses_grids_and_states() {
        let g: TimeGrid = "1:100:3:log".parse().unwrap();
        let p = g.points();
        assert_eq!(p[0], 1.0);
        assert!((p[1] - 10.0).abs() < 1e-12);
        assert_eq!(p[2], 100.0);
        assert_eq!("2:4:3".parse::<TimeGrid>().unwrap().points(), vec![2.0, 3.0, 4.0]);
        assert!("0:1:3:log".parse::<TimeGrid>().is_err());
        assert!("3:1:3".parse::<TimeGrid>().is_err());

        for s in ["fock:1,0,2", "fock-uniform:1", "thermal:0.5", "mixture:0.5*fock-uniform:1+0.5*fock-uniform:2"] {
            let spec: StateSpec = s.parse().unwrap();
            assert_eq!(spec.to_string(), s);
        }
        assert!("mixture:1*mixture:1*fock-uniform:1".parse::<StateSpec>().is_err());
        assert!("coherent:1".parse::<StateSpec>().is_err());
        assert!(StateSpec::Fock(vec![1, 1]).build(3).is_err());
    }

    #[test]
    fn config_text_and_validation() {
        let mut c = ExperimentConfig::default();
        c.apply_text("# comment\nlength = 50\nsubsystem = 1,2\nmode = bounds\n").unwrap();
        assert_eq!(c.length, 50);
        assert_eq!(c.subsystem, vec![1, 2]);
        assert_eq!(c.mode, Mode::Bounds);
        c.validate().unwrap();
        assert!(c.apply_text("bogus = 1").is_err());
        assert!(c.apply_text("length 3").is_err());

        assert!(ExperimentConfig::default().validate().is_err());
        let mut bad = config(10);
        bad.subsystem = vec![11];
        assert!(bad.validate().is_err());
        bad.subsystem = vec![1, 1];
        assert!(bad.validate().is_err());
        let mut bad = config(10);
        bad.subsystem = vec![1, 2, 3, 4];
        assert!(bad.validate().unwrap_err().to_string().contains("beta grid"));
        let mut bad = config(10);
        bad.mode = Mode::Reconstruct;
        bad.subsystem = vec![1, 2, 3];
        assert!(bad.validate().is_err());
        let mut bad = config(10);
        bad.epsilon = 0.0;
        assert!(bad.validate().is_err());
    }

    #[test]
    fn grid_shapes() {
        let g1 = beta_grid(1, 2.0, 8);
        assert_eq!(g1.len(), 40);
        assert!(g1.iter().all(|b| b[0].norm() > 0.0));
        let max = g1.iter().map(|b| b[0].norm()).fold(0.0, f64::max);
        assert!((max - 2.0).abs() < 1e-15);
        let g2 = beta_grid(2, 1.0, 8);
        assert_eq!(g2.len(), 41 * 41 - 1);
        assert_eq!(config(10).grid_size(), 40);
    }

    #[test]
    fn recurrence_detection() {
        let v = [0.5, 0.2, 0.05, 0.04, 0.05, 0.03, 0.2, 0.04];
        let (relax, med, rec) = detect_recurrence(&v, 0.06);
        assert_eq!(relax, Some(2));
        assert_eq!(rec, Some(6));
        assert!((med.unwrap() - 0.045).abs() < 1e-15);
        assert_eq!(detect_recurrence(&[1.0, 2.0], 0.1), (None, None, None));
        let (_, _, none) = detect_recurrence(&[0.01, 0.01, 0.01, 0.02], 0.05);
        assert_eq!(none, None);
    }

    #[test]
    fn zero_time_record_is_reproducible() {
        let mut c = config(40);
        c.time_grid = "0:0:1".parse().unwrap();
        let out = run_experiment(&c).unwrap();
        let r = &out.records[0];
        // At t = 0 the displacement stays on site 1 and α = β*.
        let want = beta_grid(1, 2.0, 8)
            .iter()
            .map(|b| {
                let x = b[0].norm_sqr();
                ((-x / 2.0).exp() * (1.0 - x) - (-1.5 * x).exp()).abs()
            })
            .fold(0.0, f64::max);
        assert!((r.sup_dist - want).abs() < 1e-15);
        assert!(r.f_s.is_nan());
        assert!(out.all_inapplicable());
        let again = run_experiment(&c).unwrap();
        assert_eq!(again.records[0].sup_dist.to_bits(), r.sup_dist.to_bits());
    }

    #[test]
    fn bounds_mode_margins_hold() {
        let mut c = config(800);
        c.mode = Mode::Bounds;
        c.beta_max = 1.0;
        c.time_grid = "4:8:2".parse().unwrap();
        let out = run_experiment(&c).unwrap();
        for r in &out.records {
            assert!(r.bound_applicable(), "t={}: {:?}", r.t, r.regime_note);
            assert_eq!(r.admissible_points, r.grid_points);
            assert!(r.sup_dist <= r.f_s);
            assert!(r.margins.iter().any(|m| m.id == "blocking-partition"));
            for m in &r.margins {
                assert_eq!(m.violations, 0, "{} at t={}", m.id, r.t);
            }
            let sum: f64 = r.f_terms.iter().sum();
            assert!((sum - r.f_s).abs() <= 1e-12 * r.f_s);
        }
        assert_eq!(out.summary.bound_violations, 0);
        assert!((out.summary.t_rec - 800f64.powf(6.0 / 7.0)).abs() < 1e-9);
    }

    #[test]
    fn large_beta_makes_bound_inadmissible() {
        let mut c = config(800);
        c.time_grid = "4:4:1".parse().unwrap();
        let out = run_experiment(&c).unwrap();
        let r = &out.records[0];
        assert!(r.f_s.is_nan());
        assert!(r.admissible_points < r.grid_points);
        assert!(r.regime_note.as_deref().unwrap().contains("sigma"));
    }

    #[test]
    fn reconstruct_mode_single_site() {
        let mut c = config(60);
        c.mode = Mode::Reconstruct;
        c.time_grid = "0:6:2".parse().unwrap();
        let out = run_experiment(&c).unwrap();
        let t0 = &out.records[0];
        // |1⟩ against thermal n̄ = 1: |1/4 - 1| + Σ_{n≠1, n≤16} 2^{-(n+1)}.
        let want = 0.75 + 0.5 + (0.25 - 0.5f64.powi(17));
        assert!((t0.trace_dist - want).abs() < 1e-6, "{}", t0.trace_dist);
        assert!(out.records[1].trace_dist < t0.trace_dist);
        for r in &out.records {
            assert!((0.0..=2.0).contains(&r.trace_dist));
            assert!(r.reconstruction_warnings.is_empty());
        }
    }

    #[test]
    fn reconstruct_mode_two_sites_at_zero_time() {
        let mut c = config(12);
        c.mode = Mode::Reconstruct;
        c.subsystem = vec![1, 2];
        c.cutoff = Some(2);
        c.time_grid = "0:0:1".parse().unwrap();
        let out = run_experiment(&c).unwrap();
        // |1,1⟩ against the product of two n̄ = 1 thermal states, cut at total ≤ 2:
        // weights (n1, n2) are 2^{-(n1+n2+2)}.
        let gauss_in: f64 = 1.0 / 4.0 + 2.0 / 8.0 + 3.0 / 16.0;
        let want = (1.0 - 1.0 / 16.0) + (gauss_in - 1.0 / 16.0);
        assert!((out.records[0].trace_dist - want).abs() < 1e-5, "{}", out.records[0].trace_dist);
    }

    #[test]
    fn csv_and_json_layout() {
        let mut c = config(40);
        c.time_grid = "0:2:3".parse().unwrap();
        let out = run_experiment(&c).unwrap();
        let mut buf = Vec::new();
        write_csv(&out, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], CSV_HEADER);
        assert_eq!(lines.len(), 4);
        assert_eq!(lines[1].split(',').count(), 11);
        assert!(lines[1].starts_with("0.0000000000000000e0,"));
        assert!(lines[1].contains(",NaN,"));
        let meta = metadata_json(&out);
        assert_eq!(meta["config"]["state"], "fock-uniform:1");
        assert_eq!(meta["config"]["time_grid"], "0:2:3");
        assert_eq!(meta["records"].as_array().unwrap().len(), 3);
        assert!(meta["summary"]["t_rec"].as_f64().unwrap() > 0.0);
    }
}
