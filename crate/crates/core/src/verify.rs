//! Verification suite: oracle equivalence, propagator certification, randomized inequality
//! sweeps, bound soundness, relaxation/recurrence behaviour, reconstruction round trips and
//! second-moment conservation.

use std::f64::consts::{PI, TAU};

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::bounds::{
    clt_report, correlation_regime, derive_constants, lemma1_report, lemma2_report, lemma5_report, main_bound,
    taylor_report, variance_regime, zeta_tail_bound, BoundReport, MomentContext,
};
use crate::error::{Error, Result};
use crate::experiment::{run_experiment, ExperimentConfig, Mode, TimeGrid};
use crate::gaussian::{evolve_gamma, SecondMoments};
use crate::lattice::{blocking_partition, RingLattice, SiteSet};
use crate::oracle::{exact_char, SectorOracle};
use crate::phase_space::{
    gentle_truncation_bound, reconstruct, thermal_reference, trace_norm_chain_report, FockBasis, FockDensityMatrix,
    QuadratureGrid, TailTrace,
};
use crate::propagator::{alpha_of_beta, bessel_finite_size_report, lieb_robinson_check, PhaseVector, Propagator, C64};
use crate::special::laguerre;
use crate::states::{
    certify_assumptions, AssumptionConstants, CertifyOptions, GaussianState, InitialState, ProductFockState,
    StateMixture,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Level {
    Quick,
    Full,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    /// Worst observed value against its tolerance, or counts of violations.
    pub detail: String,
}

impl CheckResult {
    fn new(name: impl Into<String>, passed: bool, detail: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            passed,
            detail: detail.into(),
        }
    }

    pub fn line(&self) -> String {
        format!("{} {}: {}", if self.passed { "PASS" } else { "FAIL" }, self.name, self.detail)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct VerifyReport {
    pub level: Level,
    pub checks: Vec<CheckResult>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

pub const ORACLE_TOLERANCE: f64 = 1e-8;
pub const UNITARITY_TOLERANCE: f64 = 1e-10;
pub const GROUP_LAW_TOLERANCE: f64 = 1e-9;
pub const ROUNDTRIP_TOLERANCE: f64 = 1e-5;
pub const TRACE_WINDOW: f64 = 1e-3;
pub const CONSERVATION_TOLERANCE: f64 = 1e-10;
pub const TREND_FACTOR: f64 = 3.0;
pub const REGRESSION_TOLERANCE: f64 = 1e-9;

/// Grid-sup distance and reconstructed trace distance at L = 500, S = {1}, |1⟩, t = 2 and 40,
/// frozen from the first verified run.
pub const TREND_SUP_T2: f64 = 1.7014161350222934e-2;
pub const TREND_SUP_T40: f64 = 1.1895219510461852e-3;
pub const TREND_TRACE_T2: f64 = 5.0215001158769368e-2;
pub const TREND_TRACE_T40: f64 = 3.5015749909724893e-3;

fn ring(l: usize) -> Result<RingLattice> {
    RingLattice::new(l)
}

fn random_point(rng: &mut ChaCha8Rng, rmax: f64) -> C64 {
    C64::from_polar(rmax * rng.gen::<f64>().sqrt(), rng.gen_range(0.0..TAU))
}

// ---------------------------------------------------------------- oracle equivalence

/// χ from the dense sector oracle against the closed form with α = C†β, for |1⟩^{⊗L},
/// S = {1}, t ∈ [0, 3] and |β| ≤ 2.
pub fn oracle_equivalence(lens: &[usize], cases: usize, seed: u64) -> Result<CheckResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    let mut total = 0;
    for &l in lens {
        let lat = ring(l)?;
        let p = ProductFockState::uniform(l, 1)?;
        let oracle = SectorOracle::new(&p)?;
        let state = InitialState::from(p);
        let s = SiteSet::new(lat, [1])?;
        for _ in 0..cases {
            let t = rng.gen_range(0.0..3.0);
            let beta = PhaseVector::on_set(&s, vec![random_point(&mut rng, 2.0)])?;
            let alpha = alpha_of_beta(&Propagator::build(lat, t)?, &s, &beta)?;
            let closed = state.weyl_expectation(&alpha)?;
            let exact = exact_char(&oracle.evolve(t)?, &PhaseVector::full(lat, beta.to_dense())?)?;
            worst = worst.max((closed - exact).norm());
            total += 1;
        }
    }
    Ok(CheckResult::new(
        "oracle equivalence",
        worst <= ORACLE_TOLERANCE,
        format!("{total} cases, max |chi_closed - chi_oracle| = {worst:.3e} (tol {ORACLE_TOLERANCE:.0e})"),
    ))
}

// ---------------------------------------------------------------- propagator

pub fn check_unitarity(prop: &Propagator) -> CheckResult {
    let r = prop.unitarity_residual();
    CheckResult::new(
        format!("unitarity L={}", prop.lattice().len()),
        r <= UNITARITY_TOLERANCE,
        format!("residual {r:.3e} (tol {UNITARITY_TOLERANCE:.0e})"),
    )
}

/// max_l |(C(t₁) ⊛ C(t₂))_l - C(t₁+t₂)_l| by direct summation.
pub fn group_law_residual(len: usize, t1: f64, t2: f64) -> Result<f64> {
    let lat = ring(len)?;
    let a = Propagator::build(lat, t1)?;
    let b = Propagator::build(lat, t2)?;
    let ab = Propagator::build(lat, t1 + t2)?;
    let (ca, cb, cab) = (a.amplitudes(), b.amplitudes(), ab.amplitudes());
    let mut worst = 0.0f64;
    for l in 0..len {
        let mut acc = C64::new(0.0, 0.0);
        for m in 0..len {
            acc += ca[m] * cb[(l + len - m) % len];
        }
        worst = worst.max((acc - cab[l]).norm());
    }
    Ok(worst)
}

pub fn propagator_certification(seed: u64) -> Result<CheckResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut parts = Vec::new();
    let mut ok = true;
    let mut worst_u = 0.0f64;
    for l in [8usize, 64, 512, 4096] {
        let t = rng.gen_range(0.5..20.0);
        worst_u = worst_u.max(Propagator::build(ring(l)?, t)?.unitarity_residual());
    }
    ok &= worst_u <= UNITARITY_TOLERANCE;
    parts.push(format!("unitarity max {worst_u:.3e}"));
    let mut worst_g = 0.0f64;
    for _ in 0..10 {
        let r = group_law_residual(256, rng.gen_range(-10.0..10.0), rng.gen_range(-10.0..10.0))?;
        worst_g = worst_g.max(r);
    }
    ok &= worst_g <= GROUP_LAW_TOLERANCE;
    parts.push(format!("group law max {worst_g:.3e}"));
    let mut violations = 0;
    let mut evaluated = 0;
    for len in [128usize, 512] {
        for t in [1.0, 2.0, 4.0, 8.0] {
            let p = Propagator::build(ring(len)?, t)?;
            for l in 0..=20 {
                let r = bessel_finite_size_report(&p, l)?;
                evaluated += r.applicable as usize;
                violations += (!r.holds()) as usize;
            }
        }
    }
    ok &= violations == 0 && evaluated == 2 * 4 * 21;
    parts.push(format!("Bessel finite-size {violations} violations of {evaluated}"));
    Ok(CheckResult::new("propagator certification", ok, parts.join(", ")))
}

// ---------------------------------------------------------------- inequality ledger

/// Product states with occupations in {0, 1, 2} and mixtures of them.
fn random_state(rng: &mut ChaCha8Rng, len: usize) -> Result<InitialState> {
    let product = |rng: &mut ChaCha8Rng| -> Result<InitialState> {
        Ok(if rng.gen_bool(0.5) {
            ProductFockState::uniform(len, rng.gen_range(0..=2))?.into()
        } else {
            ProductFockState::new((0..len).map(|_| rng.gen_range(0..=2)).collect())?.into()
        })
    };
    if rng.gen_bool(0.7) {
        return product(rng);
    }
    let k = rng.gen_range(2..=3);
    let raw: Vec<f64> = (0..k).map(|_| rng.gen_range(0.1..1.0)).collect();
    let sum: f64 = raw.iter().sum();
    let mut weights: Vec<f64> = raw.iter().map(|w| w / sum).collect();
    let head: f64 = weights[..k - 1].iter().sum();
    weights[k - 1] = 1.0 - head;
    let comps = (0..k).map(|_| product(rng)).collect::<Result<Vec<_>>>()?;
    Ok(StateMixture::new(weights, comps)?.into())
}

fn random_len(rng: &mut ChaCha8Rng) -> usize {
    (rng.gen_range((64f64).ln()..(5000f64).ln())).exp().round() as usize
}

/// Consecutive disjoint intervals walking around the ring from a random start.
fn walk_intervals(rng: &mut ChaCha8Rng, lat: RingLattice, count: usize, max_w: usize, max_gap: usize) -> Result<Vec<SiteSet>> {
    let l = lat.len();
    let mut pos = rng.gen_range(0..l);
    let mut used = 0;
    let mut out = Vec::new();
    for _ in 0..count {
        let w = rng.gen_range(1..=max_w);
        let gap = rng.gen_range(0..=max_gap);
        if used + w + gap >= l {
            break;
        }
        out.push(SiteSet::interval(lat, pos % l + 1, w)?);
        pos += w + gap;
        used += w + gap;
    }
    Ok(out)
}

fn random_beta(rng: &mut ChaCha8Rng, s: &SiteSet, rmax: f64) -> Result<PhaseVector> {
    PhaseVector::on_set(s, (0..s.len()).map(|_| random_point(rng, rmax)).collect())
}

fn constants_for(state: &InitialState, seed: u64) -> Result<AssumptionConstants> {
    Ok(certify_assumptions(
        state,
        &CertifyOptions {
            seed,
            samples: 40,
            ..CertifyOptions::default()
        },
    )?
    .constants)
}

#[derive(Default)]
struct Tally {
    configs: usize,
    evaluated: usize,
    violations: usize,
    worst: Option<(f64, String)>,
}

impl Tally {
    fn add(&mut self, reports: &[BoundReport]) {
        self.configs += 1;
        for r in reports.iter().filter(|r| r.applicable) {
            self.evaluated += 1;
            if !r.holds() {
                self.violations += 1;
            }
            let rel = r.margin / r.lhs.abs().max(r.rhs.abs()).max(f64::MIN_POSITIVE);
            if self.worst.as_ref().map_or(true, |(w, _)| rel < *w) {
                self.worst = Some((rel, r.id.clone()));
            }
        }
    }

    fn result(&self, name: &str, needed: usize) -> CheckResult {
        let worst = match &self.worst {
            Some((w, id)) => format!(", smallest relative margin {w:.3e} ({id})"),
            None => String::new(),
        };
        CheckResult::new(
            name,
            self.violations == 0 && self.configs >= needed,
            format!(
                "{} configurations, {} evaluated inequalities, {} violations{worst}",
                self.configs, self.evaluated, self.violations
            ),
        )
    }
}

fn ledger_variances(rng: &mut ChaCha8Rng, configs: usize) -> Result<CheckResult> {
    let mut tally = Tally::default();
    while tally.configs < configs {
        let l = random_len(rng);
        let lat = ring(l)?;
        let t = rng.gen_range(1.0..(l as f64).powf(6.0 / 7.0)) * if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
        let state = random_state(rng, l)?;
        let ac = constants_for(&state, rng.gen())?;
        let s = SiteSet::interval(lat, rng.gen_range(1..=l), rng.gen_range(1..=3))?;
        let beta = random_beta(rng, &s, 1.0)?;
        let prop = Propagator::build(lat, t)?;
        let ctx = MomentContext::new(&state, &ac, &prop, &s, &beta)?;
        let ab = walk_intervals(rng, lat, 2, 30, l / 2)?;
        let count = rng.gen_range(1..=5);
        let parts = walk_intervals(rng, lat, count, l / 5 + 1, 3)?;
        if ab.len() < 2 || parts.is_empty() {
            continue;
        }
        tally.add(&lemma1_report(&ctx, &ab[0], &ab[1], &parts)?);
    }
    Ok(tally.result("variance decay", configs))
}

fn ledger_fourth_moments(rng: &mut ChaCha8Rng, configs: usize) -> Result<CheckResult> {
    let mut tally = Tally::default();
    while tally.configs < configs {
        let l = random_len(rng);
        let lat = ring(l)?;
        let t = rng.gen_range(1.0..(l as f64).powf(6.0 / 7.0));
        let state = random_state(rng, l)?;
        let ac = constants_for(&state, rng.gen())?;
        let s = SiteSet::interval(lat, rng.gen_range(1..=l), rng.gen_range(1..=3))?;
        let beta = random_beta(rng, &s, 1.0)?;
        let prop = Propagator::build(lat, t)?;
        let ctx = MomentContext::new(&state, &ac, &prop, &s, &beta)?;
        let count = rng.gen_range(1..=6);
        let sets = walk_intervals(rng, lat, count, 20, 10)?;
        if sets.is_empty() || !variance_regime(l, t) {
            continue;
        }
        tally.add(&[lemma2_report(&ctx, &sets)?]);
    }
    Ok(tally.result("fourth moments", configs))
}

fn ledger_lieb_robinson(rng: &mut ChaCha8Rng, configs: usize) -> Result<CheckResult> {
    let mut tally = Tally::default();
    while tally.configs < configs {
        let l = random_len(rng);
        let lat = ring(l)?;
        let t = rng.gen_range(-40.0..40.0);
        let s = SiteSet::interval(lat, rng.gen_range(1..=l), rng.gen_range(1..=4))?;
        let beta = random_beta(rng, &s, 2.0)?;
        let prop = Propagator::build(lat, t)?;
        let a = walk_intervals(rng, lat, 1, l / 3 + 1, 0)?;
        let Some(a) = a.first() else { continue };
        let a = a.difference(&s)?;
        tally.add(&lieb_robinson_check(&prop, &s, &beta, &a)?);
    }
    Ok(tally.result("Lieb-Robinson", configs))
}

fn ledger_blocking(rng: &mut ChaCha8Rng, configs: usize) -> Result<CheckResult> {
    let mut tally = Tally::default();
    let mut attempts = 0usize;
    while tally.configs < configs {
        attempts += 1;
        if attempts > 50 * configs {
            return Err(Error::Regime("could not draw enough admissible blocking configurations".into()));
        }
        let l = random_len(rng);
        let lat = ring(l)?;
        let tmax = (l as f64).powf(6.0 / 7.0).min(400.0);
        let t = rng.gen_range(2.0..tmax);
        let state = random_state(rng, l)?;
        let ac = constants_for(&state, rng.gen())?;
        let mu = derive_constants(&ac)?.mu;
        if correlation_regime(l, t, mu).is_err() {
            continue;
        }
        let s = SiteSet::interval(lat, rng.gen_range(1..=l), rng.gen_range(1..=3))?;
        let part = match blocking_partition(lat, &s, t, ac.mu1) {
            Ok(p) => p,
            Err(Error::Regime(_)) => continue,
            Err(e) => return Err(e),
        };
        let beta = random_beta(rng, &s, 1.0)?;
        let prop = Propagator::build(lat, t)?;
        let ctx = MomentContext::new(&state, &ac, &prop, &s, &beta)?;
        tally.add(&lemma5_report(&ctx, &part)?);
    }
    Ok(tally.result("blocking estimates", configs))
}

fn ledger_zeta(rng: &mut ChaCha8Rng, configs: usize) -> Result<CheckResult> {
    let mut tally = Tally::default();
    while tally.configs < configs {
        let l = random_len(rng);
        let lat = ring(l)?;
        let count = rng.gen_range(1..=4);
        let sets = walk_intervals(rng, lat, count, l / 4 + 1, l / 8 + 1)?;
        let mut members: Vec<usize> = sets.iter().flat_map(|s| s.members().iter().copied()).collect();
        members.sort_unstable();
        let a = SiteSet::new(lat, members)?;
        let j = rng.gen_range(1..=l);
        let mu = rng.gen_range(0.01..2.0);
        let eps = rng.gen_range(0.01..2.0);
        tally.add(&[zeta_tail_bound(&a, j, mu, eps)?]);
    }
    Ok(tally.result("zeta tail bound", configs))
}

fn ledger_clt(rng: &mut ChaCha8Rng, configs: usize) -> Result<CheckResult> {
    let mut tally = Tally::default();
    while tally.configs < configs {
        let l = random_len(rng);
        let lat = ring(l)?;
        let state = random_state(rng, l)?;
        let count = rng.gen_range(1..=5);
        let sets = walk_intervals(rng, lat, count, 12, 6)?;
        let mut alphas = Vec::with_capacity(sets.len());
        for set in &sets {
            let raw = random_beta(rng, set, 1.0)?;
            let s = state.sigma(&raw, &raw)?.norm();
            let target = rng.gen_range(0.01..1.0);
            let scale = if s > 0.0 { (target / s).sqrt() } else { 1.0 };
            alphas.push(raw.scaled(C64::new(scale, 0.0)));
        }
        if alphas.is_empty() {
            continue;
        }
        tally.add(&[clt_report(&state, &alphas)?]);
    }
    Ok(tally.result("CLT bound", configs))
}

fn ledger_taylor(rng: &mut ChaCha8Rng, configs: usize) -> Result<CheckResult> {
    let mut tally = Tally::default();
    while tally.configs < configs {
        let l = random_len(rng);
        let lat = ring(l)?;
        let state = random_state(rng, l)?;
        let set = SiteSet::interval(lat, rng.gen_range(1..=l), rng.gen_range(1..=10))?;
        let alpha = random_beta(rng, &set, 1.5)?;
        tally.add(&taylor_report(&state, &alpha)?);
    }
    Ok(tally.result("Taylor facts", configs))
}

/// Each family on `configs` random admissible configurations, L ∈ [64, 5000].
pub fn inequality_ledger(configs: usize, seed: u64) -> Result<Vec<CheckResult>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(vec![
        ledger_variances(&mut rng, configs)?,
        ledger_fourth_moments(&mut rng, configs)?,
        ledger_lieb_robinson(&mut rng, configs)?,
        ledger_blocking(&mut rng, configs)?,
        ledger_zeta(&mut rng, configs)?,
        ledger_clt(&mut rng, configs)?,
        ledger_taylor(&mut rng, configs)?,
    ])
}

// ---------------------------------------------------------------- main bound

/// |χ - e^{σ_𝓛/2}| ≤ F_S at every grid point; an inadmissible point counts as a failure.
pub fn main_bound_soundness(lens: &[usize], times: &[f64], radii: &[f64], angles: usize) -> Result<CheckResult> {
    let mut points = 0;
    let mut violations = 0;
    let mut inadmissible = 0;
    let mut min_margin = f64::INFINITY;
    for &l in lens {
        let lat = ring(l)?;
        let state: InitialState = ProductFockState::uniform(l, 1)?.into();
        let ac = constants_for(&state, 0)?;
        let s = SiteSet::new(lat, [1])?;
        for &t in times {
            let prop = Propagator::build(lat, t)?;
            let part = blocking_partition(lat, &s, t, ac.mu1)?;
            for &r in radii {
                for k in 0..angles {
                    let beta = PhaseVector::on_set(&s, vec![C64::from_polar(r, TAU * k as f64 / angles as f64)])?;
                    let ctx = MomentContext::new(&state, &ac, &prop, &s, &beta)?;
                    points += 1;
                    match main_bound(&ctx, &part) {
                        Ok(mb) => {
                            min_margin = min_margin.min(mb.margin);
                            violations += (!mb.holds()) as usize;
                        }
                        Err(Error::Regime(_)) => inadmissible += 1,
                        Err(e) => return Err(e),
                    }
                }
            }
        }
    }
    Ok(CheckResult::new(
        "main bound soundness",
        violations == 0 && inadmissible == 0,
        format!("{points} grid points, {violations} violations, {inadmissible} inadmissible, min margin {min_margin:.3e}"),
    ))
}

// ---------------------------------------------------------------- dynamics

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TrendValues {
    pub sup_t2: f64,
    pub sup_t40: f64,
    pub trace_t2: f64,
    pub trace_t40: f64,
}

/// L = 500, |1⟩^{⊗L}, S = {1}, default β grid, t ∈ {2, 40}, reconstruct mode.
pub fn trend_values() -> Result<TrendValues> {
    let cfg = ExperimentConfig {
        length: 500,
        mode: Mode::Reconstruct,
        time_grid: TimeGrid {
            start: 2.0,
            stop: 40.0,
            count: 2,
            log: false,
        },
        ..ExperimentConfig::default()
    };
    let out = run_experiment(&cfg)?;
    let (a, b) = (&out.records[0], &out.records[1]);
    Ok(TrendValues {
        sup_t2: a.sup_dist,
        sup_t40: b.sup_dist,
        trace_t2: a.trace_dist,
        trace_t40: b.trace_dist,
    })
}

pub fn relaxation_trend() -> Result<CheckResult> {
    let v = trend_values()?;
    let sup_ratio = v.sup_t2 / v.sup_t40;
    let trace_ratio = v.trace_t2 / v.trace_t40;
    let frozen = [
        (v.sup_t2, TREND_SUP_T2),
        (v.sup_t40, TREND_SUP_T40),
        (v.trace_t2, TREND_TRACE_T2),
        (v.trace_t40, TREND_TRACE_T40),
    ];
    let drift = frozen
        .iter()
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, |m: f64, d| if d.is_nan() { d } else { m.max(d) });
    let reproduced = frozen.iter().all(|(a, b)| (a - b).abs() <= REGRESSION_TOLERANCE);
    Ok(CheckResult::new(
        "relaxation trend",
        sup_ratio >= TREND_FACTOR && trace_ratio >= TREND_FACTOR && reproduced,
        format!(
            "sup {:.16e} -> {:.16e} (x{sup_ratio:.2}), trace {:.16e} -> {:.16e} (x{trace_ratio:.2}), regression drift {drift:.1e}",
            v.sup_t2, v.sup_t40, v.trace_t2, v.trace_t40
        ),
    ))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RecurrenceScan {
    pub len: usize,
    pub recurrence: Option<f64>,
    pub t_relax: Option<f64>,
    pub plateau_median: Option<f64>,
    /// Largest later value over the smallest value of the scan.
    pub max_over_min: f64,
    pub t_min: f64,
}

/// Dynamics sweep on t ∈ [0, t_max] with `count` points and the default ε.
pub fn recurrence_scan(len: usize, t_max: f64, count: usize) -> Result<RecurrenceScan> {
    let cfg = ExperimentConfig {
        length: len,
        mode: Mode::Dynamics,
        time_grid: TimeGrid {
            start: 0.0,
            stop: t_max,
            count,
            log: false,
        },
        ..ExperimentConfig::default()
    };
    let out = run_experiment(&cfg)?;
    let d: Vec<f64> = out.records.iter().map(|r| r.sup_dist).collect();
    let (kmin, dmin) = d
        .iter()
        .enumerate()
        .fold((0, f64::INFINITY), |(k, m), (i, v)| if *v < m { (i, *v) } else { (k, m) });
    let later = d[kmin..].iter().copied().fold(0.0, f64::max);
    Ok(RecurrenceScan {
        len,
        recurrence: out.summary.recurrence,
        t_relax: out.summary.t_relax_measured,
        plateau_median: out.summary.plateau_median,
        max_over_min: later / dmin,
        t_min: out.records[kmin].t,
    })
}

pub fn recurrence_detection() -> Result<CheckResult> {
    let small = recurrence_scan(100, 100.0, 401)?;
    let large = recurrence_scan(400, 100.0, 401)?;
    let passed = match (small.recurrence, large.recurrence) {
        (Some(a), Some(b)) => b > a,
        (Some(_), None) => true,
        _ => false,
    };
    let show = |s: &RecurrenceScan| {
        format!(
            "L={}: recurrence {:?}, t_relax {:?}, plateau median {:.3e}, later max / min {:.2} (min at t={})",
            s.len,
            s.recurrence,
            s.t_relax,
            s.plateau_median.unwrap_or(f64::NAN),
            s.max_over_min,
            s.t_min
        )
    };
    Ok(CheckResult::new(
        "recurrence detection",
        passed,
        format!("{}; {}", show(&small), show(&large)),
    ))
}

// ---------------------------------------------------------------- reconstruction

/// Known single-mode states: vacuum, |1⟩, |2⟩ and thermal n̄ ∈ {0.5, 1, 2}, with exact χ
/// and exact diagonal.
fn roundtrip_cases(m: usize) -> Vec<(String, Box<dyn Fn(f64) -> f64 + Sync>, Vec<f64>)> {
    let mut out: Vec<(String, Box<dyn Fn(f64) -> f64 + Sync>, Vec<f64>)> = Vec::new();
    for n in 0..=2usize {
        let mut p = vec![0.0; m + 1];
        p[n] = 1.0;
        out.push((
            format!("|{n}>"),
            Box::new(move |x: f64| (-x / 2.0).exp() * laguerre(n, x)),
            p,
        ));
    }
    for nbar in [0.5, 1.0, 2.0] {
        let q = nbar / (1.0 + nbar);
        out.push((
            format!("thermal {nbar}"),
            Box::new(move |x: f64| (-(2.0 * nbar + 1.0) * x / 2.0).exp()),
            (0..=m).map(|n| q.powi(n as i32) / (1.0 + nbar)).collect(),
        ));
    }
    out
}

fn random_density(rng: &mut ChaCha8Rng, cutoff: usize) -> Result<FockDensityMatrix> {
    let n = cutoff + 1;
    // Spectrum decaying with occupation keeps some weight outside small projections.
    let g = DMatrix::from_fn(n, n, |r, _| {
        C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)) * (-(r as f64) * rng.gen_range(0.0..0.6)).exp()
    });
    let mut rho = &g * g.adjoint();
    let tr = rho.trace();
    rho /= tr;
    FockDensityMatrix::new(FockBasis::new(1, cutoff)?, rho)
}

pub fn reconstruction_roundtrips(pairs: usize, seed: u64) -> Result<CheckResult> {
    let m = 24;
    let grid = QuadratureGrid::for_cutoff(m, 1e-8)?;
    let mut worst = 0.0f64;
    let mut worst_trace = 0.0f64;
    let mut worst_name = String::new();
    for (name, chi, diag) in roundtrip_cases(m) {
        let rho = reconstruct(|a| C64::new(chi(a[0].norm_sqr()), 0.0), 1, m, &grid)?;
        let target = FockDensityMatrix::from_diagonal(&diag)?;
        let err = rho.max_abs_diff(&target)?;
        if err > worst {
            worst = err;
            worst_name = name;
        }
        worst_trace = worst_trace.max((rho.trace().re - 1.0).abs());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut violations = 0;
    for _ in 0..pairs {
        let cutoff = 12;
        let a = random_density(&mut rng, cutoff)?;
        let b = random_density(&mut rng, cutoff)?;
        let k = rng.gen_range(1..cutoff);
        violations += (!gentle_truncation_bound(&a, k, TailTrace::FromMatrix)?.holds()) as usize;
        violations += (!trace_norm_chain_report(&a, &b, k)?.holds()) as usize;
    }
    // Thermal states against the analytic tail and the occupation form.
    for nbar in [0.5, 1.0, 2.0] {
        let th = thermal_reference(nbar, 80)?;
        for k in [2usize, 5, 10, 20] {
            let tail = (nbar / (1.0 + nbar)).powi(k as i32 + 1);
            violations += (!gentle_truncation_bound(&th, k, TailTrace::Analytic(tail))?.holds()) as usize;
            let occ = TailTrace::OccupationBound {
                modes: 1,
                max_occupation: nbar,
            };
            violations += (!gentle_truncation_bound(&th, k, occ)?.holds()) as usize;
        }
    }
    Ok(CheckResult::new(
        "reconstruction round trips",
        worst <= ROUNDTRIP_TOLERANCE && worst_trace <= TRACE_WINDOW && violations == 0,
        format!(
            "max entry error {worst:.3e} ({worst_name}), max |tr - 1| {worst_trace:.3e}, {violations} truncation/chain violations over {pairs} random pairs"
        ),
    ))
}

// ---------------------------------------------------------------- second moments

/// Translation-invariant Gaussian states with mode occupations n_k ≥ 0 on a ring of `len`.
fn translation_invariant_states(len: usize) -> Result<Vec<GaussianState>> {
    let mut out = Vec::new();
    let shapes: [fn(f64) -> f64; 2] = [|k| 0.5 + 0.4 * k.cos(), |k| 0.7 + 0.3 * k.sin() + 0.2 * (2.0 * k).cos()];
    for shape in shapes {
        let occ: Vec<f64> = (0..len).map(|k| shape(2.0 * PI * k as f64 / len as f64)).collect();
        let corr = DMatrix::from_fn(len, len, |i, j| {
            let mut acc = C64::new(0.0, 0.0);
            for (k, n) in occ.iter().enumerate() {
                acc += C64::from_polar(*n, 2.0 * PI * k as f64 * (i as f64 - j as f64) / len as f64);
            }
            acc / len as f64
        });
        out.push(GaussianState::new(corr)?);
    }
    Ok(out)
}

pub fn second_moment_conservation(len: usize, times: &[f64]) -> Result<CheckResult> {
    let lat = ring(len)?;
    let mut worst = 0.0f64;
    for g in translation_invariant_states(len)? {
        let g0 = SecondMoments::from_state(&g.into())?;
        for &t in times {
            let gt = evolve_gamma(&g0, &Propagator::build(lat, t)?)?;
            let d = (gt.gamma() - g0.gamma()).iter().map(|z| z.norm()).fold(0.0, f64::max);
            worst = worst.max(d);
        }
    }
    Ok(CheckResult::new(
        "second-moment conservation",
        worst <= CONSERVATION_TOLERANCE,
        format!("max |gamma(t) - gamma(0)| = {worst:.3e} (tol {CONSERVATION_TOLERANCE:.0e})"),
    ))
}

// ---------------------------------------------------------------- suite

/// Quick: oracle, propagator, 100 configurations per inequality family, round trips and
/// conservation. Full: every acceptance criterion at its stated size.
pub fn verify_suite(level: Level) -> Result<VerifyReport> {
    let mut checks = vec![
        oracle_equivalence(&[4, 6], 20, 1)?,
        propagator_certification(2)?,
    ];
    let ledger_size = match level {
        Level::Quick => 100,
        Level::Full => 1000,
    };
    checks.extend(inequality_ledger(ledger_size, 3)?);
    if level == Level::Full {
        checks.push(main_bound_soundness(
            &[2000, 4000],
            &[4.0, 8.0, 16.0, 32.0],
            &[0.25, 0.5, 0.75, 1.0],
            8,
        )?);
        checks.push(relaxation_trend()?);
        checks.push(recurrence_detection()?);
    }
    checks.push(reconstruction_roundtrips(100, 7)?);
    checks.push(second_moment_conservation(256, &[1.0, 10.0, 100.0])?);
    Ok(VerifyReport { level, checks })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn corrupted_propagator_is_reported() {
        let lat = ring(64).unwrap();
        let p = Propagator::build(lat, 3.0).unwrap();
        assert!(check_unitarity(&p).passed);
        let mut amps = p.amplitudes().to_vec();
        amps[3] *= 1.001;
        let bad = p.with_amplitudes(amps).unwrap();
        let c = check_unitarity(&bad);
        assert!(!c.passed);
        assert!(c.line().starts_with("FAIL unitarity L=64"));
    }

    #[test]
    fn group_law_small() {
        assert!(group_law_residual(32, 1.3, -0.4).unwrap() < 1e-12);
    }

    #[test]
    fn ledger_smoke() {
        for c in inequality_ledger(10, 11).unwrap() {
            assert!(c.passed, "{}", c.line());
        }
    }

    #[test]
    fn translation_invariant_states_are_valid() {
        let states = translation_invariant_states(16).unwrap();
        let g = states[1].corr();
        // Circulant: entries depend on i - j only.
        assert!((g[(3, 1)] - g[(5, 3)]).norm() < 1e-14);
        assert!(second_moment_conservation(16, &[0.5, 3.0]).unwrap().passed);
    }

    #[test]
    fn roundtrip_quick() {
        let c = reconstruction_roundtrips(10, 1).unwrap();
        assert!(c.passed, "{}", c.line());
    }
}
