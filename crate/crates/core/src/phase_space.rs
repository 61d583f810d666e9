//! Fock-space matrices from characteristic functions: Weyl matrix elements, quadrature
//! reconstruction, trace-norm distances and the truncation inequalities.

use std::collections::HashMap;
use std::f64::consts::PI;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;

use crate::bounds::BoundReport;
use crate::error::{input, Error, Result};
use crate::linalg::hermitian_trace_norm;
use crate::propagator::C64;
use crate::special::{gauss_legendre, laguerre_sequence, ln_factorial};

/// Occupation vectors of N modes with total number at most `cutoff`, ordered by
/// total and then lexicographically.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FockBasis {
    modes: usize,
    cutoff: usize,
    states: Vec<Vec<u32>>,
    index: HashMap<Vec<u32>, usize>,
}

impl FockBasis {
    pub fn new(modes: usize, cutoff: usize) -> Result<Self> {
        if modes == 0 {
            return input("a Fock basis needs at least one mode");
        }
        let mut states = Vec::new();
        for total in 0..=cutoff {
            let mut cur = vec![0u32; modes];
            fill(&mut states, &mut cur, 0, total as u32);
        }
        let index = states.iter().enumerate().map(|(k, s)| (s.clone(), k)).collect();
        Ok(Self {
            modes,
            cutoff,
            states,
            index,
        })
    }

    pub fn modes(&self) -> usize {
        self.modes
    }

    pub fn cutoff(&self) -> usize {
        self.cutoff
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn states(&self) -> &[Vec<u32>] {
        &self.states
    }

    pub fn index_of(&self, occ: &[u32]) -> Option<usize> {
        self.index.get(occ).copied()
    }
}

fn fill(out: &mut Vec<Vec<u32>>, cur: &mut Vec<u32>, pos: usize, left: u32) {
    if pos + 1 == cur.len() {
        cur[pos] = left;
        out.push(cur.clone());
        return;
    }
    for k in (0..=left).rev() {
        cur[pos] = k;
        fill(out, cur, pos + 1, left - k);
    }
}

/// How a reconstructed matrix was obtained.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct QuadratureMeta {
    pub radial_cutoff_t: f64,
    pub radial_nodes: usize,
    pub angular_nodes: usize,
    pub trace_deviation: f64,
    pub min_diagonal: f64,
    pub warnings: Vec<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FockDensityMatrix {
    basis: FockBasis,
    data: DMatrix<C64>,
    meta: Option<QuadratureMeta>,
}

impl FockDensityMatrix {
    pub fn new(basis: FockBasis, data: DMatrix<C64>) -> Result<Self> {
        if data.nrows() != basis.len() || data.ncols() != basis.len() {
            return input(format!("matrix is {}x{}, basis has {} states", data.nrows(), data.ncols(), basis.len()));
        }
        Ok(Self { basis, data, meta: None })
    }

    /// Single mode, diagonal p_0..p_m.
    pub fn from_diagonal(p: &[f64]) -> Result<Self> {
        if p.is_empty() {
            return input("need at least one diagonal entry");
        }
        let basis = FockBasis::new(1, p.len() - 1)?;
        let data = DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
            p.len(),
            p.iter().map(|v| C64::new(*v, 0.0)),
        ));
        Self::new(basis, data)
    }

    pub fn basis(&self) -> &FockBasis {
        &self.basis
    }

    pub fn data(&self) -> &DMatrix<C64> {
        &self.data
    }

    pub fn meta(&self) -> Option<&QuadratureMeta> {
        self.meta.as_ref()
    }

    pub fn trace(&self) -> C64 {
        self.data.trace()
    }

    pub fn element(&self, n: &[u32], m: &[u32]) -> Option<C64> {
        Some(self.data[(self.basis.index_of(n)?, self.basis.index_of(m)?)])
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.basis.len()).map(|k| self.data[(k, k)].re).collect()
    }

    /// P_M ρ P_M with M = {n⃗ : Σn_i ≤ m}, expressed in the smaller basis.
    pub fn project(&self, m: usize) -> Result<Self> {
        if m > self.basis.cutoff {
            return input(format!("projection cutoff {m} exceeds representation cutoff {}", self.basis.cutoff));
        }
        let small = FockBasis::new(self.basis.modes, m)?;
        let idx: Vec<usize> = small.states.iter().map(|s| self.basis.index_of(s).expect("nested basis")).collect();
        let k = idx.len();
        let data = DMatrix::from_fn(k, k, |r, c| self.data[(idx[r], idx[c])]);
        Self::new(small, data)
    }

    /// Same matrix with every entry outside M zeroed, kept in the full basis.
    fn zero_outside(&self, m: usize) -> DMatrix<C64> {
        let mut d = self.data.clone();
        for (r, s) in self.basis.states.iter().enumerate() {
            let tot: u32 = s.iter().sum();
            if tot as usize > m {
                for c in 0..d.ncols() {
                    d[(r, c)] = C64::new(0.0, 0.0);
                    d[(c, r)] = C64::new(0.0, 0.0);
                }
            }
        }
        d
    }

    pub fn max_abs_diff(&self, other: &Self) -> Result<f64> {
        self.check_compatible(other)?;
        Ok((&self.data - &other.data).iter().map(|z| z.norm()).fold(0.0, f64::max))
    }

    fn check_compatible(&self, other: &Self) -> Result<()> {
        if self.basis.modes != other.basis.modes || self.basis.cutoff != other.basis.cutoff {
            return input(format!(
                "density matrices differ in shape ({} modes / cutoff {} vs {} / {})",
                self.basis.modes, self.basis.cutoff, other.basis.modes, other.basis.cutoff
            ));
        }
        Ok(())
    }
}

/// ⟨n|D(α)|m⟩ with D(α) = e^{αb† - α*b}.
pub fn weyl_element(n: i64, m: i64, alpha: C64) -> Result<C64> {
    if n < 0 || m < 0 {
        return input(format!("Fock indices must be nonnegative, got ({n}, {m})"));
    }
    if n < m {
        return Ok(weyl_element(m, n, -alpha)?.conj());
    }
    let (n, m) = (n as usize, m as usize);
    let x = alpha.norm_sqr();
    let k = n - m;
    let lag = laguerre_sequence(m, k as f64, x)[m];
    let scale = (0.5 * (ln_factorial(m as u64) - ln_factorial(n as u64)) - 0.5 * x).exp();
    Ok(alpha.powu(k as u32) * scale * lag)
}

/// All ⟨n|D(α)|m⟩ for n, m ≤ nmax, from one Laguerre table per offset.
pub fn weyl_matrix(nmax: usize, alpha: C64) -> DMatrix<C64> {
    let x = alpha.norm_sqr();
    let mut out = DMatrix::from_element(nmax + 1, nmax + 1, C64::new(0.0, 0.0));
    let lf: Vec<f64> = (0..=nmax as u64).map(ln_factorial).collect();
    let mut apow = vec![C64::new(1.0, 0.0); nmax + 1];
    let mut mpow = vec![C64::new(1.0, 0.0); nmax + 1];
    let minus_conj = -alpha.conj();
    for k in 1..=nmax {
        apow[k] = apow[k - 1] * alpha;
        mpow[k] = mpow[k - 1] * minus_conj;
    }
    for k in 0..=nmax {
        let lag = laguerre_sequence(nmax - k, k as f64, x);
        for m in 0..=(nmax - k) {
            let n = m + k;
            let scale = (0.5 * (lf[m] - lf[n]) - 0.5 * x).exp() * lag[m];
            out[(n, m)] = apow[k] * scale;
            if k > 0 {
                // ⟨m|D(α)|n⟩ = ⟨n|D(-α)|m⟩* with (-α)^k conjugated.
                out[(m, n)] = mpow[k] * scale;
            }
        }
    }
    out
}

/// e^{-x/2}·p_{n,m}(x), the magnitude bound on |⟨n|D(α)|m⟩| at x = |α|².
pub fn weyl_magnitude_bound(n: usize, m: usize, x: f64) -> f64 {
    let (lo, hi) = (n.min(m), n.max(m));
    let k = hi - lo;
    let lag = laguerre_sequence(lo, k as f64, x)[lo].abs();
    (0.5 * (ln_factorial(lo as u64) - ln_factorial(hi as u64)) - 0.5 * x).exp() * x.sqrt().powi(k as i32) * lag
}

/// Per-mode polar quadrature: Gauss-Legendre radii on [0, √T] and a trapezoid rule in angle.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct QuadratureGrid {
    pub radial_cutoff_t: f64,
    pub radial_nodes: usize,
    pub angular_nodes: usize,
}

impl QuadratureGrid {
    /// T with c_{n,m}e^{-T/4} below `tol` for every n, m ≤ cutoff, where
    /// c_{n,m} = 2∫e^{-|α|²/4}p_{n,m}(|α|²)d²α.
    pub fn for_cutoff(cutoff: usize, tol: f64) -> Result<Self> {
        if !(tol > 0.0 && tol < 1.0) {
            return input(format!("quadrature tolerance must lie in (0, 1), got {tol}"));
        }
        let cmax = envelope_constant(cutoff);
        let t = (4.0 * (cmax / tol).ln()).max(16.0);
        let radial_nodes = 48 + 6 * cutoff + (2.0 * t.sqrt()) as usize;
        Ok(Self {
            radial_cutoff_t: t,
            radial_nodes,
            angular_nodes: 4 * (cutoff + 1),
        })
    }
}

/// max_{n,m ≤ cutoff} 2·2π∫_0^∞ e^{-x/4}p_{n,m}(x) dx/2, evaluated with Gauss-Legendre on [0, 400].
pub fn envelope_constant(cutoff: usize) -> f64 {
    let (xs, ws) = gauss_legendre(400, 0.0, 400.0);
    let mut worst = 0.0f64;
    for n in 0..=cutoff {
        for m in 0..=n {
            let mut acc = 0.0;
            for (x, w) in xs.iter().zip(&ws) {
                // e^{-x/4}p = e^{+x/4}·(e^{-x/2}p)
                acc += w * (0.25 * x).exp() * weyl_magnitude_bound(n, m, *x);
            }
            worst = worst.max(2.0 * PI * acc);
        }
    }
    worst
}

/// Deterministic pairwise sum of matrices.
fn pairwise_sum(mut parts: Vec<DMatrix<C64>>) -> Option<DMatrix<C64>> {
    while parts.len() > 1 {
        let mut next = Vec::with_capacity(parts.len().div_ceil(2));
        let mut it = parts.into_iter();
        while let Some(a) = it.next() {
            match it.next() {
                Some(b) => next.push(a + b),
                None => next.push(a),
            }
        }
        parts = next;
    }
    parts.pop()
}

/// Polar nodes (α, weight) for one mode, weights including r dr dθ.
fn mode_nodes(grid: &QuadratureGrid) -> Vec<(C64, f64)> {
    let (rs, ws) = gauss_legendre(grid.radial_nodes, 0.0, grid.radial_cutoff_t.sqrt());
    let k = grid.angular_nodes;
    let dtheta = 2.0 * PI / k as f64;
    let mut out = Vec::with_capacity(rs.len() * k);
    for (r, w) in rs.iter().zip(&ws) {
        for a in 0..k {
            out.push((C64::from_polar(*r, a as f64 * dtheta), w * r * dtheta));
        }
    }
    out
}

/// ⟨n⃗|ρ|m⃗⟩ = π^{-N}∫χ(α⃗)⟨n⃗|D(-α⃗)|m⃗⟩d²ᴺα for N ≤ 2, Hermitised as (ρ+ρ†)/2.
pub fn reconstruct<F>(chi: F, modes: usize, cutoff: usize, grid: &QuadratureGrid) -> Result<FockDensityMatrix>
where
    F: Fn(&[C64]) -> C64 + Sync,
{
    if modes == 0 || modes > 2 {
        return Err(Error::Unsupported(format!("reconstruction supports 1 or 2 modes, got {modes}")));
    }
    let basis = FockBasis::new(modes, cutoff)?;
    let nodes = mode_nodes(grid);
    let dim = basis.len();
    let raw = if modes == 1 {
        let parts: Vec<DMatrix<C64>> = nodes
            .par_chunks(grid.angular_nodes)
            .map(|ring| {
                let mut acc = DMatrix::from_element(dim, dim, C64::new(0.0, 0.0));
                for (a, w) in ring {
                    let c = chi(&[*a]) * *w;
                    if c == C64::new(0.0, 0.0) {
                        continue;
                    }
                    acc += weyl_matrix(cutoff, -*a) * c;
                }
                acc
            })
            .collect();
        pairwise_sum(parts).expect("grid is non-empty") / C64::new(PI, 0.0)
    } else {
        let d1: Vec<DMatrix<C64>> = nodes.par_iter().map(|(a, _)| weyl_matrix(cutoff, -*a)).collect();
        let parts: Vec<DMatrix<C64>> = nodes
            .par_iter()
            .enumerate()
            .map(|(k2, (a2, w2))| {
                // Inner integral over the first mode at fixed second-mode node.
                let mut inner = DMatrix::from_element(cutoff + 1, cutoff + 1, C64::new(0.0, 0.0));
                for (k1, (a1, w1)) in nodes.iter().enumerate() {
                    let c = chi(&[*a1, *a2]) * *w1;
                    if c == C64::new(0.0, 0.0) {
                        continue;
                    }
                    inner += &d1[k1] * c;
                }
                let outer = &d1[k2];
                let mut acc = DMatrix::from_element(dim, dim, C64::new(0.0, 0.0));
                for (r, n) in basis.states.iter().enumerate() {
                    for (c, m) in basis.states.iter().enumerate() {
                        acc[(r, c)] = inner[(n[0] as usize, m[0] as usize)]
                            * outer[(n[1] as usize, m[1] as usize)]
                            * *w2;
                    }
                }
                acc
            })
            .collect();
        pairwise_sum(parts).expect("grid is non-empty") / C64::new(PI * PI, 0.0)
    };
    let data = (&raw + raw.adjoint()) * C64::new(0.5, 0.0);
    let trace = data.trace().re;
    let min_diagonal = (0..dim).map(|k| data[(k, k)].re).fold(f64::INFINITY, f64::min);
    let mut warnings = Vec::new();
    if (trace - 1.0).abs() > TRACE_TOLERANCE {
        warnings.push(format!("reconstructed trace {trace} deviates from 1 by more than {TRACE_TOLERANCE}"));
    }
    if min_diagonal < -TRACE_TOLERANCE {
        warnings.push(format!("negative diagonal entry {min_diagonal}"));
    }
    let mut rho = FockDensityMatrix::new(basis, data)?;
    rho.meta = Some(QuadratureMeta {
        radial_cutoff_t: grid.radial_cutoff_t,
        radial_nodes: grid.radial_nodes,
        angular_nodes: grid.angular_nodes,
        trace_deviation: trace - 1.0,
        min_diagonal,
        warnings,
    });
    Ok(rho)
}

/// Allowed |tr ρ - 1| before a reconstruction is flagged.
pub const TRACE_TOLERANCE: f64 = 1e-3;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DiagonalReconstruction {
    pub probabilities: Vec<f64>,
    pub total: f64,
    pub warnings: Vec<String>,
}

/// p_n = ∫_0^T χ(√x)e^{-x/2}L_n(x)dx for a single mode with χ depending on |α| only.
pub fn reconstruct_diagonal<F>(chi_radial: F, cutoff: usize, grid: &QuadratureGrid) -> Result<DiagonalReconstruction>
where
    F: Fn(f64) -> f64,
{
    let nodes = grid.radial_nodes.max(2 * cutoff + 64);
    let (xs, ws) = gauss_legendre(nodes, 0.0, grid.radial_cutoff_t);
    let mut p = vec![0.0; cutoff + 1];
    for (x, w) in xs.iter().zip(&ws) {
        let c = chi_radial(x.sqrt()) * (-0.5 * x).exp() * w;
        for (pn, ln) in p.iter_mut().zip(laguerre_sequence(cutoff, 0.0, *x)) {
            *pn += c * ln;
        }
    }
    let total: f64 = p.iter().sum();
    let mut warnings = Vec::new();
    if (total - 1.0).abs() > TRACE_TOLERANCE {
        warnings.push(format!("probabilities sum to {total}"));
    }
    Ok(DiagonalReconstruction {
        probabilities: p,
        total,
        warnings,
    })
}

/// ‖ρ₁ - ρ₂‖_tr = Σ|λ(ρ₁ - ρ₂)|.
pub fn trace_norm_distance(rho1: &FockDensityMatrix, rho2: &FockDensityMatrix) -> Result<f64> {
    rho1.check_compatible(rho2)?;
    let diff = &rho1.data - &rho2.data;
    let scale = diff.iter().map(|z| z.norm()).fold(1.0, f64::max);
    let defect = (&diff - diff.adjoint()).iter().map(|z| z.norm()).fold(0.0, f64::max);
    if defect > 1e-9 * scale {
        return input(format!("difference is not Hermitian (defect {defect})"));
    }
    Ok(hermitian_trace_norm(&diff))
}

/// The trace outside M = {n⃗ : Σn_i ≤ m}.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum TailTrace {
    /// Read from the diagonal of a representation with a larger cutoff.
    FromMatrix,
    /// Supplied exactly, e.g. a geometric tail.
    Analytic(f64),
    /// tr[ρ(𝟙-P_M)] < N·max_i tr[ρn̂_i]/m.
    OccupationBound { modes: usize, max_occupation: f64 },
}

/// ‖ρ - P_MρP_M‖_tr ≤ 2√(tr[ρ(𝟙-P_M)]), the left side measured on `rho`'s representation.
pub fn gentle_truncation_bound(rho: &FockDensityMatrix, m: usize, tail: TailTrace) -> Result<BoundReport> {
    if m > rho.basis.cutoff {
        return input(format!("cutoff {m} exceeds representation cutoff {}", rho.basis.cutoff));
    }
    let projected = rho.zero_outside(m);
    let lhs = hermitian_trace_norm(&(&rho.data - projected));
    let tail_trace = match tail {
        TailTrace::FromMatrix => rho
            .basis
            .states
            .iter()
            .enumerate()
            .filter(|(_, s)| s.iter().sum::<u32>() as usize > m)
            .map(|(k, _)| rho.data[(k, k)].re)
            .sum::<f64>()
            .max(0.0),
        TailTrace::Analytic(v) => {
            if !(v >= 0.0) {
                return input(format!("tail trace must be >= 0, got {v}"));
            }
            v
        }
        TailTrace::OccupationBound { modes, max_occupation } => {
            if m == 0 {
                return input("occupation bound needs m >= 1");
            }
            modes as f64 * max_occupation / m as f64
        }
    };
    Ok(BoundReport::evaluated("gentle-truncation", lhs, 2.0 * tail_trace.sqrt()))
}

/// ‖P_M(ρ₁-ρ₂)P_M‖_tr ≤ |M|^{3/2}·max_{n⃗,m⃗∈M}|⟨n⃗|ρ₁-ρ₂|m⃗⟩|.
pub fn trace_norm_chain_report(rho1: &FockDensityMatrix, rho2: &FockDensityMatrix, m: usize) -> Result<BoundReport> {
    rho1.check_compatible(rho2)?;
    let p1 = rho1.project(m)?;
    let p2 = rho2.project(m)?;
    let diff = &p1.data - &p2.data;
    let lhs = hermitian_trace_norm(&diff);
    let max = diff.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let size = p1.basis.len() as f64;
    Ok(BoundReport::evaluated("trace-norm-chain", lhs, size.powf(1.5) * max))
}

/// Single-mode thermal state p_n = n̄ⁿ/(1+n̄)^{n+1}, n ≤ m.
pub fn thermal_reference(nbar: f64, m: usize) -> Result<FockDensityMatrix> {
    if !(nbar >= 0.0) || !nbar.is_finite() {
        return input(format!("mean occupation must be finite and >= 0, got {nbar}"));
    }
    let q = nbar / (1.0 + nbar);
    let p: Vec<f64> = (0..=m).map(|n| q.powi(n as i32) / (1.0 + nbar)).collect();
    FockDensityMatrix::from_diagonal(&p)
}
