//! Brute-force reference dynamics in the fixed-particle-number sector of small rings.
//!
//! Everything here is computed without the circulant propagator: the sector Hamiltonian is
//! diagonalised densely and Weyl operators are exponentiated on a truncated Fock space.

use std::collections::HashMap;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{input, Error, Result};
use crate::lattice::SiteSet;
use crate::linalg::expm;
use crate::phase_space::{FockBasis, FockDensityMatrix};
use crate::propagator::{PhaseVector, C64};
use crate::states::ProductFockState;

pub const MAX_SITES: usize = 8;
pub const MAX_PARTICLES: u64 = 8;
/// C(15, 8), the sector dimension at L = N = 8.
pub const MAX_DIMENSION: usize = 6435;
/// Largest per-site truncation tried for a Weyl operator.
pub const MAX_TRUNCATION: usize = 400;

/// Occupation vectors with Σn_i = N in lexicographic order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NumberSectorBasis {
    len: usize,
    particles: u32,
    states: Vec<Vec<u32>>,
    index: HashMap<Vec<u32>, usize>,
}

impl NumberSectorBasis {
    pub fn new(len: usize, particles: u32) -> Result<Self> {
        if len < 2 {
            return input(format!("sector needs at least 2 sites, got {len}"));
        }
        if len > MAX_SITES || particles as u64 > MAX_PARTICLES {
            return Err(Error::Size(format!(
                "sector L={len}, N={particles} exceeds the oracle guard L <= {MAX_SITES}, N <= {MAX_PARTICLES}"
            )));
        }
        let mut states = Vec::new();
        let mut cur = vec![0u32; len];
        enumerate(&mut states, &mut cur, 0, particles);
        if states.len() > MAX_DIMENSION {
            return Err(Error::Size(format!("sector dimension {} above {MAX_DIMENSION}", states.len())));
        }
        let index = states.iter().enumerate().map(|(k, s)| (s.clone(), k)).collect();
        Ok(Self {
            len,
            particles,
            states,
            index,
        })
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn particles(&self) -> u32 {
        self.particles
    }

    pub fn dim(&self) -> usize {
        self.states.len()
    }

    pub fn states(&self) -> &[Vec<u32>] {
        &self.states
    }

    pub fn index_of(&self, occ: &[u32]) -> Option<usize> {
        self.index.get(occ).copied()
    }

    /// -Σ_bonds (b_i†b_{i+1} + h.c.); a two-site ring has a single bond.
    pub fn hamiltonian(&self) -> DMatrix<f64> {
        let bonds: Vec<(usize, usize)> = if self.len == 2 {
            vec![(0, 1)]
        } else {
            (0..self.len).map(|i| (i, (i + 1) % self.len)).collect()
        };
        let d = self.dim();
        let mut h = DMatrix::zeros(d, d);
        for (col, s) in self.states.iter().enumerate() {
            for &(i, j) in &bonds {
                for (to, from) in [(i, j), (j, i)] {
                    if s[from] == 0 {
                        continue;
                    }
                    let mut t = s.clone();
                    t[from] -= 1;
                    t[to] += 1;
                    let amp = ((s[from] as f64) * (t[to] as f64)).sqrt();
                    let row = self.index[&t];
                    h[(row, col)] -= amp;
                }
            }
        }
        h
    }
}

fn enumerate(out: &mut Vec<Vec<u32>>, cur: &mut Vec<u32>, pos: usize, left: u32) {
    if pos + 1 == cur.len() {
        cur[pos] = left;
        out.push(cur.clone());
        return;
    }
    for k in 0..=left {
        cur[pos] = k;
        enumerate(out, cur, pos + 1, left - k);
    }
}

/// Eigendecomposition of one sector Hamiltonian together with a product initial state.
#[derive(Clone, Debug)]
pub struct SectorOracle {
    basis: Arc<NumberSectorBasis>,
    energies: DVector<f64>,
    vectors: DMatrix<f64>,
    initial: usize,
}

impl SectorOracle {
    pub fn new(initial: &ProductFockState) -> Result<Self> {
        let occ = initial.occupations();
        let total = initial.total();
        if total > MAX_PARTICLES {
            return Err(Error::Size(format!("{total} particles exceed the oracle guard {MAX_PARTICLES}")));
        }
        let basis = NumberSectorBasis::new(occ.len(), total as u32)?;
        let eig = SymmetricEigen::new(basis.hamiltonian());
        let initial = basis.index_of(occ).expect("initial state lies in its own sector");
        Ok(Self {
            basis: Arc::new(basis),
            energies: eig.eigenvalues,
            vectors: eig.eigenvectors,
            initial,
        })
    }

    pub fn basis(&self) -> &NumberSectorBasis {
        &self.basis
    }

    /// e^{-iHt}|n⃗₀⟩.
    pub fn evolve(&self, t: f64) -> Result<SectorState> {
        if !t.is_finite() {
            return input(format!("time must be finite, got {t}"));
        }
        let d = self.basis.dim();
        let row = self.vectors.row(self.initial);
        let coeff: Vec<C64> = (0..d)
            .map(|k| C64::from_polar(row[k], -self.energies[k] * t))
            .collect();
        let amps = DVector::from_fn(d, |r, _| {
            let mut acc = C64::new(0.0, 0.0);
            for (k, c) in coeff.iter().enumerate() {
                acc += c * self.vectors[(r, k)];
            }
            acc
        });
        Ok(SectorState {
            basis: Arc::clone(&self.basis),
            time: t,
            amplitudes: amps,
        })
    }
}

/// An amplitude vector in a number sector.
#[derive(Clone, Debug)]
pub struct SectorState {
    basis: Arc<NumberSectorBasis>,
    time: f64,
    amplitudes: DVector<C64>,
}

impl SectorState {
    pub fn basis(&self) -> &NumberSectorBasis {
        &self.basis
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn amplitudes(&self) -> &DVector<C64> {
        &self.amplitudes
    }

    pub fn norm(&self) -> f64 {
        self.amplitudes.norm()
    }
}

pub fn evolve_exact(initial: &ProductFockState, t: f64) -> Result<SectorState> {
    SectorOracle::new(initial)?.evolve(t)
}

/// Top (keep × keep) block of exp(αb† - α*b), with the truncation raised in steps of 10
/// until the block moves by less than 1e-12.
fn truncated_weyl(alpha: C64, keep: usize) -> Result<DMatrix<C64>> {
    let block = |nmax: usize| {
        let mut g = DMatrix::from_element(nmax + 1, nmax + 1, C64::new(0.0, 0.0));
        for n in 0..nmax {
            let s = ((n + 1) as f64).sqrt();
            g[(n + 1, n)] = alpha * s;
            g[(n, n + 1)] = -alpha.conj() * s;
        }
        expm(&g).view((0, 0), (keep, keep)).into_owned()
    };
    let mut nmax = keep + 9;
    let mut prev = block(nmax);
    loop {
        nmax += 10;
        if nmax > MAX_TRUNCATION {
            return Err(Error::Size(format!(
                "Weyl truncation did not settle below n_max = {MAX_TRUNCATION} for |alpha| = {}",
                alpha.norm()
            )));
        }
        let next = block(nmax);
        let change = (&next - &prev).iter().map(|z| z.norm()).fold(0.0, f64::max);
        prev = next;
        if change < 1e-12 {
            return Ok(prev);
        }
    }
}

/// ⟨ψ|D(α)|ψ⟩ with D(α) the tensor product of per-site truncated Weyl operators.
pub fn exact_char(state: &SectorState, alpha: &PhaseVector) -> Result<C64> {
    let basis = &state.basis;
    if alpha.lattice().len() != basis.len {
        return input(format!(
            "phase vector on a ring of {} sites, sector has {}",
            alpha.lattice().len(),
            basis.len
        ));
    }
    let keep = basis.particles as usize + 1;
    let dense = alpha.to_dense();
    let mut weyl = Vec::with_capacity(basis.len);
    for a in &dense {
        weyl.push(if a.norm() == 0.0 {
            None
        } else {
            Some(truncated_weyl(*a, keep)?)
        });
    }
    let psi = &state.amplitudes;
    let mut acc = C64::new(0.0, 0.0);
    for (r, n) in basis.states.iter().enumerate() {
        if psi[r] == C64::new(0.0, 0.0) {
            continue;
        }
        let mut row = C64::new(0.0, 0.0);
        'col: for (c, m) in basis.states.iter().enumerate() {
            let mut prod = psi[c];
            for (site, w) in weyl.iter().enumerate() {
                match w {
                    None => {
                        if n[site] != m[site] {
                            continue 'col;
                        }
                    }
                    Some(w) => prod *= w[(n[site] as usize, m[site] as usize)],
                }
            }
            row += prod;
        }
        acc += psi[r].conj() * row;
    }
    Ok(acc)
}

/// Reduced density matrix on |S| ≤ 2 sites, in a Fock basis of cutoff N.
pub fn exact_reduced(state: &SectorState, s: &SiteSet) -> Result<FockDensityMatrix> {
    let basis = &state.basis;
    if s.lattice().len() != basis.len {
        return input("subsystem lives on a different ring");
    }
    if s.is_empty() || s.len() > 2 {
        return Err(Error::Unsupported(format!("reduced states need 1 or 2 sites, got {}", s.len())));
    }
    let local: Vec<usize> = s.members().iter().map(|i| i - 1).collect();
    let fock = FockBasis::new(local.len(), basis.particles as usize)?;
    let mut groups: HashMap<Vec<u32>, Vec<(usize, C64)>> = HashMap::new();
    for (k, occ) in basis.states.iter().enumerate() {
        let rest: Vec<u32> = occ
            .iter()
            .enumerate()
            .filter(|(i, _)| !local.contains(i))
            .map(|(_, v)| *v)
            .collect();
        let here: Vec<u32> = local.iter().map(|i| occ[*i]).collect();
        let idx = fock.index_of(&here).expect("local occupation within cutoff");
        groups.entry(rest).or_default().push((idx, state.amplitudes[k]));
    }
    let dim = fock.len();
    let mut rho = DMatrix::from_element(dim, dim, C64::new(0.0, 0.0));
    let mut keys: Vec<&Vec<u32>> = groups.keys().collect();
    keys.sort();
    for key in keys {
        let members = &groups[key];
        for (a, x) in members {
            for (b, y) in members {
                rho[(*a, *b)] += x * y.conj();
            }
        }
    }
    FockDensityMatrix::new(fock, rho)
}

/// σ(α) and f(α) from finite differences of r ↦ ⟨D(rα)⟩ at r = 0.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FiniteDifferenceMoments {
    pub sigma: C64,
    pub f: C64,
}

/// Second derivative from five-point stencils at h = 1e-2 and h/2 with one Richardson step
/// (error O(h^6)); fourth derivative from a Romberg table of the five-point stencil at
/// h = 0.2, 0.1, 0.05, 0.025 (error O(h^8)).
pub fn finite_difference_moments(state: &SectorState, alpha: &PhaseVector) -> Result<FiniteDifferenceMoments> {
    let mut cache: HashMap<i64, C64> = HashMap::new();
    // Evaluation points are integer multiples of the finest step used by each stencil.
    let mut chi = |r: f64| -> Result<C64> {
        let key = (r * 1e6).round() as i64;
        if let Some(v) = cache.get(&key) {
            return Ok(*v);
        }
        let v = exact_char(state, &alpha.scaled(C64::new(r, 0.0)))?;
        cache.insert(key, v);
        Ok(v)
    };
    let mut second = |h: f64| -> Result<C64> {
        Ok((-chi(2.0 * h)? + 16.0 * chi(h)? - 30.0 * chi(0.0)? + 16.0 * chi(-h)? - chi(-2.0 * h)?) / (12.0 * h * h))
    };
    let h = 1e-2;
    let d1 = second(h)?;
    let d2 = second(h / 2.0)?;
    let sigma = (64.0 * d2 - d1) / 63.0;

    let mut fourth = |h: f64| -> Result<C64> {
        Ok((chi(2.0 * h)? - 4.0 * chi(h)? + 6.0 * chi(0.0)? - 4.0 * chi(-h)? + chi(-2.0 * h)?) / h.powi(4))
    };
    let mut table: Vec<C64> = Vec::new();
    for h in [0.2, 0.1, 0.05, 0.025] {
        table.push(fourth(h)?);
    }
    for level in 1..table.len() {
        let factor = 4f64.powi(level as i32);
        for k in (level..table.len()).rev() {
            table[k] = (factor * table[k] - table[k - 1]) / (factor - 1.0);
        }
    }
    Ok(FiniteDifferenceMoments {
        sigma,
        f: *table.last().expect("non-empty table"),
    })
}
