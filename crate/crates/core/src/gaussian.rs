//! The Gaussian reference state: second moments γ = 2Γᵀ + 𝟙, their evolution
//! γ(t) = Cγ(0)C† and the characteristic function e^{-β†γβ/2}.

use nalgebra::DMatrix;

use crate::bounds::BoundReport;
use crate::error::{input, Result};
use crate::lattice::SiteSet;
use crate::propagator::{PhaseVector, Propagator, C64};
use crate::states::InitialState;

/// Dense γ is L×L complex; beyond this size callers should work with σ directly.
pub const MAX_DENSE_SITES: usize = 4096;

#[derive(Clone, Debug, PartialEq)]
pub struct SecondMoments {
    gamma: DMatrix<C64>,
    time: f64,
    /// Sites the rows refer to (1-based); the whole ring unless restricted.
    sites: Vec<usize>,
}

impl SecondMoments {
    /// [γ]_{l,k} = ⟨b_k†b_l⟩ + ⟨b_l b_k†⟩ = 2Γ_{kl} + δ_{lk}.
    pub fn from_state(state: &InitialState) -> Result<Self> {
        let l = state.num_sites();
        if l > MAX_DENSE_SITES {
            return Err(crate::Error::Size(format!("dense second moments limited to {MAX_DENSE_SITES} sites")));
        }
        let mut gamma = DMatrix::from_element(l, l, C64::new(0.0, 0.0));
        match state {
            InitialState::Gaussian(g) => {
                let corr = g.corr();
                for r in 0..l {
                    for c in 0..l {
                        gamma[(r, c)] = 2.0 * corr[(c, r)];
                    }
                }
            }
            _ => {
                for r in 1..=l {
                    for c in 1..=l {
                        let v = state.two_point(c, r)?;
                        if v != C64::new(0.0, 0.0) {
                            gamma[(r - 1, c - 1)] = 2.0 * v;
                        }
                    }
                }
            }
        }
        for i in 0..l {
            gamma[(i, i)] += 1.0;
        }
        Ok(Self {
            gamma,
            time: 0.0,
            sites: (1..=l).collect(),
        })
    }

    pub fn from_matrix(gamma: DMatrix<C64>, time: f64) -> Result<Self> {
        if gamma.nrows() != gamma.ncols() || gamma.nrows() == 0 {
            return input("second-moment matrix must be square and non-empty");
        }
        let n = gamma.nrows();
        Ok(Self {
            gamma,
            time,
            sites: (1..=n).collect(),
        })
    }

    pub fn gamma(&self) -> &DMatrix<C64> {
        &self.gamma
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn sites(&self) -> &[usize] {
        &self.sites
    }

    /// Principal submatrix on S.
    pub fn restrict(&self, s: &SiteSet) -> Result<Self> {
        if self.sites.len() != s.lattice().len() {
            return input("restriction needs full-ring second moments");
        }
        let idx: Vec<usize> = s.members().iter().map(|i| i - 1).collect();
        let k = idx.len();
        let gamma = DMatrix::from_fn(k, k, |r, c| self.gamma[(idx[r], idx[c])]);
        Ok(Self {
            gamma,
            time: self.time,
            sites: s.members().to_vec(),
        })
    }

    /// Largest deviation from Hermiticity.
    pub fn hermiticity_defect(&self) -> f64 {
        (&self.gamma - self.gamma.adjoint()).iter().map(|z| z.norm()).fold(0.0, f64::max)
    }
}

/// γ(t) = C γ(0) C†, column by column through the propagator's FFT.
pub fn evolve_gamma(gamma0: &SecondMoments, prop: &Propagator) -> Result<SecondMoments> {
    let l = prop.lattice().len();
    if gamma0.gamma.nrows() != l || gamma0.sites.len() != l {
        return input(format!(
            "second moments have {} rows, propagator acts on {l} sites",
            gamma0.gamma.nrows()
        ));
    }
    let apply_columns = |m: &DMatrix<C64>| -> Result<DMatrix<C64>> {
        let mut out = DMatrix::from_element(l, l, C64::new(0.0, 0.0));
        for c in 0..l {
            let col: Vec<C64> = m.column(c).iter().copied().collect();
            let v = prop.apply(&col)?;
            out.set_column(c, &nalgebra::DVector::from_vec(v));
        }
        Ok(out)
    };
    // C γ, then (C (Cγ)†)† = C γ C†.
    let cg = apply_columns(&gamma0.gamma)?;
    let gamma = apply_columns(&cg.adjoint())?.adjoint();
    Ok(SecondMoments {
        gamma,
        time: gamma0.time + prop.time(),
        sites: gamma0.sites.clone(),
    })
}

/// e^{-β†γ_Sβ/2} with β on the sites of `gamma_s`.
pub fn gaussian_char(gamma_s: &SecondMoments, beta: &PhaseVector) -> Result<f64> {
    if beta.sites() != gamma_s.sites.as_slice() {
        return input("beta must live on the sites of the restricted second moments");
    }
    let b = beta.values();
    let mut q = C64::new(0.0, 0.0);
    for (r, br) in b.iter().enumerate() {
        for (c, bc) in b.iter().enumerate() {
            q += br.conj() * gamma_s.gamma[(r, c)] * bc;
        }
    }
    Ok((-0.5 * q.re).exp())
}

/// ‖γ‖ for Hermitian γ: dense eigenvalues up to 512 sites, power iteration beyond.
pub fn spectral_norm(gamma: &SecondMoments) -> f64 {
    let n = gamma.gamma.nrows();
    if n <= 512 {
        return gamma
            .gamma
            .clone()
            .symmetric_eigenvalues()
            .iter()
            .fold(0.0, |m, v| m.max(v.abs()));
    }
    let mut v = nalgebra::DVector::from_fn(n, |i, _| C64::new(1.0 + (i % 7) as f64 * 1e-3, 0.0));
    v /= C64::new(v.norm(), 0.0);
    let mut lambda = 0.0f64;
    for _ in 0..10_000 {
        let w = &gamma.gamma * &v;
        let next = v.dotc(&w).re;
        let wn = w.norm();
        if wn == 0.0 {
            return 0.0;
        }
        v = w / C64::new(wn, 0.0);
        if (next - lambda).abs() <= 1e-10 * next.abs() {
            return wn.max(next);
        }
        lambda = next;
    }
    lambda
}

/// ([γ(t)]_{ii} - 1)/2 against ‖γ(0)‖.
pub fn mean_occupation_bound(gamma_t: &SecondMoments, gamma0_norm: f64, i: usize) -> Result<BoundReport> {
    let k = gamma_t
        .sites
        .iter()
        .position(|&s| s == i)
        .ok_or_else(|| crate::Error::Input(format!("site {i} not covered by the second moments")))?;
    let occ = 0.5 * (gamma_t.gamma[(k, k)].re - 1.0);
    Ok(BoundReport::evaluated("mean-occupation", occ, gamma0_norm))
}
