//! Number-conserving initial states: product Fock states, Gaussian states and finite
//! mixtures, with their correlation functions, Weyl expectations and phase-space
//! moments σ and f.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{input, Error, Result};
use crate::lattice::{set_dist, RingLattice, SiteSet};
use crate::propagator::{PhaseVector, C64};
use crate::special::laguerre;

#[derive(Clone, Debug, PartialEq)]
pub struct ProductFockState {
    occupations: Vec<u32>,
}

impl ProductFockState {
    pub fn new(occupations: Vec<u32>) -> Result<Self> {
        if occupations.len() < 2 {
            return input("a product state needs at least 2 sites");
        }
        Ok(Self { occupations })
    }

    pub fn uniform(len: usize, n: u32) -> Result<Self> {
        Self::new(vec![n; len])
    }

    pub fn occupations(&self) -> &[u32] {
        &self.occupations
    }

    pub fn total(&self) -> u64 {
        self.occupations.iter().map(|&n| n as u64).sum()
    }
}

/// A number-conserving Gaussian state fixed by Γ_ij = ⟨b_i† b_j⟩.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianState {
    corr: DMatrix<C64>,
}

impl GaussianState {
    /// Rejects Γ that is not Hermitian or has an eigenvalue below -1e-12.
    pub fn new(corr: DMatrix<C64>) -> Result<Self> {
        let l = corr.nrows();
        if l < 2 || corr.ncols() != l {
            return input("correlation matrix must be square with at least 2 sites");
        }
        let scale = corr.iter().map(|z| z.norm()).fold(1.0, f64::max);
        if (&corr - corr.adjoint()).iter().any(|z| z.norm() > 1e-12 * scale) {
            return input("correlation matrix is not Hermitian");
        }
        let lo = corr.clone().symmetric_eigenvalues().min();
        if lo < -1e-12 * scale {
            return input(format!("correlation matrix is not positive semidefinite (eigenvalue {lo})"));
        }
        Ok(Self { corr })
    }

    /// Γ = n̄·1: the uniform thermal state of the free modes.
    pub fn thermal(len: usize, nbar: f64) -> Result<Self> {
        if !(nbar >= 0.0) || !nbar.is_finite() {
            return input(format!("mean occupation must be finite and >= 0, got {nbar}"));
        }
        Self::new(DMatrix::from_diagonal_element(len, len, C64::new(nbar, 0.0)))
    }

    pub fn corr(&self) -> &DMatrix<C64> {
        &self.corr
    }
}

/// A convex combination of product Fock and Gaussian states.
#[derive(Clone, Debug, PartialEq)]
pub struct StateMixture {
    weights: Vec<f64>,
    components: Vec<InitialState>,
}

impl StateMixture {
    pub fn new(weights: Vec<f64>, components: Vec<InitialState>) -> Result<Self> {
        if weights.is_empty() || weights.len() != components.len() {
            return input("mixture needs one weight per component and at least one component");
        }
        if weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
            return input("mixture weights must be finite and nonnegative");
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return input(format!("mixture weights sum to {total}, not 1"));
        }
        let l = components[0].num_sites();
        for c in &components {
            if matches!(c, InitialState::Mixture(_)) {
                return input("mixture components must be product Fock or Gaussian states");
            }
            if c.num_sites() != l {
                return input("mixture components live on rings of different size");
            }
        }
        Ok(Self { weights, components })
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn components(&self) -> &[InitialState] {
        &self.components
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum InitialState {
    ProductFock(ProductFockState),
    Gaussian(GaussianState),
    Mixture(StateMixture),
}

impl From<ProductFockState> for InitialState {
    fn from(s: ProductFockState) -> Self {
        Self::ProductFock(s)
    }
}

impl From<GaussianState> for InitialState {
    fn from(s: GaussianState) -> Self {
        Self::Gaussian(s)
    }
}

impl From<StateMixture> for InitialState {
    fn from(s: StateMixture) -> Self {
        Self::Mixture(s)
    }
}

/// Operator slots of the quartic display: creation slots I, J and annihilation slots K, L,
/// weighted by α_i α_j α_k* α_l*.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Slot {
    I,
    J,
    K,
    L,
}

impl Slot {
    fn is_creation(self) -> bool {
        matches!(self, Slot::I | Slot::J)
    }
}

/// One term of a normal-ordered operator word.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Reduced {
    /// ⟨b_i† b_j† b_k b_l⟩
    NormalOrdered,
    /// δ_{delta.0, delta.1} ⟨b_{corr.0}† b_{corr.1}⟩
    Contracted { delta: (Slot, Slot), corr: (Slot, Slot) },
    /// δ_{first} δ_{second}
    DoubleContracted { first: (Slot, Slot), second: (Slot, Slot) },
}

use Reduced::{Contracted as C1, DoubleContracted as C2, NormalOrdered as N4};
use Slot::{I, J, K, L};

/// The six words of ⟨b̂(α)^4⟩ with two creators and two annihilators, each reduced to
/// normal order with [b_i, b_j†] = δ_ij.
pub const FOURTH_MOMENT_TABLE: [(&str, &[Reduced]); 6] = [
    ("b_i† b_j† b_k b_l", &[N4]),
    ("b_i† b_k b_j† b_l", &[N4, C1 { delta: (K, J), corr: (I, L) }]),
    (
        "b_i† b_k b_l b_j†",
        &[N4, C1 { delta: (K, J), corr: (I, L) }, C1 { delta: (L, J), corr: (I, K) }],
    ),
    (
        "b_k b_j† b_i† b_l",
        &[N4, C1 { delta: (K, I), corr: (J, L) }, C1 { delta: (K, J), corr: (I, L) }],
    ),
    (
        "b_k b_j† b_l b_i†",
        &[
            N4,
            C1 { delta: (K, I), corr: (J, L) },
            C1 { delta: (L, I), corr: (J, K) },
            C1 { delta: (K, J), corr: (I, L) },
            C2 { first: (K, J), second: (L, I) },
        ],
    ),
    (
        "b_k b_l b_i† b_j†",
        &[
            N4,
            C1 { delta: (K, J), corr: (I, L) },
            C1 { delta: (L, J), corr: (I, K) },
            C1 { delta: (K, I), corr: (J, L) },
            C2 { first: (K, I), second: (L, J) },
            C1 { delta: (L, I), corr: (J, K) },
            C2 { first: (L, I), second: (K, J) },
        ],
    ),
];

fn pairs_creation_with_annihilation(p: (Slot, Slot)) -> bool {
    p.0.is_creation() != p.1.is_creation()
}

/// f(α) = Σ_words Σ_terms, given Q4 = Σ α_iα_jα_k*α_l*⟨b_i†b_j†b_kb_l⟩,
/// g = Σ α_iα_l*⟨b_i†b_l⟩ and ‖α‖².
///
/// A δ pairs one unstarred with one starred α and sums to ‖α‖²; a two-point factor
/// always carries one creator and one annihilator slot and sums to g.
fn assemble_fourth_moment(q4: C64, g: C64, norm_sq: f64) -> C64 {
    let mut total = C64::new(0.0, 0.0);
    for (_, terms) in FOURTH_MOMENT_TABLE.iter() {
        for term in terms.iter() {
            total += match *term {
                Reduced::NormalOrdered => q4,
                Reduced::Contracted { delta, corr } => {
                    debug_assert!(pairs_creation_with_annihilation(delta));
                    debug_assert!(corr.0.is_creation() && !corr.1.is_creation());
                    g * norm_sq
                }
                Reduced::DoubleContracted { first, second } => {
                    debug_assert!(pairs_creation_with_annihilation(first));
                    debug_assert!(pairs_creation_with_annihilation(second));
                    C64::new(norm_sq * norm_sq, 0.0)
                }
            };
        }
    }
    total
}

/// Walks two sorted supports in lockstep, yielding sites present in both.
fn common_sites<'a>(
    a: &'a PhaseVector,
    b: &'a PhaseVector,
) -> impl Iterator<Item = (usize, C64, C64)> + 'a {
    let (sa, va, sb, vb) = (a.sites(), a.values(), b.sites(), b.values());
    let (mut i, mut j) = (0usize, 0usize);
    std::iter::from_fn(move || {
        while i < sa.len() && j < sb.len() {
            match sa[i].cmp(&sb[j]) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => {
                    let out = (sa[i], va[i], vb[j]);
                    i += 1;
                    j += 1;
                    return Some(out);
                }
            }
        }
        None
    })
}

impl InitialState {
    pub fn num_sites(&self) -> usize {
        match self {
            Self::ProductFock(p) => p.occupations.len(),
            Self::Gaussian(g) => g.corr.nrows(),
            Self::Mixture(m) => m.components[0].num_sites(),
        }
    }

    pub fn lattice(&self) -> RingLattice {
        RingLattice::new(self.num_sites()).expect("states have at least 2 sites")
    }

    fn check_site(&self, i: usize) -> Result<()> {
        if i == 0 || i > self.num_sites() {
            return input(format!("site {i} outside 1..={}", self.num_sites()));
        }
        Ok(())
    }

    fn check_vector(&self, a: &PhaseVector) -> Result<()> {
        if a.lattice().len() != self.num_sites() {
            return input(format!(
                "phase vector on a ring of {} sites, state has {}",
                a.lattice().len(),
                self.num_sites()
            ));
        }
        Ok(())
    }

    /// ⟨b_i† b_j⟩.
    pub fn two_point(&self, i: usize, j: usize) -> Result<C64> {
        self.check_site(i)?;
        self.check_site(j)?;
        Ok(match self {
            Self::ProductFock(p) => {
                if i == j {
                    C64::new(p.occupations[i - 1] as f64, 0.0)
                } else {
                    C64::new(0.0, 0.0)
                }
            }
            Self::Gaussian(g) => g.corr[(i - 1, j - 1)],
            Self::Mixture(m) => {
                let mut acc = C64::new(0.0, 0.0);
                for (w, c) in m.weights.iter().zip(&m.components) {
                    acc += *w * c.two_point(i, j)?;
                }
                acc
            }
        })
    }

    /// ⟨b_i† b_j† b_k b_l⟩.
    pub fn four_point(&self, i: usize, j: usize, k: usize, l: usize) -> Result<C64> {
        for s in [i, j, k, l] {
            self.check_site(s)?;
        }
        Ok(match self {
            Self::ProductFock(p) => {
                let n = |s: usize| p.occupations[s - 1] as f64;
                let v = if i == j {
                    if i == k && i == l {
                        n(i) * (n(i) - 1.0)
                    } else {
                        0.0
                    }
                } else {
                    let hits = ((i == k && j == l) as u8 + (i == l && j == k) as u8) as f64;
                    n(i) * n(j) * hits
                };
                C64::new(v, 0.0)
            }
            Self::Gaussian(g) => {
                let c = |a: usize, b: usize| g.corr[(a - 1, b - 1)];
                c(i, l) * c(j, k) + c(i, k) * c(j, l)
            }
            Self::Mixture(m) => {
                let mut acc = C64::new(0.0, 0.0);
                for (w, c) in m.weights.iter().zip(&m.components) {
                    acc += *w * c.four_point(i, j, k, l)?;
                }
                acc
            }
        })
    }

    /// Σ_{ij} a_i b_j* Γ_ij.
    pub fn quadratic_form(&self, a: &PhaseVector, b: &PhaseVector) -> Result<C64> {
        self.check_vector(a)?;
        self.check_vector(b)?;
        Ok(match self {
            Self::ProductFock(p) => common_sites(a, b)
                .map(|(s, x, y)| p.occupations[s - 1] as f64 * x * y.conj())
                .sum(),
            Self::Gaussian(g) => {
                let mut acc = C64::new(0.0, 0.0);
                for (i, x) in a.iter() {
                    let mut row = C64::new(0.0, 0.0);
                    for (j, y) in b.iter() {
                        row += y.conj() * g.corr[(i - 1, j - 1)];
                    }
                    acc += x * row;
                }
                acc
            }
            Self::Mixture(m) => {
                let mut acc = C64::new(0.0, 0.0);
                for (w, c) in m.weights.iter().zip(&m.components) {
                    acc += *w * c.quadratic_form(a, b)?;
                }
                acc
            }
        })
    }

    /// Q4 = Σ α_iα_jα_k*α_l* ⟨b_i†b_j†b_kb_l⟩.
    pub fn quartic_form(&self, a: &PhaseVector) -> Result<C64> {
        self.check_vector(a)?;
        Ok(match self {
            Self::ProductFock(p) => {
                let (mut same, mut lin, mut sq) = (0.0, 0.0, 0.0);
                for (s, x) in a.iter() {
                    let n = p.occupations[s - 1] as f64;
                    let x2 = x.norm_sqr();
                    same += n * (n - 1.0) * x2 * x2;
                    lin += n * x2;
                    sq += n * n * x2 * x2;
                }
                C64::new(same + 2.0 * (lin * lin - sq), 0.0)
            }
            Self::Gaussian(_) => {
                let g = self.quadratic_form(a, a)?;
                2.0 * g * g
            }
            Self::Mixture(m) => {
                let mut acc = C64::new(0.0, 0.0);
                for (w, c) in m.weights.iter().zip(&m.components) {
                    acc += *w * c.quartic_form(a)?;
                }
                acc
            }
        })
    }

    /// ⟨D(α)⟩ with D(α) = exp(Σ α_i b_i† - α_i* b_i).
    pub fn weyl_expectation(&self, a: &PhaseVector) -> Result<C64> {
        self.check_vector(a)?;
        Ok(match self {
            Self::ProductFock(p) => {
                let mut prod = 1.0;
                for (s, x) in a.iter() {
                    let x2 = x.norm_sqr();
                    prod *= (-0.5 * x2).exp() * laguerre(p.occupations[s - 1] as usize, x2);
                }
                C64::new(prod, 0.0)
            }
            Self::Gaussian(_) => (0.5 * self.sigma(a, a)?).exp(),
            Self::Mixture(m) => {
                let mut acc = C64::new(0.0, 0.0);
                for (w, c) in m.weights.iter().zip(&m.components) {
                    acc += *w * c.weyl_expectation(a)?;
                }
                acc
            }
        })
    }

    /// σ(α_A, α_B) = -Σ_{i,j} α_i α_j* (⟨b_i†b_j⟩ + ⟨b_j b_i†⟩) = -(2Σ α_iα_j*Γ_ij + Σ α_iα_i*).
    pub fn sigma(&self, a: &PhaseVector, b: &PhaseVector) -> Result<C64> {
        let q = self.quadratic_form(a, b)?;
        let overlap: C64 = common_sites(a, b).map(|(_, x, y)| x * y.conj()).sum();
        Ok(-(2.0 * q + overlap))
    }

    /// f(α) = ⟨b̂(α)^4⟩ assembled from the normal-ordered table.
    pub fn fourth_moment_f(&self, a: &PhaseVector) -> Result<C64> {
        let q4 = self.quartic_form(a)?;
        let g = self.quadratic_form(a, a)?;
        Ok(assemble_fourth_moment(q4, g, a.norm2_sqr()))
    }

    /// |⟨D(α_A)D(α_B)⟩ - ⟨D(α_A)⟩⟨D(α_B)⟩| for disjoint supports. For product states
    /// the two displacements act on different tensor factors and the value is exactly 0.
    pub fn clustering_lhs(&self, a: &PhaseVector, b: &PhaseVector) -> Result<f64> {
        if common_sites(a, b).next().is_some() {
            return input("clustering needs disjoint supports");
        }
        if let Self::ProductFock(_) = self {
            return Ok(0.0);
        }
        let joint = self.weyl_expectation(&a.add(b)?)?;
        Ok((joint - self.weyl_expectation(a)? * self.weyl_expectation(b)?).norm())
    }

    /// ⟨b_i† b_i⟩ for every site.
    pub fn mean_occupations(&self) -> Vec<f64> {
        (1..=self.num_sites())
            .map(|i| self.two_point(i, i).expect("valid site").re)
            .collect()
    }

    /// Whether every component is a product Fock state.
    pub fn is_product_like(&self) -> bool {
        match self {
            Self::ProductFock(_) => true,
            Self::Gaussian(_) => false,
            Self::Mixture(m) => m.components.iter().all(|c| c.is_product_like()),
        }
    }
}

/// Constants of the two-point, four-point and clustering assumptions.
///
/// `c_cl = 0` drops the clustering penalty, which is sound only when the clustering
/// left-hand side vanishes identically (product states).
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct AssumptionConstants {
    pub c1: f64,
    pub eps1: f64,
    pub mu1: f64,
    pub c3: f64,
    pub eps2: f64,
    pub c_cl: f64,
    pub eta: f64,
}

impl AssumptionConstants {
    pub fn validate(&self) -> Result<()> {
        let named = [
            ("c1", self.c1),
            ("eps1", self.eps1),
            ("mu1", self.mu1),
            ("c3", self.c3),
            ("eps2", self.eps2),
            ("eta", self.eta),
        ];
        for (name, v) in named {
            if !(v > 0.0) || !v.is_finite() {
                return input(format!("{name} must be positive and finite, got {v}"));
            }
        }
        if !(self.c_cl >= 0.0) || !self.c_cl.is_finite() {
            return input(format!("c_cl must be finite and >= 0, got {}", self.c_cl));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct CertifyOptions {
    pub mu1: f64,
    pub eps1: f64,
    pub eps2: f64,
    pub eta: f64,
    /// Clustering constant used when the clustering left-hand side is identically zero.
    pub c_cl: f64,
    /// Sampled (A, B) pairs for the empirical clustering constant.
    pub samples: usize,
    pub seed: u64,
}

impl Default for CertifyOptions {
    fn default() -> Self {
        Self {
            mu1: 1.0,
            eps1: 1.0,
            eps2: 1.0,
            eta: 1.0,
            c_cl: 1.0,
            samples: 200,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Certification {
    pub constants: AssumptionConstants,
    /// True when c_cl comes from sampling rather than an exact argument.
    pub clustering_empirical: bool,
    pub notes: Vec<String>,
}

fn two_point_constant(state: &InitialState, mu1: f64, eps1: f64) -> Result<f64> {
    let p = 2.0 + mu1 + eps1;
    Ok(match state {
        InitialState::ProductFock(s) => {
            let nmax = s.occupations.iter().copied().max().unwrap_or(0) as f64;
            if nmax == 0.0 {
                1.0
            } else {
                nmax * 2f64.powf(p)
            }
        }
        InitialState::Gaussian(g) => {
            let lat = state.lattice();
            let l = lat.len();
            let mut worst = 0.0f64;
            for i in 0..l {
                for j in 0..l {
                    let d = lat.dist0(i, j) as f64;
                    worst = worst.max(g.corr[(i, j)].norm() * (1.0 + d).powf(p));
                }
            }
            if worst == 0.0 {
                1.0
            } else {
                worst
            }
        }
        InitialState::Mixture(m) => {
            let mut worst = 0.0f64;
            for c in &m.components {
                worst = worst.max(two_point_constant(c, mu1, eps1)?);
            }
            worst
        }
    })
}

fn four_point_constant(state: &InitialState, opts: &CertifyOptions) -> Result<f64> {
    Ok(match state {
        InitialState::ProductFock(s) => {
            // Equal-site terms n(n-1) face 24 unit permutations; paired terms n_i n_j face 8.
            let n = s.occupations.iter().copied().max().unwrap_or(0) as f64;
            let c = (n * n / 8.0).max(n * (n - 1.0) / 24.0);
            if c == 0.0 {
                1.0
            } else {
                c
            }
        }
        InitialState::Gaussian(_) => {
            if opts.eps2 > 1.0 + opts.mu1 + opts.eps1 {
                return Err(Error::Unsupported(
                    "Gaussian four-point certification needs eps2 <= 1 + mu1 + eps1".into(),
                ));
            }
            let c1 = two_point_constant(state, opts.mu1, opts.eps1)?;
            c1 * c1 / 8.0
        }
        InitialState::Mixture(m) => {
            let mut worst = 0.0f64;
            for c in &m.components {
                worst = worst.max(four_point_constant(c, opts)?);
            }
            worst
        }
    })
}

/// Random pairs of disjoint intervals with random displacements.
fn sampled_clustering_constant(state: &InitialState, opts: &CertifyOptions) -> Result<f64> {
    let lat = state.lattice();
    let l = lat.len();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut worst = 0.0f64;
    for _ in 0..opts.samples {
        let wa = rng.gen_range(1..=(l / 4).clamp(1, 8));
        let wb = rng.gen_range(1..=(l / 4).clamp(1, 8));
        let start_a = rng.gen_range(1..=l);
        let gap = rng.gen_range(0..=(l - wa - wb).max(0) / 2);
        let start_b = (start_a - 1 + wa + gap) % l + 1;
        let a_set = SiteSet::interval(lat, start_a, wa)?;
        let b_set = SiteSet::interval(lat, start_b, wb)?;
        if !a_set.is_disjoint(&b_set) {
            continue;
        }
        let mut draw = |set: &SiteSet| {
            let v = (0..set.len())
                .map(|_| C64::from_polar(rng.gen_range(0.0..1.5), rng.gen_range(0.0..std::f64::consts::TAU)))
                .collect();
            PhaseVector::on_set(set, v)
        };
        let alpha_a = draw(&a_set)?;
        let alpha_b = draw(&b_set)?;
        let lhs = state.clustering_lhs(&alpha_a, &alpha_b)?;
        let d = set_dist(&a_set, &b_set)? as f64;
        worst = worst.max(lhs * (1.0 + d).powf(0.5 + opts.eta));
    }
    Ok(worst)
}

pub fn certify_assumptions(state: &InitialState, opts: &CertifyOptions) -> Result<Certification> {
    let c1 = two_point_constant(state, opts.mu1, opts.eps1)?;
    let c3 = four_point_constant(state, opts)?;
    let mut notes = vec![format!(
        "c1 and c3 are the smallest constants valid for this family at mu1={}, eps1={}, eps2={}",
        opts.mu1, opts.eps1, opts.eps2
    )];
    let (c_cl, empirical) = if state.is_product_like() && matches!(state, InitialState::ProductFock(_)) {
        notes.push("clustering left-hand side is identically zero for product states".into());
        (opts.c_cl, false)
    } else {
        let sampled = sampled_clustering_constant(state, opts)?;
        notes.push(format!(
            "c_cl estimated over {} sampled set pairs (seed {}); empirical, not proven",
            opts.samples, opts.seed
        ));
        (if sampled > 0.0 { sampled } else { opts.c_cl }, true)
    };
    let constants = AssumptionConstants {
        c1,
        eps1: opts.eps1,
        mu1: opts.mu1,
        c3,
        eps2: opts.eps2,
        c_cl,
        eta: opts.eta,
    };
    constants.validate()?;
    Ok(Certification {
        constants,
        clustering_empirical: empirical,
        notes,
    })
}
