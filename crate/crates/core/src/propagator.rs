//! The one-particle propagator C = e^{-itA} of the nearest-neighbour hopping matrix,
//! phase-space vectors, and the Lieb-Robinson estimates.

use std::f64::consts::{E, PI};

use nalgebra::DMatrix;
use num_complex::Complex64;
use rustfft::FftPlanner;

use crate::bounds::BoundReport;
use crate::error::{input, Result};
use crate::lattice::{set_dist, RingLattice, SiteSet};
use crate::special::{bessel_j, bessel_j_sequence, ln_factorial};

pub type C64 = Complex64;

/// Amplitudes below this magnitude are recomputed from the Bessel aliasing series,
/// which keeps relative accuracy where the DFT only has ~1e-16 absolute accuracy.
const TAIL_REFINE_BELOW: f64 = 1e-10;

/// Bessel orders beyond e|t| + this margin underflow to zero in double precision.
const BESSEL_ORDER_MARGIN: f64 = 750.0;

/// Complex amplitudes on a subset of the ring (β on S, or α on the whole lattice).
#[derive(Clone, Debug, PartialEq)]
pub struct PhaseVector {
    lattice: RingLattice,
    sites: Vec<usize>,
    values: Vec<C64>,
}

impl PhaseVector {
    /// Entries follow the sorted member order of `support`.
    pub fn on_set(support: &SiteSet, values: Vec<C64>) -> Result<Self> {
        if values.len() != support.len() {
            return input(format!(
                "phase vector has {} entries for a support of {} sites",
                values.len(),
                support.len()
            ));
        }
        if values.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return input("phase vector entries must be finite");
        }
        Ok(Self {
            lattice: support.lattice(),
            sites: support.members().to_vec(),
            values,
        })
    }

    /// A vector over the whole ring, entry k belonging to site k+1.
    pub fn full(lattice: RingLattice, values: Vec<C64>) -> Result<Self> {
        Self::on_set(&lattice.all_sites(), values)
    }

    pub fn zeros(lattice: RingLattice) -> Self {
        Self {
            lattice,
            sites: (1..=lattice.len()).collect(),
            values: vec![C64::new(0.0, 0.0); lattice.len()],
        }
    }

    pub fn lattice(&self) -> RingLattice {
        self.lattice
    }

    pub fn sites(&self) -> &[usize] {
        &self.sites
    }

    pub fn values(&self) -> &[C64] {
        &self.values
    }

    pub fn support(&self) -> SiteSet {
        SiteSet::from_sorted_unchecked(self.lattice, self.sites.clone())
    }

    pub fn is_full(&self) -> bool {
        self.sites.len() == self.lattice.len()
    }

    pub fn get(&self, site: usize) -> C64 {
        if self.is_full() {
            return self.values.get(site.wrapping_sub(1)).copied().unwrap_or_default();
        }
        match self.sites.binary_search(&site) {
            Ok(k) => self.values[k],
            Err(_) => C64::new(0.0, 0.0),
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, C64)> + '_ {
        self.sites.iter().copied().zip(self.values.iter().copied())
    }

    pub fn norm1(&self) -> f64 {
        self.values.iter().map(|v| v.norm()).sum()
    }

    pub fn norm2_sqr(&self) -> f64 {
        self.values.iter().map(|v| v.norm_sqr()).sum()
    }

    pub fn norm2(&self) -> f64 {
        self.norm2_sqr().sqrt()
    }

    /// The indicator-restricted vector α_A: entries on support ∩ A.
    pub fn restrict(&self, set: &SiteSet) -> PhaseVector {
        let (sites, values) = if self.is_full() {
            let sites = set.members().to_vec();
            let values = sites.iter().map(|&s| self.values[s - 1]).collect();
            (sites, values)
        } else {
            self.iter().filter(|(s, _)| set.contains(*s)).unzip()
        };
        PhaseVector {
            lattice: self.lattice,
            sites,
            values,
        }
    }

    pub fn scaled(&self, s: C64) -> PhaseVector {
        PhaseVector {
            lattice: self.lattice,
            sites: self.sites.clone(),
            values: self.values.iter().map(|v| v * s).collect(),
        }
    }

    /// Entrywise sum over the union of supports.
    pub fn add(&self, other: &PhaseVector) -> Result<PhaseVector> {
        if self.lattice != other.lattice {
            return input("phase vectors live on different rings");
        }
        let mut merged: Vec<(usize, C64)> = self.iter().chain(other.iter()).collect();
        merged.sort_by_key(|p| p.0);
        let mut sites: Vec<usize> = Vec::with_capacity(merged.len());
        let mut values: Vec<C64> = Vec::with_capacity(merged.len());
        for (s, v) in merged {
            if sites.last() == Some(&s) {
                *values.last_mut().expect("paired") += v;
            } else {
                sites.push(s);
                values.push(v);
            }
        }
        Ok(PhaseVector {
            lattice: self.lattice,
            sites,
            values,
        })
    }

    /// Dense length-L copy (zero off the support).
    pub fn to_dense(&self) -> Vec<C64> {
        let mut out = vec![C64::new(0.0, 0.0); self.lattice.len()];
        for (s, v) in self.iter() {
            out[s - 1] = v;
        }
        out
    }
}

/// C = e^{-itA} stored as its first column: C_{i,j} = C_{(i-j) mod L}.
#[derive(Clone, Debug)]
pub struct Propagator {
    lattice: RingLattice,
    t: f64,
    amplitudes: Vec<C64>,
    spectrum: Vec<C64>,
}

/// e^{-itλ_k} for the hopping matrix A_{ij} = -δ_{d(i,j),1}.
fn spectrum(l: usize, t: f64) -> Vec<C64> {
    (0..l)
        .map(|k| {
            let lambda = if l == 2 {
                // One bond: A = [[0,-1],[-1,0]].
                if k == 0 {
                    -1.0
                } else {
                    1.0
                }
            } else {
                let kk = k.min(l - k) as f64;
                -2.0 * (2.0 * PI * kk / l as f64).cos()
            };
            C64::from_polar(1.0, -t * lambda)
        })
        .collect()
}

fn fft_in_place(data: &mut [C64], inverse: bool) {
    let mut planner = FftPlanner::<f64>::new();
    let plan = if inverse {
        planner.plan_fft_inverse(data.len())
    } else {
        planner.plan_fft_forward(data.len())
    };
    plan.process(data);
}

/// (a ⊛ b)_l = Σ_m a_m b_{(l-m) mod L}.
pub fn circular_convolution(a: &[C64], b: &[C64]) -> Result<Vec<C64>> {
    if a.len() != b.len() || a.is_empty() {
        return input("convolution needs two non-empty sequences of equal length");
    }
    let mut fa = a.to_vec();
    let mut fb = b.to_vec();
    fft_in_place(&mut fa, false);
    fft_in_place(&mut fb, false);
    for (x, y) in fa.iter_mut().zip(&fb) {
        *x *= y;
    }
    fft_in_place(&mut fa, true);
    let n = a.len() as f64;
    Ok(fa.into_iter().map(|v| v / n).collect())
}

/// i^n as an exact unit complex number.
fn i_pow(n: usize) -> C64 {
    match n % 4 {
        0 => C64::new(1.0, 0.0),
        1 => C64::new(0.0, 1.0),
        2 => C64::new(-1.0, 0.0),
        _ => C64::new(0.0, -1.0),
    }
}

impl Propagator {
    pub fn build(lattice: RingLattice, t: f64) -> Result<Self> {
        if !t.is_finite() {
            return input(format!("time must be finite, got {t}"));
        }
        let l = lattice.len();
        let spec = spectrum(l, t);
        let mut amps = if t == 0.0 {
            let mut v = vec![C64::new(0.0, 0.0); l];
            v[0] = C64::new(1.0, 0.0);
            v
        } else {
            let mut v = spec.clone();
            fft_in_place(&mut v, true);
            let inv = 1.0 / l as f64;
            for x in v.iter_mut() {
                *x *= inv;
            }
            for k in 1..l.div_ceil(2) {
                let avg = 0.5 * (v[k] + v[l - k]);
                v[k] = avg;
                v[l - k] = avg;
            }
            v
        };
        if t != 0.0 && l >= 3 {
            refine_tail(&mut amps, t);
        }
        Ok(Self {
            lattice,
            t,
            amplitudes: amps,
            spectrum: spec,
        })
    }

    pub fn lattice(&self) -> RingLattice {
        self.lattice
    }

    pub fn time(&self) -> f64 {
        self.t
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amplitudes
    }

    /// Eigenvalues e^{-itλ_k} of C in the plane-wave basis.
    pub fn spectrum(&self) -> &[C64] {
        &self.spectrum
    }

    /// C_{i,j} for sites i, j (1-indexed).
    pub fn entry(&self, i: usize, j: usize) -> Result<C64> {
        self.lattice.check_site(i)?;
        self.lattice.check_site(j)?;
        let l = self.lattice.len();
        Ok(self.amplitudes[(i + l - j) % l])
    }

    /// Dense L×L matrix.
    pub fn dense(&self) -> DMatrix<C64> {
        let l = self.lattice.len();
        DMatrix::from_fn(l, l, |i, j| self.amplitudes[(i + l - j) % l])
    }

    /// C x for a dense vector, via the plane-wave spectrum.
    pub fn apply(&self, x: &[C64]) -> Result<Vec<C64>> {
        self.apply_with(x, false)
    }

    /// C† x for a dense vector.
    pub fn apply_adjoint(&self, x: &[C64]) -> Result<Vec<C64>> {
        self.apply_with(x, true)
    }

    fn apply_with(&self, x: &[C64], adjoint: bool) -> Result<Vec<C64>> {
        let l = self.lattice.len();
        if x.len() != l {
            return input(format!("vector of length {} applied to ring of {l} sites", x.len()));
        }
        let mut v = x.to_vec();
        fft_in_place(&mut v, false);
        for (vk, g) in v.iter_mut().zip(&self.spectrum) {
            *vk *= if adjoint { g.conj() } else { *g };
        }
        fft_in_place(&mut v, true);
        let inv = 1.0 / l as f64;
        Ok(v.into_iter().map(|z| z * inv).collect())
    }

    /// max_l |Σ_m C_m C*_{m+l} - δ_{l,0}| = ‖CC† - 1‖_max for the circulant C.
    pub fn unitarity_residual(&self) -> f64 {
        let l = self.lattice.len();
        let c = &self.amplitudes;
        let mut worst = 0.0f64;
        for shift in 0..l {
            let mut acc = C64::new(0.0, 0.0);
            for m in 0..l {
                acc += c[m] * c[(m + shift) % l].conj();
            }
            if shift == 0 {
                acc -= 1.0;
            }
            worst = worst.max(acc.norm());
        }
        worst
    }

    /// Overwrites the amplitudes (fault injection for verification harnesses).
    pub fn with_amplitudes(mut self, amplitudes: Vec<C64>) -> Result<Self> {
        if amplitudes.len() != self.lattice.len() {
            return input("amplitude vector length does not match the ring");
        }
        self.amplitudes = amplitudes;
        Ok(self)
    }
}

/// Replace tiny amplitudes with Σ_z i^{|Lz-l|} J_{|Lz-l|}(2t).
fn refine_tail(amps: &mut [C64], t: f64) {
    let l = amps.len();
    let targets: Vec<usize> = (0..=l / 2).filter(|&k| amps[k].norm() < TAIL_REFINE_BELOW).collect();
    if targets.is_empty() {
        return;
    }
    let nmax = (E * t.abs() + BESSEL_ORDER_MARGIN).ceil() as usize;
    let j = bessel_j_sequence(nmax, 2.0 * t);
    let g = |n: usize| if n <= nmax { i_pow(n) * j[n] } else { C64::new(0.0, 0.0) };
    for k in targets {
        let mut orders = Vec::new();
        let mut n = k;
        while n <= nmax {
            orders.push(n);
            n += l;
        }
        let mut n = l - k;
        while n <= nmax {
            orders.push(n);
            n += l;
        }
        orders.sort_unstable_by(|a, b| b.cmp(a));
        let v: C64 = orders.into_iter().map(g).sum();
        amps[k] = v;
        amps[(l - k) % l] = v;
    }
}

/// Infinite-lattice amplitude i^l J_l(2t).
pub fn bessel_amplitude(l: usize, t: f64) -> Result<C64> {
    if !t.is_finite() {
        return input(format!("time must be finite, got {t}"));
    }
    Ok(i_pow(l) * bessel_j(l as i64, 2.0 * t))
}

/// α_i = Σ_{j∈S} β_j C*_{j,i}: the Heisenberg-evolved displacement over the whole ring.
pub fn alpha_of_beta(prop: &Propagator, s: &SiteSet, beta: &PhaseVector) -> Result<PhaseVector> {
    if s.lattice() != prop.lattice() || beta.lattice() != prop.lattice() {
        return input("propagator, subsystem and beta live on different rings");
    }
    if beta.sites() != s.members() {
        return input("beta must be supported exactly on the subsystem");
    }
    let l = prop.lattice().len();
    let c = prop.amplitudes();
    let mut alpha = vec![C64::new(0.0, 0.0); l];
    for (j, bj) in beta.iter() {
        let j0 = j - 1;
        for (i0, a) in alpha.iter_mut().enumerate() {
            *a += bj * c[(j0 + l - i0) % l].conj();
        }
    }
    PhaseVector::full(prop.lattice(), alpha)
}

fn entry_factorial_rhs(t: f64, d: usize) -> f64 {
    if t == 0.0 {
        return if d == 0 { 1.0 } else { 0.0 };
    }
    (d as f64 * (2.0 * t.abs()).ln() - ln_factorial(d as u64)).exp()
}

fn flat_regime(prop: &Propagator) -> bool {
    let at = prop.time().abs();
    let p = at.powf(7.0 / 6.0);
    prop.lattice().len() as f64 >= p && p >= 1.0
}

/// |C_{ij}| ≤ (2|t|)^d/d! and |C_{ij}| ≤ 37/|t|^{1/3}, worst case over all pairs.
pub fn entry_bounds(prop: &Propagator) -> Vec<BoundReport> {
    let l = prop.lattice().len();
    let t = prop.time();
    let mut worst: Option<(f64, f64)> = None;
    for k in 0..l {
        let d = prop.lattice().dist0(0, k);
        let lhs = prop.amplitudes()[k].norm();
        let rhs = entry_factorial_rhs(t, d);
        if worst.is_none_or(|(wl, wr)| rhs - lhs < wr - wl) {
            worst = Some((lhs, rhs));
        }
    }
    let (lhs, rhs) = worst.expect("ring is non-empty");
    let mut out = vec![BoundReport::evaluated("lr-entry-factorial", lhs, rhs)];
    if flat_regime(prop) {
        let lhs = prop.amplitudes().iter().map(|c| c.norm()).fold(0.0, f64::max);
        out.push(BoundReport::evaluated("lr-entry-flat", lhs, 37.0 / t.abs().cbrt()));
    } else {
        out.push(BoundReport::not_applicable("lr-entry-flat", "needs L >= |t|^(7/6) >= 1"));
    }
    out
}

/// All three Lieb-Robinson estimates for a displacement β on S and a region A.
pub fn lieb_robinson_check(
    prop: &Propagator,
    s: &SiteSet,
    beta: &PhaseVector,
    a: &SiteSet,
) -> Result<Vec<BoundReport>> {
    let alpha = alpha_of_beta(prop, s, beta)?;
    let t = prop.time();
    let b1 = beta.norm1();
    let mut out = entry_bounds(prop);

    if a.is_empty() {
        out.push(BoundReport::not_applicable("lr-cone-tail", "region A is empty"));
    } else {
        let d = set_dist(a, s)?;
        if 4.0 * E * t.abs() <= d as f64 {
            let lhs: f64 = alpha.restrict(a).values().iter().map(|v| v.norm()).sum();
            let rhs = 4.0 * b1 * (-(d as f64) * std::f64::consts::LN_2).exp();
            out.push(BoundReport::evaluated("lr-cone-tail", lhs, rhs));
        } else {
            out.push(BoundReport::not_applicable(
                "lr-cone-tail",
                format!("needs 4e|t| <= d(A,S) = {d}"),
            ));
        }
    }

    if flat_regime(prop) {
        let lhs = alpha.values().iter().map(|v| v.norm()).fold(0.0, f64::max);
        out.push(BoundReport::evaluated("lr-amplitude-flat", lhs, b1 * 37.0 / t.abs().cbrt()));
    } else {
        out.push(BoundReport::not_applicable("lr-amplitude-flat", "needs L >= |t|^(7/6) >= 1"));
    }
    Ok(out)
}

/// |C_l - i^l J_l(2t)| ≤ 6(π²-4)t²/L², for |t| ≥ 1 and l ≤ L/2.
pub fn bessel_finite_size_report(prop: &Propagator, l: usize) -> Result<BoundReport> {
    let len = prop.lattice().len();
    let t = prop.time();
    if l > len / 2 || t.abs() < 1.0 {
        return Ok(BoundReport::not_applicable(
            "bessel-finite-size",
            "needs |t| >= 1 and l <= L/2",
        ));
    }
    let lhs = (prop.amplitudes()[l] - bessel_amplitude(l, t)?).norm();
    let rhs = 6.0 * (PI * PI - 4.0) * t * t / (len * len) as f64;
    Ok(BoundReport::evaluated("bessel-finite-size", lhs, rhs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{DMatrix, SymmetricEigen};

    fn ring(l: usize) -> RingLattice {
        RingLattice::new(l).unwrap()
    }

    /// Dense e^{-itA} from the eigendecomposition of the explicit hopping matrix.
    fn dense_oracle(l: usize, t: f64) -> DMatrix<C64> {
        let lat = ring(l);
        let a = DMatrix::from_fn(l, l, |i, j| if lat.dist0(i, j) == 1 { -1.0 } else { 0.0 });
        let eig = SymmetricEigen::new(a);
        let v = eig.eigenvectors.map(|x| C64::new(x, 0.0));
        let d = DMatrix::from_diagonal(&eig.eigenvalues.map(|lam| C64::from_polar(1.0, -t * lam)));
        &v * d * v.transpose()
    }

    #[test]
    fn identity_at_zero_time() {
        let p = Propagator::build(ring(8), 0.0).unwrap();
        assert_eq!(p.amplitudes()[0], C64::new(1.0, 0.0));
        assert!(p.amplitudes()[1..].iter().all(|c| *c == C64::new(0.0, 0.0)));
    }

    #[test]
    fn matches_dense_exponential() {
        for (l, t) in [(8, 1.0), (2, 0.7), (3, 2.2), (9, -1.3)] {
            let p = Propagator::build(ring(l), t).unwrap();
            let oracle = dense_oracle(l, t);
            let diff = (p.dense() - oracle).iter().map(|z| z.norm()).fold(0.0, f64::max);
            assert!(diff < 1e-10, "L={l}, t={t}, diff={diff}");
        }
    }

    #[test]
    fn two_site_closed_form() {
        let t = 0.9;
        let p = Propagator::build(ring(2), t).unwrap();
        assert!((p.amplitudes()[0] - C64::new(t.cos(), 0.0)).norm() < 1e-15);
        assert!((p.amplitudes()[1] - C64::new(0.0, t.sin())).norm() < 1e-15);
    }

    #[test]
    fn symmetry_and_unitarity() {
        let p = Propagator::build(ring(64), 3.0).unwrap();
        let s: f64 = p.amplitudes().iter().map(|c| c.norm_sqr()).sum();
        assert!((s - 1.0).abs() < 1e-10);
        for k in 1..64 {
            assert_eq!(p.amplitudes()[k], p.amplitudes()[64 - k]);
        }
        assert!(p.unitarity_residual() < 1e-10);
    }

    #[test]
    fn tail_has_relative_accuracy() {
        // Deep in the cone tail C_l ≈ i^l J_l(2t) with relative precision.
        let t = 2.0;
        let p = Propagator::build(ring(512), t).unwrap();
        for l in [40usize, 80, 120] {
            let want = bessel_amplitude(l, t).unwrap();
            let rel = (p.amplitudes()[l] - want).norm() / want.norm();
            assert!(rel < 1e-12, "l={l}, rel={rel}");
        }
    }

    #[test]
    fn alpha_examples() {
        let lat = ring(10);
        let s = SiteSet::new(lat, [5]).unwrap();
        let z = C64::new(0.3, -1.1);
        let beta = PhaseVector::on_set(&s, vec![z]).unwrap();
        let p0 = Propagator::build(lat, 0.0).unwrap();
        let a = alpha_of_beta(&p0, &s, &beta).unwrap();
        for site in 1..=10 {
            assert_eq!(a.get(site), if site == 5 { z } else { C64::new(0.0, 0.0) });
        }

        let lat = ring(8);
        let s = SiteSet::new(lat, [1]).unwrap();
        let beta = PhaseVector::on_set(&s, vec![C64::new(1.0, 0.0)]).unwrap();
        let p = Propagator::build(lat, 1.0).unwrap();
        let a = alpha_of_beta(&p, &s, &beta).unwrap();
        let oracle = dense_oracle(8, 1.0);
        for i in 0..8 {
            assert!((a.get(i + 1) - oracle[(0, i)].conj()).norm() < 1e-10);
        }
        assert!((a.norm2() - 1.0).abs() < 1e-10);
        assert!(alpha_of_beta(&p, &SiteSet::new(lat, [2]).unwrap(), &beta).is_err());
    }

    #[test]
    fn bessel_amplitude_examples() {
        assert_eq!(bessel_amplitude(0, 0.0).unwrap(), C64::new(1.0, 0.0));
        let v = bessel_amplitude(1, 1.0).unwrap();
        assert!(v.re.abs() < 1e-17 && (v.im - 0.576_724_807_756_873_4).abs() < 1e-14);
        let p = Propagator::build(ring(512), 2.0).unwrap();
        let r = bessel_finite_size_report(&p, 5).unwrap();
        assert!(r.applicable && r.margin >= 0.0);
    }

    #[test]
    fn apply_matches_dense() {
        let p = Propagator::build(ring(12), 1.7).unwrap();
        let x: Vec<C64> = (0..12).map(|k| C64::new(k as f64 * 0.1, 1.0 - k as f64 * 0.05)).collect();
        let dense = p.dense();
        let xv = nalgebra::DVector::from_vec(x.clone());
        let want = &dense * &xv;
        let want_adj = dense.adjoint() * &xv;
        let got = p.apply(&x).unwrap();
        let got_adj = p.apply_adjoint(&x).unwrap();
        for k in 0..12 {
            assert!((got[k] - want[k]).norm() < 1e-12);
            assert!((got_adj[k] - want_adj[k]).norm() < 1e-12);
        }
    }

    #[test]
    fn lieb_robinson_examples() {
        let lat = ring(256);
        let s = SiteSet::new(lat, [1]).unwrap();
        let beta = PhaseVector::on_set(&s, vec![C64::new(0.8, 0.6)]).unwrap();
        let field = s.distance_field().unwrap();
        let a = SiteSet::new(lat, (1..=256).filter(|&j| field[j - 1] >= 48)).unwrap();
        let p = Propagator::build(lat, 4.0).unwrap();
        let reps = lieb_robinson_check(&p, &s, &beta, &a).unwrap();
        assert_eq!(reps.len(), 4);
        assert!(reps.iter().all(|r| r.applicable && r.margin >= 0.0), "{reps:?}");

        let p0 = Propagator::build(lat, 0.0).unwrap();
        let e = entry_bounds(&p0);
        assert!(e[0].margin >= 0.0);
        assert!(!e[1].applicable);

        let p8 = Propagator::build(ring(128), 8.0).unwrap();
        let e = entry_bounds(&p8);
        assert!(e[1].applicable && e[1].lhs <= 37.0 / 2.0);
    }
}
