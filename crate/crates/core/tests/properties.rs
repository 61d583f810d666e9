use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use relaxlab::gaussian::{evolve_gamma, gaussian_char, SecondMoments};
use relaxlab::lattice::{blocking_partition, RingLattice, SiteSet};
use relaxlab::oracle::{finite_difference_moments, SectorOracle};
use relaxlab::propagator::{alpha_of_beta, lieb_robinson_check, PhaseVector, Propagator};
use relaxlab::states::{GaussianState, InitialState, ProductFockState, StateMixture};
use relaxlab::{Error, C64};

fn ring(l: usize) -> RingLattice {
    RingLattice::new(l).unwrap()
}

fn vector(l: usize, re: &[f64], im: &[f64]) -> PhaseVector {
    PhaseVector::full(ring(l), re.iter().zip(im).map(|(a, b)| C64::new(*a, *b)).collect()).unwrap()
}

fn mixture(occ_a: Vec<u32>, occ_b: Vec<u32>, nbar: f64, w: f64) -> (InitialState, Vec<InitialState>, Vec<f64>) {
    let l = occ_a.len();
    let comps: Vec<InitialState> = vec![
        ProductFockState::new(occ_a).unwrap().into(),
        ProductFockState::new(occ_b).unwrap().into(),
        GaussianState::thermal(l, nbar).unwrap().into(),
    ];
    let weights = vec![w, 0.5 * (1.0 - w), 1.0 - w - 0.5 * (1.0 - w)];
    let m = StateMixture::new(weights.clone(), comps.clone()).unwrap().into();
    (m, comps, weights)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn characteristic_functions_are_contractions(
        occ_a in proptest::collection::vec(0u32..4, 5),
        occ_b in proptest::collection::vec(0u32..4, 5),
        nbar in 0.0f64..3.0,
        w in 0.0f64..1.0,
        re in proptest::collection::vec(-2.0f64..2.0, 5),
        im in proptest::collection::vec(-2.0f64..2.0, 5),
    ) {
        let (m, comps, _) = mixture(occ_a, occ_b, nbar, w);
        let a = vector(5, &re, &im);
        for s in comps.iter().chain(std::iter::once(&m)) {
            prop_assert!(s.weyl_expectation(&a).unwrap().norm() <= 1.0 + 1e-12);
            let sigma = s.sigma(&a, &a).unwrap();
            prop_assert!(sigma.im.abs() < 1e-12 && sigma.re <= 0.0);
            prop_assert!(s.fourth_moment_f(&a).unwrap().im.abs() < 1e-9);
        }
    }

    #[test]
    fn mixtures_are_linear(
        occ_a in proptest::collection::vec(0u32..3, 4),
        occ_b in proptest::collection::vec(0u32..3, 4),
        nbar in 0.0f64..2.0,
        w in 0.0f64..1.0,
        re in proptest::collection::vec(-1.0f64..1.0, 4),
        im in proptest::collection::vec(-1.0f64..1.0, 4),
    ) {
        let (m, comps, weights) = mixture(occ_a, occ_b, nbar, w);
        let a = vector(4, &re, &im);
        let mut chi = C64::new(0.0, 0.0);
        let mut sigma = C64::new(0.0, 0.0);
        let mut f = C64::new(0.0, 0.0);
        for (c, w) in comps.iter().zip(&weights) {
            chi += *w * c.weyl_expectation(&a).unwrap();
            sigma += *w * c.sigma(&a, &a).unwrap();
            f += *w * c.fourth_moment_f(&a).unwrap();
        }
        prop_assert!((m.weyl_expectation(&a).unwrap() - chi).norm() < 1e-12);
        prop_assert!((m.sigma(&a, &a).unwrap() - sigma).norm() < 1e-12);
        prop_assert!((m.fourth_moment_f(&a).unwrap() - f).norm() < 1e-10 * (1.0 + f.norm()));
    }

    #[test]
    fn gaussian_char_is_log_quadratic(
        nbar in 0.0f64..2.0,
        t in 0.0f64..10.0,
        b1 in -1.0f64..1.0,
        b2 in -1.0f64..1.0,
        s in 0.1f64..3.0,
    ) {
        let lat = ring(12);
        let g0 = SecondMoments::from_state(&GaussianState::thermal(12, nbar).unwrap().into()).unwrap();
        let gt = evolve_gamma(&g0, &Propagator::build(lat, t).unwrap()).unwrap();
        let set = SiteSet::new(lat, [3, 4]).unwrap();
        let gs = gt.restrict(&set).unwrap();
        let beta = PhaseVector::on_set(&set, vec![C64::new(b1, 0.2), C64::new(0.1, b2)]).unwrap();
        let chi = gaussian_char(&gs, &beta).unwrap();
        prop_assert!(chi > 0.0 && chi <= 1.0);
        let scaled = gaussian_char(&gs, &beta.scaled(C64::new(s, 0.0))).unwrap();
        prop_assert!((scaled.ln() - s * s * chi.ln()).abs() < 1e-12 * (1.0 + scaled.ln().abs()));
    }
}

/// σ and f from finite differences of the exact evolved state against the closed forms at
/// α = C†β, on 10³ random inputs.
#[test]
fn oracle_moments_match_closed_forms() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let lat = ring(4);
    let all = lat.all_sites();
    let mut checked = 0;
    let mut worst_sigma = 0.0f64;
    let mut worst_f = 0.0f64;
    while checked < 1000 {
        let occ: Vec<u32> = (0..4).map(|_| rng.gen_range(0..=1)).collect();
        let p = ProductFockState::new(occ).unwrap();
        let oracle = SectorOracle::new(&p).unwrap();
        let state = InitialState::from(p);
        for _ in 0..50 {
            let t = rng.gen_range(0.0..3.0);
            let beta = PhaseVector::on_set(
                &all,
                (0..4).map(|_| C64::new(rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5))).collect(),
            )
            .unwrap();
            let alpha = alpha_of_beta(&Propagator::build(lat, t).unwrap(), &all, &beta).unwrap();
            let fd = finite_difference_moments(&oracle.evolve(t).unwrap(), &beta).unwrap();
            let sigma = state.sigma(&alpha, &alpha).unwrap();
            let f = state.fourth_moment_f(&alpha).unwrap();
            assert!(sigma.im.abs() < 1e-14 && sigma.re <= 0.0);
            worst_sigma = worst_sigma.max((fd.sigma - sigma).norm());
            worst_f = worst_f.max((fd.f - f).norm());
            checked += 1;
        }
    }
    assert!(worst_sigma < 1e-6, "sigma deviation {worst_sigma}");
    assert!(worst_f < 1e-6, "f deviation {worst_f}");
}

/// All Lieb-Robinson estimates over 10⁴ random tuples.
#[test]
fn lieb_robinson_sweep() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut evaluated = 0;
    for _ in 0..10_000 {
        let l = rng.gen_range(2..600);
        let lat = ring(l);
        let t = rng.gen_range(-50.0..50.0);
        let s = SiteSet::interval(lat, rng.gen_range(1..=l), rng.gen_range(1..=l.min(4))).unwrap();
        let beta = PhaseVector::on_set(
            &s,
            (0..s.len())
                .map(|_| C64::new(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)))
                .collect(),
        )
        .unwrap();
        let a = SiteSet::interval(lat, rng.gen_range(1..=l), rng.gen_range(1..=l)).unwrap();
        let a = a.difference(&s).unwrap();
        let prop = Propagator::build(lat, t).unwrap();
        for r in lieb_robinson_check(&prop, &s, &beta, &a).unwrap() {
            assert!(r.holds(), "L={l}, t={t}: {r:?}");
            evaluated += r.applicable as usize;
        }
    }
    assert!(evaluated > 10_000);
}

/// Every partition the construction accepts passes its audit, over a sweep of rings,
/// subsystems and times up to L = 5000.
#[test]
fn partition_audit_sweep() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let mut built = 0;
    for _ in 0..600 {
        let l = rng.gen_range(20..=5000);
        let lat = ring(l);
        let t = rng.gen_range(2.0..(l as f64).powf(6.0 / 7.0).max(2.5));
        let s = SiteSet::interval(lat, rng.gen_range(1..=l), rng.gen_range(1..=5)).unwrap();
        match blocking_partition(lat, &s, t, rng.gen_range(0.2..3.0)) {
            Ok(p) => {
                built += 1;
                for c in p.audit() {
                    assert!(c.holds, "L={l}, t={t}: {c:?}");
                }
            }
            Err(Error::Regime(_)) => {}
            Err(e) => panic!("{e}"),
        }
    }
    assert!(built > 300, "only {built} partitions built");
}
