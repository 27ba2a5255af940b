use std::collections::BTreeSet;

use num_complex::Complex64;
use proptest::prelude::*;
use qlattice_core::amplitude::{amplitude, amplitude_bruteforce, relative_deviation};
use qlattice_core::born::{
    hoeffding_bound, overlap_exact, overlap_window, BornExperiment, ProjectorWindow,
};
use qlattice_core::composite::{self, composite_amplitude, CompositeSetup};
use qlattice_core::evolution::evolve;
use qlattice_core::lattice::{
    inner_product, max_abs_diff, norm_sq, propagator, random_complex_kernel, random_unitary_kernel,
    Kernel, LatticeConfig, WaveFunction,
};
use qlattice_core::setup::{
    and_compose, or_compose, sample_and_pair, sample_setup, sample_setup_between, FilterSpec,
};
use qlattice_core::{Event, Setup};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn kernel(n: usize, rng: &mut ChaCha8Rng) -> Kernel {
    if rng.gen_bool(0.5) {
        random_unitary_kernel(n, rng)
    } else {
        random_complex_kernel(n, rng)
    }
}

/// Three setups that differ only in one filter, with pairwise disjoint holes.
fn or_triple(n: usize, rng: &mut ChaCha8Rng) -> [Setup; 3] {
    let config = LatticeConfig::ring(n, 5).unwrap();
    let base = loop {
        let s = sample_setup(&config, 4, rng).unwrap();
        if !s.filters().is_empty() {
            break s;
        }
    };
    let idx = rng.gen_range(0..base.filters().len());
    let time = base.filters()[idx].time();
    let mut sites: Vec<usize> = (0..n).collect();
    sites.shuffle(rng);
    let cut1 = rng.gen_range(1..n - 1);
    let cut2 = rng.gen_range(cut1 + 1..n);
    let groups = [&sites[..cut1], &sites[cut1..cut2], &sites[cut2..]];
    groups.map(|holes| {
        let mut filters = base.filters().to_vec();
        filters[idx] = FilterSpec::new(time, holes.iter().copied()).unwrap();
        Setup::new(base.source(), base.detector(), filters).unwrap()
    })
}

fn close(a: Complex64, b: Complex64) -> bool {
    relative_deviation(a, b) <= 1e-12
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn cauchy_schwarz(seed in any::<u64>(), n in 1usize..12) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = WaveFunction::random(n, 0, &mut rng);
        let b = WaveFunction::random(n, 0, &mut rng);
        let ip = inner_product(&a, &b).unwrap();
        prop_assert!(ip.norm_sqr() <= norm_sq(&a) * norm_sq(&b) * (1.0 + 1e-12));
    }

    #[test]
    fn propagator_composes(seed in any::<u64>(), t1 in 0usize..4, d1 in 0usize..4, d2 in 0usize..4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let k = kernel(5, &mut rng);
        let (t2, t3) = (t1 + d1, t1 + d1 + d2);
        let whole = propagator(&k, t1, t3).unwrap();
        let split = propagator(&k, t2, t3).unwrap() * propagator(&k, t1, t2).unwrap();
        prop_assert!(max_abs_diff(&whole, &split) <= 1e-12);
        prop_assert!(propagator(&k, t3 + 1, t1).is_err());
    }

    #[test]
    fn or_is_associative_and_commutative(seed in any::<u64>(), n in 3usize..7) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let [a, b, c] = or_triple(n, &mut rng);
        let k = kernel(n, &mut rng);
        let left = or_compose(&or_compose(&a, &b).unwrap(), &c).unwrap();
        let right = or_compose(&a, &or_compose(&b, &c).unwrap()).unwrap();
        prop_assert_eq!(&left, &right);
        prop_assert_eq!(or_compose(&a, &b).unwrap(), or_compose(&b, &a).unwrap());
        let sum = amplitude(&a, &k).unwrap().value + amplitude(&b, &k).unwrap().value + amplitude(&c, &k).unwrap().value;
        prop_assert!(close(amplitude(&left, &k).unwrap().value, sum));
        prop_assert!(or_compose(&a, &a).is_err());
    }

    #[test]
    fn and_is_associative_not_commutative(seed in any::<u64>(), n in 3usize..7) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let site = |rng: &mut ChaCha8Rng| rng.gen_range(0..n);
        let e1 = Event::new(site(&mut rng), 2);
        let e2 = Event::new(site(&mut rng), 4);
        let mut a = sample_setup_between(n, 0, 2, 1, &mut rng).unwrap();
        let mut b = sample_setup_between(n, 2, 4, 1, &mut rng).unwrap();
        let mut c = sample_setup_between(n, 4, 6, 1, &mut rng).unwrap();
        a = Setup::new(a.source(), e1, a.filters().to_vec()).unwrap();
        b = Setup::new(e1, e2, b.filters().to_vec()).unwrap();
        c = Setup::new(e2, c.detector(), c.filters().to_vec()).unwrap();
        let left = and_compose(&and_compose(&a, &b).unwrap(), &c).unwrap();
        let right = and_compose(&a, &and_compose(&b, &c).unwrap()).unwrap();
        prop_assert_eq!(&left, &right);
        prop_assert!(and_compose(&b, &a).is_err());
        let k = kernel(n, &mut rng);
        let product = amplitude(&a, &k).unwrap().value * amplitude(&b, &k).unwrap().value * amplitude(&c, &k).unwrap().value;
        prop_assert!(close(amplitude(&left, &k).unwrap().value, product));
    }

    /// `a (b v c) = (a b) v (a c)` when `b`, `c` share the source `a` ends on.
    #[test]
    fn and_distributes_over_or(seed in any::<u64>(), n in 3usize..7) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let [b, c, _] = or_triple(n, &mut rng);
        let t0 = b.source().time;
        // make room for a before b and c
        let shift = |s: &Setup| {
            let filters = s.filters().iter()
                .map(|f| FilterSpec::new(f.time() + 2, f.holes().iter().copied()).unwrap())
                .collect();
            Setup::new(
                Event::new(s.source().site, s.source().time + 2),
                Event::new(s.detector().site, s.detector().time + 2),
                filters,
            ).unwrap()
        };
        let (b, c) = (shift(&b), shift(&c));
        let a = sample_setup_between(n, t0, t0 + 2, 1, &mut rng).unwrap();
        let a = Setup::new(a.source(), b.source(), a.filters().to_vec()).unwrap();
        let lhs = and_compose(&a, &or_compose(&b, &c).unwrap()).unwrap();
        let rhs = or_compose(&and_compose(&a, &b).unwrap(), &and_compose(&a, &c).unwrap()).unwrap();
        prop_assert_eq!(&lhs, &rhs);
        let k = kernel(n, &mut rng);
        prop_assert!(close(amplitude(&lhs, &k).unwrap().value, amplitude(&rhs, &k).unwrap().value));
    }

    #[test]
    fn transfer_matches_paths(seed in any::<u64>(), n in 3usize..6, t in 1usize..5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let config = LatticeConfig::ring(n, t).unwrap();
        let s = sample_setup(&config, t - 1, &mut rng).unwrap();
        let k = kernel(n, &mut rng);
        prop_assert!(close(amplitude(&s, &k).unwrap().value, amplitude_bruteforce(&s, &k).unwrap().value));
    }

    #[test]
    fn and_pairs_multiply(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let config = LatticeConfig::ring(5, 6).unwrap();
        let (e, l) = sample_and_pair(&config, &mut rng).unwrap();
        let k = kernel(5, &mut rng);
        let joined = and_compose(&e, &l).unwrap();
        let product = amplitude(&e, &k).unwrap().value * amplitude(&l, &k).unwrap().value;
        prop_assert!(close(amplitude(&joined, &k).unwrap().value, product));
    }

    #[test]
    fn evolution_semigroup(seed in any::<u64>(), m in 0usize..6, n in 0usize..6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let k = kernel(6, &mut rng);
        let psi = WaveFunction::random(6, 0, &mut rng);
        let whole = evolve(&psi, &k, m + n).unwrap();
        let split = evolve(&evolve(&psi, &k, m).unwrap(), &k, n).unwrap();
        prop_assert_eq!(whole.time(), m + n);
        let diff = (whole.coeffs() - split.coeffs()).iter().map(|z| z.norm()).fold(0.0, f64::max);
        prop_assert!(diff <= 1e-12);
    }

    #[test]
    fn unitary_evolution_keeps_norm(seed in any::<u64>(), steps in 0usize..20) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let k = random_unitary_kernel(7, &mut rng);
        let psi = WaveFunction::random(7, 0, &mut rng);
        prop_assert!((norm_sq(&evolve(&psi, &k, steps).unwrap()) - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn window_widening_is_monotone(p in 0.0f64..=1.0, total in 1u64..400, lo in 0u64..400, width in 0u64..400) {
        let lo = lo.min(total);
        let hi = (lo + width).min(total);
        let inner = overlap_window(p, total, ProjectorWindow::new(lo, hi, total).unwrap());
        let outer_lo = lo.saturating_sub(1);
        let outer = overlap_window(p, total, ProjectorWindow::new(outer_lo, (hi + 1).min(total), total).unwrap());
        prop_assert!(inner <= outer + 1e-15);
        prop_assert!((overlap_window(p, total, ProjectorWindow::full(total)) - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn hoeffding_envelope(p in 0.05f64..0.95, total in 1u64..5000, eps in 0.005f64..0.2) {
        let e = BornExperiment::new(p, total, p, eps).unwrap();
        let bound = hoeffding_bound(&e).unwrap();
        prop_assert!(1.0 - overlap_exact(&e) <= bound + 1e-12);
    }

    #[test]
    fn composite_is_bilinear(seed in any::<u64>(), n in 3usize..6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let [a1, a2, _] = or_triple(n, &mut rng);
        let config = LatticeConfig::ring(n, 4).unwrap();
        let b = sample_setup(&config, 3, &mut rng).unwrap();
        let (k1, k2) = (kernel(n, &mut rng), kernel(n, &mut rng));
        let c1 = CompositeSetup::new(vec![(a1.clone(), k1.clone()), (b.clone(), k2.clone())]).unwrap();
        let c2 = CompositeSetup::new(vec![(a2, k1.clone()), (b.clone(), k2.clone())]).unwrap();
        let merged = composite::or_compose(&c1, &c2).unwrap();
        let lhs = composite_amplitude(&merged).unwrap().value;
        let rhs = composite_amplitude(&c1).unwrap().value + composite_amplitude(&c2).unwrap().value;
        prop_assert!(close(lhs, rhs));
        let single = CompositeSetup::new(vec![(a1.clone(), k1.clone())]).unwrap();
        prop_assert_eq!(composite_amplitude(&single).unwrap(), amplitude(&a1, &k1).unwrap());
        // two differing parts cannot be or-composed
        let c3 = CompositeSetup::new(vec![(a1, k1), (fill(&b, n), k2)]).unwrap();
        prop_assert!(composite::or_compose(&c2, &c3).is_err());
    }
}

/// A setup differing from `b`: an extra single-hole filter at the first
/// free time, or a moved detector when there is none.
fn fill(b: &Setup, n: usize) -> Setup {
    if b.free_times().is_empty() {
        let d = b.detector();
        return Setup::new(
            b.source(),
            Event::new((d.site + 1) % n, d.time),
            b.filters().to_vec(),
        )
        .unwrap();
    }
    let t = b.free_times()[0];
    let mut filters = b.filters().to_vec();
    filters.push(FilterSpec::new(t, BTreeSet::from([0])).unwrap());
    Setup::new(b.source(), b.detector(), filters).unwrap()
}
