use nalgebra::DMatrix;
use num_complex::Complex64;
use proptest::prelude::*;
use wavediag::cycle::{all_hamilton_cycles, validate_cycle, HamiltonCycle};
use wavediag::density::DiagramContext;
use wavediag::diagram::{diagram_count, enumerate_diagrams, Orientation};
use wavediag::phase::{omega_vector, phase_value, OmegaSource};
use wavediag::quad::{integrate_half_line, Tolerance};
use wavediag::spectral::{exact_rank, spectral_check};
use wavediag::wick::feynman_set;

fn context(m: usize, n: usize, pick: usize) -> Option<DiagramContext> {
    let mut set = feynman_set(m, n);
    if set.is_empty() {
        return None;
    }
    let i = pick % set.len();
    Some(DiagramContext::new(set.swap_remove(i)).unwrap())
}

fn order_pair() -> impl Strategy<Value = (usize, usize)> {
    (0usize..=4)
        .prop_flat_map(|m| (Just(m), 0usize..=4 - m))
        .prop_filter("m + n ≥ 2", |(m, n)| m + n >= 2)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn omega_routes_agree((m, n) in order_pair(), pick in 0usize..10_000, d in 1usize..=3,
                          seed in prop::collection::vec(-2.0f64..2.0, 16)) {
        let ctx = context(m, n, pick).unwrap();
        let big_n = ctx.order();
        let z = &seed[..big_n * d];
        let s = &seed[12..12 + d];
        let a = omega_vector(OmegaSource::Alpha(&ctx.phase.alpha), z, d).unwrap();
        let x = omega_vector(OmegaSource::Xi { map: &ctx.phase.xi, f: &ctx.fd.f, s }, z, d).unwrap();
        for (u, v) in a.iter().zip(&x) {
            prop_assert!((u - v).abs() < 1e-9 * (1.0 + u.abs()), "{a:?} {x:?}");
        }
    }

    #[test]
    fn phase_is_omega_against_times((m, n) in order_pair(), pick in 0usize..10_000,
                                    z in prop::collection::vec(-2.0f64..2.0, 4),
                                    l in prop::collection::vec(-3.0f64..0.0, 4), shift in -5.0f64..5.0) {
        let ctx = context(m, n, pick).unwrap();
        let k = ctx.order();
        let (z, l) = (&z[..k], &l[..k]);
        let w = omega_vector(OmegaSource::Alpha(&ctx.phase.alpha), z, 1).unwrap();
        let direct: f64 = w.iter().zip(l).map(|(a, b)| a * b).sum();
        let omega = phase_value(&ctx.phase.alpha, l, z, 1).unwrap();
        prop_assert!((omega - direct).abs() < 1e-9 * (1.0 + direct.abs()));
        let moved: Vec<f64> = l.iter().map(|t| t + shift).collect();
        let omega2 = phase_value(&ctx.phase.alpha, &moved, z, 1).unwrap();
        prop_assert!((omega - omega2).abs() < 1e-9 * (1.0 + omega.abs()));
    }

    #[test]
    fn kappa_is_minus_pair_sum((m, n) in order_pair(), pick in 0usize..10_000,
                               l in prop::collection::vec(-3.0f64..3.0, 4)) {
        let ctx = context(m, n, pick).unwrap();
        let sp = spectral_check(&ctx.phase.alpha, &l[..ctx.order()]);
        prop_assert!(sp.kappa >= 0.0);
        prop_assert!(sp.residual < 1e-10);
        let trace: f64 = sp.eigenvalues.iter().sum();
        prop_assert!(trace.abs() < 1e-9 * (1.0 + sp.kappa));
    }

    #[test]
    fn every_cycle_is_valid_and_round_trips((m, n) in order_pair(), pick in 0usize..10_000) {
        let ctx = context(m, n, pick).unwrap();
        let cycles = all_hamilton_cycles(&ctx.fd);
        prop_assert!(!cycles.is_empty());
        for c in &cycles {
            prop_assert!(validate_cycle(&ctx.fd, c).is_empty());
            let back = HamiltonCycle::from_reduced(&ctx.fd, &c.reduced()).unwrap();
            prop_assert_eq!(&back.sequence, &c.sequence);
        }
    }

    #[test]
    fn alternate_cycles_keep_truth((m, n) in order_pair(), pick in 0usize..10_000) {
        let ctx = context(m, n, pick).unwrap();
        for c in all_hamilton_cycles(&ctx.fd) {
            let other = DiagramContext::with_cycle(ctx.fd.clone(), c).unwrap();
            prop_assert_eq!(other.is_true(), ctx.is_true());
        }
    }

    #[test]
    fn exact_rank_matches_floating_rank(rows in 1usize..5, cols in 1usize..5,
                                        entries in prop::collection::vec(-3i64..=3, 16)) {
        let m: Vec<Vec<i128>> = (0..rows).map(|i| (0..cols).map(|j| i128::from(entries[i * cols + j])).collect()).collect();
        let f = DMatrix::from_fn(rows, cols, |i, j| entries[i * cols + j] as f64);
        prop_assert_eq!(exact_rank(&m), f.rank(1e-9));
    }

    #[test]
    fn half_line_oscillatory_integral(a in 0.2f64..5.0, b in -20.0f64..20.0) {
        let r = integrate_half_line(|x| Complex64::new(-a, b).scale(x).exp(), Tolerance::default()).unwrap();
        let exact = Complex64::new(a, -b).inv();
        prop_assert!((r.value - exact).norm() < 1e-8 * exact.norm(), "{} {}", r.value, exact);
    }
}

#[test]
fn counts_are_ternary_numbers() {
    for m in 0..=6u32 {
        let mut c: u128 = 1;
        for i in 0..m {
            c = c * u128::from(3 * m - i) / u128::from(i + 1);
        }
        let ternary = c / u128::from(2 * m + 1);
        assert_eq!(diagram_count(m as usize), ternary, "m = {m}");
        if m <= 5 {
            assert_eq!(enumerate_diagrams(m as usize, Orientation::Normal).len() as u128, ternary);
        }
    }
}

#[test]
fn feynman_sets_are_mirror_symmetric() {
    for (m, n) in [(2, 0), (2, 1), (3, 1), (3, 0)] {
        assert_eq!(feynman_set(m, n).len(), feynman_set(n, m).len(), "({m}, {n})");
    }
}
