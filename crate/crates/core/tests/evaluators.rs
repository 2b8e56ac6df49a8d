use num_complex::Complex64;
use wavediag::density::DiagramContext;
use wavediag::evaluate::{continuum_j, correlation, lattice_sums, true_contexts, zeroth_correlation, LatticeOptions, McOptions, Mode};
use wavediag::gauss_time::{continuum_j_gaussian, family_sum_gaussian};
use wavediag::mc::IntegralEstimate;
use wavediag::model::DensityModel;
use wavediag::oracle::{mc_correlation, OracleOptions};
use wavediag::wick::{feynman_set, phase_constant};
use wavediag::Error;

fn constant_gamma(d: usize) -> DensityModel {
    let mut m = DensityModel::default().with_d(d).with_nu(0.25);
    m.gamma0.coefficients = vec![1.0];
    m.b.rate = 0.05;
    m
}

fn z_score(a: &IntegralEstimate, b: &IntegralEstimate) -> f64 {
    (a.value - b.value).norm() / a.stderr_norm().hypot(b.stderr_norm())
}

#[test]
fn equal_orders_give_real_correlations() {
    let c = correlation(
        1,
        1,
        &DensityModel::default(),
        &[0.3],
        &Mode::Continuum(McOptions {
            samples: 200_000,
            ..Default::default()
        }),
    )
    .unwrap();
    assert!(c.total.value.im.abs() <= 3.0 * c.total.stderr[1] + 1e-12, "{:?}", c.total);

    let contexts = true_contexts(2, 2).unwrap();
    let terms: Vec<(Complex64, &DiagramContext)> = contexts.iter().map(|c| (phase_constant(&c.fd), c)).collect();
    let e = family_sum_gaussian(
        &terms,
        &constant_gamma(1),
        &[0.0],
        &McOptions {
            samples: 20_000,
            ..Default::default()
        },
    )
    .unwrap();
    assert!(e.value.im.abs() <= 3.0 * e.stderr[1] + 1e-12, "{e:?}");
}

#[test]
fn exact_z_route_matches_z_sampling() {
    let model = constant_gamma(1);
    let opts = McOptions {
        samples: 200_000,
        ..Default::default()
    };
    for ctx in true_contexts(2, 1).unwrap().iter().step_by(5) {
        let a = continuum_j(ctx, &model, &[0.2], &opts).unwrap();
        let b = continuum_j_gaussian(ctx, &model, &[0.2], &McOptions { seed: 2, ..opts }).unwrap();
        assert!(z_score(&a, &b) < 4.0, "{}: {} vs {}", ctx.id(), a.value, b.value);
    }
}

#[test]
fn free_correlation_matches_simulation() {
    let model = DensityModel::default().with_horizon(2.0);
    let opts = OracleOptions {
        replicates: 4000,
        seed: 3,
        nodes: 17,
        cutoff: 2.0,
    };
    let o = mc_correlation(0, 0, &model, &[0.5], &opts).unwrap();
    let exact = zeroth_correlation(&model, &[0.5]);
    assert!((o.value.re - exact).abs() < 3.0 * o.stderr[0], "{} vs {exact}", o.value);
}

#[test]
fn trapezoid_sum_approximates_continuum() {
    let model = DensityModel::default().with_nu(0.5).with_period(8.0);
    let opts = McOptions {
        samples: 400_000,
        ..Default::default()
    };
    for ctx in true_contexts(1, 1).unwrap() {
        let lat = lattice_sums(&ctx, &model, &[0.0], &LatticeOptions::default()).unwrap();
        let mc = continuum_j(&ctx, &model, &[0.0], &opts).unwrap();
        let gap = (lat.trapezoid.value - mc.value).norm();
        assert!(
            gap < 3.0 * mc.stderr_norm() + 1e-6,
            "{}: {} vs {}",
            ctx.id(),
            lat.trapezoid.value,
            mc.value
        );
        assert!(lat.excluded.norm() > 0.0);
    }
}

#[test]
fn same_seed_same_bits() {
    let ctx = DiagramContext::new(feynman_set(2, 0).swap_remove(1)).unwrap();
    let model = DensityModel::default();
    let opts = McOptions {
        samples: 50_000,
        seed: 9,
        ..Default::default()
    };
    let a = continuum_j(&ctx, &model, &[0.0], &opts).unwrap();
    let b = continuum_j(&ctx, &model, &[0.0], &opts).unwrap();
    assert_eq!(a.value, b.value);
    let c = continuum_j(&ctx, &model, &[0.0], &McOptions { seed: 10, ..opts }).unwrap();
    assert_ne!(a.value, c.value);
}

#[test]
fn preconditions_are_reported() {
    let ctx = DiagramContext::new(feynman_set(1, 1).swap_remove(0)).unwrap();
    let model = DensityModel::default().with_d(2);
    assert!(matches!(
        continuum_j(&ctx, &model, &[0.0], &McOptions::default()),
        Err(Error::Dimension { .. })
    ));
    let off_lattice = lattice_sums(&ctx, &DensityModel::default(), &[0.3], &LatticeOptions::default());
    assert!(matches!(off_lattice, Err(Error::Precondition(_))));
    let bad = DensityModel::from_toml("nu = 0.0\n");
    assert!(matches!(bad, Err(Error::Config(_))));
    let inf = DensityModel::from_toml("T = inf\n").unwrap();
    assert!(inf.horizon.is_infinite());
    assert!(DensityModel::from_toml("colour = 1\n").is_err());
}
