//! Mountain-pass levels through the independent routes.

use std::sync::Arc;

use mpcc_core::function_space::{DiscreteFunction, DomainKind, Grid};
use mpcc_core::functional::{EnergyFunctional, Regime};
use mpcc_core::mountain_pass::{
    initial_path, level_from_kappa, mp_level_descent, mp_level_report, DescentOptions, DescentStatus, LevelEstimate,
    LevelRoute,
};
use mpcc_core::nonlinearity::{Kind, NonlinearitySpec};
use mpcc_core::sphere_maximizer::{kappa, kappa_one, KappaOptions};
use proptest::prelude::*;

#[test]
fn soliton_level_in_one_dimension() {
    let grid = Arc::new(Grid::<f64>::line(20.0, 0.02).unwrap());
    let nl = NonlinearitySpec::new(1, 2.0, Kind::Power { p: 4.0, scale: 0.25 }).unwrap();
    let f = EnergyFunctional::new(Arc::clone(&grid), 1.0, nl, Regime::SubcriticalH1).unwrap();
    let seed = DiscreteFunction::from_fn(grid, |x| 2.0 * (-(x / 2.0).powi(2)).exp());
    let out = mp_level_descent(&f, &initial_path(&f, &seed).unwrap(), &DescentOptions::default()).unwrap();
    assert_eq!(out.status, DescentStatus::Converged);
    assert!((out.c_est - 4.0 / 3.0).abs() < 1e-2, "{}", out.c_est);
}

#[test]
fn kappa_route_gives_the_sobolev_level() {
    let grid = Arc::new(Grid::radial_geometric(4, 1e-4, 200.0, 2f64.powf(1.0 / 32.0), DomainKind::WholeSpaceTruncated).unwrap());
    let nl = NonlinearitySpec::new(4, 2.0, Kind::CriticalStem).unwrap();
    let k = kappa_one(&nl, &grid, &KappaOptions::default()).unwrap();
    let c = level_from_kappa(4, k.kappa1).unwrap();
    // U = sqrt(2) / (1 + r^2) solves -lap U = 4 U^3, and on the Nehari
    // manifold G(U) = |grad U|^2 / 4 = 2 pi^2 / 3.
    let exact = 2.0 * std::f64::consts::PI.powi(2) / 3.0;
    assert!((c - exact).abs() / exact < 1e-2, "{c} vs {exact}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn kappa_scaling_law(k1 in 1e-3f64..1.0, t in 0.1f64..10.0, dim in 3usize..=6) {
        let crit = 2.0 * dim as f64 / (dim as f64 - 2.0);
        let v = kappa(dim, k1, t).unwrap();
        prop_assert!((v - k1 * t.powf(crit / 2.0)).abs() <= 1e-12 * v);
    }

    #[test]
    fn strict_implies_nonstrict(c in 0.1f64..10.0, cs in 0.1f64..10.0, margin in 0.0f64..0.2, tol in 0.0f64..0.1) {
        let level = LevelEstimate::finite("c", c, LevelRoute::Descent, true);
        let sharp = [LevelEstimate::finite("c_plus", cs, LevelRoute::Kappa, true), LevelEstimate::infinite("c_minus")];
        let r = mp_level_report(&level, &sharp, margin, tol).unwrap();
        prop_assert!(!r.strict_flags["c_plus"] || r.nonstrict_ok["c_plus"]);
        prop_assert!(r.strict_flags["c_minus"] && r.nonstrict_ok["c_minus"]);
        prop_assert_eq!(r.strict_flags["c_plus"], c < cs * (1.0 - margin));
    }
}
