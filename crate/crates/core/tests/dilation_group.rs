//! The dilation group on geometric grids and the scaling laws of the
//! functionals.

use std::sync::Arc;

use mpcc_core::function_space::{DiscreteFunction, DomainKind, Grid};
use mpcc_core::functional::{EnergyFunctional, Regime};
use mpcc_core::nonlinearity::{check_selfsimilar, Kind, NonlinearitySpec};
use proptest::prelude::*;

fn grid(dim: usize) -> Arc<Grid<f64>> {
    Arc::new(Grid::radial_geometric(dim, 1e-5, 1e3, 2f64.powf(1.0 / 16.0), DomainKind::WholeSpaceTruncated).unwrap())
}

fn talenti(g: &Arc<Grid<f64>>, a: f64, w: f64) -> DiscreteFunction<f64> {
    let n = g.dim() as f64;
    DiscreteFunction::from_fn(Arc::clone(g), move |r| a * (1.0 + (r / w).powi(2)).powf(-(n - 2.0) / 2.0))
}

#[test]
fn talenti_energy_matches_the_closed_form() {
    // |grad (1 + r^2)^{-1}|^2 over R^4 is 4 pi^2 / 3.
    let u = talenti(&grid(4), 1.0, 1.0);
    let exact = 4.0 * std::f64::consts::PI.powi(2) / 3.0;
    assert!((u.dirichlet_seminorm_sq() - exact).abs() / exact < 2e-3);
}

#[test]
fn stems_are_selfsimilar_and_powers_are_not() {
    for dim in [3, 4, 5] {
        let stem = NonlinearitySpec::new(dim, 2.0, Kind::CriticalStem).unwrap();
        assert!(check_selfsimilar(&stem, 2.0, 1e-9));
        // The oscillation period must match the amplitude factor gamma^{(N-2)/2}.
        let factor = 2f64.powf((dim as f64 - 2.0) / 2.0);
        let osc = NonlinearitySpec::new(dim, 2.0, Kind::OscillatingStem { eps: 0.2, factor }).unwrap();
        assert!(check_selfsimilar(&osc, 2.0, 1e-9));
        if dim != 4 {
            let off = NonlinearitySpec::new(dim, 2.0, Kind::OscillatingStem { eps: 0.2, factor: 2.0 }).unwrap();
            assert!(!check_selfsimilar(&off, 2.0, 1e-9));
        }
        let power = NonlinearitySpec::new(dim, 2.0, Kind::Power { p: 3.0, scale: 1.0 }).unwrap();
        assert!(!check_selfsimilar(&power, 2.0, 1e-9));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn unitary_dilation_preserves_the_dirichlet_norm(j in -4i32..=4, w in 0.05f64..5.0, dim in 3usize..=5) {
        // In N = 3 a width-w profile loses about 1.7 w / R of its norm beyond R;
        // keep both profiles where that is below the tolerance.
        prop_assume!(w.max(w * 2f64.powi(-j)) <= 2.0);
        let g = grid(dim);
        let u = talenti(&g, 1.0, w);
        let v = u.unitary_dilate(2.0, j);
        let (a, b) = (u.dirichlet_seminorm_sq(), v.dirichlet_seminorm_sq());
        prop_assert!((a - b).abs() <= 5e-3 * a, "{a} vs {b}");
    }

    #[test]
    fn unitary_dilations_compose(j in -3i32..=3, k in -3i32..=3, w in 0.1f64..3.0) {
        let u = talenti(&grid(4), 1.0, w);
        let once = u.unitary_dilate(2.0, j + k);
        let twice = u.unitary_dilate(2.0, j).unitary_dilate(2.0, k);
        let diff = once.sub(&twice).dirichlet_seminorm_sq();
        prop_assert!(diff <= 1e-6 * once.dirichlet_seminorm_sq());
    }

    #[test]
    fn critical_psi_is_invariant_under_the_group(j in -4i32..=4, w in 0.1f64..3.0) {
        let g = grid(4);
        let nl = NonlinearitySpec::new(4, 2.0, Kind::OscillatingStem { eps: 0.2, factor: 2.0 }).unwrap();
        let f = EnergyFunctional::new(Arc::clone(&g), 0.0, nl, Regime::CriticalD12).unwrap();
        let u = talenti(&g, 0.7, w);
        let (a, b) = (f.psi(&u), f.psi(&u.unitary_dilate(2.0, j)));
        prop_assert!((a - b).abs() <= 5e-3 * a, "{a} vs {b}");
    }

    #[test]
    fn dilation_scales_norm_and_psi(t in 0.3f64..3.0, w in 0.2f64..2.0) {
        let g = grid(4);
        let nl = NonlinearitySpec::new(4, 2.0, Kind::CriticalStem).unwrap();
        let f = EnergyFunctional::new(Arc::clone(&g), 0.0, nl, Regime::CriticalD12).unwrap();
        let u = talenti(&g, 1.0, w);
        let ut = u.dilate(t).unwrap();
        let d = ut.dirichlet_seminorm_sq() / (t * t * u.dirichlet_seminorm_sq());
        let p = f.psi(&ut) / (t.powi(4) * f.psi(&u));
        prop_assert!((d - 1.0).abs() <= 1e-2 && (p - 1.0).abs() <= 1e-2, "{d} {p}");
    }
}
