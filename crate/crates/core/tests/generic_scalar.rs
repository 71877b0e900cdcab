//! The core runs in single precision as well.

use std::sync::Arc;

use mpcc_core::function_space::{DiscreteFunction, DomainKind, Grid};
use mpcc_core::functional::{EnergyFunctional, Regime};
use mpcc_core::nonlinearity::{Kind, NonlinearitySpec};

#[test]
fn f32_functional_agrees_with_f64() {
    let g32 = Arc::new(Grid::<f32>::radial_uniform(3, 10.0, 400, DomainKind::WholeSpaceTruncated).unwrap());
    let g64 = Arc::new(Grid::<f64>::radial_uniform(3, 10.0, 400, DomainKind::WholeSpaceTruncated).unwrap());
    let n32 = NonlinearitySpec::new(3, 2.0f32, Kind::Power { p: 4.0, scale: 0.25 }).unwrap();
    let n64 = NonlinearitySpec::new(3, 2.0f64, Kind::Power { p: 4.0, scale: 0.25 }).unwrap();
    let f32_ = EnergyFunctional::new(Arc::clone(&g32), 1.0, n32, Regime::SubcriticalH1).unwrap();
    let f64_ = EnergyFunctional::new(Arc::clone(&g64), 1.0, n64, Regime::SubcriticalH1).unwrap();
    let e32 = f32_.energy(&DiscreteFunction::from_fn(g32, |r| 2.0 * (-r * r).exp()));
    let e64 = f64_.energy(&DiscreteFunction::from_fn(g64, |r| 2.0 * (-r * r).exp()));
    assert!((f64::from(e32) - e64).abs() < 1e-4 * e64.abs());
}
