//! `kappa(t) = sup { psi(u) : |grad u|^2 = t }` by projected gradient ascent on
//! the sphere of the Dirichlet norm, and the rescaling of a maximizer into a
//! critical point of `G`.

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::function_space::{DiscreteFunction, DomainKind, Grid};
use crate::functional::{EnergyFunctional, FunctionalError, Regime};
use crate::nonlinearity::{AsymptoticError, AsymptoticLimit, Direction, Nonlinearity, SampleBox, LIMIT_TOL};
use crate::scalar::{critical_exponent, from_i32, from_usize, lit, Real};

/// Relative margin a strict inequality between levels must clear.
pub const STRICT_MARGIN: f64 = 0.04;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SphereError {
    #[error("no positive value of psi found on the sphere (sup F <= 0 on the explored range)")]
    NoPositiveValue,
    #[error("sphere maximization needs a radial grid with N >= 3")]
    WrongGrid,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error(transparent)]
    Functional(#[from] FunctionalError),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KappaOptions<T> {
    /// Fractional dilation offsets per period: widths `w0 gamma^{i/starts + j}`.
    pub starts: usize,
    /// Range of whole periods `j` covered by the starts.
    pub periods: (i32, i32),
    /// Reference width `w0`; `None` picks `R/4` on a ball and half the
    /// geometric mean of the first positive node and `R` on the whole space.
    pub base_width: Option<T>,
    /// Initial step along the normalized tangential gradient.
    pub step: T,
    pub max_iter: usize,
    /// Stop when the tangential gradient falls below `tol` times the full one.
    pub tol: T,
}

impl<T: Real> Default for KappaOptions<T> {
    fn default() -> Self {
        Self { starts: 4, periods: (-2, 2), base_width: None, step: lit(0.2), max_iter: 4000, tol: lit(1e-7) }
    }
}

/// Best point found on the sphere `|grad u|^2 = level`.
#[derive(Debug, Clone)]
pub struct KappaResult<T> {
    pub level: T,
    /// `kappa(level)`; `kappa(1)` for [`kappa_one`].
    pub kappa1: T,
    pub maximizer: DiscreteFunction<T>,
    pub starts_used: usize,
    /// Relative tangential gradient at the maximizer.
    pub best_gradient_norm: T,
    pub iterations: usize,
}

struct Ascent<T> {
    psi: T,
    values: Vec<T>,
    grad: T,
    iters: usize,
}

fn load<T: Real, N: Nonlinearity<T> + ?Sized>(nl: &N, grid: &Grid<T>, u: &[T]) -> Vec<T> {
    let mut g: Vec<T> = u
        .iter()
        .zip(grid.nodes())
        .zip(grid.mass())
        .map(|((&v, &x), &m)| m * nl.derivative(x, v))
        .collect();
    grid.clear_constrained(&mut g);
    g
}

fn psi<T: Real, N: Nonlinearity<T> + ?Sized>(nl: &N, grid: &Grid<T>, u: &[T]) -> T {
    u.iter().zip(grid.nodes()).zip(grid.mass()).map(|((&v, &x), &m)| m * nl.primitive(x, v)).sum()
}

fn normalize<T: Real>(grid: &Grid<T>, level: T, u: &mut [T]) {
    let n = grid.stiffness_form(u, u);
    let s = (level / n).sqrt();
    for v in u.iter_mut() {
        *v *= s;
    }
}

fn ascend<T: Real, N: Nonlinearity<T> + ?Sized>(
    nl: &N,
    grid: &Grid<T>,
    level: T,
    mut u: Vec<T>,
    opts: &KappaOptions<T>,
) -> Ascent<T> {
    normalize(grid, level, &mut u);
    let mut value = psi(nl, grid, &u);
    let mut tau = opts.step;
    let mut grad = T::infinity();
    let mut iters = 0;
    let root = level.sqrt();
    while iters < opts.max_iter {
        iters += 1;
        let g = load(nl, grid, &u);
        let h = grid.solve_shifted(T::zero(), &g);
        let ug: T = u.iter().zip(&g).map(|(&a, &b)| a * b).sum();
        let gh: T = g.iter().zip(&h).map(|(&a, &b)| a * b).sum();
        let tangential = (gh - ug * ug / level).max(T::zero());
        grad = if gh > T::zero() { (tangential / gh).sqrt() } else { T::zero() };
        if grad < opts.tol || tangential.is_zero() {
            break;
        }
        let c = ug / level;
        let scale = root / tangential.sqrt();
        let d: Vec<T> = h.iter().zip(&u).map(|(&a, &b)| (a - c * b) * scale).collect();
        let mut accepted = false;
        while tau > lit(1e-14) {
            let mut cand: Vec<T> = u.iter().zip(&d).map(|(&a, &b)| a + tau * b).collect();
            normalize(grid, level, &mut cand);
            let pc = psi(nl, grid, &cand);
            if pc > value {
                u = cand;
                value = pc;
                tau = (tau * lit(1.5)).min(T::one());
                accepted = true;
                break;
            }
            tau *= lit(0.5);
        }
        if !accepted {
            break;
        }
    }
    Ascent { psi: value, values: u, grad, iters }
}

/// Bump shaped like the extremal `(1 + r^2)^{-(N-2)/2}` at width `w`, cut off
/// to vanish on the boundary of a ball.
fn start_profile<T: Real>(grid: &Grid<T>, width: T) -> Vec<T> {
    let expo = -from_usize::<T>(grid.dim() - 2) * lit(0.5);
    let radius = grid.extent();
    let ball = grid.domain() == Some(DomainKind::Ball);
    grid.nodes()
        .iter()
        .map(|&r| {
            let z = r / width;
            let v = (T::one() + z * z).powf(expo);
            if ball {
                v * (T::one() - (r / radius) * (r / radius))
            } else {
                v
            }
        })
        .collect()
}

/// Maximizes `psi` on `|grad u|^2 = level` from the configured starts.
pub fn maximize_on_sphere<T: Real, N: Nonlinearity<T> + ?Sized>(
    nl: &N,
    grid: &Arc<Grid<T>>,
    level: T,
    opts: &KappaOptions<T>,
) -> Result<KappaResult<T>, SphereError> {
    if !grid.is_radial() || grid.dim() < 3 || nl.dim() != grid.dim() {
        return Err(SphereError::WrongGrid);
    }
    if !(level > T::zero()) {
        return Err(SphereError::InvalidArgument(format!("sphere level must be positive, got {level}")));
    }
    if opts.starts == 0 || opts.periods.0 > opts.periods.1 {
        return Err(SphereError::InvalidArgument("empty set of starts".into()));
    }
    let gamma = nl.gamma();
    let w0 = opts.base_width.unwrap_or_else(|| match grid.domain() {
        Some(DomainKind::Ball) => grid.extent() * lit(0.25),
        _ => (grid.nodes()[1] * grid.extent()).sqrt() * lit(0.5),
    });
    let mut widths = Vec::new();
    for j in opts.periods.0..=opts.periods.1 {
        for i in 0..opts.starts {
            let theta = from_i32::<T>(j) + from_usize::<T>(i) / from_usize::<T>(opts.starts);
            widths.push(w0 * gamma.powf(theta));
        }
    }
    let runs: Vec<Ascent<T>> =
        widths.par_iter().map(|&w| ascend(nl, grid, level, start_profile(grid, w), opts)).collect();
    let starts_used = runs.len();
    let iterations = runs.iter().map(|r| r.iters).sum();
    let best = runs
        .into_iter()
        .filter(|r| r.psi.is_finite())
        .reduce(|a, b| if b.psi > a.psi { b } else { a })
        .ok_or(SphereError::NoPositiveValue)?;
    if !(best.psi > T::zero()) {
        return Err(SphereError::NoPositiveValue);
    }
    let maximizer = DiscreteFunction::new(Arc::clone(grid), best.values).map_err(|e| SphereError::InvalidArgument(e.to_string()))?;
    Ok(KappaResult { level, kappa1: best.psi, maximizer, starts_used, best_gradient_norm: best.grad, iterations })
}

/// `kappa(1)`.
pub fn kappa_one<T: Real, N: Nonlinearity<T> + ?Sized>(
    nl: &N,
    grid: &Arc<Grid<T>>,
    opts: &KappaOptions<T>,
) -> Result<KappaResult<T>, SphereError> {
    maximize_on_sphere(nl, grid, T::one(), opts)
}

/// `kappa(t) = kappa(1) t^{2*/2}`.
pub fn kappa<T: Real>(dim: usize, kappa1: T, t: T) -> Result<T, SphereError> {
    if !(t > T::zero()) {
        return Err(SphereError::InvalidArgument(format!("t must be positive, got {t}")));
    }
    let crit = critical_exponent::<T>(dim).ok_or(SphereError::WrongGrid)?;
    Ok(kappa1 * t.powf(crit * lit(0.5)))
}

/// One branch of [`compare_kappas`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KappaBranch<T> {
    pub direction: Direction,
    /// `None` when the limit could not be certified.
    pub kappa1: Option<T>,
    pub certified_zero: bool,
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KappaComparison<T> {
    pub kappa1: T,
    pub plus: KappaBranch<T>,
    pub minus: KappaBranch<T>,
    /// `kappa1 > (1 + margin) max(kappa_plus1, kappa_minus1)`.
    pub strict: bool,
    pub margin: T,
}

impl<T: Real> KappaComparison<T> {
    pub fn kappa_plus1(&self) -> Option<T> {
        self.plus.kappa1
    }
    pub fn kappa_minus1(&self) -> Option<T> {
        self.minus.kappa1
    }
}

fn branch<T: Real, N: Nonlinearity<T>>(
    nl: &N,
    grid: &Arc<Grid<T>>,
    direction: Direction,
    sample: &SampleBox<T>,
    opts: &KappaOptions<T>,
) -> Result<KappaBranch<T>, SphereError> {
    match AsymptoticLimit::certify(nl, direction, sample, lit(LIMIT_TOL)) {
        Ok(limit) if limit.is_zero() => {
            Ok(KappaBranch { direction, kappa1: Some(T::zero()), certified_zero: true, note: None })
        }
        Ok(limit) => {
            let k = match kappa_one(&limit, grid, opts) {
                Ok(r) => r.kappa1,
                Err(SphereError::NoPositiveValue) => T::zero(),
                Err(e) => return Err(e),
            };
            Ok(KappaBranch { direction, kappa1: Some(k), certified_zero: false, note: None })
        }
        Err(e @ (AsymptoticError::Divergent { .. } | AsymptoticError::Uncertified { .. })) => {
            Ok(KappaBranch { direction, kappa1: None, certified_zero: false, note: Some(e.to_string()) })
        }
    }
}

/// `kappa(1)` against `kappa_+(1)` and `kappa_-(1)`.
pub fn compare_kappas<T: Real, N: Nonlinearity<T>>(
    nl: &N,
    grid: &Arc<Grid<T>>,
    sample: &SampleBox<T>,
    opts: &KappaOptions<T>,
) -> Result<KappaComparison<T>, SphereError> {
    let kappa1 = kappa_one(nl, grid, opts)?.kappa1;
    let plus = branch(nl, grid, Direction::Plus, sample, opts)?;
    let minus = branch(nl, grid, Direction::Minus, sample, opts)?;
    let margin = lit::<T>(STRICT_MARGIN);
    let others: Vec<T> = [plus.kappa1, minus.kappa1].into_iter().flatten().collect();
    let strict = !others.is_empty() && others.iter().all(|&k| kappa1 > (T::one() + margin) * k);
    Ok(KappaComparison { kappa1, plus, minus, strict, margin })
}

/// Critical point obtained by dilating a unit-sphere maximizer.
#[derive(Debug, Clone)]
pub struct CriticalFromMaximizer<T> {
    pub w: DiscreteFunction<T>,
    /// `max_r 1/2 r^2 - r^{2*} kappa(1) = t0 / N`.
    pub level: T,
    /// `G(w)` evaluated on the grid.
    pub energy: T,
    /// Dilation factor `t` with `w = v(./t)`.
    pub dilation: T,
    /// Norm level `(2* kappa(1))^{-(N-2)/2}` at which the dilation path peaks at 1.
    pub t0: T,
    /// `(2* kappa(1))^{-2/(N-2)}` in its printed form.
    pub t0_printed: T,
    /// The two exponents disagree (`N != 4`).
    pub exponent_mismatch: bool,
    /// `|grad w|^2` on the grid.
    pub norm_sq: T,
    /// Maximizer of the dilation path through `w`; 1 for a critical point.
    pub t_star: T,
}

/// Rescales the maximizer so that the dilation path through it peaks at
/// `t = 1` (zero mass, autonomous problems).
pub fn maximizer_to_critical_point<T: Real, N: Nonlinearity<T>>(
    functional: &EnergyFunctional<T, N>,
    kres: &KappaResult<T>,
) -> Result<CriticalFromMaximizer<T>, SphereError> {
    if functional.regime() != Regime::CriticalD12 {
        return Err(SphereError::InvalidArgument("rescaling applies to the zero mass regime".into()));
    }
    if !(kres.kappa1 > T::zero()) {
        return Err(SphereError::NoPositiveValue);
    }
    let dim = functional.dim();
    let n = from_usize::<T>(dim);
    let crit = critical_exponent::<T>(dim).ok_or(SphereError::WrongGrid)?;
    let two = lit::<T>(2.0);
    // kappa1 is psi on |grad v|^2 = level; reduce to the unit sphere first.
    let k1 = kres.kappa1 / kres.level.powf(crit / two);
    let base = crit * k1;
    let t0 = base.powf(-(n - two) / two);
    let t0_printed = base.powf(-two / (n - two));
    let level = t0 / n;
    // |grad v(./t)|^2 = t^{N-2} |grad v|^2.
    let mut dilation = (t0 / kres.level).powf(T::one() / (n - two));
    let resample = |t: T| kres.maximizer.dilate(t).map_err(|e| SphereError::InvalidArgument(e.to_string()));
    let mut w = resample(dilation)?;
    let (mut t_star, _) = functional.path_max(&w)?;
    // Resampling loses a little of the tail; re-center the path maximum on t = 1.
    for _ in 0..8 {
        if (t_star - T::one()).abs() <= lit(1e-8) {
            break;
        }
        dilation *= t_star;
        w = resample(dilation)?;
        t_star = functional.path_max(&w)?.0;
    }
    let energy = functional.energy(&w);
    Ok(CriticalFromMaximizer {
        norm_sq: w.dirichlet_seminorm_sq(),
        w,
        level,
        energy,
        dilation,
        t0,
        t0_printed,
        exponent_mismatch: dim != 4,
        t_star,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nonlinearity::{Kind, NonlinearitySpec};

    fn grid(ratio_steps: f64, radius: f64) -> Arc<Grid<f64>> {
        Arc::new(
            Grid::radial_geometric(4, 1e-4, radius, 2f64.powf(1.0 / ratio_steps), DomainKind::WholeSpaceTruncated)
                .unwrap(),
        )
    }

    fn simpson(a: f64, b: f64, n: usize, g: impl Fn(f64) -> f64) -> f64 {
        let h = (b - a) / n as f64;
        let mut s = g(a) + g(b);
        for i in 1..n {
            s += if i % 2 == 1 { 4.0 } else { 2.0 } * g(a + h * i as f64);
        }
        s * h / 3.0
    }

    /// `psi(U)/|grad U|^4` for the extremal `U = (1 + r^2)^{-1}`, N = 4, by
    /// substitution `r = tan(theta)` to avoid a long tail.
    fn talenti_kappa() -> f64 {
        let omega = 2.0 * std::f64::consts::PI.powi(2);
        let half_pi = std::f64::consts::FRAC_PI_2;
        let grad = omega
            * simpson(0.0, half_pi - 1e-9, 1_000_000, |th| {
                let r: f64 = th.tan();
                let d = 2.0 * r / (1.0 + r * r).powi(2);
                d * d * r.powi(3) * (1.0 + r * r)
            });
        let psi = omega
            * simpson(0.0, half_pi - 1e-9, 1_000_000, |th| {
                let r: f64 = th.tan();
                (1.0 + r * r).powi(-4) * r.powi(3) * (1.0 + r * r)
            });
        psi / (grad * grad)
    }

    fn stem() -> NonlinearitySpec<f64> {
        NonlinearitySpec::new(4, 2.0, Kind::CriticalStem).unwrap()
    }

    #[test]
    fn stem_kappa_matches_extremal() {
        let oracle = talenti_kappa();
        assert!((oracle - 3.0 / (32.0 * std::f64::consts::PI.powi(2))).abs() < 1e-8);
        let res = kappa_one(&stem(), &grid(32.0, 200.0), &KappaOptions::default()).unwrap();
        assert!((res.kappa1 - oracle).abs() <= 0.015 * oracle, "{} vs {oracle}", res.kappa1);
        assert!((res.maximizer.dirichlet_seminorm_sq() - 1.0).abs() < 1e-8);
        assert_eq!(res.starts_used, 20);
        assert!(res.best_gradient_norm < 1e-3);
    }

    #[test]
    fn kappa_scaling_law() {
        let g = grid(32.0, 200.0);
        let k1 = kappa_one(&stem(), &g, &KappaOptions::default()).unwrap().kappa1;
        assert_eq!(kappa(4, k1, 1.0).unwrap(), k1);
        assert!((kappa(4, k1, 4.0).unwrap() - 16.0 * k1).abs() < 1e-15);
        assert!(kappa(4, k1, 0.0).is_err());
        let k4 = maximize_on_sphere(&stem(), &g, 4.0, &KappaOptions::default()).unwrap().kappa1;
        assert!((k4 - 16.0 * k1).abs() <= 0.02 * 16.0 * k1);
    }

    #[test]
    fn finer_grids_do_not_lose_kappa() {
        let coarse = kappa_one(&stem(), &grid(16.0, 100.0), &KappaOptions::default()).unwrap().kappa1;
        let fine = kappa_one(&stem(), &grid(32.0, 200.0), &KappaOptions::default()).unwrap().kappa1;
        assert!(fine >= coarse * 0.99);
    }

    #[test]
    fn negative_nonlinearity_has_no_positive_value() {
        let nl = NonlinearitySpec::new(4, 2.0, Kind::Power { p: 4.0, scale: -1.0 }).unwrap();
        let err = kappa_one(&nl, &grid(16.0, 100.0), &KappaOptions::default()).unwrap_err();
        assert_eq!(err, SphereError::NoPositiveValue);
    }

    #[test]
    fn comparisons() {
        let g = grid(16.0, 100.0);
        let sample = SampleBox::new(1e-2, 1e2, 21);
        let opts = KappaOptions::default();
        let c = compare_kappas(&stem(), &g, &sample, &opts).unwrap();
        assert!(!c.strict);
        for k in [c.kappa_plus1().unwrap(), c.kappa_minus1().unwrap()] {
            assert!((k - c.kappa1).abs() <= 0.02 * c.kappa1);
        }
        let bumped = NonlinearitySpec::new(
            4,
            2.0,
            Kind::Sum { terms: vec![Kind::CriticalStem, Kind::SBump { lo: 1.0, hi: 2.0, height: 2.0 }] },
        )
        .unwrap();
        let c = compare_kappas(&bumped, &g, &sample, &opts).unwrap();
        assert!(c.strict, "{c:?}");
        let plus = c.kappa_plus1().unwrap();
        assert!((plus - c.kappa_minus1().unwrap()).abs() <= 0.02 * plus);

        let power = NonlinearitySpec::new(4, 2.0, Kind::Power { p: 3.0, scale: 1.0 }).unwrap();
        let c = compare_kappas(&power, &g, &sample, &opts).unwrap();
        assert!(c.plus.certified_zero);
        assert_eq!(c.kappa_plus1(), Some(0.0));
        assert!(c.kappa_minus1().is_none());
        assert!(c.strict);
    }

    #[test]
    fn maximizer_rescales_to_critical_point() {
        let g = grid(32.0, 200.0);
        let f = EnergyFunctional::new(Arc::clone(&g), 0.0, stem(), Regime::CriticalD12).unwrap();
        let res = kappa_one(&stem(), &g, &KappaOptions::default()).unwrap();
        let cp = maximizer_to_critical_point(&f, &res).unwrap();
        assert!((cp.t_star - 1.0).abs() <= 0.01);
        assert!(!cp.exponent_mismatch);
        assert!((cp.t0 - cp.t0_printed).abs() < 1e-12);
        assert!((cp.energy - cp.level).abs() <= 0.01 * cp.level);
        let residual = f.gradient_residual(&cp.w).dual_norm;
        assert!(residual <= 5e-2 * cp.norm_sq.sqrt(), "{residual}");
        // kappa(1) = 1 gives the level max_r r^2/2 - r^4 = 1/16.
        let unit = KappaResult { kappa1: 1.0, ..res };
        let cp = maximizer_to_critical_point(&f, &unit).unwrap();
        assert!((cp.level - 1.0 / 16.0).abs() < 1e-15);
    }
}
