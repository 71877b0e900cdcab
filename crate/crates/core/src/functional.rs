//! The energy `G(u) = 1/2 (|grad u|^2 + lambda |u|^2) - int F(x, u)` on a
//! discrete space, its gradient and the diagnostics evaluated on candidates.

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::function_space::{DiscreteFunction, DomainKind, Geometry, Grid};
use crate::nonlinearity::Nonlinearity;
use crate::scalar::{critical_exponent, from_usize, lit, Real};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    /// Zero mass problem in `D^{1,2}(R^N)`, `N >= 3`.
    #[serde(rename = "critical_D12", alias = "critical_d12")]
    CriticalD12,
    /// `H^1(R^N)` with `lambda > 0`.
    #[serde(rename = "subcritical_H1", alias = "subcritical_h1")]
    SubcriticalH1,
    /// Dirichlet problem on a ball, `lambda` above minus the first eigenvalue.
    BallDomain,
}

impl Regime {
    pub fn label(self) -> &'static str {
        match self {
            Regime::CriticalD12 => "critical_D12",
            Regime::SubcriticalH1 => "subcritical_H1",
            Regime::BallDomain => "ball_domain",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FunctionalError {
    #[error("inconsistent regime: {0}")]
    Regime(String),
    #[error("operation requires an autonomous nonlinearity")]
    NotAutonomous,
    #[error("no mountain: psi(u) - lambda/2 |u|^2 = {0:e} is not positive")]
    NoMountain(f64),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

/// Residual of the Euler–Lagrange equation at a point.
#[derive(Debug, Clone)]
pub struct Residual<T> {
    /// `(-Delta + lambda) u - f(x, u)` at the nodes.
    pub residual: DiscreteFunction<T>,
    /// `|G'(u)|` in the dual of the energy space.
    pub dual_norm: T,
}

/// Pohožaev diagnostics in the standard form and in the printed variant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pohozaev<T> {
    /// `(N-2)/2 |grad u|^2 + N/2 lambda |u|^2 - N int F(u)`.
    pub absolute: T,
    pub relative: T,
    /// `|grad u|^2 - 2* int (F(u) - lambda u^2)`; `None` for `N <= 2`.
    pub printed_absolute: Option<T>,
    pub printed_relative: Option<T>,
}

/// Maximizer of `t -> 1/2 t^{N-2} a - t^N b` over `t >= 0`.
pub fn path_max_closed_form<T: Real>(dim: usize, a: T, b: T) -> Result<(T, T), FunctionalError> {
    if dim < 3 {
        return Err(FunctionalError::InvalidArgument(format!("dilation paths need N >= 3, got {dim}")));
    }
    if !(b > T::zero()) {
        return Err(FunctionalError::NoMountain(b.to_f64().unwrap_or(f64::NAN)));
    }
    let n = from_usize::<T>(dim);
    let two = lit::<T>(2.0);
    let t = ((n - two) * a / (two * n * b)).sqrt();
    let value = t.powf(n - two) * a / two - t.powf(n) * b;
    Ok((t, value))
}

/// Energy functional on a grid.
#[derive(Debug, Clone)]
pub struct EnergyFunctional<T, N> {
    grid: Arc<Grid<T>>,
    lambda: T,
    nonlinearity: N,
    regime: Regime,
}

impl<T: Real, N: Nonlinearity<T>> EnergyFunctional<T, N> {
    pub fn new(grid: Arc<Grid<T>>, lambda: T, nonlinearity: N, regime: Regime) -> Result<Self, FunctionalError> {
        let bad = |m: String| Err(FunctionalError::Regime(m));
        if nonlinearity.dim() != grid.dim() {
            return bad(format!("nonlinearity has N = {} but the grid has N = {}", nonlinearity.dim(), grid.dim()));
        }
        if !lambda.is_finite() {
            return bad("lambda must be finite".into());
        }
        match regime {
            Regime::CriticalD12 => {
                if !lambda.is_zero() {
                    return bad(format!("the zero mass regime needs lambda = 0, got {lambda}"));
                }
                if grid.geometry() != (Geometry::Radial { dim: grid.dim(), domain: DomainKind::WholeSpaceTruncated }) {
                    return bad("the zero mass regime lives on a truncated whole-space radial grid".into());
                }
            }
            Regime::SubcriticalH1 => {
                if !(lambda > T::zero()) {
                    return bad(format!("the H1 regime needs lambda > 0, got {lambda}"));
                }
                if grid.domain() == Some(DomainKind::Ball) {
                    return bad("the H1 regime lives on a whole-space or line grid".into());
                }
            }
            Regime::BallDomain => {
                if grid.domain() != Some(DomainKind::Ball) {
                    return bad("the ball regime needs a radial ball grid".into());
                }
                if lambda < T::zero() {
                    let first = grid.principal_eigenvalue();
                    if !(lambda > -first) {
                        return bad(format!("lambda = {lambda} must exceed minus the first eigenvalue {first}"));
                    }
                }
            }
        }
        Ok(Self { grid, lambda, nonlinearity, regime })
    }

    pub fn grid(&self) -> &Arc<Grid<T>> {
        &self.grid
    }
    pub fn lambda(&self) -> T {
        self.lambda
    }
    pub fn nonlinearity(&self) -> &N {
        &self.nonlinearity
    }
    pub fn regime(&self) -> Regime {
        self.regime
    }
    pub fn dim(&self) -> usize {
        self.grid.dim()
    }

    fn check(&self, u: &DiscreteFunction<T>) {
        assert_eq!(u.grid().len(), self.grid.len(), "function does not live on the functional's grid");
    }

    /// `|grad u|^2 + lambda |u|^2`, the quadratic part of `2G`.
    pub fn quadratic(&self, u: &DiscreteFunction<T>) -> T {
        self.check(u);
        let mut q = u.dirichlet_seminorm_sq();
        if !self.lambda.is_zero() {
            q += self.lambda * u.l2_norm_sq();
        }
        q
    }

    /// Squared norm of the energy space: the `H^1` norm in the `H^1` regime,
    /// the Dirichlet norm otherwise.
    pub fn norm_sq(&self, u: &DiscreteFunction<T>) -> T {
        match self.regime {
            Regime::SubcriticalH1 => u.dirichlet_seminorm_sq() + self.lambda * u.l2_norm_sq(),
            _ => u.dirichlet_seminorm_sq(),
        }
    }

    /// `int F(x, u)`.
    pub fn psi(&self, u: &DiscreteFunction<T>) -> T {
        u.composite_integral(&self.nonlinearity)
    }

    pub fn energy(&self, u: &DiscreteFunction<T>) -> T {
        self.quadratic(u) * lit(0.5) - self.psi(u)
    }

    /// `G'(u)` as a covector (`<G'(u), v> = sum_i g_i v_i`), zero on
    /// Dirichlet nodes.
    pub fn gradient(&self, u: &DiscreteFunction<T>) -> Vec<T> {
        self.check(u);
        let mut g = self.grid.apply_stiffness(u.values());
        let load = u.nonlinear_load(&self.nonlinearity);
        let mass = self.grid.mass();
        for (i, gi) in g.iter_mut().enumerate() {
            *gi += self.lambda * mass[i] * u.values()[i] - load[i];
        }
        self.grid.clear_constrained(&mut g);
        g
    }

    /// Shift of the operator `A + shift M` defining the dual norm.
    fn norm_shift(&self) -> T {
        self.lambda
    }

    /// Nodal residual and its dual norm.
    pub fn gradient_residual(&self, u: &DiscreteFunction<T>) -> Residual<T> {
        let g = self.gradient(u);
        let dual_norm = self.grid.dual_norm(self.norm_shift(), &g);
        let values = g.iter().zip(self.grid.mass()).map(|(&a, &m)| a / m).collect();
        let residual = DiscreteFunction::new(Arc::clone(&self.grid), values).expect("finite residual");
        Residual { residual, dual_norm }
    }

    /// Riesz representative of `G'(u)`: `(A + lambda M)^{-1} g`.
    pub fn sobolev_gradient(&self, u: &DiscreteFunction<T>) -> (DiscreteFunction<T>, T) {
        let g = self.gradient(u);
        let x = self.grid.solve_shifted(self.norm_shift(), &g);
        let norm = x.iter().zip(&g).map(|(&a, &b)| a * b).sum::<T>().max(T::zero()).sqrt();
        let dir = DiscreteFunction::new(Arc::clone(&self.grid), x).expect("finite gradient");
        (dir, norm)
    }

    fn dilation_coefficients(&self, u: &DiscreteFunction<T>) -> Result<(T, T), FunctionalError> {
        if !self.nonlinearity.is_autonomous() {
            return Err(FunctionalError::NotAutonomous);
        }
        if self.dim() < 3 {
            return Err(FunctionalError::InvalidArgument("dilation paths need N >= 3".into()));
        }
        let a = u.dirichlet_seminorm_sq();
        let b = self.psi(u) - self.lambda * lit(0.5) * u.l2_norm_sq();
        Ok((a, b))
    }

    /// `G(u(./t)) = 1/2 t^{N-2} a - t^N b` with `a = |grad u|^2` and
    /// `b = psi(u) - lambda/2 |u|^2`.
    pub fn dilation_path_energy(&self, u: &DiscreteFunction<T>, t: T) -> Result<T, FunctionalError> {
        if t < T::zero() {
            return Err(FunctionalError::InvalidArgument(format!("path parameter must be >= 0, got {t}")));
        }
        let (a, b) = self.dilation_coefficients(u)?;
        let n = from_usize::<T>(self.dim());
        Ok(t.powf(n - lit(2.0)) * a * lit(0.5) - t.powf(n) * b)
    }

    /// Maximum of the dilation path through `u`: `(t_star, value)`.
    pub fn path_max(&self, u: &DiscreteFunction<T>) -> Result<(T, T), FunctionalError> {
        let (a, b) = self.dilation_coefficients(u)?;
        path_max_closed_form(self.dim(), a, b)
    }

    pub fn pohozaev_residual(&self, u: &DiscreteFunction<T>) -> Result<Pohozaev<T>, FunctionalError> {
        if !self.nonlinearity.is_autonomous() {
            return Err(FunctionalError::NotAutonomous);
        }
        let n = from_usize::<T>(self.dim());
        let half = lit::<T>(0.5);
        let a = u.dirichlet_seminorm_sq();
        let l2 = u.l2_norm_sq();
        let psi = self.psi(u);
        let lam = self.lambda;
        let absolute = (n - lit(2.0)) * half * a + n * half * lam * l2 - n * psi;
        let scale = n * half * (a + lam.abs() * l2 + psi.abs());
        let relative = if scale > T::zero() { absolute.abs() / scale } else { T::zero() };
        let (printed_absolute, printed_relative) = match critical_exponent::<T>(self.dim()) {
            Some(crit) => {
                let p = a - crit * (psi - lam * l2);
                let s = a + crit * (psi.abs() + lam.abs() * l2);
                (Some(p), Some(if s > T::zero() { p.abs() / s } else { T::zero() }))
            }
            None => (None, None),
        };
        Ok(Pohozaev { absolute, relative, printed_absolute, printed_relative })
    }

    /// `<G'(u), u> = |grad u|^2 + lambda |u|^2 - int f(x, u) u`.
    pub fn nehari_residual(&self, u: &DiscreteFunction<T>) -> T {
        let load = u.nonlinear_load(&self.nonlinearity);
        let fu: T = load.iter().zip(u.values()).map(|(&a, &b)| a * b).sum();
        self.quadratic(u) - fu
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nonlinearity::{Kind, NonlinearitySpec};
    use proptest::prelude::*;

    fn soliton(x: f64) -> f64 {
        std::f64::consts::SQRT_2 / x.cosh()
    }

    fn line_functional() -> EnergyFunctional<f64, NonlinearitySpec<f64>> {
        let grid = Arc::new(Grid::line(20.0, 0.005).unwrap());
        let nl = NonlinearitySpec::new(1, 2.0, Kind::Power { p: 4.0, scale: 0.25 }).unwrap();
        EnergyFunctional::new(grid, 1.0, nl, Regime::SubcriticalH1).unwrap()
    }

    fn stem_functional() -> EnergyFunctional<f64, NonlinearitySpec<f64>> {
        let grid = Arc::new(
            Grid::radial_geometric(4, 1e-4, 200.0, 2f64.powf(1.0 / 32.0), DomainKind::WholeSpaceTruncated).unwrap(),
        );
        let nl = NonlinearitySpec::new(4, 2.0, Kind::CriticalStem).unwrap();
        EnergyFunctional::new(grid, 0.0, nl, Regime::CriticalD12).unwrap()
    }

    #[test]
    fn regime_consistency() {
        let grid = Arc::new(Grid::line(20.0, 0.05).unwrap());
        let nl = NonlinearitySpec::new(1, 2.0, Kind::Power { p: 4.0, scale: 0.25 }).unwrap();
        assert!(EnergyFunctional::new(Arc::clone(&grid), -1.0, nl.clone(), Regime::SubcriticalH1).is_err());
        assert!(EnergyFunctional::new(Arc::clone(&grid), 0.0, nl.clone(), Regime::CriticalD12).is_err());
        let ball = Arc::new(Grid::radial_uniform(3, 1.0, 500, DomainKind::Ball).unwrap());
        let nl3 = NonlinearitySpec::new(3, 2.0, Kind::Power { p: 4.0, scale: 0.25 }).unwrap();
        assert!(EnergyFunctional::new(Arc::clone(&ball), -5.0, &nl3, Regime::BallDomain).is_ok());
        assert!(EnergyFunctional::new(ball, -10.0, &nl3, Regime::BallDomain).is_err());
    }

    #[test]
    fn soliton_energy_and_residuals() {
        let g = line_functional();
        let u = DiscreteFunction::from_fn(Arc::clone(g.grid()), soliton);
        assert!((g.energy(&u) - 4.0 / 3.0).abs() <= 1e-3);
        assert!(g.gradient_residual(&u).dual_norm <= 1e-3);
        assert!(g.nehari_residual(&u).abs() <= 1e-3);
        assert!(g.nehari_residual(&u.scaled(2.0)) < 0.0);
        let p = g.pohozaev_residual(&u).unwrap();
        assert!(p.relative <= 1e-3, "{p:?}");
        assert!(p.printed_absolute.is_none());
        let zero = DiscreteFunction::zeros(Arc::clone(g.grid()));
        assert_eq!(g.energy(&zero), 0.0);
        assert_eq!(g.gradient_residual(&zero).dual_norm, 0.0);
        assert_eq!(g.nehari_residual(&zero), 0.0);
        let p = g.pohozaev_residual(&zero).unwrap();
        assert_eq!((p.absolute, p.relative), (0.0, 0.0));
    }

    #[test]
    fn nonpositive_nonlinearity_gives_nonnegative_energy() {
        let grid = Arc::new(Grid::line(10.0, 0.05).unwrap());
        let nl = NonlinearitySpec::new(1, 2.0, Kind::Power { p: 4.0, scale: -1.0 }).unwrap();
        let g = EnergyFunctional::new(grid, 1.0, nl, Regime::SubcriticalH1).unwrap();
        for amp in [0.1f64, 1.0, 10.0] {
            let u = DiscreteFunction::from_fn(Arc::clone(g.grid()), |x: f64| amp * (-x * x).exp());
            assert!(g.energy(&u) >= 0.0);
        }
    }

    #[test]
    fn dilation_path_matches_resampled_energy() {
        let g = stem_functional();
        let u = DiscreteFunction::from_fn(Arc::clone(g.grid()), |r| 0.3 / (1.0 + r * r));
        assert_eq!(g.dilation_path_energy(&u, 0.0).unwrap(), 0.0);
        assert!(g.dilation_path_energy(&u, -1.0).is_err());
        for t in [0.5, 0.8, 1.0, 1.5, 2.0] {
            let closed = g.dilation_path_energy(&u, t).unwrap();
            let direct = g.energy(&u.dilate(t).unwrap());
            assert!((closed - direct).abs() <= 1e-2 * closed.abs(), "t={t}: {closed} vs {direct}");
        }
    }

    #[test]
    fn path_max_closed_form_examples() {
        let (t, v) = path_max_closed_form(4, 1.0f64, 1.0).unwrap();
        assert!((t - 0.5).abs() < 1e-15);
        assert!((v - 1.0 / 16.0).abs() < 1e-15);
        let (t2, _) = path_max_closed_form(4, 1.0f64, 2.0).unwrap();
        assert!((t2 * t2 - t * t / 2.0).abs() < 1e-15);
        assert!(matches!(path_max_closed_form(4, 1.0, 0.0), Err(FunctionalError::NoMountain(_))));
    }

    #[test]
    fn negative_b_path_is_monotone() {
        let grid = Arc::new(
            Grid::radial_geometric(3, 1e-3, 50.0, 1.05, DomainKind::WholeSpaceTruncated).unwrap(),
        );
        let nl = NonlinearitySpec::new(3, 2.0, Kind::Power { p: 4.0, scale: -1.0 }).unwrap();
        let g = EnergyFunctional::new(grid, 0.0, nl, Regime::CriticalD12).unwrap();
        let u = DiscreteFunction::from_fn(Arc::clone(g.grid()), |r: f64| (-r * r).exp());
        let mut last = 0.0;
        for k in 0..40 {
            let v = g.dilation_path_energy(&u, k as f64 * 0.1).unwrap();
            assert!(v >= last && v >= 0.0);
            last = v;
        }
        assert!(g.path_max(&u).is_err());
    }

    fn fd_check<N: Nonlinearity<f64>>(g: &EnergyFunctional<f64, N>, u: &DiscreteFunction<f64>, v: &DiscreteFunction<f64>) -> f64 {
        let h = 1e-4;
        let fd = (g.energy(&u.add_scaled(h, v)) - g.energy(&u.add_scaled(-h, v))) / (2.0 * h);
        let grad = g.gradient(u);
        let exact: f64 = grad.iter().zip(v.values()).map(|(a, b)| a * b).sum();
        // Relative to the size of the terms: odd directions at even points
        // make the pairing itself vanish.
        let scale: f64 = grad.iter().zip(v.values()).map(|(a, b)| (a * b).abs()).sum();
        (fd - exact).abs() / scale.max(1e-12)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn gradient_matches_central_differences(
            a in 0.2f64..1.5, w in 0.5f64..3.0, b in -1.0f64..1.0, k in 0.5f64..3.0
        ) {
            let line = line_functional();
            let u = DiscreteFunction::from_fn(Arc::clone(line.grid()), |x| a * (-(x / w).powi(2)).exp());
            let v = DiscreteFunction::from_fn(Arc::clone(line.grid()), |x| (b + (k * x).sin()) * (-(x * x) / 4.0).exp());
            prop_assert!(fd_check(&line, &u, &v) <= 1e-6);

            let stem = stem_functional();
            let u = DiscreteFunction::from_fn(Arc::clone(stem.grid()), |r| a / (1.0 + (r / w).powi(2)));
            let v = DiscreteFunction::from_fn(Arc::clone(stem.grid()), |r| (b + (k * r).cos()) * (-r * r / 9.0).exp());
            prop_assert!(fd_check(&stem, &u, &v) <= 1e-6);

            let ball = Arc::new(Grid::radial_uniform(4, 1.0, 400, DomainKind::Ball).unwrap());
            let nl = NonlinearitySpec::new(4, 2.0, Kind::Sum { terms: vec![
                Kind::CriticalStem, Kind::SBump { lo: 0.5, hi: 2.0, height: 1.0 }] }).unwrap();
            let g = EnergyFunctional::new(ball, -3.0, nl, Regime::BallDomain).unwrap();
            let u = DiscreteFunction::from_fn(Arc::clone(g.grid()), |r| a * (1.0 - r * r) * (1.0 + b * r));
            let v = DiscreteFunction::from_fn(Arc::clone(g.grid()), |r| (1.0 - r * r) * (k * r).cos());
            prop_assert!(fd_check(&g, &u, &v) <= 1e-6);
        }
    }
}
