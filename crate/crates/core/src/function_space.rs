//! Piecewise linear finite elements on one-dimensional meshes: radial
//! profiles in `R^N` (whole space truncated to a ball, or a ball domain) and
//! functions on a truncated line.
//!
//! Every grid carries a symmetric stiffness form `A` (exact for P1 elements
//! with the radial weight `omega_{N-1} r^{N-1}`) and a lumped, hat-exact mass
//! `M`. Norms and integrals are the corresponding discrete quadratures, so
//! `<M^{-1} A u, u>_M = u^T A u` holds exactly. Ball and line functions
//! vanish at the boundary nodes. On a truncated whole space the node `r = R`
//! is Dirichlet for solves only, so a profile sampled there keeps its tail.

use std::fmt::Write as _;
use std::ops::Range;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::nonlinearity::Nonlinearity;
use crate::scalar::{critical_exponent, from_i32, from_usize, lit, unit_sphere_area, Real};

pub const MIN_CELLS: usize = 64;

#[derive(Debug, Error)]
pub enum GridError {
    #[error("invalid grid: {0}")]
    Invalid(String),
    #[error("a grid needs at least {MIN_CELLS} cells, got {0}")]
    TooFewCells(usize),
    #[error("radial grids need N >= 3, got N = {0}")]
    DimensionTooSmall(usize),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("operation requires a {0} grid")]
    WrongGeometry(&'static str),
    #[error("values do not match the grid: {0}")]
    Mismatch(String),
    #[error("profile csv, line {line}: {message}")]
    Csv { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DomainKind {
    /// `R^N` truncated to the ball of radius `R` with a Dirichlet condition.
    WholeSpaceTruncated,
    /// The ball of radius `R` itself.
    Ball,
}

impl DomainKind {
    pub fn label(self) -> &'static str {
        match self {
            DomainKind::WholeSpaceTruncated => "whole_space_truncated",
            DomainKind::Ball => "ball",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "geometry", rename_all = "snake_case")]
pub enum Geometry {
    Radial { dim: usize, domain: DomainKind },
    Line,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "spacing", rename_all = "snake_case")]
pub enum Spacing<T> {
    Uniform,
    /// `r_0 = 0`, `r_k = r_min ratio^{k-1}`.
    Geometric { r_min: T, ratio: T },
    Explicit,
}

/// Gauss–Legendre nodes and weights on `[-1, 1]` (8 points, exact to degree 15).
const GAUSS8: [(f64, f64); 8] = [
    (-0.960_289_856_497_536_2, 0.101_228_536_290_376_26),
    (-0.796_666_477_413_626_7, 0.222_381_034_453_374_48),
    (-0.525_532_409_916_329, 0.313_706_645_877_887_3),
    (-0.183_434_642_495_649_8, 0.362_683_783_378_362),
    (0.183_434_642_495_649_8, 0.362_683_783_378_362),
    (0.525_532_409_916_329, 0.313_706_645_877_887_3),
    (0.796_666_477_413_626_7, 0.222_381_034_453_374_48),
    (0.960_289_856_497_536_2, 0.101_228_536_290_376_26),
];

fn gauss<T: Real>(a: T, b: T, g: impl Fn(T) -> T) -> T {
    let half = (b - a) * lit(0.5);
    let mid = (a + b) * lit(0.5);
    GAUSS8.iter().map(|&(x, w)| lit::<T>(w) * g(mid + half * lit(x))).sum::<T>() * half
}

/// A one-dimensional mesh with its P1 stiffness and lumped mass.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid<T> {
    geometry: Geometry,
    spacing: Spacing<T>,
    nodes: Vec<T>,
    stiffness: Vec<T>,
    mass: Vec<T>,
}

impl<T: Real> Grid<T> {
    fn build(geometry: Geometry, spacing: Spacing<T>, nodes: Vec<T>) -> Result<Self, GridError> {
        if nodes.len() < MIN_CELLS + 1 {
            return Err(GridError::TooFewCells(nodes.len().saturating_sub(1)));
        }
        if nodes.iter().any(|x| !x.is_finite()) {
            return Err(GridError::Invalid("non-finite node".into()));
        }
        if nodes.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(GridError::Invalid("nodes must be strictly increasing".into()));
        }
        let weight: Box<dyn Fn(T) -> T> = match geometry {
            Geometry::Radial { dim, .. } => {
                if dim < 3 {
                    return Err(GridError::DimensionTooSmall(dim));
                }
                if !nodes[0].is_zero() {
                    return Err(GridError::Invalid("radial grids start at r = 0".into()));
                }
                let omega = unit_sphere_area::<T>(dim);
                let p = (dim - 1) as i32;
                Box::new(move |r: T| omega * r.powi(p))
            }
            Geometry::Line => Box::new(|_| T::one()),
        };
        let cells = nodes.len() - 1;
        let mut stiffness = Vec::with_capacity(cells);
        let mut mass = vec![T::zero(); nodes.len()];
        for e in 0..cells {
            let (a, b) = (nodes[e], nodes[e + 1]);
            let h = b - a;
            stiffness.push(gauss(a, b, &weight) / (h * h));
            mass[e] += gauss(a, b, |r| (b - r) / h * weight(r));
            mass[e + 1] += gauss(a, b, |r| (r - a) / h * weight(r));
        }
        Ok(Self { geometry, spacing, nodes, stiffness, mass })
    }

    /// Radial grid with explicit nodes `0 = r_0 < ... < r_M = R`.
    pub fn radial(dim: usize, nodes: Vec<T>, domain: DomainKind) -> Result<Self, GridError> {
        Self::build(Geometry::Radial { dim, domain }, Spacing::Explicit, nodes)
    }

    /// `M` uniform cells on `[0, R]`.
    pub fn radial_uniform(dim: usize, radius: T, cells: usize, domain: DomainKind) -> Result<Self, GridError> {
        if !(radius > T::zero()) {
            return Err(GridError::Invalid("radius must be positive".into()));
        }
        let nodes = (0..=cells).map(|i| radius * from_usize::<T>(i) / from_usize::<T>(cells)).collect();
        Self::build(Geometry::Radial { dim, domain }, Spacing::Uniform, nodes)
    }

    /// Nodes `0, r_1, r_1 q, r_1 q^2, ..., R` with `r_1 <= r_min` lowered
    /// just enough for the last node to land on `R`.
    ///
    /// With `q = gamma^{1/m}` a unitary dilation by `gamma` is an exact shift
    /// by `m` nodes.
    pub fn radial_geometric(dim: usize, r_min: T, radius: T, ratio: T, domain: DomainKind) -> Result<Self, GridError> {
        if !(r_min > T::zero() && radius > r_min) {
            return Err(GridError::Invalid("need 0 < r_min < R".into()));
        }
        if !(ratio > T::one()) {
            return Err(GridError::Invalid("geometric ratio must exceed 1".into()));
        }
        let count = ((radius / r_min).ln() / ratio.ln() - lit(1e-9)).ceil().to_usize().unwrap_or(0);
        if count > 10_000_000 {
            return Err(GridError::Invalid("geometric grid too large".into()));
        }
        let first = radius / ratio.powi(count as i32);
        let mut nodes = Vec::with_capacity(count + 2);
        nodes.push(T::zero());
        for k in 0..count {
            nodes.push(first * ratio.powi(k as i32));
        }
        nodes.push(radius);
        Self::build(Geometry::Radial { dim, domain }, Spacing::Geometric { r_min: first, ratio }, nodes)
    }

    /// Uniform nodes on `[-L, L]` with spacing as close to `h` as divides `2L`.
    pub fn line(half_length: T, h: T) -> Result<Self, GridError> {
        if !(half_length > T::zero() && h > T::zero()) {
            return Err(GridError::Invalid("need L > 0 and h > 0".into()));
        }
        let cells = (lit::<T>(2.0) * half_length / h).round().to_usize().unwrap_or(0);
        let nodes = (0..=cells)
            .map(|i| -half_length + lit::<T>(2.0) * half_length * from_usize::<T>(i) / from_usize::<T>(cells))
            .collect();
        Self::build(Geometry::Line, Spacing::Uniform, nodes)
    }

    pub fn geometry(&self) -> Geometry {
        self.geometry
    }

    pub fn spacing(&self) -> Spacing<T> {
        self.spacing
    }

    /// Space dimension (1 for line grids).
    pub fn dim(&self) -> usize {
        match self.geometry {
            Geometry::Radial { dim, .. } => dim,
            Geometry::Line => 1,
        }
    }

    pub fn is_radial(&self) -> bool {
        matches!(self.geometry, Geometry::Radial { .. })
    }

    pub fn domain(&self) -> Option<DomainKind> {
        match self.geometry {
            Geometry::Radial { domain, .. } => Some(domain),
            Geometry::Line => None,
        }
    }

    pub fn critical_exponent(&self) -> Option<T> {
        critical_exponent(self.dim())
    }

    pub fn nodes(&self) -> &[T] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn cells(&self) -> usize {
        self.nodes.len() - 1
    }

    /// `R` for radial grids, `L` for line grids.
    pub fn extent(&self) -> T {
        *self.nodes.last().unwrap()
    }

    /// Lumped mass (quadrature weight) of each node.
    pub fn mass(&self) -> &[T] {
        &self.mass
    }

    /// Per-cell stiffness coefficients: `u^T A u = sum_e k_e (u_{e+1} - u_e)^2`.
    pub fn stiffness(&self) -> &[T] {
        &self.stiffness
    }

    /// Indices of the nodes not constrained by the Dirichlet condition.
    pub fn free(&self) -> Range<usize> {
        match self.geometry {
            Geometry::Radial { .. } => 0..self.len() - 1,
            Geometry::Line => 1..self.len() - 1,
        }
    }

    /// Smallest cell width.
    pub fn min_spacing(&self) -> T {
        self.nodes.windows(2).map(|w| w[1] - w[0]).fold(T::infinity(), T::min)
    }

    /// `A u` as a covector (zero on constrained nodes).
    pub fn apply_stiffness(&self, u: &[T]) -> Vec<T> {
        let mut out = vec![T::zero(); self.len()];
        for (e, &k) in self.stiffness.iter().enumerate() {
            let d = k * (u[e + 1] - u[e]);
            out[e] -= d;
            out[e + 1] += d;
        }
        self.clear_constrained(&mut out);
        out
    }

    /// Zeroes the nodes where functions must vanish (ball and line boundaries).
    fn enforce_boundary(&self, v: &mut [T]) {
        if self.domain() != Some(DomainKind::WholeSpaceTruncated) {
            self.clear_constrained(v);
        }
    }

    /// Zeroes every node outside [`Grid::free`].
    pub fn clear_constrained(&self, v: &mut [T]) {
        let free = self.free();
        for (i, x) in v.iter_mut().enumerate() {
            if !free.contains(&i) {
                *x = T::zero();
            }
        }
    }

    /// `u^T A u`.
    pub fn stiffness_form(&self, u: &[T], v: &[T]) -> T {
        self.stiffness
            .iter()
            .enumerate()
            .map(|(e, &k)| k * (u[e + 1] - u[e]) * (v[e + 1] - v[e]))
            .sum()
    }

    /// Solves `(A + shift M) x = rhs` on the free nodes (`x = 0` elsewhere).
    pub fn solve_shifted(&self, shift: T, rhs: &[T]) -> Vec<T> {
        let free = self.free();
        let n = free.len();
        let mut lower = vec![T::zero(); n];
        let mut diag = vec![T::zero(); n];
        let mut upper = vec![T::zero(); n];
        let mut b = vec![T::zero(); n];
        for (k, i) in free.clone().enumerate() {
            diag[k] = shift * self.mass[i];
            if i > 0 {
                diag[k] += self.stiffness[i - 1];
                lower[k] = -self.stiffness[i - 1];
            }
            if i < self.cells() {
                diag[k] += self.stiffness[i];
                upper[k] = -self.stiffness[i];
            }
            b[k] = rhs[i];
        }
        let x = solve_tridiagonal(&lower, &diag, &upper, &b);
        let mut out = vec![T::zero(); self.len()];
        for (k, i) in free.enumerate() {
            out[i] = x[k];
        }
        out
    }

    /// `sqrt(g^T (A + shift M)^{-1} g)` for a covector `g`.
    pub fn dual_norm(&self, shift: T, g: &[T]) -> T {
        let x = self.solve_shifted(shift, g);
        let free = self.free();
        free.map(|i| x[i] * g[i]).sum::<T>().max(T::zero()).sqrt()
    }

    /// Smallest eigenvalue of `A v = lambda M v` (inverse iteration).
    pub fn principal_eigenvalue(&self) -> T {
        let free = self.free();
        let mut v: Vec<T> = (0..self.len())
            .map(|i| {
                if free.contains(&i) {
                    let x = self.nodes[i] / self.extent();
                    T::one() - x * x
                } else {
                    T::zero()
                }
            })
            .collect();
        let mut value = T::zero();
        for _ in 0..500 {
            let rhs: Vec<T> = v.iter().zip(&self.mass).map(|(&a, &m)| a * m).collect();
            let mut w = self.solve_shifted(T::zero(), &rhs);
            let norm = w.iter().zip(&self.mass).map(|(&a, &m)| a * a * m).sum::<T>().sqrt();
            for x in &mut w {
                *x /= norm;
            }
            let next = self.stiffness_form(&w, &w);
            let done = (next - value).abs() <= lit::<T>(1e-13) * next.abs();
            value = next;
            v = w;
            if done {
                break;
            }
        }
        value
    }

    fn header(&self) -> String {
        let spacing = match self.spacing {
            Spacing::Uniform => "uniform".to_string(),
            Spacing::Geometric { r_min, ratio } => format!("geometric:{r_min}:{ratio}"),
            Spacing::Explicit => "explicit".to_string(),
        };
        match self.geometry {
            Geometry::Radial { dim, domain } => format!(
                "# mpcc-profile geometry=radial N={dim} R={} M={} spacing={spacing} domain={}",
                self.extent(),
                self.cells(),
                domain.label()
            ),
            Geometry::Line => {
                format!("# mpcc-profile geometry=line N=1 L={} M={} spacing={spacing}", self.extent(), self.cells())
            }
        }
    }
}

/// Thomas algorithm for a tridiagonal system (`lower[0]`, `upper[n-1]` unused).
pub fn solve_tridiagonal<T: Real>(lower: &[T], diag: &[T], upper: &[T], rhs: &[T]) -> Vec<T> {
    let n = diag.len();
    let mut c = vec![T::zero(); n];
    let mut d = vec![T::zero(); n];
    let mut denom = diag[0];
    c[0] = upper[0] / denom;
    d[0] = rhs[0] / denom;
    for i in 1..n {
        denom = diag[i] - lower[i] * c[i - 1];
        c[i] = upper[i] / denom;
        d[i] = (rhs[i] - lower[i] * d[i - 1]) / denom;
    }
    for i in (0..n - 1).rev() {
        let next = d[i + 1];
        d[i] -= c[i] * next;
    }
    d
}

/// Shape-preserving piecewise cubic Hermite interpolant (Fritsch–Carlson).
#[derive(Debug, Clone)]
pub struct MonotoneCubic<T> {
    xs: Vec<T>,
    ys: Vec<T>,
    slopes: Vec<T>,
}

impl<T: Real> MonotoneCubic<T> {
    /// `even_start` pins the first slope to zero (a radial profile at `r = 0`).
    pub fn new(xs: &[T], ys: &[T], even_start: bool) -> Self {
        let n = xs.len();
        assert!(n >= 2 && ys.len() == n);
        let h: Vec<T> = xs.windows(2).map(|w| w[1] - w[0]).collect();
        let delta: Vec<T> = (0..n - 1).map(|k| (ys[k + 1] - ys[k]) / h[k]).collect();
        let mut slopes = vec![T::zero(); n];
        for k in 1..n - 1 {
            if delta[k - 1] * delta[k] > T::zero() {
                let w1 = lit::<T>(2.0) * h[k] + h[k - 1];
                let w2 = h[k] + lit::<T>(2.0) * h[k - 1];
                slopes[k] = (w1 + w2) / (w1 / delta[k - 1] + w2 / delta[k]);
            }
        }
        let end = |h0: T, h1: T, d0: T, d1: T| -> T {
            let s = ((lit::<T>(2.0) * h0 + h1) * d0 - h0 * d1) / (h0 + h1);
            if s * d0 <= T::zero() {
                T::zero()
            } else if d0 * d1 <= T::zero() && s.abs() > lit::<T>(3.0) * d0.abs() {
                lit::<T>(3.0) * d0
            } else {
                s
            }
        };
        if n > 2 {
            slopes[0] = if even_start { T::zero() } else { end(h[0], h[1], delta[0], delta[1]) };
            slopes[n - 1] = end(h[n - 2], h[n - 3], delta[n - 2], delta[n - 3]);
        } else {
            slopes[0] = if even_start { T::zero() } else { delta[0] };
            slopes[1] = delta[0];
        }
        Self { xs: xs.to_vec(), ys: ys.to_vec(), slopes }
    }

    /// Value at `x`; `None` outside the node range.
    pub fn eval(&self, x: T) -> Option<T> {
        let n = self.xs.len();
        if !(x >= self.xs[0] && x <= self.xs[n - 1]) {
            return None;
        }
        let k = self.xs.partition_point(|&v| v <= x).clamp(1, n - 1) - 1;
        let h = self.xs[k + 1] - self.xs[k];
        let t = (x - self.xs[k]) / h;
        let t2 = t * t;
        let t3 = t2 * t;
        let two = lit::<T>(2.0);
        let three = lit::<T>(3.0);
        let h00 = two * t3 - three * t2 + T::one();
        let h10 = t3 - two * t2 + t;
        let h01 = three * t2 - two * t3;
        let h11 = t3 - t2;
        Some(h00 * self.ys[k] + h10 * h * self.slopes[k] + h01 * self.ys[k + 1] + h11 * h * self.slopes[k + 1])
    }
}

/// Nodal values of a P1 function on a shared grid. Immutable: every
/// operation returns a new function.
#[derive(Debug, Clone)]
pub struct DiscreteFunction<T> {
    grid: Arc<Grid<T>>,
    values: Vec<T>,
}

impl<T: Real> PartialEq for DiscreteFunction<T> {
    fn eq(&self, other: &Self) -> bool {
        (Arc::ptr_eq(&self.grid, &other.grid) || self.grid == other.grid) && self.values == other.values
    }
}

impl<T: Real> DiscreteFunction<T> {
    /// Wraps nodal values; ball and line boundary nodes are set to zero.
    pub fn new(grid: Arc<Grid<T>>, mut values: Vec<T>) -> Result<Self, GridError> {
        if values.len() != grid.len() {
            return Err(GridError::Mismatch(format!("{} values for {} nodes", values.len(), grid.len())));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(GridError::Mismatch("non-finite value".into()));
        }
        grid.enforce_boundary(&mut values);
        Ok(Self { grid, values })
    }

    pub fn zeros(grid: Arc<Grid<T>>) -> Self {
        let n = grid.len();
        Self { grid, values: vec![T::zero(); n] }
    }

    /// Samples `g` at the nodes (radius or coordinate).
    pub fn from_fn(grid: Arc<Grid<T>>, g: impl Fn(T) -> T) -> Self {
        let mut values: Vec<T> = grid.nodes().iter().map(|&x| g(x)).collect();
        grid.enforce_boundary(&mut values);
        for v in &mut values {
            if !v.is_finite() {
                *v = T::zero();
            }
        }
        Self { grid, values }
    }

    pub fn grid(&self) -> &Arc<Grid<T>> {
        &self.grid
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn into_values(self) -> Vec<T> {
        self.values
    }

    fn with_values(&self, mut values: Vec<T>) -> Self {
        self.grid.enforce_boundary(&mut values);
        Self { grid: Arc::clone(&self.grid), values }
    }

    fn check_same_grid(&self, other: &Self) {
        assert!(
            Arc::ptr_eq(&self.grid, &other.grid) || *self.grid == *other.grid,
            "functions live on different grids"
        );
    }

    pub fn map(&self, g: impl Fn(T) -> T) -> Self {
        self.with_values(self.values.iter().map(|&v| g(v)).collect())
    }

    pub fn scaled(&self, c: T) -> Self {
        self.map(|v| c * v)
    }

    /// `self + c * other`.
    pub fn add_scaled(&self, c: T, other: &Self) -> Self {
        self.check_same_grid(other);
        self.with_values(self.values.iter().zip(&other.values).map(|(&a, &b)| a + c * b).collect())
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.add_scaled(-T::one(), other)
    }

    pub fn add(&self, other: &Self) -> Self {
        self.add_scaled(T::one(), other)
    }

    pub fn sup_norm(&self) -> T {
        self.values.iter().fold(T::zero(), |m, v| m.max(v.abs()))
    }

    /// `int |grad u|^2`.
    pub fn dirichlet_seminorm_sq(&self) -> T {
        self.grid.stiffness_form(&self.values, &self.values)
    }

    /// `int grad u . grad v`.
    pub fn dirichlet_inner(&self, other: &Self) -> T {
        self.check_same_grid(other);
        self.grid.stiffness_form(&self.values, &other.values)
    }

    pub fn l2_inner(&self, other: &Self) -> T {
        self.check_same_grid(other);
        self.values.iter().zip(&other.values).zip(&self.grid.mass).map(|((&a, &b), &m)| a * b * m).sum()
    }

    pub fn l2_norm_sq(&self) -> T {
        self.l2_inner(self)
    }

    /// `int |u|^p`.
    pub fn lp_norm_pow(&self, p: T) -> T {
        self.values.iter().zip(&self.grid.mass).map(|(&a, &m)| a.abs().powf(p) * m).sum()
    }

    /// `int |grad u|^2 + lambda |u|^2`, `lambda > 0`.
    pub fn h1_norm_sq(&self, lambda: T) -> Result<T, GridError> {
        if !(lambda > T::zero()) {
            return Err(GridError::InvalidArgument(format!("H1 norm needs lambda > 0, got {lambda}")));
        }
        Ok(self.dirichlet_seminorm_sq() + lambda * self.l2_norm_sq())
    }

    /// `int F(x, u(x)) dx`.
    pub fn composite_integral<N: Nonlinearity<T> + ?Sized>(&self, nl: &N) -> T {
        self.values
            .iter()
            .zip(&self.grid.nodes)
            .zip(&self.grid.mass)
            .map(|((&u, &x), &m)| m * nl.primitive(x, u))
            .sum()
    }

    /// `int f(x, u(x)) v(x) dx` in covector form: entry `i` is `m_i f(x_i, u_i)`.
    pub fn nonlinear_load<N: Nonlinearity<T> + ?Sized>(&self, nl: &N) -> Vec<T> {
        let mut out: Vec<T> = self
            .values
            .iter()
            .zip(&self.grid.nodes)
            .zip(&self.grid.mass)
            .map(|((&u, &x), &m)| m * nl.derivative(x, u))
            .collect();
        self.grid.clear_constrained(&mut out);
        out
    }

    /// Interpolated value at a radius or coordinate, zero outside the grid.
    pub fn value_at(&self, x: T) -> T {
        self.interpolant().eval(x).unwrap_or(T::zero())
    }

    fn interpolant(&self) -> MonotoneCubic<T> {
        MonotoneCubic::new(&self.grid.nodes, &self.values, self.grid.is_radial())
    }

    fn resample(&self, source: impl Fn(T) -> T, amplitude: T) -> Self {
        let interp = self.interpolant();
        let lo = self.grid.nodes[0];
        let hi = self.grid.extent();
        let tol = lit::<T>(1e-12) * hi.abs().max(T::one());
        let values = self
            .grid
            .nodes
            .iter()
            .map(|&x| {
                let y = source(x);
                // Snap tiny rounding overshoots back into the node range.
                let y = if y > hi && y - hi <= tol {
                    hi
                } else if y < lo && lo - y <= tol {
                    lo
                } else {
                    y
                };
                let v = if y > hi { self.outer_tail(y) } else { interp.eval(y).unwrap_or(T::zero()) };
                amplitude * v
            })
            .collect();
        self.with_values(values)
    }

    /// Continuation beyond `R`: the harmonic tail `u(R) (R/r)^{N-2}` on
    /// whole-space radial grids with `N >= 3`, zero otherwise.
    fn outer_tail(&self, r: T) -> T {
        match self.grid.geometry {
            Geometry::Radial { dim, domain: DomainKind::WholeSpaceTruncated } if dim >= 3 => {
                let big = self.grid.extent();
                let last = *self.values.last().expect("nonempty grid");
                last * (big / r).powi(dim as i32 - 2)
            }
            _ => T::zero(),
        }
    }

    /// `u(. / t)`, `t > 0`.
    pub fn dilate(&self, t: T) -> Result<Self, GridError> {
        if !(t > T::zero()) {
            return Err(GridError::InvalidArgument(format!("dilation factor must be positive, got {t}")));
        }
        if t == T::one() {
            return Ok(self.clone());
        }
        Ok(self.resample(|x| x / t, T::one()))
    }

    /// `gamma^{(N-2)j/2} u(gamma^j .)`, norm preserving in the Dirichlet seminorm.
    pub fn unitary_dilate(&self, gamma: T, j: i32) -> Self {
        if j == 0 {
            return self.clone();
        }
        let n = from_usize::<T>(self.grid.dim());
        let jj = from_i32::<T>(j);
        let amplitude = gamma.powf((n - lit(2.0)) * lit(0.5) * jj);
        let scale = gamma.powi(j);
        if let Some(shift) = self.exact_shift(scale) {
            // Geometric nodes r_i = r_min q^{i-1}: u(scale r_i) = u(r_{i+shift}).
            // Images below r_min fall in the first cell and take the value at 0.
            let len = self.values.len() as isize;
            let values = (0..len)
                .map(|i| {
                    let src = if i == 0 { 0 } else { (i + shift).max(0) };
                    if src < len {
                        amplitude * self.values[src as usize]
                    } else {
                        amplitude * self.outer_tail(scale * self.grid.nodes[i as usize])
                    }
                })
                .collect();
            return self.with_values(values);
        }
        self.resample(|x| scale * x, amplitude)
    }

    /// Index shift `k` with `scale * r_i = r_{i+k}` on geometric grids.
    fn exact_shift(&self, scale: T) -> Option<isize> {
        let Spacing::Geometric { ratio, .. } = self.grid.spacing else {
            return None;
        };
        let k = scale.ln() / ratio.ln();
        let rounded = k.round();
        if (k - rounded).abs() > lit(1e-6) {
            return None;
        }
        rounded.to_isize()
    }

    /// `u(. - y)` on a line grid; zero padded.
    pub fn translate(&self, y: T) -> Result<Self, GridError> {
        if self.grid.is_radial() {
            return Err(GridError::WrongGeometry("line"));
        }
        let h = self.grid.nodes[1] - self.grid.nodes[0];
        let steps = y / h;
        if (steps - steps.round()).abs() < lit(1e-9) {
            let k = steps.round().to_isize().unwrap_or(0);
            let len = self.values.len() as isize;
            let values = (0..len)
                .map(|i| {
                    let src = i - k;
                    if (0..len).contains(&src) {
                        self.values[src as usize]
                    } else {
                        T::zero()
                    }
                })
                .collect();
            return Ok(self.with_values(values));
        }
        Ok(self.resample(|x| x - y, T::one()))
    }

    /// Nodal `(-Delta + lambda) u`, i.e. `M^{-1} A u + lambda u`.
    pub fn apply_operator(&self, lambda: T) -> Self {
        let mut au = vec![T::zero(); self.values.len()];
        for (e, &k) in self.grid.stiffness.iter().enumerate() {
            let d = k * (self.values[e + 1] - self.values[e]);
            au[e] -= d;
            au[e + 1] += d;
        }
        let values = au
            .iter()
            .zip(&self.grid.mass)
            .zip(&self.values)
            .map(|((&a, &m), &u)| a / m + lambda * u)
            .collect();
        self.with_values(values)
    }

    /// Serializes as a header line plus `node,value` rows.
    pub fn to_csv(&self) -> String {
        let mut out = self.grid.header();
        out.push_str("\nnode,value\n");
        for (x, v) in self.grid.nodes.iter().zip(&self.values) {
            let _ = writeln!(out, "{x},{v}");
        }
        out
    }

    pub fn write_csv(&self, path: &std::path::Path) -> Result<(), GridError> {
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }

    /// Parses [`DiscreteFunction::to_csv`] output, rebuilding the grid from
    /// the listed nodes.
    pub fn from_csv(text: &str) -> Result<Self, GridError> {
        let mut lines = text.lines().enumerate();
        let csv_err = |line: usize, message: String| GridError::Csv { line: line + 1, message };
        let (i, header) = lines.next().ok_or_else(|| csv_err(0, "empty file".into()))?;
        let fields = header
            .strip_prefix("# mpcc-profile")
            .ok_or_else(|| csv_err(i, "missing `# mpcc-profile` header".into()))?;
        let mut geometry = None;
        let mut dim = None;
        let mut domain = DomainKind::WholeSpaceTruncated;
        let mut spacing = Spacing::Explicit;
        for field in fields.split_whitespace() {
            let (key, value) = field.split_once('=').ok_or_else(|| csv_err(i, format!("malformed field `{field}`")))?;
            match key {
                "geometry" => geometry = Some(value.to_string()),
                "N" => dim = Some(value.parse::<usize>().map_err(|e| csv_err(i, format!("N: {e}")))?),
                "domain" => {
                    domain = match value {
                        "ball" => DomainKind::Ball,
                        "whole_space_truncated" => DomainKind::WholeSpaceTruncated,
                        other => return Err(csv_err(i, format!("unknown domain `{other}`"))),
                    }
                }
                "spacing" => {
                    let mut parts = value.split(':');
                    spacing = match parts.next() {
                        Some("uniform") => Spacing::Uniform,
                        Some("geometric") => {
                            let mut num = || -> Result<T, GridError> {
                                let p = parts.next().ok_or_else(|| csv_err(i, "geometric spacing needs r_min:ratio".into()))?;
                                let v: f64 = p.parse().map_err(|e| csv_err(i, format!("spacing: {e}")))?;
                                Ok(lit(v))
                            };
                            let r_min = num()?;
                            let ratio = num()?;
                            Spacing::Geometric { r_min, ratio }
                        }
                        _ => Spacing::Explicit,
                    };
                }
                _ => {}
            }
        }
        let (_, columns) = lines.next().ok_or_else(|| csv_err(1, "missing column header".into()))?;
        if columns.trim() != "node,value" {
            return Err(csv_err(1, format!("expected `node,value`, got `{columns}`")));
        }
        let mut nodes = Vec::new();
        let mut values = Vec::new();
        for (i, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            let (a, b) = line.split_once(',').ok_or_else(|| csv_err(i, "expected two columns".into()))?;
            let a: f64 = a.trim().parse().map_err(|e| csv_err(i, format!("node: {e}")))?;
            let b: f64 = b.trim().parse().map_err(|e| csv_err(i, format!("value: {e}")))?;
            nodes.push(lit::<T>(a));
            values.push(lit::<T>(b));
        }
        let geometry = match geometry.as_deref() {
            Some("line") => Geometry::Line,
            Some("radial") | None => {
                Geometry::Radial { dim: dim.ok_or_else(|| csv_err(0, "radial profile needs N".into()))?, domain }
            }
            Some(other) => return Err(csv_err(0, format!("unknown geometry `{other}`"))),
        };
        let grid = Grid::build(geometry, spacing, nodes)?;
        DiscreteFunction::new(Arc::new(grid), values)
    }

    pub fn read_csv(path: &std::path::Path) -> Result<Self, GridError> {
        Self::from_csv(&std::fs::read_to_string(path)?)
    }
}
