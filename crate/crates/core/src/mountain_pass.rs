//! Mountain-pass levels from deformed paths, a radial shooting oracle for
//! ground states, and the comparison of a level with its asymptotic ones.

use std::collections::BTreeMap;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::function_space::{DiscreteFunction, GridError, MonotoneCubic};
use crate::functional::{EnergyFunctional, FunctionalError, Regime};
use crate::nonlinearity::Nonlinearity;
use crate::scalar::{from_usize, lit, to_f64, unit_sphere_area, Real};
use crate::sphere_maximizer::STRICT_MARGIN;

/// Fewest segments a path may have.
pub const MIN_SEGMENTS: usize = 16;
/// Largest displacement of a node per unit step, relative to its norm.
const MAX_MOVE: f64 = 0.1;
/// Fresh paths through the current top tried before a descent counts as
/// stalled.
const MAX_RESTARTS: usize = 5;
/// Segments of a freshly built path.
pub const DEFAULT_SEGMENTS: usize = 24;

#[derive(Debug, Error)]
pub enum MountainError {
    #[error("no mountain geometry: {0}")]
    NoMountain(String),
    #[error("invalid path: {0}")]
    InvalidPath(String),
    #[error("shooting bracket [{lo}, {hi}] does not straddle the decay/sign-change dichotomy")]
    Bracket { lo: f64, hi: f64 },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error(transparent)]
    Functional(#[from] FunctionalError),
    #[error(transparent)]
    Grid(#[from] GridError),
}

/// Polygonal path `phi_0 = 0, ..., phi_K` with `G(phi_K) < 0`.
#[derive(Debug, Clone)]
pub struct PathPolyline<T> {
    nodes: Vec<DiscreteFunction<T>>,
    params: Vec<T>,
}

impl<T: Real> PathPolyline<T> {
    pub fn new<N: Nonlinearity<T>>(
        functional: &EnergyFunctional<T, N>,
        nodes: Vec<DiscreteFunction<T>>,
        params: Vec<T>,
    ) -> Result<Self, MountainError> {
        let bad = |m: &str| Err(MountainError::InvalidPath(m.to_string()));
        if nodes.len() < MIN_SEGMENTS + 1 {
            return bad("a path needs at least 16 segments");
        }
        if params.len() != nodes.len() {
            return bad("one parameter per node");
        }
        if !params[0].is_zero() || params.windows(2).any(|w| !(w[1] > w[0])) {
            return bad("parameters must start at 0 and increase");
        }
        if nodes.iter().any(|u| u.grid().len() != functional.grid().len()) {
            return bad("nodes must live on the functional's grid");
        }
        if !nodes[0].sup_norm().is_zero() {
            return bad("the first node must be 0");
        }
        let end = functional.energy(nodes.last().expect("nonempty"));
        if !(end < T::zero()) {
            return bad("the endpoint energy must be negative");
        }
        Ok(Self { nodes, params })
    }

    pub fn nodes(&self) -> &[DiscreteFunction<T>] {
        &self.nodes
    }
    pub fn params(&self) -> &[T] {
        &self.params
    }
    pub fn segments(&self) -> usize {
        self.nodes.len() - 1
    }

    pub fn energies<N: Nonlinearity<T>>(&self, functional: &EnergyFunctional<T, N>) -> Vec<T> {
        self.nodes.par_iter().map(|u| functional.energy(u)).collect()
    }

    /// Largest energy along the polygon and where it is attained.
    pub fn max_energy<N: Nonlinearity<T>>(&self, functional: &EnergyFunctional<T, N>) -> (T, DiscreteFunction<T>) {
        let energies = self.energies(functional);
        let all: Vec<usize> = (0..self.nodes.len() - 1).collect();
        let t = locate_top(functional, &self.nodes, &energies, &all);
        (t.energy, lerp(&self.nodes[t.seg], &self.nodes[t.seg + 1], t.s))
    }
}

fn argmax<T: Real>(v: &[T]) -> usize {
    let mut k = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[k] {
            k = i;
        }
    }
    k
}

fn lerp<T: Real>(a: &DiscreteFunction<T>, b: &DiscreteFunction<T>, s: T) -> DiscreteFunction<T> {
    a.scaled(T::one() - s).add_scaled(s, b)
}

/// Golden-section maximization of `G((1 - s) a + s b)` over `s` in `[0, 1]`.
fn segment_max<T: Real, N: Nonlinearity<T>>(
    functional: &EnergyFunctional<T, N>,
    a: &DiscreteFunction<T>,
    b: &DiscreteFunction<T>,
) -> (T, T) {
    let ratio = lit::<T>(0.618_033_988_749_894_8);
    let (mut lo, mut hi) = (T::zero(), T::one());
    let mut x1 = hi - ratio * (hi - lo);
    let mut x2 = lo + ratio * (hi - lo);
    let mut f1 = functional.energy(&lerp(a, b, x1));
    let mut f2 = functional.energy(&lerp(a, b, x2));
    for _ in 0..28 {
        if f1 < f2 {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + ratio * (hi - lo);
            f2 = functional.energy(&lerp(a, b, x2));
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - ratio * (hi - lo);
            f1 = functional.energy(&lerp(a, b, x1));
        }
    }
    if f1 > f2 {
        (x1, f1)
    } else {
        (x2, f2)
    }
}

/// Path from 0 through `seed`: the dilation path `seed(x / t)` for an
/// autonomous zero mass problem, the ray `t seed` otherwise.
pub fn initial_path<T: Real, N: Nonlinearity<T>>(
    functional: &EnergyFunctional<T, N>,
    seed: &DiscreteFunction<T>,
) -> Result<PathPolyline<T>, MountainError> {
    initial_path_with(functional, seed, DEFAULT_SEGMENTS)
}

pub fn initial_path_with<T: Real, N: Nonlinearity<T>>(
    functional: &EnergyFunctional<T, N>,
    seed: &DiscreteFunction<T>,
    segments: usize,
) -> Result<PathPolyline<T>, MountainError> {
    if segments < MIN_SEGMENTS {
        return Err(MountainError::InvalidArgument(format!("need at least {MIN_SEGMENTS} segments")));
    }
    if seed.grid().len() != functional.grid().len() {
        return Err(MountainError::InvalidArgument("seed does not live on the functional's grid".into()));
    }
    let dilation =
        functional.regime() == Regime::CriticalD12 && functional.nonlinearity().is_autonomous() && functional.dim() >= 3;
    let point = |t: T| -> Result<DiscreteFunction<T>, MountainError> {
        if dilation {
            Ok(seed.dilate(t)?)
        } else {
            Ok(seed.scaled(t))
        }
    };
    let mut end = T::one();
    if dilation {
        let a = seed.dirichlet_seminorm_sq();
        let b = functional.psi(seed);
        if !(b > T::zero()) {
            return Err(MountainError::NoMountain(format!("psi(seed) = {b:e} is not positive")));
        }
        // Zero of 1/2 t^{N-2} a - t^N b, pushed a little past it.
        end = (a / (lit::<T>(2.0) * b)).sqrt() * lit(1.25);
    }
    let mut tries = 0;
    while !(functional.energy(&point(end)?) < T::zero()) {
        tries += 1;
        if tries > 60 {
            return Err(MountainError::NoMountain("the energy stays nonnegative along the seed's path".into()));
        }
        end *= if dilation { lit(1.5) } else { lit(2.0) };
    }
    let mut nodes = Vec::with_capacity(segments + 1);
    let mut params = Vec::with_capacity(segments + 1);
    nodes.push(DiscreteFunction::zeros(Arc::clone(functional.grid())));
    params.push(T::zero());
    for k in 1..=segments {
        let t = end * from_usize::<T>(k) / from_usize::<T>(segments);
        nodes.push(point(t)?);
        params.push(t);
    }
    PathPolyline::new(functional, nodes, params)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DescentOptions<T> {
    /// Stop when the top node's dual gradient norm falls below `tol_g` times
    /// its norm.
    pub tol_g: T,
    pub max_outer: usize,
    /// Initial step along the Sobolev gradient; adapted during the run.
    pub step: T,
    /// Fraction of the energy range below the top that moves each step.
    pub window: T,
    pub max_nodes: usize,
}

impl<T: Real> Default for DescentOptions<T> {
    fn default() -> Self {
        Self { tol_g: lit(1e-3), max_outer: 5000, step: lit(0.5), window: lit(0.3), max_nodes: 96 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DescentStatus {
    Converged,
    MaxIterations,
    /// No step length decreases the path maximum any more.
    Stalled,
    /// The path maximum rose for ten consecutive steps.
    Divergent,
}

#[derive(Debug, Clone)]
pub struct DescentResult<T> {
    pub c_est: T,
    pub candidate: DiscreteFunction<T>,
    /// Dual gradient norm of the candidate relative to its norm.
    pub grad_norm: T,
    pub iters: usize,
    pub status: DescentStatus,
    pub path: PathPolyline<T>,
    /// Path maximum after every outer step.
    pub history: Vec<T>,
    /// Indices into `history` right after a fresh path replaced a stalled
    /// one; the maximum may rise there.
    pub restarts: Vec<usize>,
}

/// `B`-norm squared of `u`, `B = A + lambda M`.
fn b_form<T: Real, N: Nonlinearity<T>>(functional: &EnergyFunctional<T, N>, u: &[T]) -> T {
    let grid = functional.grid();
    let mut q = grid.stiffness_form(u, u);
    let lam = functional.lambda();
    if !lam.is_zero() {
        q += lam * u.iter().zip(grid.mass()).map(|(&a, &m)| a * a * m).sum::<T>();
    }
    q
}

fn diff<T: Real>(a: &DiscreteFunction<T>, b: &DiscreteFunction<T>) -> Vec<T> {
    a.values().iter().zip(b.values()).map(|(&x, &y)| x - y).collect()
}

/// Descent direction at interior node `i`: the Sobolev gradient with its
/// component along the local path tangent removed.
fn direction<T: Real, N: Nonlinearity<T>>(
    functional: &EnergyFunctional<T, N>,
    nodes: &[DiscreteFunction<T>],
    i: usize,
) -> Vec<T> {
    let grid = functional.grid();
    let g = functional.gradient(&nodes[i]);
    let mut d = grid.solve_shifted(functional.lambda(), &g);
    let tangent = diff(&nodes[i + 1], &nodes[i - 1]);
    let tt = b_form(functional, &tangent);
    if tt > T::zero() {
        let c = g.iter().zip(&tangent).map(|(&a, &b)| a * b).sum::<T>() / tt;
        for (di, &ti) in d.iter_mut().zip(&tangent) {
            *di -= c * ti;
        }
    }
    d
}

/// A point of the polygon: `s` along segment `seg` (`s = 0` is node `seg`).
#[derive(Debug, Clone, Copy)]
struct Top<T> {
    seg: usize,
    s: T,
    energy: T,
}

/// Highest point of the polygon: nodes and eighth points of the segments in
/// `segs`, then golden-section refinement of every segment that comes within
/// 1% of the best sample.
fn locate_top<T: Real, N: Nonlinearity<T>>(
    functional: &EnergyFunctional<T, N>,
    nodes: &[DiscreteFunction<T>],
    energies: &[T],
    segs: &[usize],
) -> Top<T> {
    let k = argmax(energies);
    let eighths: Vec<T> = (1..8).map(|i| from_usize::<T>(i) / lit(8.0)).collect();
    let mut candidates: Vec<Top<T>> = segs
        .par_iter()
        .map(|&seg| {
            let mut b = Top { seg, s: T::zero(), energy: T::neg_infinity() };
            for &q in &eighths {
                let e = functional.energy(&lerp(&nodes[seg], &nodes[seg + 1], q));
                if e > b.energy {
                    b = Top { seg, s: q, energy: e };
                }
            }
            b
        })
        .collect();
    // Segments at the top node join the refinement even if their samples
    // are low.
    for seg in [k.checked_sub(1), (k + 1 < nodes.len()).then_some(k)].into_iter().flatten() {
        if !candidates.iter().any(|c| c.seg == seg) {
            candidates.push(Top { seg, s: T::zero(), energy: T::neg_infinity() });
        }
    }
    let mut best = Top { seg: k, s: T::zero(), energy: energies[k] };
    let sampled = candidates.iter().map(|c| c.energy).fold(best.energy, T::max);
    // A segment sampled close to the top may still hide a point above it.
    let near = sampled - lit::<T>(0.01) * sampled.abs();
    let refined: Vec<Top<T>> = candidates
        .par_iter()
        .filter(|c| c.energy.max(energies[c.seg]).max(energies[c.seg + 1]) >= near)
        .map(|c| {
            let (s, e) = segment_max(functional, &nodes[c.seg], &nodes[c.seg + 1]);
            if e >= c.energy {
                Top { seg: c.seg, s, energy: e }
            } else {
                *c
            }
        })
        .collect();
    for t in candidates.iter().chain(&refined) {
        if t.energy > best.energy {
            best = *t;
        }
    }
    best
}

/// Makes the top a node. Inserting it leaves the polygon unchanged; close
/// to an existing node (or at the node budget) that node is moved onto it
/// instead, provided its two new segments stay below the top.
fn install_top<T: Real, N: Nonlinearity<T>>(
    functional: &EnergyFunctional<T, N>,
    nodes: &mut Vec<DiscreteFunction<T>>,
    energies: &mut Vec<T>,
    top: Top<T>,
    max_nodes: usize,
) -> usize {
    if top.s.is_zero() {
        return top.seg;
    }
    let p = lerp(&nodes[top.seg], &nodes[top.seg + 1], top.s);
    let near = top.s < lit(0.05) || top.s > lit(0.95);
    if near || nodes.len() >= max_nodes {
        let k = if top.s < lit(0.5) { top.seg } else { top.seg + 1 };
        if k > 0 && k + 1 < nodes.len() {
            let bound = top.energy + lit::<T>(1e-12) * top.energy.abs();
            let safe = segment_max(functional, &nodes[k - 1], &p).1 <= bound
                && segment_max(functional, &p, &nodes[k + 1]).1 <= bound;
            if safe {
                nodes[k] = p;
                energies[k] = top.energy;
                return k;
            }
        }
    }
    nodes.insert(top.seg + 1, p);
    energies.insert(top.seg + 1, top.energy);
    top.seg + 1
}

/// Lowers the path maximum by moving every node in the top energy window
/// along its (tangent-projected) Sobolev gradient.
pub fn mp_level_descent<T: Real, N: Nonlinearity<T>>(
    functional: &EnergyFunctional<T, N>,
    path: &PathPolyline<T>,
    opts: &DescentOptions<T>,
) -> Result<DescentResult<T>, MountainError> {
    if !(opts.tol_g > T::zero()) || !(opts.step > T::zero()) || !(opts.window > T::zero() && opts.window <= T::one()) {
        return Err(MountainError::InvalidArgument("tol_g and step must be positive, window in (0, 1]".into()));
    }
    let grid = Arc::clone(functional.grid());
    let max_nodes = opts.max_nodes.max(MIN_SEGMENTS + 2);
    let mut nodes = path.nodes.clone();
    let mut energies: Vec<T> = path.energies(functional);
    let all: Vec<usize> = (0..nodes.len() - 1).collect();
    let first = locate_top(functional, &nodes, &energies, &all);
    let mut top = install_top(functional, &mut nodes, &mut energies, first, max_nodes);
    let mut tau = opts.step;
    let mut history = Vec::new();
    let mut rising = 0;
    let mut previous = T::infinity();
    let mut status = DescentStatus::MaxIterations;
    let mut grad_norm = T::infinity();
    let mut iters = 0;
    let mut restarts = Vec::new();

    while iters < opts.max_outer {
        iters += 1;
        extend_endpoint(functional, &mut nodes, &mut energies)?;
        let c = energies[top];
        if !(c > T::zero()) {
            // The whole polygon sits below zero, which no path from 0 to
            // negative energy can do: the maximum was lost.
            status = DescentStatus::Divergent;
            break;
        }
        history.push(c);
        if restarts.last() == Some(&(history.len() - 1)) {
            previous = c;
        }
        if c > previous + lit::<T>(1e-10) * c.abs().max(T::one()) {
            rising += 1;
            if rising >= 10 {
                status = DescentStatus::Divergent;
                break;
            }
        } else {
            rising = 0;
        }
        previous = c;

        let (_, gn) = functional.sobolev_gradient(&nodes[top]);
        let norm = functional.norm_sq(&nodes[top]).sqrt();
        grad_norm = if norm > T::zero() { gn / norm } else { T::infinity() };
        if grad_norm < opts.tol_g {
            status = DescentStatus::Converged;
            break;
        }

        let last = nodes.len() - 1;
        // The range runs from G(phi_0) = 0 to the top; nodes below zero lie
        // past the ridge and would only run off towards -inf.
        let threshold = c - opts.window * c;
        // Nodes above the threshold and their neighbours, so that adjacent
        // nodes move together instead of zigzagging.
        let high: Vec<bool> = energies.iter().map(|&e| e >= threshold).collect();
        let window: Vec<usize> =
            (1..last).filter(|&i| high[i] || (high[i - 1] && i > 1) || high[i + 1]).collect();
        // Each node moves at most MAX_MOVE of its own norm per unit step.
        let directions: Vec<Vec<T>> = window
            .par_iter()
            .map(|&i| {
                let mut d = direction(functional, &nodes, i);
                let len = b_form(functional, &d).max(T::zero()).sqrt();
                let cap = lit::<T>(MAX_MOVE) * b_form(functional, nodes[i].values()).max(T::zero()).sqrt();
                if len > cap && len > T::zero() {
                    let f = cap / len;
                    d.iter_mut().for_each(|v| *v *= f);
                }
                d
            })
            .collect();
        let mut segs: Vec<usize> = window.iter().flat_map(|&i| [i - 1, i]).collect();
        segs.dedup();

        let mut accepted = false;
        while tau > lit(1e-12) {
            let mut moved = nodes.clone();
            let mut moved_energy = energies.clone();
            let trial: Vec<(DiscreteFunction<T>, T)> = window
                .par_iter()
                .zip(&directions)
                .map(|(&i, d)| {
                    let v = nodes[i].values().iter().zip(d).map(|(&a, &b)| a - tau * b).collect();
                    let u = DiscreteFunction::new(Arc::clone(&grid), v).expect("finite trial node");
                    let e = functional.energy(&u);
                    (u, e)
                })
                .collect();
            for (&i, (u, e)) in window.iter().zip(trial) {
                moved[i] = u;
                moved_energy[i] = e;
            }
            let t = locate_top(functional, &moved, &moved_energy, &segs);
            if t.energy < c && t.energy.is_finite() {
                top = install_top(functional, &mut moved, &mut moved_energy, t, max_nodes);
                nodes = moved;
                energies = moved_energy;
                tau = (tau * lit(1.5)).min(T::one());
                accepted = true;
                break;
            }
            tau *= lit(0.5);
        }
        if !accepted {
            if restarts.len() >= MAX_RESTARTS {
                status = DescentStatus::Stalled;
                break;
            }
            // Start over from a clean path through the current top.
            restarts.push(history.len());
            let fresh = initial_path(functional, &nodes[top])?;
            energies = fresh.energies(functional);
            nodes = fresh.nodes;
            let all: Vec<usize> = (0..nodes.len() - 1).collect();
            let t = locate_top(functional, &nodes, &energies, &all);
            top = install_top(functional, &mut nodes, &mut energies, t, max_nodes);
            tau = opts.step;
            continue;
        }
        top = respace(functional, &mut nodes, &mut energies, top, max_nodes, threshold);
    }

    let c_est = energies[top];
    let candidate = nodes[top].clone();
    if status != DescentStatus::Converged {
        let (_, gn) = functional.sobolev_gradient(&candidate);
        let norm = functional.norm_sq(&candidate).sqrt();
        grad_norm = if norm > T::zero() { gn / norm } else { T::infinity() };
    }
    let params = arc_lengths(functional, &nodes);
    let path = PathPolyline { nodes, params };
    Ok(DescentResult { c_est, candidate, grad_norm, iters, status, path, history, restarts })
}

fn extend_endpoint<T: Real, N: Nonlinearity<T>>(
    functional: &EnergyFunctional<T, N>,
    nodes: &mut Vec<DiscreteFunction<T>>,
    energies: &mut Vec<T>,
) -> Result<(), MountainError> {
    let mut tries = 0;
    while !(*energies.last().expect("nonempty") < T::zero()) {
        tries += 1;
        if tries > 40 {
            return Err(MountainError::NoMountain("cannot re-extend the path endpoint to negative energy".into()));
        }
        let next = nodes.last().expect("nonempty").scaled(lit(2.0));
        energies.push(functional.energy(&next));
        nodes.push(next);
    }
    Ok(())
}

fn segment_lengths<T: Real, N: Nonlinearity<T>>(functional: &EnergyFunctional<T, N>, nodes: &[DiscreteFunction<T>]) -> Vec<T> {
    (0..nodes.len() - 1)
        .into_par_iter()
        .map(|k| b_form(functional, &diff(&nodes[k + 1], &nodes[k])).max(T::zero()).sqrt())
        .collect()
}

fn arc_lengths<T: Real, N: Nonlinearity<T>>(functional: &EnergyFunctional<T, N>, nodes: &[DiscreteFunction<T>]) -> Vec<T> {
    let lengths = segment_lengths(functional, nodes);
    let mut params = Vec::with_capacity(nodes.len());
    let mut acc = T::zero();
    params.push(acc);
    for l in lengths {
        // Coincident nodes still get increasing parameters.
        acc += l.max(T::epsilon());
        params.push(acc);
    }
    params
}

/// Splits long segments and drops one node squeezed between short ones.
/// Only nodes below `keep_below` whose replacing chord also stays below it
/// are dropped, so the chord cannot cut over the top. Returns the new index
/// of the top node.
fn respace<T: Real, N: Nonlinearity<T>>(
    functional: &EnergyFunctional<T, N>,
    nodes: &mut Vec<DiscreteFunction<T>>,
    energies: &mut Vec<T>,
    mut top: usize,
    max_nodes: usize,
    keep_below: T,
) -> usize {
    let lengths = segment_lengths(functional, nodes);
    let mean = lengths.iter().copied().sum::<T>() / from_usize::<T>(lengths.len());
    let last = nodes.len() - 1;
    if nodes.len() > MIN_SEGMENTS + 1 {
        let removable = (1..last).filter(|&i| i != top && energies[i] < keep_below).find(|&i| {
            lengths[i - 1] + lengths[i] < mean * lit(0.5)
                && [lit::<T>(0.25), lit(0.5), lit(0.75)]
                    .iter()
                    .all(|&q| functional.energy(&lerp(&nodes[i - 1], &nodes[i + 1], q)) < keep_below)
        });
        if let Some(i) = removable {
            nodes.remove(i);
            energies.remove(i);
            return if i < top { top - 1 } else { top };
        }
    }
    for k in (0..lengths.len()).rev() {
        if nodes.len() >= max_nodes {
            break;
        }
        if lengths[k] > mean * lit(2.5) {
            let m = lerp(&nodes[k], &nodes[k + 1], lit(0.5));
            let e = functional.energy(&m);
            nodes.insert(k + 1, m);
            energies.insert(k + 1, e);
            if k < top {
                top += 1;
            }
        }
    }
    top
}

/// What the shooting parameter is tuned for.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "target", content = "radius")]
pub enum ShootingTarget<T> {
    /// Positive solution decaying at infinity.
    Decay,
    /// Positive solution whose first zero sits at the given radius.
    FirstZeroAt(T),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ShootingOptions<T> {
    pub step: T,
    pub r_max: T,
    /// Relative width of the final bracket.
    pub bisect_tol: T,
}

impl<T: Real> Default for ShootingOptions<T> {
    fn default() -> Self {
        Self { step: lit(1e-3), r_max: lit(60.0), bisect_tol: lit(1e-14) }
    }
}

#[derive(Debug, Clone)]
pub struct ShootingResult<T> {
    pub alpha: T,
    /// Samples `(r, u(r))` of the trajectory up to where it was trusted.
    pub samples: Vec<(T, T)>,
    /// Energy of the profile by quadrature along the trajectory.
    pub level: T,
    pub bisections: usize,
}

impl<T: Real> ShootingResult<T> {
    /// Interpolates the profile onto a grid (radial or line), zero beyond
    /// the trusted range.
    pub fn profile_on(&self, grid: &Arc<crate::function_space::Grid<T>>) -> DiscreteFunction<T> {
        let xs: Vec<T> = self.samples.iter().map(|p| p.0).collect();
        let ys: Vec<T> = self.samples.iter().map(|p| p.1).collect();
        let spline = MonotoneCubic::new(&xs, &ys, true);
        DiscreteFunction::from_fn(Arc::clone(grid), |x| spline.eval(x.abs()).unwrap_or(T::zero()).max(T::zero()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Shot {
    /// `alpha` too small: the solution turns back up or stays positive.
    Under,
    /// `alpha` too large: the solution crosses zero too early.
    Over,
}

struct Trajectory<T> {
    shot: Shot,
    points: Vec<(T, T, T)>,
}

/// `u'' + (N-1)/r u' = lambda u - f(u)`, `u(0) = alpha`, `u'(0) = 0`.
fn integrate<T: Real, N: Nonlinearity<T>>(
    nl: &N,
    lambda: T,
    alpha: T,
    target: ShootingTarget<T>,
    opts: &ShootingOptions<T>,
    keep: bool,
) -> Trajectory<T> {
    let dim = nl.dim();
    let n1 = from_usize::<T>(dim - 1);
    let accel = |r: T, u: T, v: T| lambda * u - nl.derivative(T::zero(), u) - n1 * v / r;
    let h = opts.step;
    // Series start u = alpha + c r^2 / 2 with c = (lambda alpha - f(alpha)) / N.
    let c = (lambda * alpha - nl.derivative(T::zero(), alpha)) / from_usize::<T>(dim);
    let mut r = h;
    let mut u = alpha + c * h * h * lit(0.5);
    let mut v = c * h;
    let mut points = Vec::new();
    if keep {
        points.push((T::zero(), alpha, T::zero()));
        points.push((r, u, v));
    }
    let limit = match target {
        ShootingTarget::Decay => opts.r_max,
        ShootingTarget::FirstZeroAt(radius) => radius,
    };
    let half = lit::<T>(0.5);
    let sixth = T::one() / lit(6.0);
    loop {
        let k1u = v;
        let k1v = accel(r, u, v);
        let k2u = v + half * h * k1v;
        let k2v = accel(r + half * h, u + half * h * k1u, v + half * h * k1v);
        let k3u = v + half * h * k2v;
        let k3v = accel(r + half * h, u + half * h * k2u, v + half * h * k2v);
        let k4u = v + h * k3v;
        let k4v = accel(r + h, u + h * k3u, v + h * k3v);
        let nu = u + h * sixth * (k1u + lit::<T>(2.0) * (k2u + k3u) + k4u);
        let nv = v + h * sixth * (k1v + lit::<T>(2.0) * (k2v + k3v) + k4v);
        let nr = r + h;
        if !(nu.is_finite() && nv.is_finite()) {
            return Trajectory { shot: Shot::Over, points };
        }
        if nu < T::zero() {
            if keep {
                // Linear interpolation to the zero crossing.
                let s = u / (u - nu);
                points.push((r + s * h, T::zero(), v + s * (nv - v)));
            }
            return Trajectory { shot: Shot::Over, points };
        }
        if target == ShootingTarget::Decay && nv > T::zero() {
            return Trajectory { shot: Shot::Under, points };
        }
        r = nr;
        u = nu;
        v = nv;
        if keep {
            points.push((r, u, v));
        }
        if r >= limit {
            return Trajectory { shot: Shot::Under, points };
        }
    }
}

/// Ground state (or first-zero solution on a ball) by shooting on `u(0)`.
///
/// `dim = 1` drops the `1/r` term and treats the profile as even.
pub fn radial_shooting_oracle<T: Real, N: Nonlinearity<T>>(
    nl: &N,
    lambda: T,
    target: ShootingTarget<T>,
    bracket: (T, T),
    opts: &ShootingOptions<T>,
) -> Result<ShootingResult<T>, MountainError> {
    if !nl.is_autonomous() {
        return Err(MountainError::InvalidArgument("shooting needs an autonomous nonlinearity".into()));
    }
    match target {
        ShootingTarget::Decay if !(lambda > T::zero()) => {
            return Err(MountainError::InvalidArgument("decaying ground states need lambda > 0".into()))
        }
        ShootingTarget::FirstZeroAt(r) if !(r > opts.step * lit(10.0)) => {
            return Err(MountainError::InvalidArgument(format!("radius {r} is too small for the step")))
        }
        _ => {}
    }
    let (mut lo, mut hi) = bracket;
    if !(lo > T::zero() && hi > lo) {
        return Err(MountainError::InvalidArgument("bracket must satisfy 0 < lo < hi".into()));
    }
    let straddles = integrate(nl, lambda, lo, target, opts, false).shot == Shot::Under
        && integrate(nl, lambda, hi, target, opts, false).shot == Shot::Over;
    if !straddles {
        return Err(MountainError::Bracket { lo: to_f64(lo), hi: to_f64(hi) });
    }
    let mut bisections = 0;
    while hi - lo > opts.bisect_tol * hi && bisections < 200 {
        bisections += 1;
        let mid = (lo + hi) * lit(0.5);
        if mid <= lo || mid >= hi {
            break;
        }
        match integrate(nl, lambda, mid, target, opts, false).shot {
            Shot::Under => lo = mid,
            Shot::Over => hi = mid,
        }
    }
    let (alpha, traj) = match target {
        // The undershooting side stays positive; cut at its turning point.
        ShootingTarget::Decay => (lo, integrate(nl, lambda, lo, target, opts, true)),
        // The overshooting side records the zero itself.
        ShootingTarget::FirstZeroAt(_) => (hi, integrate(nl, lambda, hi, target, opts, true)),
    };
    let mut points = traj.points;
    if let ShootingTarget::FirstZeroAt(radius) = target {
        points.retain(|p| p.0 <= radius);
        points.push((radius, T::zero(), points.last().map_or(T::zero(), |p| p.2)));
    }
    let level = trajectory_energy(nl, lambda, &points);
    let samples = points.iter().map(|p| (p.0, p.1)).collect();
    Ok(ShootingResult { alpha, samples, level, bisections })
}

/// `|S^{N-1}| int (u'^2/2 + lambda u^2/2 - F(u)) r^{N-1} dr` by the
/// trapezoidal rule (for `N = 1` this covers the whole line).
fn trajectory_energy<T: Real, N: Nonlinearity<T>>(nl: &N, lambda: T, points: &[(T, T, T)]) -> T {
    let dim = nl.dim();
    let half = lit::<T>(0.5);
    let density = |p: &(T, T, T)| {
        let (r, u, v) = *p;
        let w = if dim == 1 { T::one() } else { r.powi(dim as i32 - 1) };
        (half * v * v + half * lambda * u * u - nl.primitive(T::zero(), u)) * w
    };
    let mut sum = T::zero();
    for pair in points.windows(2) {
        sum += (pair[1].0 - pair[0].0) * half * (density(&pair[0]) + density(&pair[1]));
    }
    sum * unit_sphere_area::<T>(dim)
}

/// How a level was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LevelRoute {
    /// Closed form from `kappa(1)` for selfsimilar autonomous zero mass problems.
    Kappa,
    Descent,
    Shooting,
    /// `F <= 0`: no path reaches negative energy and the level is infinite.
    NoMountain,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelEstimate<T> {
    pub label: String,
    /// `None` when the level is `+inf`.
    pub value: Option<T>,
    pub route: LevelRoute,
    pub converged: bool,
}

impl<T: Real> LevelEstimate<T> {
    pub fn finite(label: impl Into<String>, value: T, route: LevelRoute, converged: bool) -> Self {
        Self { label: label.into(), value: Some(value), route, converged }
    }
    pub fn infinite(label: impl Into<String>) -> Self {
        Self { label: label.into(), value: None, route: LevelRoute::NoMountain, converged: true }
    }
}

/// Mountain-pass level `(2^* kappa(1))^{-(N-2)/2} / N` of a selfsimilar
/// autonomous zero mass problem.
pub fn level_from_kappa<T: Real>(dim: usize, kappa1: T) -> Result<T, MountainError> {
    let crit = crate::scalar::critical_exponent::<T>(dim)
        .ok_or_else(|| MountainError::InvalidArgument("the kappa route needs N >= 3".into()))?;
    if !(kappa1 > T::zero()) {
        return Err(MountainError::InvalidArgument(format!("kappa(1) must be positive, got {kappa1}")));
    }
    let n = from_usize::<T>(dim);
    Ok((crit * kappa1).powf(-(n - lit(2.0)) * lit(0.5)) / n)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelReport<T> {
    pub c: T,
    pub c_sharp: BTreeMap<String, Option<T>>,
    /// `c < (1 - margin) c_#`.
    pub strict_flags: BTreeMap<String, bool>,
    /// `c <= (1 + tolerance) c_#`, which must always hold.
    pub nonstrict_ok: BTreeMap<String, bool>,
    pub margin: T,
    pub tolerance: T,
}

impl<T: Real> LevelReport<T> {
    pub fn all_nonstrict(&self) -> bool {
        self.nonstrict_ok.values().all(|&b| b)
    }
}

/// Compares a level with the levels of its asymptotic problems.
pub fn mp_level_report<T: Real>(
    level: &LevelEstimate<T>,
    asymptotic: &[LevelEstimate<T>],
    margin: T,
    tolerance: T,
) -> Result<LevelReport<T>, MountainError> {
    let c = level
        .value
        .ok_or_else(|| MountainError::NoMountain(format!("level {} is infinite", level.label)))?;
    let mut c_sharp = BTreeMap::new();
    let mut strict_flags = BTreeMap::new();
    let mut nonstrict_ok = BTreeMap::new();
    for a in asymptotic {
        c_sharp.insert(a.label.clone(), a.value);
        let (strict, ok) = match a.value {
            None => (true, true),
            Some(cs) => (c < cs * (T::one() - margin), c <= cs * (T::one() + tolerance)),
        };
        strict_flags.insert(a.label.clone(), strict);
        nonstrict_ok.insert(a.label.clone(), ok);
    }
    Ok(LevelReport { c, c_sharp, strict_flags, nonstrict_ok, margin, tolerance })
}

/// [`mp_level_report`] with the default margin and a 2% tolerance.
pub fn mp_level_report_default<T: Real>(
    level: &LevelEstimate<T>,
    asymptotic: &[LevelEstimate<T>],
) -> Result<LevelReport<T>, MountainError> {
    mp_level_report(level, asymptotic, lit(STRICT_MARGIN), lit(0.02))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::function_space::{DomainKind, Grid};
    use crate::nonlinearity::{Kind, NonlinearitySpec};

    fn cubic(dim: usize) -> NonlinearitySpec<f64> {
        NonlinearitySpec::new(dim, 2.0, Kind::Power { p: 4.0, scale: 0.25 }).unwrap()
    }

    fn line(h: f64) -> EnergyFunctional<f64, NonlinearitySpec<f64>> {
        let grid = Arc::new(Grid::line(20.0, h).unwrap());
        EnergyFunctional::new(grid, 1.0, cubic(1), Regime::SubcriticalH1).unwrap()
    }

    fn soliton(x: f64) -> f64 {
        std::f64::consts::SQRT_2 / x.cosh()
    }

    #[test]
    fn ray_through_soliton_peaks_at_four_thirds() {
        let f = line(0.005);
        let seed = DiscreteFunction::from_fn(Arc::clone(f.grid()), soliton);
        let path = initial_path(&f, &seed).unwrap();
        assert!(path.segments() >= MIN_SEGMENTS);
        let (top, _) = path.max_energy(&f);
        assert!((top - 4.0 / 3.0).abs() < 1e-3, "{top}");
    }

    #[test]
    fn nonpositive_primitive_has_no_mountain() {
        let grid = Arc::new(Grid::line(10.0, 0.05).unwrap());
        let nl = NonlinearitySpec::new(1, 2.0, Kind::Power { p: 4.0, scale: -1.0 }).unwrap();
        let f = EnergyFunctional::new(grid, 1.0, nl, Regime::SubcriticalH1).unwrap();
        let seed = DiscreteFunction::from_fn(Arc::clone(f.grid()), |x: f64| (-x * x).exp());
        assert!(matches!(initial_path(&f, &seed), Err(MountainError::NoMountain(_))));
    }

    #[test]
    fn dilation_path_ends_past_the_closed_form_zero() {
        let grid = Arc::new(
            Grid::radial_geometric(4, 1e-3, 200.0, 2f64.powf(1.0 / 16.0), DomainKind::WholeSpaceTruncated).unwrap(),
        );
        let nl = NonlinearitySpec::new(4, 2.0, Kind::CriticalStem).unwrap();
        let f = EnergyFunctional::new(grid, 0.0, nl, Regime::CriticalD12).unwrap();
        let seed = DiscreteFunction::from_fn(Arc::clone(f.grid()), |r| 1.0 / (1.0 + r * r));
        let path = initial_path(&f, &seed).unwrap();
        let a = seed.dirichlet_seminorm_sq();
        let b = f.psi(&seed);
        let t_end = *path.params().last().unwrap();
        assert!(0.5 * t_end.powi(2) * a < t_end.powi(4) * b);
        assert!(f.energy(path.nodes().last().unwrap()) < 0.0);
    }

    #[test]
    fn invalid_paths_are_rejected() {
        let f = line(0.05);
        let seed = DiscreteFunction::from_fn(Arc::clone(f.grid()), soliton);
        let nodes: Vec<_> = (0..=8).map(|k| seed.scaled(k as f64)).collect();
        let params: Vec<_> = (0..=8).map(|k| k as f64).collect();
        assert!(PathPolyline::new(&f, nodes, params).is_err());
        let nodes: Vec<_> = (1..=20).map(|k| seed.scaled(k as f64 * 0.01)).collect();
        let params: Vec<_> = (0..20).map(|k| k as f64).collect();
        assert!(PathPolyline::new(&f, nodes, params).is_err());
    }

    #[test]
    fn descent_finds_the_soliton() {
        let f = line(0.01);
        let seed = DiscreteFunction::from_fn(Arc::clone(f.grid()), |x| 2.0 * (-x * x / 8.0).exp());
        let path = initial_path(&f, &seed).unwrap();
        let out = mp_level_descent(&f, &path, &DescentOptions::default()).unwrap();
        assert_eq!(out.status, DescentStatus::Converged, "{:?}", out.history.last());
        assert!((out.c_est - 4.0 / 3.0).abs() < 1e-2, "{}", out.c_est);
        // Non-increasing maximum up to re-insertion noise.
        for (i, w) in out.history.windows(2).enumerate() {
            assert!(w[1] <= w[0] + 1e-10 || out.restarts.contains(&(i + 1)), "{} -> {}", w[0], w[1]);
        }
        assert!(out.grad_norm < 1e-3);
        let u = &out.candidate;
        let peak = (0..u.values().len()).max_by(|&a, &b| u.values()[a].total_cmp(&u.values()[b])).unwrap();
        let shift = f.grid().nodes()[peak];
        let exact = DiscreteFunction::from_fn(Arc::clone(f.grid()), |x| soliton(x - shift));
        let err = (u.sub(&exact).l2_norm_sq() / exact.l2_norm_sq()).sqrt();
        assert!(err < 0.02, "{err}");
    }

    #[test]
    fn level_does_not_depend_on_the_seed() {
        let f = line(0.02);
        let levels: Vec<f64> = [(1.0, 3.0), (3.0, 1.0), (0.5, 6.0)]
            .iter()
            .map(|&(amp, w)| {
                let seed = DiscreteFunction::from_fn(Arc::clone(f.grid()), |x: f64| amp * (-(x / w).powi(2)).exp());
                let path = initial_path(&f, &seed).unwrap();
                mp_level_descent(&f, &path, &DescentOptions::default()).unwrap().c_est
            })
            .collect();
        for c in &levels {
            assert!((c - levels[0]).abs() < 0.02 * levels[0], "{levels:?}");
        }
    }

    #[test]
    fn shooting_recovers_the_soliton_peak() {
        let out = radial_shooting_oracle(&cubic(1), 1.0, ShootingTarget::Decay, (0.5, 3.0), &ShootingOptions::default())
            .unwrap();
        assert!((out.alpha - std::f64::consts::SQRT_2).abs() < 1e-4, "{}", out.alpha);
        assert!((out.level - 4.0 / 3.0).abs() < 1e-3, "{}", out.level);
    }

    #[test]
    fn shooting_three_dimensional_ground_state() {
        let out = radial_shooting_oracle(&cubic(3), 1.0, ShootingTarget::Decay, (1.0, 10.0), &ShootingOptions::default())
            .unwrap();
        // Decreasing positive profile.
        assert!(out.samples.windows(2).all(|w| w[1].1 <= w[0].1 && w[1].1 > 0.0));
        assert!((out.alpha - 4.3374).abs() < 2e-3, "{}", out.alpha);
        // Larger amplitudes cross zero.
        let over = integrate(&cubic(3), 1.0, out.alpha * 1.01, ShootingTarget::Decay, &ShootingOptions::default(), false);
        assert_eq!(over.shot, Shot::Over);
    }

    #[test]
    fn shooting_rejects_a_one_sided_bracket() {
        let err = radial_shooting_oracle(&cubic(1), 1.0, ShootingTarget::Decay, (2.0, 3.0), &ShootingOptions::default());
        assert!(matches!(err, Err(MountainError::Bracket { .. })));
    }

    #[test]
    fn kappa_route_matches_the_stem_threshold() {
        let talenti = 3.0 / (32.0 * std::f64::consts::PI.powi(2));
        let c = level_from_kappa(4, talenti).unwrap();
        assert!((c - 2.0 * std::f64::consts::PI.powi(2) / 3.0).abs() < 1e-12);
        assert!(level_from_kappa(2, 1.0).is_err());
    }

    #[test]
    fn report_flags() {
        let c = LevelEstimate::finite("c", 1.0, LevelRoute::Descent, true);
        let sharp = [
            LevelEstimate::finite("c_inf", 4.0 / 3.0, LevelRoute::Descent, true),
            LevelEstimate::finite("c_plus", 1.01, LevelRoute::Kappa, true),
            LevelEstimate::infinite("c_minus"),
        ];
        let r = mp_level_report_default(&c, &sharp).unwrap();
        assert!(r.strict_flags["c_inf"]);
        assert!(!r.strict_flags["c_plus"]);
        assert!(r.strict_flags["c_minus"]);
        assert!(r.all_nonstrict());
        let bad = LevelEstimate::finite("c_inf", 0.9, LevelRoute::Descent, true);
        assert!(!mp_level_report_default(&c, &[bad]).unwrap().all_nonstrict());
    }
}
