//! Profile decomposition of bounded sequences: extraction of profiles with
//! their dilation or translation schedules, checks of the norm, separation
//! and remainder properties, and the splitting of `int F(u_k)` over profiles.

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::function_space::{DiscreteFunction, Grid, GridError, Spacing};
use crate::nonlinearity::Nonlinearity;
use crate::scalar::{critical_exponent, from_i32, from_usize, lit, Real};

/// Shortest sequence [`decompose`] accepts.
pub const MIN_SEQUENCE: usize = 8;

#[derive(Debug, Error)]
pub enum DecompositionError {
    #[error("sequence has {0} elements, need at least {MIN_SEQUENCE}")]
    TooShort(usize),
    #[error("sequence is not bounded: norm^2 grows from {first:e} to {last:e}")]
    Unbounded { first: f64, last: f64 },
    #[error("all elements must live on one grid")]
    MixedGrids,
    #[error("dilation schedules need a geometric radial grid whose ratio divides gamma")]
    NotGeometric,
    #[error("schedule leaves the grid at index {k}: {lost:.1}% of the profile norm is lost")]
    ScheduleOutOfRange { k: usize, lost: f64 },
    #[error("asymptotic nonlinearity for class {0:?} not supplied (uncertified)")]
    Uncertified(ProfileClass),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error(transparent)]
    Grid(#[from] GridError),
}

/// Behaviour of the dilation index along the sequence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ProfileClass {
    /// `j_k = 0`.
    N0,
    /// `j_k -> +inf` (concentration).
    Nplus,
    /// `j_k -> -inf` (spreading).
    Nminus,
}

#[derive(Debug, Clone)]
pub struct ProfileItem<T> {
    pub w: DiscreteFunction<T>,
    /// Dilation index `j_k` per element.
    pub scales: Vec<i32>,
    /// Center `y_k` per element (line grids; zero on radial grids).
    pub centers: Vec<T>,
    pub class: ProfileClass,
    /// Squared space norm of `w`.
    pub norm_sq: T,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyLedger<T> {
    /// `sum_n |w_n|^2`.
    pub profiles: T,
    /// `limsup |u_k|^2`, taken as the largest value over the last quarter.
    pub limsup: T,
}

#[derive(Debug, Clone)]
pub struct Decomposition<T> {
    pub items: Vec<ProfileItem<T>>,
    /// Relative remainder norm at the last index after each extraction
    /// (the first entry is the sequence itself).
    pub remainder_l2star: Vec<T>,
    /// Exponent of the remainder norm: `2^*` for `N >= 3`, 4 otherwise.
    pub exponent: T,
    pub energy_ledger: EnergyLedger<T>,
    /// The remainder is still above the tolerance but no profile clears the
    /// extraction floor.
    pub incomplete: bool,
    pub gamma: T,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DecomposeOptions<T> {
    /// Stop once the relative remainder at the last index is below this.
    pub tol_remainder: T,
    pub max_profiles: usize,
    /// Dilation indices scanned; `None` covers every shell inside the grid.
    pub window: Option<(i32, i32)>,
    /// Profiles with less than this fraction of `limsup |u_k|^2` are not
    /// extracted.
    pub floor: T,
    /// Half width of the window used to locate centers on a line.
    pub center_width: T,
    /// Passes re-estimating every profile against the others.
    pub backfit: usize,
}

impl<T: Real> Default for DecomposeOptions<T> {
    fn default() -> Self {
        Self {
            tol_remainder: lit(0.05),
            max_profiles: 6,
            window: None,
            floor: lit(0.01),
            center_width: lit(2.0),
            backfit: 3,
        }
    }
}

/// Squared norm of the space the decomposition works in: the Dirichlet norm
/// on radial grids with `N >= 3`, the `H^1` norm otherwise.
pub fn space_norm_sq<T: Real>(u: &DiscreteFunction<T>) -> T {
    let grid = u.grid();
    if grid.is_radial() && grid.dim() >= 3 {
        u.dirichlet_seminorm_sq()
    } else {
        u.dirichlet_seminorm_sq() + u.l2_norm_sq()
    }
}

/// Exponent of the remainder norm on `grid`.
pub fn remainder_exponent<T: Real>(grid: &Grid<T>) -> T {
    if grid.is_radial() {
        critical_exponent::<T>(grid.dim()).unwrap_or(lit(4.0))
    } else {
        lit(4.0)
    }
}

fn lp_norm<T: Real>(u: &DiscreteFunction<T>, p: T) -> T {
    u.lp_norm_pow(p).powf(T::one() / p)
}

/// Group action used on a grid.
#[derive(Debug, Clone, Copy)]
enum Action<T> {
    Dilation { gamma: T },
    Translation,
}

impl<T: Real> Action<T> {
    fn push(&self, w: &DiscreteFunction<T>, j: i32, y: T) -> DiscreteFunction<T> {
        match *self {
            Action::Dilation { gamma } => w.unitary_dilate(gamma, j),
            Action::Translation => w.translate(y).expect("line grid"),
        }
    }

    fn pull(&self, u: &DiscreteFunction<T>, j: i32, y: T) -> DiscreteFunction<T> {
        match *self {
            Action::Dilation { gamma } => u.unitary_dilate(gamma, -j),
            Action::Translation => u.translate(-y).expect("line grid"),
        }
    }
}

fn action_for<T: Real>(grid: &Grid<T>, gamma: T) -> Result<Action<T>, DecompositionError> {
    if !grid.is_radial() {
        return Ok(Action::Translation);
    }
    let Spacing::Geometric { ratio, .. } = grid.spacing() else {
        return Err(DecompositionError::NotGeometric);
    };
    let m = gamma.ln() / ratio.ln();
    if (m - m.round()).abs() > lit(1e-6) || m.round() < T::one() {
        return Err(DecompositionError::NotGeometric);
    }
    Ok(Action::Dilation { gamma })
}

/// Cell energies `k_e (u_{e+1} - u_e)^2`.
fn cell_energy<T: Real>(u: &DiscreteFunction<T>) -> Vec<T> {
    let v = u.values();
    u.grid().stiffness().iter().enumerate().map(|(e, &k)| k * (v[e + 1] - v[e]).powi(2)).collect()
}

/// Dirichlet energy of `u` in the shell `gamma^{-j-1/2} <= r < gamma^{-j+1/2}`,
/// for every `j` in `range`.
fn shell_energies<T: Real>(u: &DiscreteFunction<T>, gamma: T, range: (i32, i32)) -> Vec<T> {
    let cells = cell_energy(u);
    let nodes = u.grid().nodes();
    let width = range.1 - range.0 + 1;
    let mut out = vec![T::zero(); width as usize];
    let lg = gamma.ln();
    for (e, &c) in cells.iter().enumerate() {
        let mid = (nodes[e] + nodes[e + 1]) * lit(0.5);
        // r ~ gamma^{-j}  =>  j = -ln r / ln gamma, rounded to the shell.
        let j = (-(mid.ln() / lg)).round().to_i32().unwrap_or(i32::MIN);
        if (range.0..=range.1).contains(&j) {
            out[(j - range.0) as usize] += c;
        }
    }
    out
}

/// Shells lying inside the grid.
fn default_window<T: Real>(grid: &Grid<T>, gamma: T) -> (i32, i32) {
    let lg = gamma.ln();
    let r1 = grid.nodes()[1];
    let big = grid.extent();
    let lo = (-(big.ln() / lg)).ceil().to_i32().unwrap_or(0) + 1;
    let hi = (-(r1.ln() / lg)).floor().to_i32().unwrap_or(0) - 1;
    (lo, hi.max(lo))
}

/// Center maximizing the `H^1` energy within `+-width`, snapped to a node.
fn best_center<T: Real>(u: &DiscreteFunction<T>, width: T) -> T {
    let nodes = u.grid().nodes();
    let h = nodes[1] - nodes[0];
    let cells = cell_energy(u);
    let mass = u.grid().mass();
    let density: Vec<T> =
        (0..nodes.len()).map(|i| u.values()[i].powi(2) * mass[i] + if i < cells.len() { cells[i] } else { T::zero() }).collect();
    let half = (width / h).round().to_usize().unwrap_or(1).max(1);
    let mut prefix = vec![T::zero(); density.len() + 1];
    for (i, &d) in density.iter().enumerate() {
        prefix[i + 1] = prefix[i] + d;
    }
    let mut best = (T::neg_infinity(), 0usize);
    for i in 0..nodes.len() {
        let a = i.saturating_sub(half);
        let b = (i + half + 1).min(nodes.len());
        let s = prefix[b] - prefix[a];
        if s > best.0 {
            best = (s, i);
        }
    }
    nodes[best.1]
}

/// Least-squares slope of `ys` against their index.
fn slope<T: Real>(ys: &[T]) -> T {
    let n = from_usize::<T>(ys.len());
    let mx = (n - T::one()) * lit(0.5);
    let my = ys.iter().copied().sum::<T>() / n;
    let mut sxy = T::zero();
    let mut sxx = T::zero();
    for (i, &y) in ys.iter().enumerate() {
        let dx = from_usize::<T>(i) - mx;
        sxy += dx * (y - my);
        sxx += dx * dx;
    }
    if sxx > T::zero() {
        sxy / sxx
    } else {
        T::zero()
    }
}

fn fit_line<T: Real>(ks: &[usize], ys: &[T]) -> (T, T) {
    let n = from_usize::<T>(ks.len());
    let mx = ks.iter().map(|&k| from_usize::<T>(k)).sum::<T>() / n;
    let my = ys.iter().copied().sum::<T>() / n;
    let mut sxy = T::zero();
    let mut sxx = T::zero();
    for (&k, &y) in ks.iter().zip(ys) {
        let dx = from_usize::<T>(k) - mx;
        sxy += dx * (y - my);
        sxx += dx * dx;
    }
    let b = if sxx > T::zero() { sxy / sxx } else { T::zero() };
    (my - b * mx, b)
}

fn tail_start(len: usize) -> usize {
    len - (len / 4).max(2)
}

/// Average of the pulled-back elements over the last quarter. With
/// `window` set, each pulled element is first cut off at the energy valleys
/// separating the bump at the origin from other bumps.
fn tail_average<T: Real>(
    action: Action<T>,
    seq: &[DiscreteFunction<T>],
    scales: &[i32],
    centers: &[T],
    window: Option<(i32, i32)>,
) -> DiscreteFunction<T> {
    let start = tail_start(seq.len());
    let count = from_usize::<T>(seq.len() - start);
    let mut acc = DiscreteFunction::zeros(Arc::clone(seq[0].grid()));
    for k in start..seq.len() {
        let v = action.pull(&seq[k], scales[k], centers[k]);
        let v = match (action, window) {
            (Action::Dilation { gamma }, Some(w)) => localize_radial(&v, gamma, w),
            _ => v,
        };
        acc = acc.add(&v);
    }
    acc.scaled(T::one() / count)
}

/// Index of the first valley walking from `peak` in steps of `dir`, if the
/// energy rises clearly again after it.
fn valley<T: Real>(e: &[T], peak: usize, dir: isize) -> Option<usize> {
    let at = |i: isize| (i >= 0 && (i as usize) < e.len()).then(|| e[i as usize]);
    let mut m = peak as isize;
    while let Some(next) = at(m + dir) {
        if next > e[m as usize] {
            break;
        }
        m += dir;
    }
    let low = e[m as usize];
    let mut i = m + dir;
    while let Some(v) = at(i) {
        if v > low * lit(2.0) && low < e[peak] * lit(0.5) {
            return Some(m as usize);
        }
        i += dir;
    }
    None
}

/// `(A, c)` with `v = A r^{-d} + c` at the edges of the shell `j`: between
/// two separated bumps the inner one contributes its harmonic far field and
/// the outer one a constant.
fn harmonic_fit<T: Real>(v: &DiscreteFunction<T>, gamma: T, j: i32, d: T) -> Option<(T, T)> {
    let r1 = gamma.powf(-from_i32::<T>(j) - lit(0.5));
    let r2 = gamma.powf(-from_i32::<T>(j) + lit(0.5));
    let (v1, v2) = (v.value_at(r1), v.value_at(r2));
    let (p1, p2) = (r1.powf(-d), r2.powf(-d));
    let det = p1 - p2;
    if !(det.abs() > T::zero()) {
        return None;
    }
    let a = (v1 - v2) / det;
    Some((a, v1 - a * p1))
}

/// Keeps the bump whose peak shell is nearest `j = 0`. The field of a bump
/// further in is removed through its harmonic tail and the function is held
/// constant inside the inner valley; the constant left by a bump further
/// out is removed and the function continues harmonically outside the
/// outer valley, or outside the window when no valley is found there.
fn localize_radial<T: Real>(v: &DiscreteFunction<T>, gamma: T, window: (i32, i32)) -> DiscreteFunction<T> {
    let e = shell_energies(v, gamma, window);
    let zero = (0 - window.0).clamp(0, e.len() as i32 - 1) as usize;
    let lo = zero.saturating_sub(1);
    let hi = (zero + 1).min(e.len() - 1);
    let peak = (lo..=hi).max_by(|&a, &b| e[a].partial_cmp(&e[b]).unwrap_or(std::cmp::Ordering::Equal)).unwrap_or(zero);
    let shell = |i: usize| i as i32 + window.0;
    let radius = |i: usize| gamma.powi(-shell(i));
    let grid = v.grid();
    let d = from_usize::<T>(grid.dim().saturating_sub(2).max(1));
    // Larger shell index means smaller radius.
    let inner = valley(&e, peak, 1).and_then(|m| harmonic_fit(v, gamma, shell(m), d).map(|f| (radius(m), f)));
    let outer_shell = valley(&e, peak, -1).unwrap_or(0);
    let outer = (outer_shell < peak)
        .then(|| harmonic_fit(v, gamma, shell(outer_shell), d).map(|(_, c)| (radius(outer_shell), c)))
        .flatten();
    if inner.is_none() && outer.is_none() {
        return v.clone();
    }
    let (a_in, c_in, r_in) = inner.map_or((T::zero(), T::zero(), T::zero()), |(r, (a, c))| (a, c, r));
    let (c_out, r_out) = outer.map_or((T::zero(), T::infinity()), |(r, c)| (c, r));
    let middle = |r: T, x: T| if a_in.is_zero() { x - c_out } else { x - a_in * r.powf(-d) - c_out };
    let v_out = if r_out.is_finite() { middle(r_out, v.value_at(r_out)) } else { T::zero() };
    let out = grid
        .nodes()
        .iter()
        .zip(v.values())
        .map(|(&r, &x)| {
            if r < r_in {
                c_in - c_out
            } else if r > r_out {
                v_out * (r_out / r).powf(d)
            } else {
                middle(r, x)
            }
        })
        .collect();
    DiscreteFunction::new(Arc::clone(grid), out).expect("same grid")
}

/// Dilation schedule of the dominant bump in `seq`, with its class.
fn scan_dilations<T: Real>(seq: &[DiscreteFunction<T>], gamma: T, window: (i32, i32)) -> (Vec<i32>, ProfileClass) {
    let shells: Vec<Vec<T>> = seq.par_iter().map(|u| shell_energies(u, gamma, window)).collect();
    let argmax = |e: &[T], lo: i32, hi: i32| -> i32 {
        let mut best = (T::neg_infinity(), lo);
        for j in lo.max(window.0)..=hi.min(window.1) {
            let v = e[(j - window.0) as usize];
            if v > best.0 {
                best = (v, j);
            }
        }
        best.1
    };
    let raw: Vec<i32> = shells.iter().map(|e| argmax(e, window.0, window.1)).collect();
    // The trend is read off the second half, where bumps have separated,
    // then early indices are tracked within one shell of it.
    let half = seq.len() / 2;
    let ks: Vec<usize> = (half..seq.len()).collect();
    let ys: Vec<T> = raw[half..].iter().map(|&j| from_i32::<T>(j)).collect();
    let (a, b) = fit_line(&ks, &ys);
    let class = if b > lit(0.5) {
        ProfileClass::Nplus
    } else if b < lit(-0.5) {
        ProfileClass::Nminus
    } else {
        ProfileClass::N0
    };
    let scales = match class {
        // Convention: j_k = 0 on N0.
        ProfileClass::N0 => vec![0; seq.len()],
        _ => shells
            .iter()
            .enumerate()
            .map(|(k, e)| {
                let pred = (a + b * from_usize::<T>(k)).round().to_i32().unwrap_or(0);
                argmax(e, pred - 1, pred + 1)
            })
            .collect(),
    };
    (scales, class)
}

/// Translation schedule of the dominant bump; drifts of at most one cell
/// are snapped to zero.
fn scan_translations<T: Real>(seq: &[DiscreteFunction<T>], width: T) -> Vec<T> {
    let centers: Vec<T> = seq.par_iter().map(|u| best_center(u, width)).collect();
    let h = seq[0].grid().nodes()[1] - seq[0].grid().nodes()[0];
    if centers.iter().all(|c| c.abs() <= h * lit(1.000001)) {
        vec![T::zero(); seq.len()]
    } else {
        centers
    }
}

fn check_sequence<T: Real>(u_seq: &[DiscreteFunction<T>]) -> Result<Vec<T>, DecompositionError> {
    if u_seq.len() < MIN_SEQUENCE {
        return Err(DecompositionError::TooShort(u_seq.len()));
    }
    let grid = u_seq[0].grid();
    if u_seq.iter().any(|u| !Arc::ptr_eq(u.grid(), grid) && **u.grid() != **grid) {
        return Err(DecompositionError::MixedGrids);
    }
    let norms: Vec<T> = u_seq.iter().map(space_norm_sq).collect();
    let q = (u_seq.len() / 4).max(1);
    let first = norms[..q].iter().copied().fold(T::zero(), T::max);
    let last = norms[u_seq.len() - q..].iter().copied().fold(T::zero(), T::max);
    let growing = slope(&norms) > T::zero();
    if !last.is_finite() || (growing && last > lit::<T>(100.0) * first.max(T::min_positive_value())) {
        return Err(DecompositionError::Unbounded { first: crate::scalar::to_f64(first), last: crate::scalar::to_f64(last) });
    }
    Ok(norms)
}

/// Greedy extraction of profiles followed by backfitting.
pub fn decompose<T: Real>(
    u_seq: &[DiscreteFunction<T>],
    gamma: T,
    opts: &DecomposeOptions<T>,
) -> Result<Decomposition<T>, DecompositionError> {
    let norms = check_sequence(u_seq)?;
    let grid = Arc::clone(u_seq[0].grid());
    let action = action_for(&grid, gamma)?;
    let window = opts.window.unwrap_or_else(|| default_window(&grid, gamma));
    let p = remainder_exponent(&grid);
    let len = u_seq.len();
    let limsup = norms[tail_start(len)..].iter().copied().fold(T::zero(), T::max);
    let last_norm = lp_norm(&u_seq[len - 1], p);
    let relative = |r: &DiscreteFunction<T>| if last_norm > T::zero() { lp_norm(r, p) / last_norm } else { T::zero() };

    let mut rem: Vec<DiscreteFunction<T>> = u_seq.to_vec();
    let mut items: Vec<ProfileItem<T>> = Vec::new();
    let mut history = vec![relative(&rem[len - 1])];
    let mut incomplete = false;
    while items.len() < opts.max_profiles && history.last().copied().unwrap_or(T::zero()) >= opts.tol_remainder {
        let (scales, centers, class) = match action {
            Action::Dilation { gamma } => {
                let (s, c) = scan_dilations(&rem, gamma, window);
                (s, vec![T::zero(); len], c)
            }
            Action::Translation => (vec![0; len], scan_translations(&rem, opts.center_width), ProfileClass::N0),
        };
        let w = tail_average(action, &rem, &scales, &centers, Some(window));
        let norm_sq = space_norm_sq(&w);
        if !(norm_sq >= opts.floor * limsup) || norm_sq.is_zero() {
            incomplete = true;
            break;
        }
        for (k, r) in rem.iter_mut().enumerate() {
            *r = r.sub(&action.push(&w, scales[k], centers[k]));
        }
        items.push(ProfileItem { w, scales, centers, class, norm_sq });
        history.push(relative(&rem[len - 1]));
    }

    // Backfitting: each profile against the sequence minus all others.
    for _ in 0..opts.backfit {
        if items.len() < 2 {
            break;
        }
        for n in 0..items.len() {
            let partial: Vec<DiscreteFunction<T>> = (0..len)
                .into_par_iter()
                .map(|k| {
                    let mut r = u_seq[k].clone();
                    for (m, it) in items.iter().enumerate() {
                        if m != n {
                            r = r.sub(&action.push(&it.w, it.scales[k], it.centers[k]));
                        }
                    }
                    r
                })
                .collect();
            let it = &items[n];
            let w = tail_average(action, &partial, &it.scales, &it.centers, None);
            items[n].norm_sq = space_norm_sq(&w);
            items[n].w = w;
        }
    }
    if items.len() >= 2 {
        let mut r = u_seq[len - 1].clone();
        for it in &items {
            r = r.sub(&action.push(&it.w, it.scales[len - 1], it.centers[len - 1]));
        }
        history.push(relative(&r));
    }
    if history.last().copied().unwrap_or(T::zero()) >= opts.tol_remainder {
        incomplete = true;
    }
    // Compact profiles first: the weak limit of the sequence itself.
    items.sort_by_key(|it| match it.class {
        ProfileClass::N0 if it.centers.iter().all(|c| c.is_zero()) => 0,
        ProfileClass::N0 => 1,
        ProfileClass::Nplus => 2,
        ProfileClass::Nminus => 3,
    });
    let profiles = items.iter().map(|it| it.norm_sq).sum();
    Ok(Decomposition {
        items,
        remainder_l2star: history,
        exponent: p,
        energy_ledger: EnergyLedger { profiles, limsup },
        incomplete,
        gamma,
    })
}

/// `u_k - sum_n g_k^{(n)} w^{(n)}`.
pub fn reconstruct_remainder<T: Real>(
    u_seq: &[DiscreteFunction<T>],
    dec: &Decomposition<T>,
) -> Result<Vec<DiscreteFunction<T>>, DecompositionError> {
    let action = action_for(u_seq[0].grid(), dec.gamma)?;
    Ok(u_seq
        .iter()
        .enumerate()
        .map(|(k, u)| {
            dec.items.iter().fold(u.clone(), |r, it| r.sub(&action.push(&it.w, it.scales[k], it.centers[k])))
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Verification {
    pub norms_ok: bool,
    pub separation_ok: bool,
    pub remainder_ok: bool,
}

impl Verification {
    pub fn all(&self) -> bool {
        self.norms_ok && self.separation_ok && self.remainder_ok
    }
}

/// Separation `|j_n - j_m| + gamma^{j_n} |y_n - y_m|` of two schedules.
fn separation<T: Real>(gamma: T, a: &ProfileItem<T>, b: &ProfileItem<T>, k: usize) -> T {
    from_i32::<T>((a.scales[k] - b.scales[k]).abs()) + gamma.powi(a.scales[k]) * (a.centers[k] - b.centers[k]).abs()
}

/// Checks the norm inequality (3% slack), pairwise separation (strictly
/// increasing over the second half) and the final remainder.
pub fn verify_decomposition<T: Real>(
    u_seq: &[DiscreteFunction<T>],
    dec: &Decomposition<T>,
    tol_remainder: T,
) -> Result<Verification, DecompositionError> {
    let len = u_seq.len();
    let ledger = dec.energy_ledger;
    let norms_ok = ledger.profiles <= ledger.limsup * lit(1.03) + T::epsilon();
    let k0 = len / 2;
    let mut separation_ok = true;
    for (n, a) in dec.items.iter().enumerate() {
        for b in &dec.items[n + 1..] {
            for k in k0..len - 1 {
                if !(separation(dec.gamma, a, b, k + 1) > separation(dec.gamma, a, b, k)) {
                    separation_ok = false;
                }
            }
        }
    }
    let remainder_ok = if dec.items.is_empty() {
        dec.remainder_l2star.last().copied().unwrap_or(T::zero()) < tol_remainder
    } else {
        let rem = reconstruct_remainder(u_seq, dec)?;
        let p = dec.exponent;
        let base = lp_norm(&u_seq[len - 1], p);
        let r = lp_norm(&rem[len - 1], p);
        base.is_zero() || r / base < tol_remainder
    };
    Ok(Verification { norms_ok, separation_ok, remainder_ok })
}

/// Nonlinearities entering the splitting of `int F(u_k)`: `F` itself for
/// bounded profiles, its limits for escaping ones.
pub struct AsymptoticFamily<'a, T: Real> {
    pub base: &'a dyn Nonlinearity<T>,
    pub plus: Option<&'a dyn Nonlinearity<T>>,
    pub minus: Option<&'a dyn Nonlinearity<T>>,
    /// Limit along escaping centers.
    pub spatial: Option<&'a dyn Nonlinearity<T>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergySplit<T> {
    /// Mean of `int F(u_k)` over the last quarter.
    pub lhs: T,
    /// Sum over profiles of the integral of the matching limit.
    pub rhs: T,
    /// `|lhs - rhs| / |lhs|`.
    pub gap: T,
}

pub fn energy_split<T: Real>(
    family: &AsymptoticFamily<'_, T>,
    u_seq: &[DiscreteFunction<T>],
    dec: &Decomposition<T>,
) -> Result<EnergySplit<T>, DecompositionError> {
    let len = u_seq.len();
    let start = tail_start(len);
    let lhs = u_seq[start..].iter().map(|u| u.composite_integral(family.base)).sum::<T>() / from_usize::<T>(len - start);
    let mut rhs = T::zero();
    for it in &dec.items {
        let escaping = it.centers.iter().any(|c| !c.is_zero());
        let nl: &dyn Nonlinearity<T> = match it.class {
            ProfileClass::N0 if !escaping => family.base,
            ProfileClass::N0 => family.spatial.ok_or(DecompositionError::Uncertified(it.class))?,
            ProfileClass::Nplus => family.plus.ok_or(DecompositionError::Uncertified(it.class))?,
            ProfileClass::Nminus => family.minus.ok_or(DecompositionError::Uncertified(it.class))?,
        };
        rhs += it.w.composite_integral(nl);
    }
    let gap = if lhs.is_zero() { rhs.abs() } else { (lhs - rhs).abs() / lhs.abs() };
    Ok(EnergySplit { lhs, rhs, gap })
}

/// Group elements applied to the escaping copies in [`synth_multibump`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Schedule<T> {
    /// `j_k^{(n)}` per bump and element.
    Dilation { gamma: T, j: Vec<Vec<i32>> },
    /// `y_k^{(n)}` per bump and element.
    Translation { y: Vec<Vec<T>> },
}

impl<T: Real> Schedule<T> {
    /// `j_k^{(n)} = slopes[n] * k`.
    pub fn linear_dilation(gamma: T, slopes: &[i32], length: usize) -> Self {
        Schedule::Dilation { gamma, j: slopes.iter().map(|&s| (0..length as i32).map(|k| s * k).collect()).collect() }
    }

    /// `y_k^{(n)} = steps[n] * k`.
    pub fn linear_translation(steps: &[T], length: usize) -> Self {
        Schedule::Translation { y: steps.iter().map(|&s| (0..length).map(|k| s * from_usize::<T>(k)).collect()).collect() }
    }

    fn bumps(&self) -> usize {
        match self {
            Schedule::Dilation { j, .. } => j.len(),
            Schedule::Translation { y } => y.len(),
        }
    }
}

/// `u_k = w + sum_n g_k^{(n)} w_inf` for `k < length`.
pub fn synth_multibump<T: Real>(
    w: &DiscreteFunction<T>,
    w_inf: &DiscreteFunction<T>,
    schedule: &Schedule<T>,
    length: usize,
) -> Result<Vec<DiscreteFunction<T>>, DecompositionError> {
    if !Arc::ptr_eq(w.grid(), w_inf.grid()) && **w.grid() != **w_inf.grid() {
        return Err(DecompositionError::MixedGrids);
    }
    let lengths_ok = match schedule {
        Schedule::Dilation { j, .. } => j.iter().all(|s| s.len() >= length),
        Schedule::Translation { y } => y.iter().all(|s| s.len() >= length),
    };
    if !lengths_ok {
        return Err(DecompositionError::InvalidArgument("schedule shorter than the sequence".into()));
    }
    let action = match schedule {
        Schedule::Dilation { gamma, .. } => {
            if !w.grid().is_radial() {
                return Err(DecompositionError::InvalidArgument("dilation schedules need a radial grid".into()));
            }
            Action::Dilation { gamma: *gamma }
        }
        Schedule::Translation { .. } => {
            if w.grid().is_radial() {
                return Err(DecompositionError::InvalidArgument("translation schedules need a line grid".into()));
            }
            Action::Translation
        }
    };
    let base = space_norm_sq(w_inf);
    let mut out = Vec::with_capacity(length);
    for k in 0..length {
        let mut u = w.clone();
        for n in 0..schedule.bumps() {
            let (j, y) = match schedule {
                Schedule::Dilation { j, .. } => (j[n][k], T::zero()),
                Schedule::Translation { y } => (0, y[n][k]),
            };
            let copy = action.push(w_inf, j, y);
            let kept = space_norm_sq(&copy);
            if base > T::zero() && (kept - base).abs() > lit::<T>(0.01) * base {
                let lost = crate::scalar::to_f64((base - kept) / base * lit(100.0));
                return Err(DecompositionError::ScheduleOutOfRange { k, lost });
            }
            u = u.add(&copy);
        }
        out.push(u);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::function_space::DomainKind;
    use crate::nonlinearity::{Kind, NonlinearitySpec};

    fn radial4() -> Arc<Grid<f64>> {
        Arc::new(Grid::radial_geometric(4, 1e-6, 1e3, 2f64.powf(1.0 / 16.0), DomainKind::WholeSpaceTruncated).unwrap())
    }

    fn talenti(grid: &Arc<Grid<f64>>, width: f64, amp: f64) -> DiscreteFunction<f64> {
        DiscreteFunction::from_fn(Arc::clone(grid), |r| amp / (1.0 + (r / width).powi(2)))
    }

    fn rel_l2(a: &DiscreteFunction<f64>, b: &DiscreteFunction<f64>) -> f64 {
        (a.sub(b).dirichlet_seminorm_sq() / b.dirichlet_seminorm_sq()).sqrt()
    }

    #[test]
    fn constant_sequence_gives_one_compact_profile() {
        let grid = radial4();
        let w = talenti(&grid, 1.0, 1.0);
        let seq = synth_multibump(&w, &w, &Schedule::linear_dilation(2.0, &[], 10), 10).unwrap();
        let dec = decompose(&seq, 2.0, &DecomposeOptions::default()).unwrap();
        assert_eq!(dec.items.len(), 1);
        assert_eq!(dec.items[0].class, ProfileClass::N0);
        assert!(dec.items[0].scales.iter().all(|&j| j == 0));
        let err = (dec.items[0].w.sub(&w).l2_norm_sq() / w.l2_norm_sq()).sqrt();
        assert!(err < 0.02, "{err}");
        assert!(*dec.remainder_l2star.last().unwrap() < 1e-3);
        let stem = NonlinearitySpec::new(4, 2.0, Kind::CriticalStem).unwrap();
        let fam = AsymptoticFamily { base: &stem, plus: None, minus: None, spatial: None };
        let split = energy_split(&fam, &seq, &dec).unwrap();
        let direct = w.composite_integral(&stem);
        assert!((split.lhs - direct).abs() < 0.02 * direct.abs());
        assert!(split.gap < 0.02);
    }

    #[test]
    fn planted_concentrating_bump() {
        let grid = radial4();
        let w = talenti(&grid, 4.0, 0.5);
        let w_inf = talenti(&grid, 1.0, 1.0);
        let seq = synth_multibump(&w, &w_inf, &Schedule::linear_dilation(2.0, &[1], 12), 12).unwrap();
        let dec = decompose(&seq, 2.0, &DecomposeOptions::default()).unwrap();
        assert_eq!(dec.items.len(), 2, "{:?}", dec.remainder_l2star);
        assert_eq!(dec.items[0].class, ProfileClass::N0);
        assert_eq!(dec.items[1].class, ProfileClass::Nplus);
        assert!(rel_l2(&dec.items[0].w, &w) < 0.05);
        let offset = dec.items[1].scales[11] - 11;
        assert!(rel_l2(&dec.items[1].w.unitary_dilate(2.0, offset), &w_inf) < 0.05);
        let planted = space_norm_sq(&w) + space_norm_sq(&w_inf);
        assert!((dec.energy_ledger.profiles - planted).abs() < 0.05 * planted);
        let v = verify_decomposition(&seq, &dec, 0.05).unwrap();
        assert!(v.all(), "{v:?}");
        assert!(!dec.incomplete);
    }

    #[test]
    fn asymptotic_orthogonality_of_norms() {
        let grid = radial4();
        let w = talenti(&grid, 4.0, 0.5);
        let w_inf = talenti(&grid, 1.0, 1.0);
        let seq = synth_multibump(&w, &w_inf, &Schedule::linear_dilation(2.0, &[1], 10), 10).unwrap();
        let target = space_norm_sq(&w) + space_norm_sq(&w_inf);
        for u in &seq[6..] {
            assert!((space_norm_sq(u) - target).abs() < 0.03 * target);
        }
    }

    #[test]
    fn two_escaping_bumps_give_three_profiles() {
        let grid = radial4();
        let w = talenti(&grid, 4.0, 0.5);
        let w_inf = talenti(&grid, 0.5, 1.0);
        let seq = synth_multibump(&w, &w_inf, &Schedule::linear_dilation(2.0, &[1, 2], 10), 10).unwrap();
        let dec = decompose(&seq, 2.0, &DecomposeOptions::default()).unwrap();
        assert_eq!(dec.items.len(), 3, "{:?}", dec.remainder_l2star);
        let plus = dec.items.iter().filter(|i| i.class == ProfileClass::Nplus).count();
        assert_eq!(plus, 2);
        assert!(verify_decomposition(&seq, &dec, 0.05).unwrap().all());
    }

    #[test]
    fn merged_schedules_are_not_separated() {
        let grid = radial4();
        let w = talenti(&grid, 1.0, 1.0);
        let seq = synth_multibump(&w, &w, &Schedule::linear_dilation(2.0, &[], 8), 8).unwrap();
        let mut dec = decompose(&seq, 2.0, &DecomposeOptions::default()).unwrap();
        let copy = dec.items[0].clone();
        dec.items.push(copy);
        assert!(!verify_decomposition(&seq, &dec, 0.05).unwrap().separation_ok);
    }

    #[test]
    fn zero_sequence_is_vacuously_fine() {
        let grid = radial4();
        let seq = vec![DiscreteFunction::zeros(Arc::clone(&grid)); 8];
        let dec = decompose(&seq, 2.0, &DecomposeOptions::default()).unwrap();
        assert!(dec.items.is_empty());
        assert!(verify_decomposition(&seq, &dec, 0.05).unwrap().all());
    }

    #[test]
    fn translating_bump_on_a_line() {
        let grid = Arc::new(Grid::line(40.0, 0.05).unwrap());
        let w = DiscreteFunction::from_fn(Arc::clone(&grid), |x: f64| 1.0 / x.cosh());
        let zero = DiscreteFunction::zeros(Arc::clone(&grid));
        let seq = synth_multibump(&zero, &w, &Schedule::linear_translation(&[3.0], 10), 10).unwrap();
        let dec = decompose(&seq, 2.0, &DecomposeOptions::default()).unwrap();
        assert_eq!(dec.items.len(), 1);
        let it = &dec.items[0];
        assert_eq!(it.class, ProfileClass::N0);
        assert!((slope(&it.centers) - 3.0).abs() < 1e-9);
        assert!(*dec.remainder_l2star.last().unwrap() < 0.05);
    }

    #[test]
    fn dilation_equivariance() {
        let grid = radial4();
        let w = talenti(&grid, 4.0, 0.5);
        let w_inf = talenti(&grid, 1.0, 1.0);
        let seq = synth_multibump(&w, &w_inf, &Schedule::linear_dilation(2.0, &[1], 12), 12).unwrap();
        let moved: Vec<_> = seq.iter().map(|u| u.unitary_dilate(2.0, 1)).collect();
        let a = decompose(&seq, 2.0, &DecomposeOptions::default()).unwrap();
        let b = decompose(&moved, 2.0, &DecomposeOptions::default()).unwrap();
        assert_eq!(a.items.len(), b.items.len());
        // N0 keeps j = 0 by convention, so its profile moves instead.
        assert!(rel_l2(&b.items[0].w, &a.items[0].w.unitary_dilate(2.0, 1)) < 0.02);
        let (pa, pb) = (&a.items[1], &b.items[1]);
        for k in 6..12 {
            assert_eq!(pb.scales[k], pa.scales[k] + 1);
        }
        assert!(rel_l2(&pb.w, &pa.w) < 0.02);
    }

    #[test]
    fn energy_split_for_stem_and_subcritical_power() {
        let grid = radial4();
        let w = talenti(&grid, 4.0, 0.5);
        let w_inf = talenti(&grid, 1.0, 1.0);
        let seq = synth_multibump(&w, &w_inf, &Schedule::linear_dilation(2.0, &[1], 12), 12).unwrap();
        let dec = decompose(&seq, 2.0, &DecomposeOptions::default()).unwrap();
        let stem = NonlinearitySpec::new(4, 2.0, Kind::CriticalStem).unwrap();
        let fam = AsymptoticFamily { base: &stem, plus: Some(&stem), minus: Some(&stem), spatial: None };
        let split = energy_split(&fam, &seq, &dec).unwrap();
        assert!(split.gap < 0.05, "{split:?}");

        let power = NonlinearitySpec::new(4, 2.0, Kind::Power { p: 3.0, scale: 1.0 }).unwrap();
        let zero = NonlinearitySpec::new(4, 2.0, Kind::Power { p: 3.0, scale: 0.0 }).unwrap();
        let fam = AsymptoticFamily { base: &power, plus: Some(&zero), minus: None, spatial: None };
        let split = energy_split(&fam, &seq, &dec).unwrap();
        assert!(split.gap < 0.05, "{split:?}");
        let fam = AsymptoticFamily { base: &power, plus: None, minus: None, spatial: None };
        assert!(matches!(energy_split(&fam, &seq, &dec), Err(DecompositionError::Uncertified(ProfileClass::Nplus))));
    }

    #[test]
    fn short_or_unbounded_sequences_are_rejected() {
        let grid = radial4();
        let w = talenti(&grid, 1.0, 1.0);
        assert!(matches!(decompose(&vec![w.clone(); 5], 2.0, &DecomposeOptions::default()), Err(DecompositionError::TooShort(5))));
        let growing: Vec<_> = (0..10).map(|k| w.scaled(3f64.powi(k))).collect();
        assert!(matches!(decompose(&growing, 2.0, &DecomposeOptions::default()), Err(DecompositionError::Unbounded { .. })));
    }

    #[test]
    fn schedule_beyond_the_grid_is_rejected() {
        let grid = Arc::new(Grid::radial_geometric(4, 1e-2, 10.0, 2f64.powf(1.0 / 8.0), DomainKind::WholeSpaceTruncated).unwrap());
        let w = talenti(&grid, 1.0, 1.0);
        let r = synth_multibump(&w, &w, &Schedule::linear_dilation(2.0, &[1], 12), 12);
        assert!(matches!(r, Err(DecompositionError::ScheduleOutOfRange { .. })));
    }

    use proptest::prelude::*;

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(8))]

        #[test]
        fn planted_norms_are_recovered(a in 0.3f64..1.0, w in 1.0f64..4.0, b in 0.5f64..1.5) {
            let grid = radial4();
            let base = talenti(&grid, w, a);
            let bump = talenti(&grid, 1.0, b);
            let seq = synth_multibump(&base, &bump, &Schedule::linear_dilation(2.0, &[1], 12), 12).unwrap();
            let dec = decompose(&seq, 2.0, &DecomposeOptions::default()).unwrap();
            prop_assert_eq!(dec.items.len(), 2);
            let total = space_norm_sq(&base) + space_norm_sq(&bump);
            prop_assert!(dec.energy_ledger.profiles <= dec.energy_ledger.limsup * 1.03);
            prop_assert!((dec.energy_ledger.profiles - total).abs() <= 0.05 * total);
        }
    }
}
