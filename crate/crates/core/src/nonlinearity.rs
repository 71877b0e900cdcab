//! Nonlinearities `F(x, s)` with their derivatives `f = dF/ds`, the discrete
//! dilation rescaling, asymptotic limits and the structural checks (growth,
//! Ambrosetti–Rabinowitz, selfsimilarity) the solvers rely on.
//!
//! The spatial argument `x` is a scalar: the radius `|x|` on radial grids and
//! the coordinate on line grids. Every kind shipped here is radial in `x`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::{critical_exponent, from_i32, from_usize, lit, Real};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NonlinearityError {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },
    #[error("the critical exponent 2* requires dimension N >= 3, got N = {0}")]
    DimensionTooSmall(usize),
    #[error("rescaling out of range: j = {j}, s = {s:e}")]
    OutOfRange { j: i32, s: f64 },
    #[error("Ambrosetti–Rabinowitz constant must exceed 2, got {0}")]
    InvalidMu(f64),
}

/// A nonlinearity `F(x, s)` together with `f(x, s) = dF/ds`.
pub trait Nonlinearity<T: Real>: Send + Sync {
    /// Space dimension `N`.
    fn dim(&self) -> usize;
    /// Dilation factor `gamma > 1` of the group the problem is posed with.
    fn gamma(&self) -> T;
    /// `F(x, s)`.
    fn primitive(&self, x: T, s: T) -> T;
    /// `f(x, s)`.
    fn derivative(&self, x: T, s: T) -> T;
    fn is_autonomous(&self) -> bool;

    /// `gamma^{-Nj} F(gamma^{-j} x, gamma^{(N-2)j/2} s)`.
    ///
    /// The family is invariant for the critical stem and tends to `F_+`
    /// (`j -> +inf`) and `F_-` (`j -> -inf`).
    fn rescaled(&self, j: i32, x: T, s: T) -> Result<T, NonlinearityError> {
        rescale_with(self, self.gamma(), j, x, s)
    }
}

impl<T: Real, N: Nonlinearity<T> + ?Sized> Nonlinearity<T> for &N {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn gamma(&self) -> T {
        (**self).gamma()
    }
    fn primitive(&self, x: T, s: T) -> T {
        (**self).primitive(x, s)
    }
    fn derivative(&self, x: T, s: T) -> T {
        (**self).derivative(x, s)
    }
    fn is_autonomous(&self) -> bool {
        (**self).is_autonomous()
    }
}

impl<T: Real, N: Nonlinearity<T> + ?Sized> Nonlinearity<T> for Box<N> {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn gamma(&self) -> T {
        (**self).gamma()
    }
    fn primitive(&self, x: T, s: T) -> T {
        (**self).primitive(x, s)
    }
    fn derivative(&self, x: T, s: T) -> T {
        (**self).derivative(x, s)
    }
    fn is_autonomous(&self) -> bool {
        (**self).is_autonomous()
    }
}

/// Dilation rescaling with an explicit factor (see [`Nonlinearity::rescaled`]).
pub fn rescale_with<T: Real, N: Nonlinearity<T> + ?Sized>(
    nl: &N,
    gamma: T,
    j: i32,
    x: T,
    s: T,
) -> Result<T, NonlinearityError> {
    let n = from_usize::<T>(nl.dim());
    let jj = from_i32::<T>(j);
    let half = lit::<T>(0.5);
    let amp = gamma.powf((n - T::from(2).unwrap()) * half * jj);
    let weight = gamma.powf(-n * jj);
    let shrink = gamma.powf(-jj);
    let out_of_range = || NonlinearityError::OutOfRange { j, s: s.to_f64().unwrap_or(f64::NAN) };
    if !amp.is_finite() || !weight.is_finite() || !shrink.is_finite() {
        return Err(out_of_range());
    }
    if amp.is_zero() || weight.is_zero() {
        return Err(out_of_range());
    }
    let v = weight * nl.primitive(shrink * x, amp * s);
    if v.is_finite() {
        Ok(v)
    } else {
        Err(out_of_range())
    }
}

/// `a^p` for `a >= 0`, through `powi` when `p` is a small integer.
#[inline]
fn pow_abs<T: Real>(a: T, p: T) -> T {
    if p == p.round() && p.abs() <= lit(32.0) {
        a.powi(p.to_i32().unwrap_or(0))
    } else {
        a.powf(p)
    }
}

fn one<T: Real>() -> T {
    T::one()
}

/// Radial envelope multiplying a base nonlinearity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case")]
pub enum Envelope<T> {
    /// `1 + amplitude * exp(-|x|^2 / width^2)`.
    Gaussian { amplitude: T, width: T },
}

impl<T: Real> Envelope<T> {
    pub fn factor(&self, x: T) -> T {
        match *self {
            Envelope::Gaussian { amplitude, width } => {
                let z = x / width;
                T::one() + amplitude * (-z * z).exp()
            }
        }
    }
}

/// Selfsimilar nonlinearity given by samples of `F` over one period.
///
/// Samples are taken at `sigma_i = rho^{i/n}`, `i = 0..n`, with
/// `rho = factor^{(N-2)/2}` the amplitude step of one unitary dilation; a
/// second set covers `-sigma_i`. Outside the period `F` is extended by
/// `F(s) = factor^{-Nj} F(factor^{(N-2)j/2} s)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelfsimilarTable<T> {
    pub factor: T,
    pub positive: Vec<T>,
    pub negative: Vec<T>,
}

impl<T: Real> SelfsimilarTable<T> {
    /// Samples `F` on both fundamental intervals.
    pub fn sample<N: Nonlinearity<T> + ?Sized>(nl: &N, factor: T, samples: usize) -> Self {
        let rho = Self::period_ratio(nl.dim(), factor);
        let node = |i: usize| rho.powf(from_usize::<T>(i) / from_usize::<T>(samples));
        let positive = (0..samples).map(|i| nl.primitive(T::zero(), node(i))).collect();
        let negative = (0..samples).map(|i| nl.primitive(T::zero(), -node(i))).collect();
        Self { factor, positive, negative }
    }

    fn period_ratio(dim: usize, factor: T) -> T {
        factor.powf(from_usize::<T>(dim - 2) * lit(0.5))
    }

    /// Periodic profile `P(theta) = F(rho^theta) / rho^{2* theta}` and its
    /// theta-derivative, by periodic Catmull–Rom interpolation.
    fn profile(&self, dim: usize, negative: bool, theta: T) -> (T, T) {
        let data = if negative { &self.negative } else { &self.positive };
        let n = data.len();
        let crit = critical_exponent::<T>(dim).expect("validated dimension");
        let rho = Self::period_ratio(dim, self.factor);
        let p = |i: isize| {
            let k = i.rem_euclid(n as isize) as usize;
            let sigma = rho.powf(from_usize::<T>(k) / from_usize::<T>(n));
            data[k] / sigma.powf(crit)
        };
        let t = (theta - theta.floor()) * from_usize::<T>(n);
        let i0 = t.floor();
        let u = t - i0;
        let i = i0.to_isize().unwrap_or(0);
        let (p0, p1, p2, p3) = (p(i - 1), p(i), p(i + 1), p(i + 2));
        let half = lit::<T>(0.5);
        let m1 = (p2 - p0) * half;
        let m2 = (p3 - p1) * half;
        let u2 = u * u;
        let u3 = u2 * u;
        let two = lit::<T>(2.0);
        let three = lit::<T>(3.0);
        let h00 = two * u3 - three * u2 + T::one();
        let h10 = u3 - two * u2 + u;
        let h01 = -two * u3 + three * u2;
        let h11 = u3 - u2;
        let value = h00 * p1 + h10 * m1 + h01 * p2 + h11 * m2;
        let dh00 = lit::<T>(6.0) * (u2 - u);
        let dh10 = three * u2 - lit::<T>(4.0) * u + T::one();
        let dh01 = -dh00;
        let dh11 = three * u2 - two * u;
        let slope = (dh00 * p1 + dh10 * m1 + dh01 * p2 + dh11 * m2) * from_usize::<T>(n);
        (value, slope)
    }

    fn eval(&self, dim: usize, s: T) -> (T, T) {
        if s.is_zero() {
            return (T::zero(), T::zero());
        }
        let crit = critical_exponent::<T>(dim).expect("validated dimension");
        let rho = Self::period_ratio(dim, self.factor);
        let a = s.abs();
        let theta = a.ln() / rho.ln();
        let (p, dp) = self.profile(dim, s < T::zero(), theta);
        let big = a.powf(crit);
        let f = a.powf(crit - lit(2.0)) * s * (crit * p + dp / rho.ln());
        (big * p, f)
    }
}

/// The nonlinearity families known to the toolkit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
#[serde(bound(deserialize = "T: Real + Deserialize<'de>"))]
pub enum Kind<T> {
    /// `scale * |s|^p`, `p > 2`.
    Power {
        p: T,
        #[serde(default = "one")]
        scale: T,
    },
    /// `|s|^{2*}`.
    CriticalStem,
    /// `|s|^{2*} (1 + eps sin(2 pi ln|s| / ln factor))`, selfsimilar with `factor`.
    OscillatingStem { eps: T, factor: T },
    /// `height * sin^4(pi t)`, `t = (|s| - lo)/(hi - lo)` on `[lo, hi]`, zero elsewhere.
    SBump { lo: T, hi: T, height: T },
    /// `envelope(|x|) * base(s)`.
    SpatialModulation { base: Box<Kind<T>>, envelope: Envelope<T> },
    Sum { terms: Vec<Kind<T>> },
    TableSelfsimilar(SelfsimilarTable<T>),
}

fn invalid<T: Real>(name: &'static str, reason: impl Into<String>) -> Result<T, NonlinearityError> {
    Err(NonlinearityError::InvalidParameter { name, reason: reason.into() })
}

impl<T: Real> Kind<T> {
    pub fn validate(&self, dim: usize) -> Result<(), NonlinearityError> {
        match self {
            Kind::Power { p, scale } => {
                if !(*p > lit(2.0)) {
                    invalid::<T>("p", format!("power exponent must exceed 2, got {p}"))?;
                }
                if !scale.is_finite() {
                    invalid::<T>("scale", "must be finite")?;
                }
            }
            Kind::CriticalStem => {
                if dim < 3 {
                    return Err(NonlinearityError::DimensionTooSmall(dim));
                }
            }
            Kind::OscillatingStem { eps, factor } => {
                if dim < 3 {
                    return Err(NonlinearityError::DimensionTooSmall(dim));
                }
                if !(*eps >= T::zero() && *eps < T::one()) {
                    invalid::<T>("eps", format!("must lie in [0, 1), got {eps}"))?;
                }
                if !(*factor > T::one()) {
                    invalid::<T>("factor", format!("must exceed 1, got {factor}"))?;
                }
            }
            Kind::SBump { lo, hi, height } => {
                if !(*lo > T::zero() && *hi > *lo) {
                    invalid::<T>("lo/hi", "need 0 < lo < hi")?;
                }
                if !height.is_finite() {
                    invalid::<T>("height", "must be finite")?;
                }
            }
            Kind::SpatialModulation { base, envelope } => {
                base.validate(dim)?;
                let Envelope::Gaussian { amplitude, width } = envelope;
                if !(*width > T::zero()) {
                    invalid::<T>("width", "must be positive")?;
                }
                if !(*amplitude > -T::one()) {
                    invalid::<T>("amplitude", "must exceed -1 to keep the envelope positive")?;
                }
            }
            Kind::Sum { terms } => {
                if terms.is_empty() {
                    invalid::<T>("terms", "a sum needs at least one term")?;
                }
                for t in terms {
                    t.validate(dim)?;
                }
            }
            Kind::TableSelfsimilar(table) => {
                if dim < 3 {
                    return Err(NonlinearityError::DimensionTooSmall(dim));
                }
                if !(table.factor > T::one()) {
                    invalid::<T>("factor", "must exceed 1")?;
                }
                if table.positive.len() < 4 || table.negative.len() < 4 {
                    invalid::<T>("samples", "need at least 4 samples per sign")?;
                }
                if table.positive.iter().chain(&table.negative).any(|v| !v.is_finite()) {
                    invalid::<T>("samples", "must be finite")?;
                }
            }
        }
        Ok(())
    }

    pub fn is_autonomous(&self) -> bool {
        match self {
            Kind::SpatialModulation { .. } => false,
            Kind::Sum { terms } => terms.iter().all(Kind::is_autonomous),
            _ => true,
        }
    }

    fn crit(dim: usize) -> T {
        critical_exponent::<T>(dim).expect("validated dimension")
    }

    pub fn primitive(&self, dim: usize, x: T, s: T) -> T {
        match self {
            Kind::Power { p, scale } => *scale * pow_abs(s.abs(), *p),
            Kind::CriticalStem => pow_abs(s.abs(), Self::crit(dim)),
            Kind::OscillatingStem { eps, factor } => {
                if s.is_zero() {
                    return T::zero();
                }
                let a = s.abs();
                let theta = T::TAU() * a.ln() / factor.ln();
                pow_abs(a, Self::crit(dim)) * (T::one() + *eps * theta.sin())
            }
            Kind::SBump { lo, hi, height } => {
                let a = s.abs();
                if a <= *lo || a >= *hi {
                    return T::zero();
                }
                let sn = (T::PI() * (a - *lo) / (*hi - *lo)).sin();
                *height * sn.powi(4)
            }
            Kind::SpatialModulation { base, envelope } => envelope.factor(x) * base.primitive(dim, x, s),
            Kind::Sum { terms } => terms.iter().map(|t| t.primitive(dim, x, s)).sum(),
            Kind::TableSelfsimilar(table) => table.eval(dim, s).0,
        }
    }

    pub fn derivative(&self, dim: usize, x: T, s: T) -> T {
        match self {
            Kind::Power { p, scale } => {
                if s.is_zero() {
                    return T::zero();
                }
                *scale * *p * pow_abs(s.abs(), *p - lit(2.0)) * s
            }
            Kind::CriticalStem => {
                if s.is_zero() {
                    return T::zero();
                }
                let c = Self::crit(dim);
                c * pow_abs(s.abs(), c - lit(2.0)) * s
            }
            Kind::OscillatingStem { eps, factor } => {
                if s.is_zero() {
                    return T::zero();
                }
                let c = Self::crit(dim);
                let a = s.abs();
                let k = T::TAU() / factor.ln();
                let theta = k * a.ln();
                pow_abs(a, c - lit(2.0)) * s * (c * (T::one() + *eps * theta.sin()) + *eps * k * theta.cos())
            }
            Kind::SBump { lo, hi, height } => {
                let a = s.abs();
                if a <= *lo || a >= *hi {
                    return T::zero();
                }
                let w = *hi - *lo;
                let arg = T::PI() * (a - *lo) / w;
                let d = *height * lit(4.0) * arg.sin().powi(3) * arg.cos() * T::PI() / w;
                if s < T::zero() {
                    -d
                } else {
                    d
                }
            }
            Kind::SpatialModulation { base, envelope } => envelope.factor(x) * base.derivative(dim, x, s),
            Kind::Sum { terms } => terms.iter().map(|t| t.derivative(dim, x, s)).sum(),
            Kind::TableSelfsimilar(table) => table.eval(dim, s).1,
        }
    }
}

/// A validated nonlinearity: kind, dimension and dilation factor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(deserialize = "T: Real + Deserialize<'de>"))]
pub struct NonlinearitySpec<T> {
    dim: usize,
    gamma: T,
    kind: Kind<T>,
}

impl<T: Real> NonlinearitySpec<T> {
    pub fn new(dim: usize, gamma: T, kind: Kind<T>) -> Result<Self, NonlinearityError> {
        if dim == 0 {
            invalid::<T>("dim", "dimension must be positive")?;
        }
        if !(gamma > T::one()) {
            invalid::<T>("gamma", format!("dilation factor must exceed 1, got {gamma}"))?;
        }
        kind.validate(dim)?;
        Ok(Self { dim, gamma, kind })
    }

    pub fn kind(&self) -> &Kind<T> {
        &self.kind
    }

    /// `2*`, when defined.
    pub fn critical_exponent(&self) -> Option<T> {
        critical_exponent(self.dim)
    }
}

impl<T: Real> Nonlinearity<T> for NonlinearitySpec<T> {
    fn dim(&self) -> usize {
        self.dim
    }
    fn gamma(&self) -> T {
        self.gamma
    }
    fn primitive(&self, x: T, s: T) -> T {
        self.kind.primitive(self.dim, x, s)
    }
    fn derivative(&self, x: T, s: T) -> T {
        self.kind.derivative(self.dim, x, s)
    }
    fn is_autonomous(&self) -> bool {
        self.kind.is_autonomous()
    }
}

/// Evaluates the selfsimilar extension of samples over one period at `s`.
pub fn selfsimilar_extend<T: Real>(dim: usize, table: &SelfsimilarTable<T>, s: T) -> T {
    table.eval(dim, s).0
}

/// Which asymptotic limit to take.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    /// Concentration, `j -> +inf`: governs large `|s|`.
    Plus,
    /// Spreading, `j -> -inf`: governs small `|s|`.
    Minus,
    /// Translation to spatial infinity, `|x| -> inf`.
    Spatial,
}

impl Direction {
    pub fn label(self) -> &'static str {
        match self {
            Direction::Plus => "plus",
            Direction::Minus => "minus",
            Direction::Spatial => "zero",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AsymptoticError {
    #[error("asymptotic limit ({direction:?}) diverges at s = {s:e} (last value {last:e})")]
    Divergent { direction: Direction, s: f64, last: f64 },
    #[error("asymptotic limit ({direction:?}) did not stabilize at s = {s:e} within {steps} steps")]
    Uncertified { direction: Direction, s: f64, steps: usize },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LimitValue<T> {
    pub value: T,
    pub certified: bool,
    /// Number of rescaling steps taken (|j|, or the spatial doubling index).
    pub steps: usize,
}

/// Default stopping rule for [`asymptotic_limit`].
pub const LIMIT_TOL: f64 = 1e-9;
pub const LIMIT_MAX_STEPS: usize = 60;
/// Rescaled amplitudes (or spatial distances) must have left `[1/A, A]`
/// before stabilization counts; otherwise the iteration can settle before it
/// reaches structure of `F` at moderate `|s|`.
pub const LIMIT_ONSET: f64 = 1e4;

/// First index at which the rescaled argument has left `[1/A, A]`.
fn onset<T: Real>(dim: usize, gamma: T, direction: Direction, s: T) -> usize {
    let a = lit::<T>(LIMIT_ONSET);
    if direction == Direction::Spatial {
        return a.log2().ceil().to_usize().unwrap_or(0);
    }
    if s.is_zero() {
        return 0;
    }
    // One step multiplies the amplitude by rho = gamma^{(N-2)/2} (Plus) or 1/rho (Minus).
    let mut lr = (from_usize::<T>(dim) - lit(2.0)) * lit(0.5) * gamma.ln();
    if direction == Direction::Minus {
        lr = -lr;
    }
    let ls = s.abs().ln();
    let needed = if lr > T::zero() {
        (a.ln() - ls) / lr
    } else if lr < T::zero() {
        (a.ln() + ls) / (-lr)
    } else {
        T::zero()
    };
    needed.max(T::zero()).ceil().to_usize().unwrap_or(0)
}

/// Term of the rescaled family at absolute index `step`.
fn limit_term<T: Real, N: Nonlinearity<T> + ?Sized>(
    nl: &N,
    direction: Direction,
    step: usize,
    x: T,
    s: T,
) -> Result<T, NonlinearityError> {
    match direction {
        Direction::Plus => nl.rescaled(step as i32, x, s),
        Direction::Minus => nl.rescaled(-(step as i32), x, s),
        Direction::Spatial => {
            let far = lit::<T>(2.0).powi(step as i32);
            let v = nl.primitive(x + far, s);
            if v.is_finite() {
                Ok(v)
            } else {
                Err(NonlinearityError::OutOfRange { j: step as i32, s: s.to_f64().unwrap_or(f64::NAN) })
            }
        }
    }
}

/// Iterates the rescaled values of `F` at `(x, s)`, from the onset index on,
/// until three successive values agree to `tol` (relative to the largest
/// magnitude seen).
///
/// Returns `certified = false` when `max_steps` is reached without
/// stabilization, and an error when the values grow without bound.
pub fn asymptotic_limit<T: Real, N: Nonlinearity<T> + ?Sized>(
    nl: &N,
    direction: Direction,
    x: T,
    s: T,
    tol: T,
    max_steps: usize,
) -> Result<LimitValue<T>, AsymptoticError> {
    let sf = s.to_f64().unwrap_or(f64::NAN);
    let start = onset(nl.dim(), nl.gamma(), direction, s);
    let first = limit_term(nl, direction, start, x, s)
        .map_err(|_| AsymptoticError::Divergent { direction, s: sf, last: f64::INFINITY })?;
    let tiny = T::min_positive_value() * lit(1e10);
    let mut history = vec![first];
    let mut scale = first.abs().max(tiny);
    for step in 1..=max_steps {
        let v = match limit_term(nl, direction, start + step, x, s) {
            Ok(v) => v,
            Err(_) => {
                let last = *history.last().unwrap();
                return Err(AsymptoticError::Divergent { direction, s: sf, last: last.to_f64().unwrap_or(f64::NAN) });
            }
        };
        scale = scale.max(v.abs());
        history.push(v);
        let k = history.len();
        if k >= 3 {
            let d1 = (history[k - 1] - history[k - 2]).abs();
            let d2 = (history[k - 2] - history[k - 3]).abs();
            if d1 <= tol * scale && d2 <= tol * scale {
                return Ok(LimitValue { value: v, certified: true, steps: step });
            }
        }
    }
    let last = *history.last().unwrap();
    let k = history.len();
    let growing = history[k.saturating_sub(6)..].windows(2).all(|w| w[1].abs() > w[0].abs());
    if growing && last.abs() > lit::<T>(1e6) * first.abs().max(tiny) {
        return Err(AsymptoticError::Divergent { direction, s: sf, last: last.to_f64().unwrap_or(f64::NAN) });
    }
    Ok(LimitValue { value: last, certified: false, steps: max_steps })
}

/// The asymptotic nonlinearity `F_+`, `F_-` or `F_0`: the rescaled family
/// evaluated a certified number of steps past the onset index of each `s`.
#[derive(Debug, Clone)]
pub struct AsymptoticLimit<N> {
    base: N,
    direction: Direction,
    steps: usize,
    zero: bool,
}

impl<N> AsymptoticLimit<N> {
    pub fn direction(&self) -> Direction {
        self.direction
    }
    /// True when the limit vanishes identically on the certification sample.
    pub fn is_zero(&self) -> bool {
        self.zero
    }
    pub fn steps(&self) -> usize {
        self.steps
    }
    pub fn base(&self) -> &N {
        &self.base
    }
}

impl<N> AsymptoticLimit<N> {
    fn index<T: Real>(&self, s: T) -> usize
    where
        N: Nonlinearity<T>,
    {
        onset(self.base.dim(), self.base.gamma(), self.direction, s) + self.steps
    }
}

impl<N> AsymptoticLimit<N> {
    /// Certifies the limit at every sample of `sample` and freezes the largest
    /// index needed.
    pub fn certify<T: Real>(base: N, direction: Direction, sample: &SampleBox<T>, tol: T) -> Result<Self, AsymptoticError>
    where
        N: Nonlinearity<T>,
    {
        let mut steps = 0;
        let mut zero = true;
        let mut scale = T::zero();
        let mut values = Vec::new();
        for &x in &sample.x_values() {
            for s in sample.s_values() {
                let lv = asymptotic_limit(&base, direction, x, s, tol, LIMIT_MAX_STEPS)?;
                if !lv.certified {
                    return Err(AsymptoticError::Uncertified { direction, s: s.to_f64().unwrap_or(f64::NAN), steps: lv.steps });
                }
                steps = steps.max(lv.steps);
                scale = scale.max(base.primitive(x, s).abs());
                values.push(lv.value);
            }
        }
        for v in values {
            if v.abs() > tol * scale.max(T::one()) {
                zero = false;
            }
        }
        Ok(Self { base, direction, steps, zero })
    }
}

impl<T: Real, N: Nonlinearity<T>> Nonlinearity<T> for AsymptoticLimit<N> {
    fn dim(&self) -> usize {
        self.base.dim()
    }
    fn gamma(&self) -> T {
        self.base.gamma()
    }
    fn primitive(&self, x: T, s: T) -> T {
        if self.zero {
            return T::zero();
        }
        limit_term(&self.base, self.direction, self.index(s), x, s).unwrap_or_else(|_| T::nan())
    }
    fn derivative(&self, x: T, s: T) -> T {
        if self.zero {
            return T::zero();
        }
        let gamma = self.base.gamma();
        let n = from_usize::<T>(self.base.dim());
        match self.direction {
            Direction::Spatial => {
                let far = lit::<T>(2.0).powi(self.index(s) as i32);
                self.base.derivative(x + far, s)
            }
            Direction::Plus | Direction::Minus => {
                let k = self.index(s) as i32;
                let j = if self.direction == Direction::Plus { k } else { -k };
                let jj = from_i32::<T>(j);
                let half = lit::<T>(0.5);
                let amp = gamma.powf((n - lit(2.0)) * half * jj);
                let weight = gamma.powf(-(n + lit(2.0)) * half * jj);
                weight * self.base.derivative(gamma.powf(-jj) * x, amp * s)
            }
        }
    }
    fn is_autonomous(&self) -> bool {
        self.direction == Direction::Spatial || self.base.is_autonomous()
    }
}

/// Sample of `(x, s)` points used by the sample-based checks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleBox<T> {
    /// Smallest sampled `|s|`.
    pub s_min: T,
    /// Largest sampled `|s|`.
    pub s_max: T,
    /// Log-spaced points per sign.
    pub s_points: usize,
    pub x_max: T,
    pub x_points: usize,
}

impl<T: Real> Default for SampleBox<T> {
    fn default() -> Self {
        Self { s_min: lit(1e-3), s_max: lit(1e3), s_points: 121, x_max: lit(8.0), x_points: 9 }
    }
}

impl<T: Real> SampleBox<T> {
    pub fn new(s_min: T, s_max: T, s_points: usize) -> Self {
        Self { s_min, s_max, s_points, ..Self::default() }
    }

    /// Positive log-spaced magnitudes, ascending.
    pub fn magnitudes(&self) -> Vec<T> {
        let n = self.s_points.max(2);
        let (a, b) = (self.s_min.ln(), self.s_max.ln());
        (0..n).map(|i| (a + (b - a) * from_usize::<T>(i) / from_usize::<T>(n - 1)).exp()).collect()
    }

    /// Both signs.
    pub fn s_values(&self) -> Vec<T> {
        let m = self.magnitudes();
        m.iter().map(|&v| -v).chain(m.iter().copied()).collect()
    }

    pub fn x_values(&self) -> Vec<T> {
        if self.x_points <= 1 {
            return vec![T::zero()];
        }
        (0..self.x_points)
            .map(|i| self.x_max * from_usize::<T>(i) / from_usize::<T>(self.x_points - 1))
            .collect()
    }
}

/// `sup F` over the sample.
pub fn sample_sup<T: Real, N: Nonlinearity<T> + ?Sized>(nl: &N, sample: &SampleBox<T>) -> T {
    let mut best = T::neg_infinity();
    for &x in &sample.x_values() {
        for s in sample.s_values() {
            best = best.max(nl.primitive(x, s));
        }
    }
    best
}

/// True iff `F(x, s) = gamma^{-Nj} F(gamma^{-j} x, gamma^{(N-2)j/2} s)` for
/// `j in -3..=3` on a sample grid, to relative tolerance `tol`.
pub fn check_selfsimilar<T: Real, N: Nonlinearity<T> + ?Sized>(nl: &N, gamma: T, tol: T) -> bool {
    let sample = SampleBox { s_min: lit(0.05), s_max: lit(20.0), s_points: 41, x_max: lit(2.0), x_points: 3 };
    let tiny = T::min_positive_value() * lit(1e10);
    for &x in &sample.x_values() {
        for s in sample.s_values() {
            let reference = nl.primitive(x, s);
            for j in -3..=3 {
                let Ok(v) = rescale_with(nl, gamma, j, x, s) else {
                    return false;
                };
                if (v - reference).abs() > tol * reference.abs().max(tiny) {
                    return false;
                }
            }
        }
    }
    true
}

/// Growth hypotheses the regimes assume.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GrowthRegime {
    /// `|F| <= C|s|^{2*}` and `|f| <= C|s|^{2*-1}`.
    Critical,
    /// `|f| <= C(1 + |s|^{2*-1})`.
    BoundedDomain,
    /// `|f| <= eps(|s| + |s|^{2*-1}) + C_eps |s|^{p_eps - 1}` (the `2*` term is
    /// dropped for `N <= 2`).
    Subcritical,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GrowthFlag {
    /// The bounded ratio decays at large `|s|` (growth strictly below the bound).
    SubcriticalDecayAtInfinity,
    /// The ratio blows up towards the small end of the sample.
    UnboundedNearZero,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrowthConstant<T> {
    pub label: String,
    pub value: T,
    /// Exponent `p_eps` used (subcritical regime only).
    pub exponent: Option<T>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrowthReport<T> {
    pub regime: GrowthRegime,
    pub constants: Vec<GrowthConstant<T>>,
    pub pass: bool,
    pub flags: Vec<GrowthFlag>,
}

/// Least-squares slope of `ys` against `xs`.
fn slope<T: Real>(xs: &[T], ys: &[T]) -> T {
    let n = from_usize::<T>(xs.len());
    let mx = xs.iter().copied().sum::<T>() / n;
    let my = ys.iter().copied().sum::<T>() / n;
    let mut sxy = T::zero();
    let mut sxx = T::zero();
    for (&x, &y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
    }
    if sxx.is_zero() {
        T::zero()
    } else {
        sxy / sxx
    }
}

/// Log-log slopes of `ratio(s)` over the lower and upper fifth of the sample.
fn end_slopes<T: Real>(mags: &[T], ratio: impl Fn(T) -> Option<T>) -> (T, T) {
    let pts: Vec<(T, T)> = mags
        .iter()
        .filter_map(|&s| ratio(s).filter(|r| *r > T::zero() && r.is_finite()).map(|r| (s.ln(), r.ln())))
        .collect();
    if pts.len() < 10 {
        return (T::zero(), T::zero());
    }
    let k = (pts.len() / 5).max(3);
    let (lx, ly): (Vec<T>, Vec<T>) = pts[..k].iter().copied().unzip();
    let (hx, hy): (Vec<T>, Vec<T>) = pts[pts.len() - k..].iter().copied().unzip();
    (slope(&lx, &ly), slope(&hx, &hy))
}

const SLOPE_TOL: f64 = 0.05;

/// Sample-based growth check. Returns the empirical constants; `pass` is
/// false when the bounding ratio keeps growing towards large `|s|`.
pub fn check_growth<T: Real, N: Nonlinearity<T> + ?Sized>(
    nl: &N,
    regime: GrowthRegime,
    sample: &SampleBox<T>,
) -> Result<GrowthReport<T>, NonlinearityError> {
    let dim = nl.dim();
    let crit = critical_exponent::<T>(dim);
    let xs = sample.x_values();
    let mags = sample.magnitudes();
    let slope_tol = lit::<T>(SLOPE_TOL);
    // Worst ratio over x and sign for a given |s|.
    let worst = |s: T, g: &dyn Fn(T, T) -> T, bound: T| -> T {
        let mut m = T::zero();
        for &x in &xs {
            for v in [s, -s] {
                m = m.max(g(x, v).abs() / bound);
            }
        }
        m
    };
    let prim = |x: T, s: T| nl.primitive(x, s);
    let deriv = |x: T, s: T| nl.derivative(x, s);
    let mut constants = Vec::new();
    let mut flags = Vec::new();
    let mut pass = true;
    let mut judge = |label: &str, ratio: &dyn Fn(T) -> T, constants: &mut Vec<GrowthConstant<T>>, exponent: Option<T>| {
        let c = mags.iter().map(|&s| ratio(s)).fold(T::zero(), T::max);
        let (low, high) = end_slopes(&mags, |s| Some(ratio(s)));
        if high > slope_tol || !c.is_finite() {
            pass = false;
        }
        if high < -slope_tol && !flags.contains(&GrowthFlag::SubcriticalDecayAtInfinity) {
            flags.push(GrowthFlag::SubcriticalDecayAtInfinity);
        }
        if low < -slope_tol && !flags.contains(&GrowthFlag::UnboundedNearZero) {
            flags.push(GrowthFlag::UnboundedNearZero);
        }
        constants.push(GrowthConstant { label: label.to_string(), value: c, exponent });
    };
    match regime {
        GrowthRegime::Critical => {
            let crit = crit.ok_or(NonlinearityError::DimensionTooSmall(dim))?;
            judge("F", &|s: T| worst(s, &prim, s.powf(crit)), &mut constants, None);
            judge("f", &|s: T| worst(s, &deriv, s.powf(crit - T::one())), &mut constants, None);
        }
        GrowthRegime::BoundedDomain => {
            let crit = crit.ok_or(NonlinearityError::DimensionTooSmall(dim))?;
            judge("f", &|s: T| worst(s, &deriv, T::one() + s.powf(crit - T::one())), &mut constants, None);
        }
        GrowthRegime::Subcritical => {
            // Effective growth exponent of f at the large end of the sample.
            let (_, growth) = end_slopes(&mags, |s| Some(worst(s, &deriv, T::one())));
            let (mid_growth, _) = {
                let upper: Vec<T> = mags[mags.len() / 2..].to_vec();
                end_slopes(&upper, |s| Some(worst(s, &deriv, T::one())))
            };
            for eps in [0.5, 0.1, 0.01] {
                let e = lit::<T>(eps);
                let p = match crit {
                    Some(c) => {
                        let lo = lit::<T>(2.0) + lit(1e-3);
                        let hi = c - lit(1e-3);
                        (growth + T::one()).max(lo).min(hi)
                    }
                    None => (growth + T::one()).max(lit(3.0)),
                };
                let ratio = |s: T| {
                    let linear = match crit {
                        Some(c) => e * (s + s.powf(c - T::one())),
                        None => e * s,
                    };
                    let mut m = T::zero();
                    for &x in &xs {
                        for v in [s, -s] {
                            m = m.max((nl.derivative(x, v).abs() - linear).max(T::zero()) / s.powf(p - T::one()));
                        }
                    }
                    m
                };
                judge(&format!("C_eps(eps={eps})"), &ratio, &mut constants, Some(p));
            }
            // Exponential-type growth: the effective exponent keeps increasing.
            if crit.is_none() && (growth - mid_growth).abs() > lit(0.5) {
                pass = false;
            }
        }
    }
    Ok(GrowthReport { regime, constants, pass, flags })
}

/// Ambrosetti–Rabinowitz condition `f(x,s) s >= mu F(x,s)` on the sample.
pub fn check_ar<T: Real, N: Nonlinearity<T> + ?Sized>(
    nl: &N,
    mu: T,
    sample: &SampleBox<T>,
) -> Result<bool, NonlinearityError> {
    if !(mu > lit(2.0)) {
        return Err(NonlinearityError::InvalidMu(mu.to_f64().unwrap_or(f64::NAN)));
    }
    let slack = lit::<T>(1e-12);
    for &x in &sample.x_values() {
        for s in sample.s_values() {
            let fs = nl.derivative(x, s) * s;
            let big = mu * nl.primitive(x, s);
            if fs < big - slack * (fs.abs() + big.abs()) {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(dim: usize, kind: Kind<f64>) -> NonlinearitySpec<f64> {
        NonlinearitySpec::new(dim, 2.0, kind).unwrap()
    }

    fn quartic(dim: usize) -> NonlinearitySpec<f64> {
        spec(dim, Kind::Power { p: 4.0, scale: 0.25 })
    }

    #[test]
    fn eval_examples() {
        assert_eq!(spec(4, Kind::CriticalStem).primitive(0.0, 2.0), 16.0);
        assert_eq!(quartic(4).primitive(0.0, 1.0), 0.25);
        let osc = spec(4, Kind::OscillatingStem { eps: 0.2, factor: 2.0 });
        assert!((osc.primitive(0.0, 1.0) - 1.0).abs() < 1e-15);
        assert_eq!(osc.primitive(0.0, 0.0), 0.0);
    }

    #[test]
    fn construction_rejects_bad_parameters() {
        assert!(NonlinearitySpec::new(3, 2.0, Kind::Power { p: 2.0, scale: 1.0 }).is_err());
        assert!(NonlinearitySpec::new(3, 2.0, Kind::Power { p: 1.5, scale: 1.0 }).is_err());
        assert!(matches!(
            NonlinearitySpec::<f64>::new(2, 2.0, Kind::CriticalStem),
            Err(NonlinearityError::DimensionTooSmall(2))
        ));
        assert!(NonlinearitySpec::new(4, 1.0, Kind::CriticalStem).is_err());
        assert!(NonlinearitySpec::new(4, 2.0, Kind::OscillatingStem { eps: 1.0, factor: 2.0 }).is_err());
        assert!(NonlinearitySpec::new(4, 2.0, Kind::Sum { terms: vec![] }).is_err());
    }

    #[test]
    fn stem_rescaling_is_exact() {
        let stem = spec(4, Kind::CriticalStem);
        for j in -5..=5 {
            let v = stem.rescaled(j, 0.0, 1.0).unwrap();
            assert!((v - 1.0).abs() < 1e-12, "j={j} v={v}");
        }
    }

    #[test]
    fn power_rescaling_brute_force() {
        // gamma^{-Nj} * (gamma^{(N-2)j/2} s)^4 / 4 with N=3, gamma=2, j=1, s=1.
        let brute = 2f64.powi(-3) * (2f64.powf(0.5)).powi(4) / 4.0;
        let v = quartic(3).rescaled(1, 0.0, 1.0).unwrap();
        assert!((v - brute).abs() < 1e-14);
        assert!((v - 0.125).abs() < 1e-14);
    }

    #[test]
    fn rescaling_overflow_is_reported() {
        let big = quartic(3);
        assert!(matches!(big.rescaled(5000, 0.0, 1.0), Err(NonlinearityError::OutOfRange { .. })));
    }

    #[test]
    fn table_rescaling_is_invariant() {
        let osc = spec(4, Kind::OscillatingStem { eps: 0.2, factor: 2.0 });
        let table = SelfsimilarTable::sample(&osc, 2.0, 2000);
        let t = spec(4, Kind::TableSelfsimilar(table));
        for j in -3..=3 {
            for s in [0.3, 1.0, 1.7, -2.5] {
                let a = t.rescaled(j, 0.0, s).unwrap();
                let b = t.primitive(0.0, s);
                assert!((a - b).abs() <= 1e-9 * b.abs(), "j={j} s={s}");
            }
        }
    }

    #[test]
    fn asymptotic_limits_of_power() {
        let p = quartic(3);
        let plus = asymptotic_limit(&p, Direction::Plus, 0.0, 1.5, LIMIT_TOL, LIMIT_MAX_STEPS).unwrap();
        assert!(plus.certified);
        assert!(plus.value.abs() < 1e-8);
        let minus = asymptotic_limit(&p, Direction::Minus, 0.0, 1.5, LIMIT_TOL, LIMIT_MAX_STEPS);
        assert!(matches!(minus, Err(AsymptoticError::Divergent { .. })));
    }

    #[test]
    fn asymptotic_limits_of_stem_are_immediate() {
        let stem = spec(4, Kind::CriticalStem);
        for dir in [Direction::Plus, Direction::Minus, Direction::Spatial] {
            let v = asymptotic_limit(&stem, dir, 0.0, 1.3, LIMIT_TOL, LIMIT_MAX_STEPS).unwrap();
            assert!(v.certified);
            assert_eq!(v.steps, 2);
            assert!((v.value - 1.3f64.powi(4)).abs() < 1e-12);
        }
    }

    #[test]
    fn non_matching_oscillation_is_uncertified() {
        let osc = NonlinearitySpec::new(4, 2.0, Kind::OscillatingStem { eps: 0.2, factor: 3.0 }).unwrap();
        let v = asymptotic_limit(&osc, Direction::Plus, 0.0, 1.3, LIMIT_TOL, LIMIT_MAX_STEPS).unwrap();
        assert!(!v.certified);
    }

    #[test]
    fn spatial_limit_of_modulation() {
        let m = spec(
            1,
            Kind::SpatialModulation {
                base: Box::new(Kind::Power { p: 4.0, scale: 0.25 }),
                envelope: Envelope::Gaussian { amplitude: 1.0, width: 1.0 },
            },
        );
        let v = asymptotic_limit(&m, Direction::Spatial, 0.0, 2.0, LIMIT_TOL, LIMIT_MAX_STEPS).unwrap();
        assert!(v.certified);
        assert!((v.value - 4.0).abs() < 1e-9);
        let lim = AsymptoticLimit::certify(&m, Direction::Spatial, &SampleBox::new(0.1, 10.0, 11), LIMIT_TOL).unwrap();
        assert!(lim.is_autonomous());
        assert!((lim.primitive(0.0, 2.0) - 4.0).abs() < 1e-9);
        assert!((lim.derivative(0.0, 2.0) - 8.0).abs() < 1e-9);
    }

    #[test]
    fn certified_limit_of_stem_plus_bump() {
        let f = spec(
            4,
            Kind::Sum { terms: vec![Kind::CriticalStem, Kind::SBump { lo: 1.0, hi: 2.0, height: 2.0 }] },
        );
        let sample = SampleBox::new(1e-2, 1e2, 41);
        let plus = AsymptoticLimit::certify(&f, Direction::Plus, &sample, LIMIT_TOL).unwrap();
        let minus = AsymptoticLimit::certify(&f, Direction::Minus, &sample, LIMIT_TOL).unwrap();
        for s in [0.5, 1.5, 3.0] {
            assert!((plus.primitive(0.0, s) - s.powi(4)).abs() < 1e-9 * s.powi(4));
            assert!((minus.primitive(0.0, s) - s.powi(4)).abs() < 1e-9 * s.powi(4));
        }
        let p = quartic(3);
        let plus = AsymptoticLimit::certify(&p, Direction::Plus, &sample, LIMIT_TOL).unwrap();
        assert!(plus.is_zero());
        assert!(matches!(
            AsymptoticLimit::certify(&p, Direction::Minus, &sample, LIMIT_TOL),
            Err(AsymptoticError::Divergent { .. })
        ));
    }

    #[test]
    fn selfsimilarity_checks() {
        assert!(check_selfsimilar(&spec(4, Kind::CriticalStem), 2.0, 1e-10));
        assert!(check_selfsimilar(&spec(4, Kind::CriticalStem), 3.7, 1e-10));
        let osc = spec(4, Kind::OscillatingStem { eps: 0.2, factor: 2.0 });
        assert!(check_selfsimilar(&osc, 2.0, 1e-9));
        assert!(!check_selfsimilar(&osc, 3.0, 1e-3));
        assert!(!check_selfsimilar(&quartic(3), 2.0, 1e-3));
    }

    #[test]
    fn selfsimilar_extension_matches_closed_form() {
        let stem = spec(4, Kind::CriticalStem);
        let table = SelfsimilarTable::sample(&stem, 2.0, 64);
        for s in [0.01, 0.7, 1.0, 3.3, -12.0] {
            let v = selfsimilar_extend(4, &table, s);
            assert!((v - s.powi(4)).abs() < 1e-12 * s.powi(4));
        }
        assert_eq!(selfsimilar_extend(4, &table, 0.0), 0.0);

        let osc = spec(4, Kind::OscillatingStem { eps: 0.2, factor: 2.0 });
        let table = SelfsimilarTable::sample(&osc, 2.0, 10_000);
        let mut worst = 0.0f64;
        for i in 0..2000 {
            let s = 0.05 * (400.0f64).powf(i as f64 / 1999.0);
            for v in [s, -s] {
                let exact = osc.primitive(0.0, v);
                let approx = selfsimilar_extend(4, &table, v);
                worst = worst.max((approx - exact).abs() / exact.abs());
            }
        }
        assert!(worst <= 1e-6, "worst relative interpolation error {worst}");
    }

    #[test]
    fn derivatives_match_central_differences() {
        let kinds = vec![
            (3, Kind::Power { p: 4.0, scale: 0.25 }),
            (4, Kind::CriticalStem),
            (4, Kind::OscillatingStem { eps: 0.2, factor: 2.0 }),
            (4, Kind::SBump { lo: 1.0, hi: 2.0, height: 2.0 }),
            (
                1,
                Kind::SpatialModulation {
                    base: Box::new(Kind::Power { p: 4.0, scale: 0.25 }),
                    envelope: Envelope::Gaussian { amplitude: 0.5, width: 1.0 },
                },
            ),
        ];
        for (dim, kind) in kinds {
            let nl = spec(dim, kind);
            for &(x, s) in &[(0.3, 0.7), (1.0, 1.3), (0.0, -1.6), (2.0, 2.4)] {
                let f = nl.derivative(x, s);
                let e1 = ((nl.primitive(x, s + 1e-3) - nl.primitive(x, s - 1e-3)) / 2e-3 - f).abs();
                let e2 = ((nl.primitive(x, s + 5e-4) - nl.primitive(x, s - 5e-4)) / 1e-3 - f).abs();
                assert!(e1 < 1e-4 * (1.0 + f.abs()), "{nl:?} s={s}");
                // second order: halving h divides the error by ~4
                if e1 > 1e-10 {
                    assert!(e2 < 0.3 * e1, "{nl:?} s={s} e1={e1} e2={e2}");
                }
            }
        }
    }

    #[test]
    fn ar_examples() {
        let sample = SampleBox::default();
        assert!(check_ar(&spec(4, Kind::CriticalStem), 4.0, &sample).unwrap());
        assert!(check_ar(&quartic(3), 4.0, &sample).unwrap());
        assert!(!check_ar(&quartic(3), 5.0, &sample).unwrap());
        assert!(check_ar(&spec(4, Kind::OscillatingStem { eps: 0.2, factor: 2.0 }), 2.05, &sample).unwrap());
        assert!(matches!(check_ar(&quartic(3), 2.0, &sample), Err(NonlinearityError::InvalidMu(_))));
    }

    struct ExpGrowth;
    impl Nonlinearity<f64> for ExpGrowth {
        fn dim(&self) -> usize {
            3
        }
        fn gamma(&self) -> f64 {
            2.0
        }
        fn primitive(&self, _x: f64, s: f64) -> f64 {
            s.abs().exp() - 1.0 - s.abs()
        }
        fn derivative(&self, _x: f64, s: f64) -> f64 {
            s.signum() * (s.abs().exp() - 1.0)
        }
        fn is_autonomous(&self) -> bool {
            true
        }
    }

    #[test]
    fn growth_examples() {
        let sample = SampleBox::default();
        let r = check_growth(&spec(4, Kind::CriticalStem), GrowthRegime::Critical, &sample).unwrap();
        assert!(r.pass);
        assert!((r.constants[0].value - 1.0).abs() < 1e-12);
        assert!((r.constants[1].value - 4.0).abs() < 1e-12);

        let r = check_growth(&quartic(3), GrowthRegime::Critical, &sample).unwrap();
        assert!(r.pass);
        assert!(r.flags.contains(&GrowthFlag::SubcriticalDecayAtInfinity));

        let small = SampleBox::new(1e-2, 30.0, 121);
        for regime in [GrowthRegime::Critical, GrowthRegime::BoundedDomain, GrowthRegime::Subcritical] {
            let r = check_growth(&ExpGrowth, regime, &small).unwrap();
            assert!(!r.pass, "{regime:?}");
        }

        let r = check_growth(&quartic(3), GrowthRegime::Subcritical, &sample).unwrap();
        assert!(r.pass);
        let r = check_growth(&quartic(1), GrowthRegime::Subcritical, &sample).unwrap();
        assert!(r.pass, "{r:?}");
        let r = check_growth(&ExpGrowth, GrowthRegime::Subcritical, &SampleBox::new(1e-2, 30.0, 121));
        assert!(!r.unwrap().pass);
    }

    #[test]
    fn single_precision_evaluation() {
        let stem = NonlinearitySpec::<f32>::new(4, 2.0, Kind::CriticalStem).unwrap();
        assert_eq!(stem.primitive(0.0, 2.0), 16.0);
        assert!((stem.rescaled(2, 0.0, 1.0).unwrap() - 1.0).abs() < 1e-5);
    }

    use proptest::prelude::*;

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn stem_rescaling_is_the_identity(j in -6i32..=6, s in -5.0f64..5.0, dim in 3usize..=6) {
            let stem = spec(dim, Kind::CriticalStem);
            let f = stem.primitive(0.0, s);
            let g = stem.rescaled(j, 0.0, s).unwrap();
            prop_assert!((f - g).abs() <= 1e-10 * f.abs().max(1e-300));
        }

        #[test]
        fn powers_satisfy_ar_up_to_their_exponent(p in 2.1f64..8.0, scale in 0.1f64..3.0) {
            let nl = NonlinearitySpec::new(3, 2.0, Kind::Power { p, scale }).unwrap();
            let sample = SampleBox::new(1e-3, 1e3, 40);
            prop_assert!(check_ar(&nl, p, &sample).unwrap());
            prop_assert!(!check_ar(&nl, p + 0.1, &sample).unwrap());
        }

        #[test]
        fn derivative_is_the_slope_of_the_primitive(s in 0.05f64..3.0, eps in 0.0f64..0.3) {
            let nl = spec(4, Kind::OscillatingStem { eps, factor: 2.0 });
            let h = 1e-5 * s;
            let fd = (nl.primitive(0.0, s + h) - nl.primitive(0.0, s - h)) / (2.0 * h);
            let f = nl.derivative(0.0, s);
            prop_assert!((fd - f).abs() <= 1e-6 * f.abs().max(1.0));
        }
    }
}
