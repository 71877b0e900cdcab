//! Scenario configuration: a TOML document with top-level keys and the
//! sections `[grid]`, `[nonlinearity]`, `[solver]`, `[verify]` and the
//! optional `[synthetic]`. The grammar is documented in `docs/config.md`.

// `!(x > 0)` checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::path::Path;
use std::sync::Arc;

use mpcc_core::function_space::{DiscreteFunction, DomainKind, Grid};
use mpcc_core::functional::Regime;
use mpcc_core::nonlinearity::{Envelope, GrowthRegime, Kind, NonlinearitySpec, SampleBox};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("invalid configuration: {0}")]
    Invalid(String),
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
}

fn invalid<T>(msg: impl Into<String>) -> Result<T, ConfigError> {
    Err(ConfigError::Invalid(msg.into()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    pub regime: Regime,
    /// Mass `lambda` of the functional.
    #[serde(default)]
    pub lambda: f64,
    /// Ball regime only: sets `lambda = -fraction * lambda_1` with `lambda_1`
    /// the discrete first Dirichlet eigenvalue.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda_fraction: Option<f64>,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<String>,
    pub grid: GridConfig,
    pub nonlinearity: Kind<f64>,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub verify: VerifyConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synthetic: Option<SyntheticConfig>,
}

fn default_gamma() -> f64 {
    2.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum GridConfig {
    /// `[-half_length, half_length]` with spacing `h`.
    Line { half_length: f64, h: f64 },
    RadialUniform {
        #[serde(alias = "N")]
        dim: usize,
        radius: f64,
        cells: usize,
        #[serde(default = "whole_space")]
        domain: DomainKind,
    },
    /// Ratio `gamma^{1 / steps_per_gamma}`, so unitary dilations are exact.
    RadialGeometric {
        #[serde(alias = "N")]
        dim: usize,
        r_min: f64,
        radius: f64,
        steps_per_gamma: u32,
        #[serde(default = "whole_space")]
        domain: DomainKind,
    },
}

fn whole_space() -> DomainKind {
    DomainKind::WholeSpaceTruncated
}

impl GridConfig {
    pub fn dim(&self) -> usize {
        match *self {
            GridConfig::Line { .. } => 1,
            GridConfig::RadialUniform { dim, .. } | GridConfig::RadialGeometric { dim, .. } => dim,
        }
    }

    pub fn domain(&self) -> Option<DomainKind> {
        match *self {
            GridConfig::Line { .. } => None,
            GridConfig::RadialUniform { domain, .. } | GridConfig::RadialGeometric { domain, .. } => Some(domain),
        }
    }

    pub fn build(&self, gamma: f64) -> Result<Arc<Grid<f64>>, ConfigError> {
        let grid = match *self {
            GridConfig::Line { half_length, h } => Grid::line(half_length, h),
            GridConfig::RadialUniform { dim, radius, cells, domain } => Grid::radial_uniform(dim, radius, cells, domain),
            GridConfig::RadialGeometric { dim, r_min, radius, steps_per_gamma, domain } => {
                if steps_per_gamma == 0 {
                    return invalid("grid.steps_per_gamma must be positive");
                }
                Grid::radial_geometric(dim, r_min, radius, gamma.powf(1.0 / f64::from(steps_per_gamma)), domain)
            }
        };
        grid.map(Arc::new).map_err(|e| ConfigError::Invalid(format!("grid: {e}")))
    }
}

/// Closed-form starting profiles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case", deny_unknown_fields)]
pub enum Profile {
    /// `a exp(-((x - shift) / width)^2)`.
    Gaussian {
        amplitude: f64,
        width: f64,
        #[serde(default)]
        shift: f64,
    },
    /// `a sech((x - shift) / width)`.
    Sech {
        amplitude: f64,
        width: f64,
        #[serde(default)]
        shift: f64,
    },
    /// `a (1 + (r / width)^2)^{-(N-2)/2}`.
    Talenti { amplitude: f64, width: f64 },
    /// `a (1 - (r/R)^2) / (1 + (r / width)^2)`, vanishing on the sphere of radius `R`.
    BallBubble { amplitude: f64, width: f64 },
}

impl Profile {
    pub fn sample(&self, grid: &Arc<Grid<f64>>) -> DiscreteFunction<f64> {
        let dim = grid.dim() as i32;
        let big = grid.extent();
        let p = self.clone();
        DiscreteFunction::from_fn(Arc::clone(grid), move |x| match p {
            Profile::Gaussian { amplitude, width, shift } => amplitude * (-((x - shift) / width).powi(2)).exp(),
            Profile::Sech { amplitude, width, shift } => amplitude / ((x - shift) / width).cosh(),
            Profile::Talenti { amplitude, width } => {
                amplitude * (1.0 + (x / width).powi(2)).powf(-f64::from(dim - 2) / 2.0)
            }
            Profile::BallBubble { amplitude, width } => {
                amplitude * (1.0 - (x / big).powi(2)) / (1.0 + (x / width).powi(2))
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShootingConfig {
    pub bracket: [f64; 2],
    #[serde(default = "default_shoot_step")]
    pub step: f64,
    #[serde(default = "default_r_max")]
    pub r_max: f64,
}

fn default_shoot_step() -> f64 {
    1e-3
}
fn default_r_max() -> f64 {
    60.0
}

/// Whole-space geometric grid used for the levels of asymptotic problems
/// (concentration and spreading limits).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AuxGridConfig {
    pub r_min: f64,
    pub radius: f64,
    pub steps_per_gamma: u32,
}

impl Default for AuxGridConfig {
    fn default() -> Self {
        Self { r_min: 1e-4, radius: 200.0, steps_per_gamma: 32 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    /// Run the mountain-pass descent.
    #[serde(default = "yes")]
    pub descent: bool,
    /// Run the sphere maximization; defaults to on in the zero mass regime.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kappa: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed_profile: Option<Profile>,
    #[serde(default = "default_segments")]
    pub segments: usize,
    #[serde(default = "default_tol_g")]
    pub tol_g: f64,
    #[serde(default = "default_max_outer")]
    pub max_outer: usize,
    #[serde(default = "default_max_nodes")]
    pub max_nodes: usize,
    #[serde(default = "default_kappa_starts")]
    pub kappa_starts: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shooting: Option<ShootingConfig>,
    #[serde(default)]
    pub aux_grid: AuxGridConfig,
    /// Treat a descent that does not converge as a failed run. Problems
    /// whose level is not attained turn this off.
    #[serde(default = "yes")]
    pub require_convergence: bool,
}

fn yes() -> bool {
    true
}
fn default_segments() -> usize {
    mpcc_core::mountain_pass::DEFAULT_SEGMENTS
}
fn default_tol_g() -> f64 {
    1e-3
}
fn default_max_outer() -> usize {
    5000
}
fn default_max_nodes() -> usize {
    96
}
fn default_kappa_starts() -> usize {
    4
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            descent: true,
            kappa: None,
            seed_profile: None,
            segments: default_segments(),
            tol_g: default_tol_g(),
            max_outer: default_max_outer(),
            max_nodes: default_max_nodes(),
            kappa_starts: default_kappa_starts(),
            shooting: None,
            aux_grid: AuxGridConfig::default(),
            require_convergence: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyConfig {
    /// Ambrosetti–Rabinowitz exponent; the check is skipped when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu: Option<f64>,
    /// Growth hypothesis; defaults to the one matching the regime.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub growth: Option<GrowthRegime>,
    #[serde(default = "yes")]
    pub fd_check: bool,
    #[serde(default = "yes")]
    pub scaling: bool,
    #[serde(default = "default_margin")]
    pub margin: f64,
    /// Slack allowed in the unconditional `c <= c_#`.
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expect_level: Option<f64>,
    #[serde(default = "default_expect_tol")]
    pub expect_tol: f64,
    /// Expected value of every strict flag.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expect_strict: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pohozaev_tol: Option<f64>,
    /// Relative agreement required between descent and shooting levels.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shooting_tol: Option<f64>,
    #[serde(default)]
    pub sample: SampleConfig,
}

fn default_margin() -> f64 {
    mpcc_core::sphere_maximizer::STRICT_MARGIN
}
fn default_tolerance() -> f64 {
    0.02
}
fn default_expect_tol() -> f64 {
    1e-2
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self {
            mu: None,
            growth: None,
            fd_check: true,
            scaling: true,
            margin: default_margin(),
            tolerance: default_tolerance(),
            expect_level: None,
            expect_tol: default_expect_tol(),
            expect_strict: None,
            pohozaev_tol: None,
            shooting_tol: None,
            sample: SampleConfig::default(),
        }
    }
}

/// Sample box of the structural checks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleConfig {
    pub s_min: f64,
    pub s_max: f64,
    pub s_points: usize,
    pub x_max: f64,
    pub x_points: usize,
}

impl Default for SampleConfig {
    fn default() -> Self {
        let d = SampleBox::<f64>::default();
        Self { s_min: d.s_min, s_max: d.s_max, s_points: d.s_points, x_max: d.x_max, x_points: d.x_points }
    }
}

impl SampleConfig {
    pub fn to_box(&self) -> SampleBox<f64> {
        SampleBox { s_min: self.s_min, s_max: self.s_max, s_points: self.s_points, x_max: self.x_max, x_points: self.x_points }
    }
}

/// Planted multibump sequence `w + sum_n g_k^{(n)} w_inf`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticConfig {
    pub w: Profile,
    pub w_inf: Profile,
    /// Dilation schedules `j_k = slope * k` (radial grids).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub slopes: Vec<i32>,
    /// Translation schedules `y_k = step * k` (line grids).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub steps: Vec<f64>,
    pub length: usize,
    #[serde(default = "default_tol_remainder")]
    pub tol_remainder: f64,
    #[serde(default = "default_max_profiles")]
    pub max_profiles: usize,
    /// Largest energy-splitting gap accepted.
    #[serde(default = "default_split_tol")]
    pub split_tol: f64,
}

fn default_tol_remainder() -> f64 {
    0.05
}
fn default_max_profiles() -> usize {
    6
}
fn default_split_tol() -> f64 {
    0.05
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].bytes().filter(|&b| b == b'\n').count() + 1
}

impl ScenarioConfig {
    /// Parses and validates a configuration.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let cfg: ScenarioConfig = toml::from_str(text).map_err(|e| ConfigError::Parse {
            line: e.span().map_or(1, |s| line_of(text, s.start)),
            message: e.message().to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| ConfigError::Io { path: path.display().to_string(), source })?;
        Self::parse(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }

    /// Regime consistency: zero mass exactly in the `D^{1,2}` regime, the
    /// ball regime on a ball, positive mass in `H^1`.
    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.gamma > 1.0) {
            return invalid(format!("gamma must exceed 1, got {}", self.gamma));
        }
        let domain = self.grid.domain();
        match self.regime {
            Regime::CriticalD12 => {
                if self.lambda != 0.0 || self.lambda_fraction.is_some() {
                    return invalid("the critical_D12 regime has lambda = 0");
                }
                if self.grid.dim() < 3 || domain != Some(DomainKind::WholeSpaceTruncated) {
                    return invalid("the critical_D12 regime needs a whole-space radial grid with N >= 3");
                }
            }
            Regime::SubcriticalH1 => {
                if !(self.lambda > 0.0) {
                    return invalid(format!("the subcritical_H1 regime needs lambda > 0, got {}", self.lambda));
                }
                if self.lambda_fraction.is_some() || domain == Some(DomainKind::Ball) {
                    return invalid("the subcritical_H1 regime lives on the whole space");
                }
            }
            Regime::BallDomain => {
                if domain != Some(DomainKind::Ball) {
                    return invalid("the ball_domain regime needs a radial grid with domain = \"ball\"");
                }
                if self.lambda_fraction.is_some() && self.lambda != 0.0 {
                    return invalid("set either lambda or lambda_fraction");
                }
                if let Some(f) = self.lambda_fraction {
                    if !(0.0..1.0).contains(&f) {
                        return invalid(format!("lambda_fraction must lie in [0, 1), got {f}"));
                    }
                }
            }
        }
        if let Some(mu) = self.verify.mu {
            if !(mu > 2.0) {
                return invalid(format!("verify.mu must exceed 2, got {mu}"));
            }
        }
        if let Some(s) = &self.synthetic {
            if s.slopes.is_empty() == s.steps.is_empty() {
                return invalid("synthetic needs exactly one of slopes (dilations) or steps (translations)");
            }
            if !s.slopes.is_empty() && domain.is_none() {
                return invalid("dilation schedules need a radial grid");
            }
            if !s.steps.is_empty() && domain.is_some() {
                return invalid("translation schedules need a line grid");
            }
        }
        if let Some(sh) = &self.solver.shooting {
            if !(sh.bracket[0] > 0.0 && sh.bracket[1] > sh.bracket[0]) {
                return invalid("solver.shooting.bracket must be increasing and positive");
            }
        }
        self.spec()?;
        Ok(())
    }

    pub fn spec(&self) -> Result<NonlinearitySpec<f64>, ConfigError> {
        NonlinearitySpec::new(self.grid.dim(), self.gamma, self.nonlinearity.clone())
            .map_err(|e| ConfigError::Invalid(format!("nonlinearity: {e}")))
    }

    pub fn growth_regime(&self) -> GrowthRegime {
        self.verify.growth.unwrap_or(match self.regime {
            Regime::CriticalD12 => GrowthRegime::Critical,
            Regime::BallDomain => GrowthRegime::BoundedDomain,
            Regime::SubcriticalH1 => GrowthRegime::Subcritical,
        })
    }

    /// Sets the amplitude of the first Gaussian envelope in the nonlinearity.
    pub fn set_amplitude(&mut self, a: f64) -> Result<(), ConfigError> {
        fn visit(k: &mut Kind<f64>, a: f64) -> bool {
            match k {
                Kind::SpatialModulation { envelope: Envelope::Gaussian { amplitude, .. }, .. } => {
                    *amplitude = a;
                    true
                }
                Kind::Sum { terms } => terms.iter_mut().any(|t| visit(t, a)),
                _ => false,
            }
        }
        if visit(&mut self.nonlinearity, a) {
            Ok(())
        } else {
            invalid("the nonlinearity has no spatial modulation to sweep")
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const S1: &str = r#"
name = "S1"
regime = "subcritical_H1"
lambda = 1.0

[grid]
kind = "line"
half_length = 20.0
h = 0.01

[nonlinearity]
kind = "power"
p = 4.0
scale = 0.25

[solver.seed_profile]
shape = "gaussian"
amplitude = 2.0
width = 2.0
"#;

    #[test]
    fn parses_and_round_trips() {
        let cfg = ScenarioConfig::parse(S1).unwrap();
        assert_eq!(cfg.grid, GridConfig::Line { half_length: 20.0, h: 0.01 });
        assert_eq!(cfg.solver.tol_g, 1e-3);
        let again = ScenarioConfig::parse(&cfg.to_toml()).unwrap();
        assert_eq!(again, cfg);
    }

    #[test]
    fn unknown_keys_are_rejected_with_a_line() {
        let text = S1.replace("h = 0.01", "h = 0.01\nspacing = 3");
        match ScenarioConfig::parse(&text) {
            Err(ConfigError::Parse { line, message }) => {
                assert!(message.contains("spacing"), "{message}");
                assert!((6..=10).contains(&line), "{line}");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn missing_dimension_is_named() {
        let text = r#"
name = "x"
regime = "critical_D12"
[grid]
kind = "radial_geometric"
r_min = 1e-4
radius = 200.0
steps_per_gamma = 32
[nonlinearity]
kind = "critical_stem"
"#;
        let err = ScenarioConfig::parse(text).unwrap_err().to_string();
        assert!(err.contains("dim"), "{err}");
    }

    #[test]
    fn negative_mass_in_h1_is_a_config_error() {
        let text = S1.replace("lambda = 1.0", "lambda = -1.0");
        assert!(matches!(ScenarioConfig::parse(&text), Err(ConfigError::Invalid(_))));
    }

    #[test]
    fn regime_mismatches() {
        let text = S1.replace("subcritical_H1", "critical_D12");
        assert!(ScenarioConfig::parse(&text).is_err());
        let text = S1.replace("subcritical_H1", "ball_domain");
        assert!(ScenarioConfig::parse(&text).is_err());
    }

    #[test]
    fn amplitude_sweep_needs_a_modulation() {
        let mut cfg = ScenarioConfig::parse(S1).unwrap();
        assert!(cfg.set_amplitude(0.5).is_err());
        cfg.nonlinearity = Kind::SpatialModulation {
            base: Box::new(cfg.nonlinearity.clone()),
            envelope: Envelope::Gaussian { amplitude: 0.0, width: 1.0 },
        };
        cfg.set_amplitude(0.5).unwrap();
        let again = ScenarioConfig::parse(&cfg.to_toml()).unwrap();
        assert_eq!(again, cfg);
    }
}
