//! Penalty experiments: a scenario rerun over a parameter sweep, tabulating
//! `c`, the asymptotic level `c_#` and the strict flag.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{ConfigError, ScenarioConfig};
use crate::pipeline::{run_scenario, ScenarioError};
use crate::report::{ScenarioReport, Status};

/// Swept parameter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Parameter {
    /// Amplitude of the Gaussian envelope of a spatial modulation.
    Amplitude,
    /// Ball regime: `lambda = -fraction * lambda_1`.
    LambdaFraction,
    Lambda,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sweep {
    pub parameter: Parameter,
    pub values: Vec<f64>,
}

impl std::str::FromStr for Sweep {
    type Err = ConfigError;

    /// `name=v1,v2,...` with `name` one of `amplitude`, `lambda_fraction`,
    /// `lambda`.
    fn from_str(s: &str) -> Result<Self, ConfigError> {
        let bad = |m: String| ConfigError::Invalid(format!("sweep {s:?}: {m}"));
        let (name, list) = s.split_once('=').ok_or_else(|| bad("expected name=v1,v2,...".into()))?;
        let parameter = match name.trim() {
            "amplitude" | "a" => Parameter::Amplitude,
            "lambda_fraction" => Parameter::LambdaFraction,
            "lambda" => Parameter::Lambda,
            other => return Err(bad(format!("unknown parameter {other:?}"))),
        };
        let values = list
            .split(',')
            .map(|v| v.trim().parse::<f64>().map_err(|e| bad(format!("{v:?}: {e}"))))
            .collect::<Result<Vec<_>, _>>()?;
        if values.is_empty() {
            return Err(bad("no values".into()));
        }
        Ok(Sweep { parameter, values })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PenaltyRow {
    pub value: f64,
    pub c: Option<f64>,
    /// Smallest finite asymptotic level, if any.
    pub c_sharp: Option<f64>,
    /// Every strict flag set.
    pub strict: bool,
    pub nonstrict_ok: bool,
    pub status: Status,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PenaltyTable {
    pub scenario: String,
    pub parameter: Parameter,
    pub margin: f64,
    pub rows: Vec<PenaltyRow>,
    /// `c` strictly decreases as the parameter increases.
    pub c_decreasing: bool,
}

impl PenaltyTable {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("value,c,c_sharp,strict,nonstrict_ok,status\n");
        let opt = |v: Option<f64>| v.map_or(String::new(), |v| format!("{v:.17e}"));
        for r in &self.rows {
            s.push_str(&format!(
                "{},{},{},{},{},{:?}\n",
                r.value,
                opt(r.c),
                opt(r.c_sharp),
                r.strict,
                r.nonstrict_ok,
                r.status
            ));
        }
        s
    }
}

pub fn apply(cfg: &ScenarioConfig, parameter: Parameter, value: f64) -> Result<ScenarioConfig, ConfigError> {
    let mut c = cfg.clone();
    match parameter {
        Parameter::Amplitude => c.set_amplitude(value)?,
        Parameter::LambdaFraction => c.lambda_fraction = Some(value),
        Parameter::Lambda => c.lambda = value,
    }
    c.name = format!("{}_{value}", cfg.name);
    // Expectations of the base scenario do not carry over to other values.
    c.verify.expect_level = None;
    c.verify.expect_strict = None;
    c.validate()?;
    Ok(c)
}

fn row(value: f64, report: &ScenarioReport) -> PenaltyRow {
    let cmp = report.comparison.as_ref();
    PenaltyRow {
        value,
        c: report.level("c"),
        c_sharp: cmp.and_then(|c| c.c_sharp.values().flatten().copied().reduce(f64::min)),
        strict: cmp.is_some_and(|c| !c.strict_flags.is_empty() && c.strict_flags.values().all(|&s| s)),
        nonstrict_ok: cmp.is_some_and(|c| c.all_nonstrict()),
        status: report.status,
    }
}

/// Runs the sweep, one scenario per value in parallel.
pub fn penalty_experiment(
    cfg: &ScenarioConfig,
    sweep: &Sweep,
) -> Result<(PenaltyTable, Vec<ScenarioReport>), ScenarioError> {
    let configs = sweep
        .values
        .iter()
        .map(|&v| apply(cfg, sweep.parameter, v))
        .collect::<Result<Vec<_>, _>>()?;
    let reports = configs
        .par_iter()
        .map(|c| run_scenario(c).map(|(r, _)| r))
        .collect::<Result<Vec<_>, _>>()?;
    let rows: Vec<PenaltyRow> = sweep.values.iter().zip(&reports).map(|(&v, r)| row(v, r)).collect();
    let mut order: Vec<&PenaltyRow> = rows.iter().collect();
    order.sort_by(|a, b| a.value.total_cmp(&b.value));
    let c_decreasing = order.windows(2).all(|w| matches!((w[0].c, w[1].c), (Some(a), Some(b)) if b < a));
    let table = PenaltyTable {
        scenario: cfg.name.clone(),
        parameter: sweep.parameter,
        margin: cfg.verify.margin,
        rows,
        c_decreasing,
    };
    Ok((table, reports))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sweep_grammar() {
        let s: Sweep = "amplitude=0, 0.5,1".parse().unwrap();
        assert_eq!(s, Sweep { parameter: Parameter::Amplitude, values: vec![0.0, 0.5, 1.0] });
        assert!("depth=1".parse::<Sweep>().is_err());
        assert!("amplitude".parse::<Sweep>().is_err());
        assert!("lambda=x".parse::<Sweep>().is_err());
    }
}
