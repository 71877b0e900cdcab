//! Scenario reports: the JSON document described by
//! `docs/report.schema.json` and the CSV bundle written next to it.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use mpcc_core::function_space::DiscreteFunction;
use mpcc_core::mountain_pass::{DescentStatus, LevelReport, LevelRoute};
use mpcc_core::profile_decomposition::ProfileClass;
use serde::{Deserialize, Serialize};

use crate::config::ScenarioConfig;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Ok,
    NotConverged,
    VerificationFailed,
    Error,
}

impl Status {
    /// Process exit code of a run ending with this status.
    pub fn exit_code(self) -> i32 {
        match self {
            Status::Ok => 0,
            Status::Error => 1,
            Status::NotConverged => 3,
            Status::VerificationFailed => 4,
        }
    }
}

/// Exit code for a rejected configuration.
pub const EXIT_CONFIG: i32 = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Level {
    /// `None` for an infinite level.
    pub value: Option<f64>,
    pub route: LevelRoute,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checks {
    pub growth_pass: bool,
    pub growth_constants: BTreeMap<String, f64>,
    pub ar_pass: Option<bool>,
    pub mu: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KappaTable {
    pub kappa1: f64,
    /// `(t, kappa(t))` from the scaling law.
    pub scaled: Vec<(f64, f64)>,
    pub kappa_plus1: Option<f64>,
    pub kappa_minus1: Option<f64>,
    pub selfsimilar: bool,
    /// Dilation-path maximizer through the rescaled sphere maximizer.
    pub t_star: Option<f64>,
    pub tangential_gradient: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DescentSummary {
    pub c_est: f64,
    pub grad_norm: f64,
    pub iters: usize,
    pub status: DescentStatus,
    pub restarts: Vec<usize>,
    pub path_nodes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShootingSummary {
    pub alpha: f64,
    pub level: f64,
    /// `G` of the shooting profile interpolated onto the grid.
    pub grid_energy: f64,
    pub pohozaev_relative: f64,
    pub bisections: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Residuals {
    /// Dual norm of `G'(u)` relative to the norm of `u`.
    pub gradient: f64,
    pub nehari: f64,
    /// `None` for non-autonomous nonlinearities.
    pub pohozaev: Option<f64>,
    pub pohozaev_printed: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileSummary {
    pub class: ProfileClass,
    pub norm_sq: f64,
    pub scales: Vec<i32>,
    pub centers: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecompositionSummary {
    pub profiles: Vec<ProfileSummary>,
    pub remainder: Vec<f64>,
    pub ledger_profiles: f64,
    pub ledger_limsup: f64,
    pub incomplete: bool,
    pub norms_ok: bool,
    pub separation_ok: bool,
    pub remainder_ok: bool,
    pub split_lhs: Option<f64>,
    pub split_rhs: Option<f64>,
    pub split_gap: Option<f64>,
    /// Norms of the planted profiles `w` and `w_inf`.
    pub planted: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageError {
    pub stage: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioReport {
    pub schema_version: u32,
    pub name: String,
    pub seed: u64,
    pub status: Status,
    pub config: ScenarioConfig,
    /// Mass used by the functional (resolved from `lambda_fraction`).
    pub lambda: f64,
    pub lambda_1: Option<f64>,
    pub checks: Option<Checks>,
    pub levels: BTreeMap<String, Level>,
    /// Comparison of `c` with each asymptotic level; the unconditional
    /// inequality is in `nonstrict_ok`, strictness in `strict_flags`.
    pub comparison: Option<LevelReport<f64>>,
    pub kappa: Option<KappaTable>,
    pub descent: Option<DescentSummary>,
    pub shooting: Option<ShootingSummary>,
    pub residuals: Option<Residuals>,
    pub decomposition: Option<DecompositionSummary>,
    pub verify: Vec<Verdict>,
    pub errors: Vec<StageError>,
    /// Wall-clock seconds per stage; excluded from [`ScenarioReport::body`].
    pub timing: BTreeMap<String, f64>,
}

/// Bulk data written as CSV next to the report.
#[derive(Debug, Clone, Default)]
pub struct Artifacts {
    pub candidate: Option<DiscreteFunction<f64>>,
    pub shooting_profile: Option<DiscreteFunction<f64>>,
    /// `(parameter, energy)` along the final path.
    pub path: Vec<(f64, f64)>,
    pub history: Vec<f64>,
    pub profiles: Vec<DiscreteFunction<f64>>,
}

impl ScenarioReport {
    pub fn new(cfg: &ScenarioConfig) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            name: cfg.name.clone(),
            seed: cfg.seed,
            status: Status::Ok,
            config: cfg.clone(),
            lambda: cfg.lambda,
            lambda_1: None,
            checks: None,
            levels: BTreeMap::new(),
            comparison: None,
            kappa: None,
            descent: None,
            shooting: None,
            residuals: None,
            decomposition: None,
            verify: Vec::new(),
            errors: Vec::new(),
            timing: BTreeMap::new(),
        }
    }

    pub fn level(&self, label: &str) -> Option<f64> {
        self.levels.get(label).and_then(|l| l.value)
    }

    pub fn verdict(&self, name: &str) -> Option<&Verdict> {
        self.verify.iter().find(|v| v.name == name)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// The report without its timing fields, for determinism checks.
    pub fn body(&self) -> String {
        let mut v = serde_json::to_value(self).expect("report serializes");
        if let Some(map) = v.as_object_mut() {
            map.remove("timing");
        }
        serde_json::to_string(&v).expect("report serializes")
    }
}

/// Writes `contents` to `path` through a temporary file in the same
/// directory, so readers never observe a partial file.
pub fn write_atomic(path: &Path, contents: &str) -> std::io::Result<()> {
    let dir = path.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(contents.as_bytes())?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

fn table(header: &str, rows: impl Iterator<Item = String>) -> String {
    let mut s = String::from(header);
    s.push('\n');
    for r in rows {
        s.push_str(&r);
        s.push('\n');
    }
    s
}

/// Writes `<name>.json` and the CSV bundle into `dir`; returns the paths.
pub fn emit(report: &ScenarioReport, artifacts: &Artifacts, dir: &Path) -> std::io::Result<Vec<PathBuf>> {
    let name = &report.name;
    let mut written = Vec::new();
    let mut put = |file: String, contents: String| -> std::io::Result<()> {
        let p = dir.join(file);
        write_atomic(&p, &contents)?;
        written.push(p);
        Ok(())
    };
    put(format!("{name}.json"), report.to_json())?;
    put(
        format!("{name}_levels.csv"),
        table(
            "label,value,route,converged",
            report.levels.iter().map(|(k, l)| {
                let v = l.value.map_or("inf".to_string(), |v| format!("{v:.17e}"));
                format!("{k},{v},{:?},{}", l.route, l.converged)
            }),
        ),
    )?;
    if let Some(u) = &artifacts.candidate {
        put(format!("{name}_candidate.csv"), u.to_csv())?;
    }
    if let Some(u) = &artifacts.shooting_profile {
        put(format!("{name}_shooting.csv"), u.to_csv())?;
    }
    if !artifacts.path.is_empty() {
        put(
            format!("{name}_path.csv"),
            table("parameter,energy", artifacts.path.iter().map(|(t, e)| format!("{t:.17e},{e:.17e}"))),
        )?;
    }
    if !artifacts.history.is_empty() {
        put(
            format!("{name}_history.csv"),
            table("iteration,path_max", artifacts.history.iter().enumerate().map(|(i, e)| format!("{i},{e:.17e}"))),
        )?;
    }
    if let Some(k) = &report.kappa {
        put(
            format!("{name}_kappa.csv"),
            table("t,kappa", k.scaled.iter().map(|(t, v)| format!("{t:.17e},{v:.17e}"))),
        )?;
    }
    for (i, w) in artifacts.profiles.iter().enumerate() {
        put(format!("{name}_profile_{i}.csv"), w.to_csv())?;
    }
    Ok(written)
}

/// One line per report: name, status, `c` and the strict flags.
pub fn summarize(reports: &[ScenarioReport]) -> String {
    let mut s = String::from("name      status               c               strict\n");
    for r in reports {
        let c = r.level("c").map_or("-".to_string(), |c| format!("{c:.6}"));
        let strict = r.comparison.as_ref().map_or("-".to_string(), |cmp| {
            cmp.strict_flags.iter().map(|(k, v)| format!("{k}={v}")).collect::<Vec<_>>().join(" ")
        });
        let _ = writeln!(s, "{:<9} {:<20} {:<15} {}", r.name, format!("{:?}", r.status), c, strict);
    }
    s
}
