use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use mpcc_core::function_space::DiscreteFunction;
use mpcc_core::functional::EnergyFunctional;
use mpcc_scenarios::config::ScenarioConfig;
use mpcc_scenarios::penalty::{penalty_experiment, Sweep};
use mpcc_scenarios::pipeline::{decompose_sequence, run_scenario, ScenarioError};
use mpcc_scenarios::report::{emit, summarize, write_atomic, ScenarioReport, EXIT_CONFIG};

#[derive(Parser)]
#[command(name = "mpcc", version, about = "Mountain-pass levels, penalty checks and profile decompositions")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Seed for randomized checks (overrides the config).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory (overrides the config).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Solver tolerance: descent gradient tolerance, or remainder tolerance
    /// for `decompose`.
    #[arg(long, global = true)]
    tol: Option<f64>,
    #[arg(long, global = true)]
    quiet: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Run the scenario pipeline and write its report.
    Solve { config: PathBuf },
    /// Sphere maximization only.
    Kappa { config: PathBuf },
    /// Rerun the scenario over `name=v1,v2,...`.
    Penalty {
        config: PathBuf,
        #[arg(long)]
        sweep: String,
    },
    /// Decompose the sequence stored as CSV files (sorted by name) in a directory.
    Decompose { config: PathBuf, sequence_dir: PathBuf },
    /// Pohozaev residual of a profile CSV under the config's functional.
    Pohozaev { config: PathBuf, profile: PathBuf },
    /// Summarize the JSON reports in a directory.
    Report { dir: PathBuf },
}

enum Failure {
    Config(String),
    Other(String),
}

impl From<ScenarioError> for Failure {
    fn from(e: ScenarioError) -> Self {
        Failure::Config(e.to_string())
    }
}

impl From<mpcc_scenarios::ConfigError> for Failure {
    fn from(e: mpcc_scenarios::ConfigError) -> Self {
        Failure::Config(e.to_string())
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Other(e.to_string())
    }
}

fn load(cli: &Cli, path: &Path) -> Result<ScenarioConfig, Failure> {
    let mut cfg = ScenarioConfig::load(path)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(tol) = cli.tol {
        cfg.solver.tol_g = tol;
        if let Some(s) = cfg.synthetic.as_mut() {
            s.tol_remainder = tol;
        }
    }
    Ok(cfg)
}

fn out_dir(cli: &Cli, cfg: &ScenarioConfig) -> PathBuf {
    cli.out
        .clone()
        .or_else(|| cfg.out_dir.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out").join(&cfg.name))
}

fn solve(cli: &Cli, cfg: ScenarioConfig) -> Result<i32, Failure> {
    let (report, artifacts) = run_scenario(&cfg)?;
    let dir = out_dir(cli, &cfg);
    let files = emit(&report, &artifacts, &dir)?;
    if !cli.quiet {
        print!("{}", summarize(std::slice::from_ref(&report)));
        for v in report.verify.iter().filter(|v| !v.pass) {
            println!("  failed {}: {}", v.name, v.detail);
        }
        for e in &report.errors {
            println!("  error in {}: {}", e.stage, e.message);
        }
        println!("wrote {} files to {}", files.len(), dir.display());
    }
    Ok(report.status.exit_code())
}

fn run(cli: &Cli) -> Result<i32, Failure> {
    match &cli.command {
        Command::Solve { config } => solve(cli, load(cli, config)?),
        Command::Kappa { config } => {
            let mut cfg = load(cli, config)?;
            cfg.solver.descent = false;
            cfg.solver.kappa = Some(true);
            cfg.solver.shooting = None;
            cfg.synthetic = None;
            solve(cli, cfg)
        }
        Command::Penalty { config, sweep } => {
            let cfg = load(cli, config)?;
            let sweep: Sweep = sweep.parse()?;
            let (table, reports) = penalty_experiment(&cfg, &sweep)?;
            let dir = out_dir(cli, &cfg);
            write_atomic(&dir.join(format!("{}_penalty.csv", cfg.name)), &table.to_csv())?;
            write_atomic(
                &dir.join(format!("{}_penalty.json", cfg.name)),
                &serde_json::to_string_pretty(&table).expect("table serializes"),
            )?;
            for r in &reports {
                write_atomic(&dir.join(format!("{}.json", r.name)), &r.to_json())?;
            }
            if !cli.quiet {
                print!("{}", table.to_csv());
                println!("c decreasing: {}", table.c_decreasing);
            }
            let worst = reports.iter().map(|r| r.status.exit_code()).max().unwrap_or(0);
            Ok(if worst == 0 && !table.rows.iter().all(|r| r.nonstrict_ok) { 4 } else { worst })
        }
        Command::Decompose { config, sequence_dir } => {
            let cfg = load(cli, config)?;
            let spec = cfg.spec()?;
            let mut files: Vec<PathBuf> = std::fs::read_dir(sequence_dir)?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.extension().is_some_and(|x| x == "csv"))
                .collect();
            files.sort();
            let seq = files
                .iter()
                .map(|p| DiscreteFunction::read_csv(p).map_err(|e| Failure::Other(format!("{}: {e}", p.display()))))
                .collect::<Result<Vec<_>, _>>()?;
            let (tol, max_profiles) = cfg.synthetic.as_ref().map_or((cli.tol.unwrap_or(0.05), 6), |s| (s.tol_remainder, s.max_profiles));
            let (summary, _) = decompose_sequence(&cfg, &spec, &seq, tol, max_profiles, Vec::new()).map_err(Failure::Other)?;
            let text = serde_json::to_string_pretty(&summary).expect("summary serializes");
            write_atomic(&out_dir(cli, &cfg).join(format!("{}_decomposition.json", cfg.name)), &text)?;
            if !cli.quiet {
                println!("{text}");
            }
            let ok = summary.norms_ok && summary.separation_ok && summary.remainder_ok;
            Ok(if ok { 0 } else { 4 })
        }
        Command::Pohozaev { config, profile } => {
            let cfg = load(cli, config)?;
            let u = DiscreteFunction::read_csv(profile).map_err(|e| Failure::Other(e.to_string()))?;
            let f = EnergyFunctional::new(std::sync::Arc::clone(u.grid()), cfg.lambda, cfg.spec()?, cfg.regime)
                .map_err(|e| Failure::Config(e.to_string()))?;
            let p = f.pohozaev_residual(&u).map_err(|e| Failure::Other(e.to_string()))?;
            if !cli.quiet {
                println!("{}", serde_json::to_string_pretty(&p).expect("residual serializes"));
            }
            Ok(match cfg.verify.pohozaev_tol {
                Some(tol) if p.relative.abs() > tol => 4,
                _ => 0,
            })
        }
        Command::Report { dir } => {
            let mut reports = Vec::new();
            let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)?.filter_map(|e| e.ok().map(|e| e.path())).collect();
            paths.sort();
            for p in paths.iter().filter(|p| p.extension().is_some_and(|x| x == "json")) {
                let text = std::fs::read_to_string(p)?;
                // Other JSON files (penalty tables, decompositions) are skipped.
                if let Ok(r) = serde_json::from_str::<ScenarioReport>(&text) {
                    reports.push(r);
                }
            }
            print!("{}", summarize(&reports));
            Ok(reports.iter().map(|r| r.status.exit_code()).max().unwrap_or(0))
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(Failure::Config(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(EXIT_CONFIG as u8)
        }
        Err(Failure::Other(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
    }
}
