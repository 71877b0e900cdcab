//! The regime-dependent pipeline: structural checks, sphere maximization
//! and/or mountain-pass descent, asymptotic levels, diagnostics and an
//! optional decomposition of a planted sequence.

use std::sync::Arc;
use std::time::Instant;

use mpcc_core::function_space::{DiscreteFunction, DomainKind, Grid};
use mpcc_core::functional::{EnergyFunctional, Regime};
use mpcc_core::mountain_pass::{
    initial_path_with, level_from_kappa, mp_level_descent, mp_level_report, radial_shooting_oracle, DescentOptions,
    DescentStatus, LevelEstimate, LevelRoute, ShootingOptions, ShootingTarget,
};
use mpcc_core::nonlinearity::{
    check_ar, check_growth, check_selfsimilar, AsymptoticLimit, Direction, Nonlinearity, NonlinearitySpec, LIMIT_TOL,
};
use mpcc_core::profile_decomposition::{
    decompose, energy_split, space_norm_sq, synth_multibump, verify_decomposition, AsymptoticFamily, DecomposeOptions,
    Schedule,
};
use mpcc_core::sphere_maximizer::{kappa, kappa_one, maximizer_to_critical_point, KappaOptions};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::config::{ConfigError, Profile, ScenarioConfig, SyntheticConfig};
use crate::report::{
    Artifacts, Checks, DecompositionSummary, DescentSummary, KappaTable, Level, ProfileSummary, Residuals,
    ScenarioReport, ShootingSummary, StageError, Status, Verdict,
};

/// Relative accuracy required of the gradient against central differences.
pub const FD_TOL: f64 = 1e-6;
/// Relative accuracy required of the dilation scaling laws.
pub const SCALING_TOL: f64 = 0.01;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    /// A structural hypothesis failed; nothing was solved.
    #[error("precondition failed: {0}")]
    Precondition(String),
}

type Spec = NonlinearitySpec<f64>;

struct Run<'a> {
    cfg: &'a ScenarioConfig,
    grid: Arc<Grid<f64>>,
    spec: Spec,
    report: ScenarioReport,
    artifacts: Artifacts,
    candidate: Option<DiscreteFunction<f64>>,
    selfsimilar: bool,
    kappa1: Option<f64>,
}

fn stage<T>(run: &mut Run<'_>, name: &str, f: impl FnOnce(&mut Run<'_>) -> Result<T, String>) -> Option<T> {
    let t = Instant::now();
    let out = f(run);
    run.report.timing.insert(name.to_string(), t.elapsed().as_secs_f64());
    match out {
        Ok(v) => Some(v),
        Err(message) => {
            run.report.errors.push(StageError { stage: name.to_string(), message });
            None
        }
    }
}

fn verdict(report: &mut ScenarioReport, name: &str, pass: bool, detail: String) {
    report.verify.push(Verdict { name: name.to_string(), pass, detail });
}

/// Starting profile used when the configuration does not give one.
pub fn default_seed(cfg: &ScenarioConfig, grid: &Arc<Grid<f64>>) -> DiscreteFunction<f64> {
    let profile = cfg.solver.seed_profile.clone().unwrap_or(match (cfg.regime, grid.is_radial()) {
        (_, false) => Profile::Gaussian { amplitude: 2.0, width: 2.0, shift: 0.0 },
        (Regime::CriticalD12, true) => Profile::Talenti { amplitude: 1.0, width: 1.0 },
        (Regime::BallDomain, true) => Profile::BallBubble { amplitude: 1.0, width: 0.1 * grid.extent() },
        (Regime::SubcriticalH1, true) => Profile::Gaussian { amplitude: 3.0, width: 2.0, shift: 0.0 },
    });
    profile.sample(grid)
}

fn descent_options(cfg: &ScenarioConfig) -> DescentOptions<f64> {
    DescentOptions {
        tol_g: cfg.solver.tol_g,
        max_outer: cfg.solver.max_outer,
        max_nodes: cfg.solver.max_nodes,
        ..DescentOptions::default()
    }
}

fn kappa_options(cfg: &ScenarioConfig) -> KappaOptions<f64> {
    KappaOptions { starts: cfg.solver.kappa_starts, ..KappaOptions::default() }
}

/// Level of an autonomous selfsimilar zero mass problem through `kappa(1)`
/// computed on `grid`.
fn kappa_level<N: Nonlinearity<f64>>(
    nl: &N,
    grid: &Arc<Grid<f64>>,
    opts: &KappaOptions<f64>,
) -> Result<(f64, f64), String> {
    let k = kappa_one(nl, grid, opts).map_err(|e| e.to_string())?;
    let level = level_from_kappa(grid.dim(), k.kappa1).map_err(|e| e.to_string())?;
    Ok((k.kappa1, level))
}

/// Runs the pipeline. Configuration problems and failed structural checks
/// are errors; failures of later stages are recorded in the report.
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<(ScenarioReport, Artifacts), ScenarioError> {
    cfg.validate()?;
    let grid = cfg.grid.build(cfg.gamma)?;
    let spec = cfg.spec()?;
    let mut report = ScenarioReport::new(cfg);

    if cfg.regime == Regime::BallDomain {
        let l1 = grid.principal_eigenvalue();
        report.lambda_1 = Some(l1);
        if let Some(f) = cfg.lambda_fraction {
            report.lambda = -f * l1;
        }
    }

    let t = Instant::now();
    let sample = cfg.verify.sample.to_box();
    let growth = check_growth(&spec, cfg.growth_regime(), &sample).map_err(|e| ScenarioError::Precondition(e.to_string()))?;
    let ar = match cfg.verify.mu {
        Some(mu) => Some(check_ar(&spec, mu, &sample).map_err(|e| ScenarioError::Precondition(e.to_string()))?),
        None => None,
    };
    if !growth.pass {
        return Err(ScenarioError::Precondition(format!("growth check ({:?}) failed", growth.regime)));
    }
    if ar == Some(false) {
        return Err(ScenarioError::Precondition(format!("AR condition fails for mu = {}", cfg.verify.mu.unwrap_or(0.0))));
    }
    report.checks = Some(Checks {
        growth_pass: growth.pass,
        growth_constants: growth.constants.iter().map(|c| (c.label.clone(), c.value)).collect(),
        ar_pass: ar,
        mu: cfg.verify.mu,
    });
    verdict(&mut report, "growth", growth.pass, format!("{:?}", growth.regime));
    if let (Some(pass), Some(mu)) = (ar, cfg.verify.mu) {
        verdict(&mut report, "ar", pass, format!("mu = {mu}"));
    }
    report.timing.insert("checks".into(), t.elapsed().as_secs_f64());

    let functional = EnergyFunctional::new(Arc::clone(&grid), report.lambda, spec.clone(), cfg.regime)
        .map_err(|e| ConfigError::Invalid(e.to_string()))?;
    let selfsimilar = spec.dim() >= 3 && check_selfsimilar(&spec, cfg.gamma, 1e-9);
    let mut run = Run {
        cfg,
        grid,
        spec,
        report,
        artifacts: Artifacts::default(),
        candidate: None,
        selfsimilar,
        kappa1: None,
    };

    if cfg.solver.kappa.unwrap_or(cfg.regime == Regime::CriticalD12) {
        stage(&mut run, "kappa", |run| kappa_stage(run, &functional));
    }
    if cfg.solver.descent {
        stage(&mut run, "descent", |run| descent_stage(run, &functional));
    }
    if cfg.solver.shooting.is_some() {
        stage(&mut run, "shooting", |run| shooting_stage(run, &functional));
    }
    if run.report.levels.contains_key("c") {
        stage(&mut run, "asymptotic", asymptotic_stage);
    }
    if let Some(u) = run.candidate.clone() {
        stage(&mut run, "residuals", |run| residual_stage(run, &functional, &u));
    }
    if let Some(syn) = &cfg.synthetic {
        stage(&mut run, "decomposition", |run| decomposition_stage(run, syn));
    }
    let t = Instant::now();
    verify_stage(&mut run, &functional);
    run.report.timing.insert("verify".into(), t.elapsed().as_secs_f64());

    let Run { mut report, mut artifacts, candidate, .. } = run;
    report.status = if !report.errors.is_empty() {
        Status::Error
    } else if cfg.solver.require_convergence && report.levels.values().any(|l| !l.converged) {
        Status::NotConverged
    } else if report.verify.iter().any(|v| !v.pass) {
        Status::VerificationFailed
    } else {
        Status::Ok
    };
    artifacts.candidate = candidate;
    Ok((report, artifacts))
}

fn kappa_stage(run: &mut Run<'_>, functional: &EnergyFunctional<f64, Spec>) -> Result<(), String> {
    let opts = kappa_options(run.cfg);
    let k = kappa_one(&run.spec, &run.grid, &opts).map_err(|e| e.to_string())?;
    let dim = run.grid.dim();
    let scaled = [1.0, 2.0, 4.0]
        .iter()
        .map(|&t| kappa(dim, k.kappa1, t).map(|v| (t, v)).map_err(|e| e.to_string()))
        .collect::<Result<Vec<_>, _>>()?;
    let mut t_star = None;
    if functional.regime() == Regime::CriticalD12 && run.spec.is_autonomous() {
        let cp = maximizer_to_critical_point(functional, &k).map_err(|e| e.to_string())?;
        t_star = Some(cp.t_star);
        if run.selfsimilar {
            run.report.levels.insert("c".into(), Level { value: Some(cp.level), route: LevelRoute::Kappa, converged: true });
            run.candidate = Some(cp.w.clone());
        }
    }
    run.kappa1 = Some(k.kappa1);
    let (kappa_plus1, kappa_minus1) = if run.selfsimilar { (Some(k.kappa1), Some(k.kappa1)) } else { (None, None) };
    run.report.kappa = Some(KappaTable {
        kappa1: k.kappa1,
        scaled,
        kappa_plus1,
        kappa_minus1,
        selfsimilar: run.selfsimilar,
        t_star,
        tangential_gradient: k.best_gradient_norm,
    });
    Ok(())
}

fn descent_stage(run: &mut Run<'_>, functional: &EnergyFunctional<f64, Spec>) -> Result<(), String> {
    let seed = default_seed(run.cfg, &run.grid);
    let path = initial_path_with(functional, &seed, run.cfg.solver.segments).map_err(|e| e.to_string())?;
    let out = mp_level_descent(functional, &path, &descent_options(run.cfg)).map_err(|e| e.to_string())?;
    let converged = out.status == DescentStatus::Converged;
    let label = if run.report.levels.contains_key("c") { "c_descent" } else { "c" };
    run.report.levels.insert(label.into(), Level { value: Some(out.c_est), route: LevelRoute::Descent, converged });
    run.report.descent = Some(DescentSummary {
        c_est: out.c_est,
        grad_norm: out.grad_norm,
        iters: out.iters,
        status: out.status,
        restarts: out.restarts.clone(),
        path_nodes: out.path.nodes().len(),
    });
    run.artifacts.path = out.path.params().iter().copied().zip(out.path.energies(functional)).collect();
    run.artifacts.history = out.history.clone();
    if label == "c" {
        run.candidate = Some(out.candidate);
    }
    Ok(())
}

fn shooting_stage(run: &mut Run<'_>, functional: &EnergyFunctional<f64, Spec>) -> Result<(), String> {
    let sh = run.cfg.solver.shooting.as_ref().expect("shooting configured");
    let opts = ShootingOptions { step: sh.step, r_max: sh.r_max, ..ShootingOptions::default() };
    let res = radial_shooting_oracle(
        &run.spec,
        run.report.lambda,
        ShootingTarget::Decay,
        (sh.bracket[0], sh.bracket[1]),
        &opts,
    )
    .map_err(|e| e.to_string())?;
    let profile = res.profile_on(&run.grid);
    let poho = functional.pohozaev_residual(&profile).map_err(|e| e.to_string())?;
    run.report.levels.insert("c_shooting".into(), Level { value: Some(res.level), route: LevelRoute::Shooting, converged: true });
    run.report.shooting = Some(ShootingSummary {
        alpha: res.alpha,
        level: res.level,
        grid_energy: functional.energy(&profile),
        pohozaev_relative: poho.relative,
        bisections: res.bisections,
    });
    run.artifacts.shooting_profile = Some(profile);
    Ok(())
}

/// Level of the problem with `F` replaced by its limit in `direction`, or
/// `Ok(None)` when the limit cannot be certified.
fn asymptotic_level(run: &mut Run<'_>, direction: Direction, label: &str) -> Result<Option<LevelEstimate<f64>>, String> {
    let sample = run.cfg.verify.sample.to_box();
    let limit = match AsymptoticLimit::certify(&run.spec, direction, &sample, LIMIT_TOL) {
        Ok(l) => l,
        Err(e) => {
            run.report.verify.push(Verdict {
                name: format!("{label}_certified"),
                pass: true,
                detail: format!("excluded from the comparison: {e}"),
            });
            return Ok(None);
        }
    };
    if limit.is_zero() {
        return Ok(Some(LevelEstimate::infinite(label)));
    }
    match direction {
        Direction::Plus | Direction::Minus => {
            if !limit.is_autonomous() {
                return Err(format!("the {label} problem is not autonomous"));
            }
            let (k1, level) = if run.selfsimilar {
                let k1 = match run.kappa1 {
                    Some(k) if run.cfg.regime == Regime::CriticalD12 => k,
                    _ => kappa_one(&run.spec, &aux_grid(run)?, &kappa_options(run.cfg)).map_err(|e| e.to_string())?.kappa1,
                };
                (k1, level_from_kappa(run.grid.dim(), k1).map_err(|e| e.to_string())?)
            } else {
                let grid = if run.cfg.regime == Regime::CriticalD12 { Arc::clone(&run.grid) } else { aux_grid(run)? };
                kappa_level(&limit, &grid, &kappa_options(run.cfg))?
            };
            if let Some(k) = run.report.kappa.as_mut() {
                if direction == Direction::Plus {
                    k.kappa_plus1 = Some(k1);
                } else {
                    k.kappa_minus1 = Some(k1);
                }
            }
            Ok(Some(LevelEstimate::finite(label, level, LevelRoute::Kappa, true)))
        }
        Direction::Spatial => {
            if run.spec.is_autonomous() {
                // The limit problem is the problem itself.
                let c = run.report.levels["c"].clone();
                return Ok(Some(LevelEstimate::finite(label, c.value.unwrap_or(f64::NAN), c.route, c.converged)));
            }
            let f = EnergyFunctional::new(Arc::clone(&run.grid), run.report.lambda, limit, run.cfg.regime)
                .map_err(|e| e.to_string())?;
            let seed = default_seed(run.cfg, &run.grid);
            let path = initial_path_with(&f, &seed, run.cfg.solver.segments).map_err(|e| e.to_string())?;
            let out = mp_level_descent(&f, &path, &descent_options(run.cfg)).map_err(|e| e.to_string())?;
            Ok(Some(LevelEstimate::finite(label, out.c_est, LevelRoute::Descent, out.status == DescentStatus::Converged)))
        }
    }
}

fn aux_grid(run: &Run<'_>) -> Result<Arc<Grid<f64>>, String> {
    let a = &run.cfg.solver.aux_grid;
    let ratio = run.cfg.gamma.powf(1.0 / f64::from(a.steps_per_gamma.max(1)));
    Grid::radial_geometric(run.grid.dim(), a.r_min, a.radius, ratio, DomainKind::WholeSpaceTruncated)
        .map(Arc::new)
        .map_err(|e| e.to_string())
}

fn asymptotic_stage(run: &mut Run<'_>) -> Result<(), String> {
    let targets: &[(Direction, &str)] = match run.cfg.regime {
        Regime::CriticalD12 => &[(Direction::Plus, "c_plus"), (Direction::Minus, "c_minus")],
        Regime::BallDomain => &[(Direction::Plus, "c_plus")],
        Regime::SubcriticalH1 => &[(Direction::Spatial, "c_inf")],
    };
    let mut estimates = Vec::new();
    for &(direction, label) in targets {
        if let Some(est) = asymptotic_level(run, direction, label)? {
            run.report.levels.insert(
                label.into(),
                Level { value: est.value, route: est.route, converged: est.converged },
            );
            estimates.push(est);
        }
    }
    let c = &run.report.levels["c"];
    let level = LevelEstimate { label: "c".into(), value: c.value, route: c.route, converged: c.converged };
    let cmp = mp_level_report(&level, &estimates, run.cfg.verify.margin, run.cfg.verify.tolerance)
        .map_err(|e| e.to_string())?;
    run.report.comparison = Some(cmp);
    Ok(())
}

fn residual_stage(run: &mut Run<'_>, functional: &EnergyFunctional<f64, Spec>, u: &DiscreteFunction<f64>) -> Result<(), String> {
    let norm = functional.norm_sq(u).sqrt();
    let gradient = functional.gradient_residual(u).dual_norm / norm.max(f64::MIN_POSITIVE);
    let nehari = functional.nehari_residual(u);
    let poho = if run.spec.is_autonomous() {
        Some(functional.pohozaev_residual(u).map_err(|e| e.to_string())?)
    } else {
        None
    };
    run.report.residuals = Some(Residuals {
        gradient,
        nehari,
        pohozaev: poho.map(|p| p.relative),
        pohozaev_printed: poho.and_then(|p| p.printed_relative),
    });
    Ok(())
}

fn decomposition_stage(run: &mut Run<'_>, syn: &SyntheticConfig) -> Result<(), String> {
    let w = syn.w.sample(&run.grid);
    let w_inf = syn.w_inf.sample(&run.grid);
    let schedule = if syn.slopes.is_empty() {
        Schedule::linear_translation(&syn.steps, syn.length)
    } else {
        Schedule::linear_dilation(run.cfg.gamma, &syn.slopes, syn.length)
    };
    let seq = synth_multibump(&w, &w_inf, &schedule, syn.length).map_err(|e| e.to_string())?;
    let planted = vec![space_norm_sq(&w), space_norm_sq(&w_inf)];
    let (summary, profiles) = decompose_sequence(run.cfg, &run.spec, &seq, syn.tol_remainder, syn.max_profiles, planted)?;
    run.artifacts.profiles = profiles;
    run.report.decomposition = Some(summary);
    Ok(())
}

/// Decomposes `seq`, verifies the result and splits `int F(u_k)` over the
/// profiles with the certified limits of `F`.
pub fn decompose_sequence(
    cfg: &ScenarioConfig,
    spec: &Spec,
    seq: &[DiscreteFunction<f64>],
    tol_remainder: f64,
    max_profiles: usize,
    planted: Vec<f64>,
) -> Result<(DecompositionSummary, Vec<DiscreteFunction<f64>>), String> {
    let opts = DecomposeOptions { tol_remainder, max_profiles, ..DecomposeOptions::default() };
    let dec = decompose(seq, cfg.gamma, &opts).map_err(|e| e.to_string())?;
    let check = verify_decomposition(seq, &dec, tol_remainder).map_err(|e| e.to_string())?;
    let sample = cfg.verify.sample.to_box();
    let certify = |d: Direction| AsymptoticLimit::certify(spec, d, &sample, LIMIT_TOL).ok();
    let (plus, minus, spatial) = if spec.dim() >= 3 {
        (certify(Direction::Plus), certify(Direction::Minus), None)
    } else {
        (None, None, certify(Direction::Spatial))
    };
    let family = AsymptoticFamily {
        base: spec,
        plus: plus.as_ref().map(|l| l as &dyn Nonlinearity<f64>),
        minus: minus.as_ref().map(|l| l as &dyn Nonlinearity<f64>),
        spatial: spatial.as_ref().map(|l| l as &dyn Nonlinearity<f64>),
    };
    let split = energy_split(&family, seq, &dec).ok();
    let summary = DecompositionSummary {
        profiles: dec
            .items
            .iter()
            .map(|it| ProfileSummary {
                class: it.class,
                norm_sq: it.norm_sq,
                scales: it.scales.clone(),
                centers: it.centers.clone(),
            })
            .collect(),
        remainder: dec.remainder_l2star.clone(),
        ledger_profiles: dec.energy_ledger.profiles,
        ledger_limsup: dec.energy_ledger.limsup,
        incomplete: dec.incomplete,
        norms_ok: check.norms_ok,
        separation_ok: check.separation_ok,
        remainder_ok: check.remainder_ok,
        split_lhs: split.map(|s| s.lhs),
        split_rhs: split.map(|s| s.rhs),
        split_gap: split.map(|s| s.gap),
        planted,
    };
    Ok((summary, dec.items.into_iter().map(|it| it.w).collect()))
}

/// Largest relative error of the gradient against central differences
/// along smooth random directions, measured against `sum |g_i v_i|`.
pub fn fd_gradient_error(functional: &EnergyFunctional<f64, Spec>, u: &DiscreteFunction<f64>, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g = functional.gradient(u);
    let mut worst = 0.0f64;
    for _ in 0..3 {
        let a: f64 = rng.gen_range(0.2..1.0);
        let b: f64 = rng.gen_range(-1.0..1.0);
        let k: f64 = rng.gen_range(0.5..3.0);
        let phase: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
        let shape = DiscreteFunction::from_fn(Arc::clone(u.grid()), |x| a + b * (k * x + phase).sin());
        // The gradient lives on the free nodes; the truncation node at R is held.
        let mut dir: Vec<f64> = u.values().iter().zip(shape.values()).map(|(p, q)| p * q).collect();
        u.grid().clear_constrained(&mut dir);
        let v = DiscreteFunction::new(Arc::clone(u.grid()), dir).expect("finite direction");
        let h = 1e-4;
        let fd = (functional.energy(&u.add_scaled(h, &v)) - functional.energy(&u.add_scaled(-h, &v))) / (2.0 * h);
        let exact: f64 = g.iter().zip(v.values()).map(|(p, q)| p * q).sum();
        let scale: f64 = g.iter().zip(v.values()).map(|(p, q)| (p * q).abs()).sum();
        if scale > 0.0 {
            worst = worst.max((fd - exact).abs() / scale);
        }
    }
    worst
}

/// Largest relative deviation from `|grad u_t|^2 = t^{N-2} |grad u|^2` and
/// `psi(u_t) = t^N psi(u)` for `u_t = u(. / t)`.
pub fn scaling_error(functional: &EnergyFunctional<f64, Spec>, u: &DiscreteFunction<f64>, ts: &[f64]) -> Result<f64, String> {
    let n = functional.dim() as i32;
    let d0 = u.dirichlet_seminorm_sq();
    let p0 = functional.psi(u);
    let mut worst = 0.0f64;
    for &t in ts {
        let ut = u.dilate(t).map_err(|e| e.to_string())?;
        let d = ut.dirichlet_seminorm_sq() / (t.powi(n - 2) * d0);
        let p = functional.psi(&ut) / (t.powi(n) * p0);
        worst = worst.max((d - 1.0).abs()).max((p - 1.0).abs());
    }
    Ok(worst)
}

fn verify_stage(run: &mut Run<'_>, functional: &EnergyFunctional<f64, Spec>) {
    let cfg = run.cfg;
    let report = &mut run.report;
    if let Some(cmp) = report.comparison.clone() {
        let detail = cmp
            .c_sharp
            .iter()
            .map(|(k, v)| format!("{k}={}", v.map_or("inf".into(), |v| format!("{v:.6}"))))
            .collect::<Vec<_>>()
            .join(" ");
        verdict(report, "nonstrict", cmp.all_nonstrict(), format!("c={:.6} {detail} tolerance={}", cmp.c, cmp.tolerance));
        if let Some(expect) = cfg.verify.expect_strict {
            let all = cmp.strict_flags.values().all(|&s| s == expect);
            verdict(report, "expect_strict", all, format!("{:?} margin={}", cmp.strict_flags, cmp.margin));
        }
    }
    if let Some(expect) = cfg.verify.expect_level {
        let c = report.level("c");
        let ok = c.is_some_and(|c| (c - expect).abs() <= cfg.verify.expect_tol);
        verdict(report, "expect_level", ok, format!("c={c:?} expected {expect} +- {}", cfg.verify.expect_tol));
    }
    let seed = default_seed(cfg, &run.grid);
    if cfg.verify.fd_check {
        let err = fd_gradient_error(functional, &seed, cfg.seed);
        verdict(report, "fd_gradient", err <= FD_TOL, format!("max relative error {err:.3e}"));
    }
    let reference = run.candidate.clone().unwrap_or(seed);
    if cfg.verify.scaling && run.spec.is_autonomous() && functional.psi(&reference) != 0.0 {
        let ts: &[f64] = if cfg.regime == Regime::BallDomain { &[0.5, 0.8] } else { &[0.5, 2.0] };
        match scaling_error(functional, &reference, ts) {
            Ok(err) => verdict(report, "scaling", err <= SCALING_TOL, format!("max relative error {err:.3e} at t={ts:?}")),
            Err(e) => verdict(report, "scaling", false, e),
        }
    }
    if let Some(tol) = cfg.verify.pohozaev_tol {
        if let Some(p) = report.residuals.as_ref().and_then(|r| r.pohozaev) {
            verdict(report, "pohozaev", p.abs() <= tol, format!("relative residual {p:.3e}"));
        }
        if let Some(s) = &report.shooting {
            let p = s.pohozaev_relative;
            verdict(report, "pohozaev_shooting", p.abs() <= tol, format!("relative residual {p:.3e}"));
        }
    }
    if let (Some(tol), Some(c), Some(s)) = (cfg.verify.shooting_tol, report.level("c"), report.level("c_shooting")) {
        let rel = (c - s).abs() / s.abs();
        verdict(report, "shooting_agreement", rel <= tol, format!("descent {c:.6} shooting {s:.6} relative {rel:.3e}"));
    }
    if let (Some(d), Some(syn)) = (report.decomposition.clone(), &cfg.synthetic) {
        verdict(report, "decomposition_norms", d.norms_ok, format!("{:.6} <= {:.6}", d.ledger_profiles, d.ledger_limsup));
        verdict(report, "decomposition_separation", d.separation_ok, String::new());
        let last = d.remainder.last().copied().unwrap_or(0.0);
        verdict(report, "decomposition_remainder", d.remainder_ok && !d.incomplete, format!("last {last:.3e}"));
        let gap_ok = d.split_gap.is_some_and(|g| g <= syn.split_tol);
        verdict(report, "energy_split", gap_ok, format!("gap {:?}", d.split_gap));
    }
}
