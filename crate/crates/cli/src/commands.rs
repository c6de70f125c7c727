use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use rayon::prelude::*;
use serde::Serialize;

use shearlab::bifurcation::{self, Minimum};
use shearlab::evolution::{self, DecayReport};
use shearlab::spectral::{self, Eigenvalue, LinearizedSystem};
use shearlab::stationary::{self, ConservedDrift};
use shearlab::suite::{self, CheckOutcome, SuiteOptions};
use shearlab::{io, Error, RunConfig, ShearModel};

use crate::{plots, Branch, Cli, Command, LambdaWindow, Target};

/// Marks errors that come from the command line or the configuration.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct UsageError(String);

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

/// 2 for usage, configuration and I/O problems; 1 for failed checks and numerical faults.
pub fn exit_code(e: &anyhow::Error) -> u8 {
    if e.downcast_ref::<UsageError>().is_some() || e.downcast_ref::<std::io::Error>().is_some() {
        return 2;
    }
    match e.downcast_ref::<Error>() {
        Some(Error::Io(_) | Error::Json(_) | Error::Csv(_) | Error::InvalidArgument(_)) => 2,
        Some(_) => 1,
        None => 1,
    }
}

struct RunContext {
    cfg: RunConfig,
    model: ShearModel,
    out: PathBuf,
    seed: u64,
}

fn load_config(cli: &Cli) -> Result<RunConfig> {
    let cfg = match &cli.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| usage(format!("cannot read {}: {e}", path.display())))?;
            RunConfig::from_json(&text).map_err(|e| usage(format!("invalid config {}: {e}", path.display())))?
        }
        None => RunConfig::default(),
    };
    cfg.check().map_err(|e| usage(e.to_string()))?;
    Ok(cfg)
}

/// The configuration plus a model; refuses materials that fail validation.
fn load(cli: &Cli) -> Result<RunContext> {
    let cfg = load_config(cli)?;
    let report = cfg.material.validate();
    if !report.ok {
        let names: Vec<&str> = report.failures().map(|c| c.name.as_str()).collect();
        bail!("material fails validation: {}", names.join("; "));
    }
    let out = cli.out.clone().unwrap_or_else(|| PathBuf::from(&cfg.output.directory));
    let model = ShearModel::from_config(&cfg);
    Ok(RunContext { cfg, model, out, seed: cli.seed })
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    Ok(())
}

pub fn run(cli: &Cli) -> Result<ExitCode> {
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            return Err(usage("--jobs must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global().map_err(|e| usage(e.to_string()))?;
    }
    match &cli.command {
        Command::Validate => validate(cli),
        Command::Bifurcation { ubar_max, samples } => bifurcation_cmd(&load(cli)?, *ubar_max, *samples),
        Command::Stationary { target, points } => stationary_cmd(&load(cli)?, target, *points),
        Command::Evans { target, window } => evans_cmd(&load(cli)?, target, window),
        Command::Eigs { target, window } => eigs_cmd(&load(cli)?, target, window),
        Command::Evolve { target, t_end, dt, seeds } => evolve_cmd(&load(cli)?, target, *t_end, *dt, *seeds),
        Command::Report { quick } => report_cmd(&load(cli)?, *quick),
        Command::Plot { inputs } => plot_cmd(cli, inputs),
    }
}

fn validate(cli: &Cli) -> Result<ExitCode> {
    let cfg = load_config(cli)?;
    let report = cfg.material.validate();
    println!("regime: {:?}", report.regime);
    println!("gamma1 = {:.17e}, gamma2 = {:.17e}, c_bar = {:.17e}", report.gamma1, report.gamma2, report.c_bar);
    for c in &report.checks {
        println!("{}  {} (margin {:.6e})", if c.passed { "ok  " } else { "FAIL" }, c.name, c.margin);
    }
    if report.ok {
        println!("material valid");
        Ok(ExitCode::SUCCESS)
    } else {
        for c in report.failures() {
            eprintln!("failing check: {}", c.name);
        }
        Ok(ExitCode::from(1))
    }
}

fn first_minimum(model: &ShearModel) -> Option<Minimum> {
    if !model.params().regime().is_critical() {
        return None;
    }
    bifurcation::find_minimum(model, 1).ok().flatten()
}

/// Levels selected by `--beta` or by `--ubar` on an interval, with a file tag each.
fn levels(model: &ShearModel, target: &Target) -> Result<Vec<(String, f64)>> {
    if let Some(beta) = target.beta {
        model.check_level(beta)?;
        return Ok(vec![(String::new(), beta)]);
    }
    let ubar = target.ubar.ok_or_else(|| usage("either --beta or --ubar is required"))?;
    if !(ubar > 0.0) {
        return Err(usage(format!("--ubar must be positive, got {ubar}")));
    }
    let interval = model
        .interval(target.interval)
        .ok_or_else(|| usage(format!("interval {} does not exist for this material", target.interval)))?;
    let roots = stationary::solve_ubar(model, ubar, interval)?;
    let picked: Vec<(String, f64)> = match (target.branch, roots.as_slice()) {
        (Branch::All, [single]) => vec![(String::new(), *single)],
        (Branch::All, many) => many.iter().enumerate().map(|(k, &b)| (format!("_{k}"), b)).collect(),
        (Branch::Lower, [lo, _, ..]) => vec![("_lower".into(), *lo)],
        (Branch::Upper, [_, .., hi]) => vec![("_upper".into(), *hi)],
        (side, _) => bail!("no {side:?} branch at ubar = {ubar} on interval {}", target.interval),
    };
    if picked.is_empty() {
        eprintln!("no stationary solution with ubar = {ubar} on interval {}", target.interval);
    }
    Ok(picked)
}

fn bifurcation_cmd(ctx: &RunContext, ubar_max: Option<f64>, samples: usize) -> Result<ExitCode> {
    let model = &ctx.model;
    let intervals: Vec<usize> = (0..ctx.cfg.solver.intervals).take_while(|&n| model.interval(n).is_some()).collect();
    if intervals.is_empty() {
        bail!("no bifurcation intervals for this material");
    }
    let scans = intervals
        .par_iter()
        .map(|&n| bifurcation::interval_scan(model, n))
        .collect::<shearlab::Result<Vec<_>>>()?;
    let minima: Vec<Minimum> = scans.iter().filter_map(|s| s.2).collect();
    let ubar_max = match ubar_max {
        Some(u) if u > 0.0 => u,
        Some(u) => return Err(usage(format!("--ubar-max must be positive, got {u}"))),
        None => minima.first().map_or(ctx.cfg.windows.ubar.1, |m| 2.0 * m.ubar),
    };
    let diagram = bifurcation::diagram_from_scans(model, ubar_max, samples, &scans, minima.clone())?;
    ensure_dir(&ctx.out)?;
    diagram.write_json(ctx.out.join("bifurcation.json"))?;
    diagram.write_csv(ctx.out.join("bifurcation.csv"))?;
    let sweeps = scans
        .par_iter()
        .map(|(_, scan, _)| stationary::sweep(model, &scan.betas))
        .collect::<shearlab::Result<Vec<_>>>()?;
    stationary::write_sweep(ctx.out.join("d_curve.csv"), &sweeps.concat())?;
    let plain: Vec<_> = scans.iter().map(|(n, s, _)| (*n, s.clone())).collect();
    fs::write(ctx.out.join("d_curve.svg"), bifurcation::plot_d_curve(model, &minima, &plain))?;
    fs::write(ctx.out.join("bifurcation.svg"), plots::branches(&diagram.samples, &diagram.minima))?;
    println!("poles: {:?}", diagram.poles);
    for m in &minima {
        println!("minimum on I{}: beta* = {:.17e}, ubar_{} = {:.17e}", m.interval, m.beta, m.interval, m.ubar);
    }
    let max_count = diagram.samples.iter().map(|s| diagram.count_at(s.ubar)).max().unwrap_or(0);
    println!("{} samples up to ubar = {ubar_max}, at most {max_count} solutions per speed", diagram.samples.len());
    println!("wrote {}", ctx.out.display());
    Ok(ExitCode::SUCCESS)
}

#[derive(Serialize)]
struct ProfileSummary {
    file: String,
    beta: f64,
    ubar: f64,
    p0: f64,
    theta_tilde: f64,
    drift: ConservedDrift,
    residual: f64,
}

fn stationary_cmd(ctx: &RunContext, target: &Target, points: Option<usize>) -> Result<ExitCode> {
    let model = &ctx.model;
    let n = points.unwrap_or(ctx.cfg.solver.profile_points);
    if n < 65 || n % 2 == 0 {
        return Err(usage(format!("--points must be odd and >= 65, got {n}")));
    }
    ensure_dir(&ctx.out)?;
    let mut summaries = Vec::new();
    for (tag, beta) in levels(model, target)? {
        let prof = stationary::reconstruct_profile_on(model, beta, n)?;
        let drift = stationary::conserved_drift(model, &prof)?;
        let residual = stationary::discrete_residual(model, &prof);
        let stem = format!("profile{tag}");
        prof.write(&ctx.out, &stem)?;
        fs::write(ctx.out.join(format!("{stem}.svg")), plots::profile(&prof.x, &prof.u, &prof.theta, prof.ubar))?;
        println!(
            "beta = {:.17e}  ubar = {:.17e}  p0 = {:.17e}  drift H1 {:.1e} H2 {:.1e} H3 {:.1e}  -> {stem}.csv",
            beta, prof.ubar, prof.p0, drift.h1, drift.h2, drift.h3
        );
        summaries.push(ProfileSummary {
            file: format!("{stem}.csv"),
            beta,
            ubar: prof.ubar,
            p0: prof.p0,
            theta_tilde: prof.theta_tilde,
            drift,
            residual,
        });
    }
    io::write_json_file(ctx.out.join("stationary.json"), &summaries)?;
    Ok(ExitCode::SUCCESS)
}

fn lambda_window(ctx: &RunContext, w: &LambdaWindow) -> (f64, f64) {
    (w.lambda_min.unwrap_or(ctx.cfg.windows.lambda.0), w.lambda_max.unwrap_or(ctx.cfg.windows.lambda.1))
}

#[derive(Serialize)]
struct RootsFile {
    beta: f64,
    ubar: f64,
    window: (f64, f64),
    roots: Vec<Eigenvalue>,
}

fn evans_cmd(ctx: &RunContext, target: &Target, window: &LambdaWindow) -> Result<ExitCode> {
    let model = &ctx.model;
    let (lo, hi) = lambda_window(ctx, window);
    if window.points < 2 {
        return Err(usage("--points must be at least 2"));
    }
    ensure_dir(&ctx.out)?;
    for (tag, beta) in levels(model, target)? {
        let sys = LinearizedSystem::at_level(model, beta)?;
        let (scan, roots) = if lo < hi {
            let scan = spectral::evans_scan(&sys, (lo, hi), window.points)?;
            let roots = spectral::eigen_from_scan(&sys, &scan, 1e-10)?;
            (scan, roots)
        } else {
            (Vec::new(), Vec::new())
        };
        spectral::write_scan(ctx.out.join(format!("evans_scan{tag}.csv")), &scan)?;
        let file = RootsFile { beta, ubar: sys.profile.ubar, window: (lo, hi), roots };
        io::write_json_file(ctx.out.join(format!("evans_roots{tag}.json")), &file)?;
        if !scan.is_empty() {
            let pts: Vec<(f64, f64)> = scan.iter().map(|s| (s.lambda, s.e)).collect();
            fs::write(ctx.out.join(format!("evans{tag}.svg")), plots::evans(&pts))?;
        }
        let list: Vec<String> = file.roots.iter().map(|r| format!("{:.12e}", r.lambda)).collect();
        println!("beta = {beta:.17e}: {} roots in [{lo}, {hi}]: [{}]", file.roots.len(), list.join(", "));
    }
    Ok(ExitCode::SUCCESS)
}

fn eigs_cmd(ctx: &RunContext, target: &Target, window: &LambdaWindow) -> Result<ExitCode> {
    let model = &ctx.model;
    let (lo, hi) = lambda_window(ctx, window);
    ensure_dir(&ctx.out)?;
    for (tag, beta) in levels(model, target)? {
        let sys = LinearizedSystem::at_level(model, beta)?;
        let eigs = if lo < hi { spectral::eigen_scan(&sys, (lo, hi), window.points.max(2))? } else { Vec::new() };
        let report = spectral::eigen_report(&sys, eigs)?;
        io::write_json_file(ctx.out.join(format!("eigs{tag}.json")), &report)?;
        println!(
            "beta = {beta:.17e}: E(0) = {:.12e}, D' = {:.12e}, identity gap {:.2e}",
            report.e0, report.d_prime, report.identity_gap
        );
        for e in &report.eigenvalues {
            println!("  lambda = {:.15e}  (residual {:.1e})", e.lambda, e.residual);
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn evolve_cmd(ctx: &RunContext, target: &Target, t_end: f64, dt: Option<f64>, seeds: u64) -> Result<ExitCode> {
    let model = &ctx.model;
    if !(t_end > 0.0) {
        return Err(usage(format!("--t-end must be positive, got {t_end}")));
    }
    let n = ctx.cfg.solver.evolution_points;
    let dt = dt.unwrap_or(1.0 / (n - 1) as f64);
    if !(dt > 0.0) {
        return Err(usage(format!("--dt must be positive, got {dt}")));
    }
    ensure_dir(&ctx.out)?;
    for (tag, beta) in levels(model, target)? {
        let prof = stationary::reconstruct_profile_on(model, beta, n)?;
        let runs = (ctx.seed..ctx.seed + seeds.max(1))
            .into_par_iter()
            .map(|seed| evolution::decay_report(model.params(), &prof, None, t_end, dt, seed))
            .collect::<shearlab::Result<Vec<_>>>()?;
        for (report, state) in &runs {
            let stem = format!("evolve{tag}_seed{}", report.seed);
            io::write_json_file(ctx.out.join(format!("{stem}.json")), report)?;
            state.write_trace(ctx.out.join(format!("{stem}_trace.csv")))?;
            evolution::write_fields(model.params(), state, ctx.out.join(format!("{stem}_fields.csv")))?;
            fs::write(ctx.out.join(format!("{stem}_energy.svg")), plots::energy(&state.energy_trace))?;
            print_decay(report);
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn print_decay(r: &DecayReport) {
    println!(
        "beta = {:.12e}  ubar = {:.6e}  seed {}  b = {:.6e}  L_fit = {:.6e}  r1 {:.3e} r2 {:.3e} r3 {:.3e}  {}",
        r.beta,
        r.ubar,
        r.seed,
        r.b,
        r.l_fit,
        r.r1,
        r.r2,
        r.r3,
        if r.passed { "decays" } else { "does not decay" }
    );
}

#[derive(Serialize)]
struct Verdict<'a> {
    passed: bool,
    config: &'a RunConfig,
    options: SuiteOptions,
    checks: Vec<CheckOutcome>,
}

fn report_cmd(ctx: &RunContext, quick: bool) -> Result<ExitCode> {
    let model = &ctx.model;
    let mut opts = if quick { SuiteOptions::quick() } else { SuiteOptions::default() };
    opts.seed = ctx.seed;
    opts.evolution_points = if quick { opts.evolution_points } else { ctx.cfg.solver.evolution_points };
    let minimum = first_minimum(model);
    let min = minimum.as_ref();
    let o = &opts;
    let jobs: Vec<Box<dyn Fn() -> CheckOutcome + Sync + Send>> = vec![
        Box::new(|| suite::identity(model, o)),
        Box::new(|| suite::determinant_reduction(model, o)),
        Box::new(|| suite::closed_forms(model, o)),
        Box::new(|| suite::saddle_node(model, min)),
        Box::new(|| suite::zero_eigenvalue(model, min)),
        Box::new(|| suite::conservation(model, o)),
        Box::new(|| suite::shooting_oracle(model, o)),
        Box::new(|| suite::energy_decay(model, o, min)),
        Box::new(|| suite::small_speed_bounds(model)),
        Box::new(|| suite::self_convergence(model)),
    ];
    let checks: Vec<CheckOutcome> = jobs.par_iter().map(|job| job()).collect();
    let passed = checks.iter().all(CheckOutcome::passed);
    for c in &checks {
        println!("{}", c.line());
    }
    ensure_dir(&ctx.out)?;
    let verdict = Verdict { passed, config: &ctx.cfg, options: opts, checks };
    io::write_json_file(ctx.out.join("report.json"), &verdict)?;
    println!("verdict: {}", if passed { "all checks pass" } else { "some checks fail" });
    Ok(if passed { ExitCode::SUCCESS } else { ExitCode::from(1) })
}

fn plot_cmd(cli: &Cli, inputs: &[PathBuf]) -> Result<ExitCode> {
    for input in inputs {
        let text = fs::read_to_string(input).map_err(|e| usage(format!("cannot read {}: {e}", input.display())))?;
        let header = text.lines().next().unwrap_or("").trim().to_string();
        let svg = if header == "ubar,beta,interval,side,sign_Dprime" {
            plots::branches(&bifurcation::read_branch_csv(input)?, &[])
        } else {
            let t = io::read_table(text.as_bytes())?;
            let col = |name: &str| t.column(name).ok_or_else(|| anyhow!("column {name} missing"));
            match header.as_str() {
                "beta,D,Dprime" => plots::d_curve(&col("beta")?, &col("D")?),
                "x,u,theta,eta" => {
                    let u = col("u")?;
                    let ubar = u.last().copied().unwrap_or(1.0);
                    plots::profile(&col("x")?, &u, &col("theta")?, ubar)
                }
                "lambda,E,x_residual" => {
                    let pts: Vec<(f64, f64)> = col("lambda")?.into_iter().zip(col("E")?).collect();
                    plots::evans(&pts)
                }
                "t,E_b" => {
                    let pts: Vec<(f64, f64)> = col("t")?.into_iter().zip(col("E_b")?).collect();
                    plots::energy(&pts)
                }
                other => return Err(usage(format!("{}: unrecognized CSV header {other:?}", input.display()))),
            }
        };
        let dir = match &cli.out {
            Some(d) => d.clone(),
            None => input.parent().map(Path::to_path_buf).unwrap_or_default(),
        };
        ensure_dir(&dir)?;
        let stem = input.file_stem().and_then(|s| s.to_str()).unwrap_or("plot");
        let path = dir.join(format!("{stem}.svg"));
        fs::write(&path, svg)?;
        println!("wrote {}", path.display());
    }
    Ok(ExitCode::SUCCESS)
}
