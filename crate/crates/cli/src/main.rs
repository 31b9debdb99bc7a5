use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};

use calabi_cli::config::{ProfileSource, RunConfig, SolveMethod};
use calabi_core::io::{
    csv_row, format_float, potential_csv, profile_to_csv, read_profile, write_json, write_text,
    ProfileDocument,
};
use calabi_core::reports::{
    conventions_manifest, evaluate, invariance_report, sweep, sweep_csv, variation_report,
    VARIATION_STEPS,
};
use calabi_core::solver::StepStatus;
use calabi_core::{
    el_potential, iterate, normalize_potential, random_admissible_profile, residual_minimize,
    round_profile, solve_critical, Error, Execution, HolomorphyPotential, MetricProfile,
    MinimizeOptions, ProfileGeometry, SolveOutcome, SolverOptions,
};

const EVALUATE_HELP: &str = "\
Writes evaluate.json and psi.csv.

psi.csv columns: x,psi_re,psi_im,s";

const INVARIANCE_HELP: &str = "\
Writes invariance.json and invariance.csv.

invariance.csv columns: seed,equivariant,equivariant_imag,scalar_moment,futaki,error";

const SOLVE_HELP: &str = "\
Writes solve.json, profile.csv, profile.json and psi.csv.
Exits with 1 if the returned metric is not critical.

profile.csv columns: x,theta
psi.csv columns: x,psi_re,psi_im,s";

const ITERATE_HELP: &str = "\
Writes iterate.json and iterate.csv.

iterate.csv columns: index,potential_scale,potential_shift,status,alpha,beta,defect_affine,theta_max,scalar_min,scalar_max";

const VARIATION_HELP: &str = "\
Runs the fixed f x h x u convergence matrix on a seeded random profile.
Ignores --f, --h and --profile. Writes variation.json, variation.csv and
conventions.json. Exits with 1 if any order is below 1.9 or the conventions
are not pinned.

variation.csv columns: f,h,u,analytic,error_1,error_2,error_3,order_1,order_2,min_order
(errors at steps 1e-2, 1e-3, 1e-4)";

const SWEEP_HELP: &str = "\
Solves every (f, h) pair of --sweep-f x --sweep-h. Failed runs are recorded
in their row. Rows are in grid order (f outer, h inner).
Writes sweep.csv and sweep.json.

sweep.csv columns: f,h,alpha,beta,defect_affine,defect_operator,status,flagged";

/// Numerical experiments on circle-symmetric Kähler metrics.
///
/// Functions use a small grammar: id, exp, log, const:c, affine:a:b, pow:p,
/// scaled:c:<fn>, comp:a:b:<fn> (fn(a·z + b)) and sum(<fn>,<fn>).
/// Flags override values from --config.
#[derive(Parser, Debug)]
#[command(name = "calabi-lab", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Evaluate S, the criticality report and the Futaki invariant.
    #[command(after_help = EVALUATE_HELP)]
    Evaluate(Common),
    /// Check class invariants over random profiles and transport paths.
    #[command(after_help = INVARIANCE_HELP)]
    Invariance(Common),
    /// Solve for a critical metric.
    #[command(after_help = SOLVE_HELP)]
    Solve(Common),
    /// Feed each critical potential back in as the next holomorphy potential.
    #[command(after_help = ITERATE_HELP)]
    Iterate(Common),
    /// Compare numeric and analytic first variations.
    #[command(name = "variation-check", after_help = VARIATION_HELP)]
    VariationCheck(Common),
    /// Solve over a grid of (f, h) pairs.
    #[command(after_help = SWEEP_HELP)]
    Sweep(Common),
}

#[derive(Args, Debug, Clone, Default)]
struct Common {
    /// Config file of `key = value` lines.
    #[arg(long)]
    config: Option<PathBuf>,
    /// cp1, cpm:<m> or custom:<file.json>
    #[arg(long)]
    geometry: Option<String>,
    /// round, random:<seed>:<amplitude> or file:<path.csv|path.json>
    #[arg(long)]
    profile: Option<String>,
    #[arg(long)]
    f: Option<String>,
    #[arg(long)]
    h: Option<String>,
    /// Value of the integral of the potential; `none` keeps phi = x.
    #[arg(long)]
    target: Option<String>,
    /// Number of Chebyshev nodes.
    #[arg(long)]
    nodes: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    /// Sets both the boundary and the affine tolerance.
    #[arg(long)]
    tol: Option<String>,
    /// Output directory.
    #[arg(long)]
    out: Option<String>,
    /// Number of random profiles for `invariance`.
    #[arg(long)]
    samples: Option<String>,
    /// Perturbation amplitude for `invariance`.
    #[arg(long)]
    amplitude: Option<String>,
    #[arg(long)]
    max_steps: Option<String>,
    /// shoot or minimize
    #[arg(long)]
    method: Option<String>,
    /// `;`-separated list of f descriptors.
    #[arg(long)]
    sweep_f: Option<String>,
    /// `;`-separated list of h descriptors.
    #[arg(long)]
    sweep_h: Option<String>,
    #[arg(long)]
    alpha_threshold: Option<String>,
    /// Run sampling and sweeps on one thread.
    #[arg(long)]
    sequential: bool,
}

enum Failure {
    Usage(String),
    Numerical(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Parse(_) => Failure::Usage(e.to_string()),
            e => Failure::Numerical(e.to_string()),
        }
    }
}

type CmdResult = Result<(), Failure>;

impl Common {
    fn resolve(&self) -> Result<RunConfig, Failure> {
        let mut cfg = RunConfig::default();
        if let Some(path) = &self.config {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
            cfg.apply_text(&text)
                .map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
        }
        let overrides = [
            ("geometry", &self.geometry),
            ("profile", &self.profile),
            ("functional.f", &self.f),
            ("functional.h", &self.h),
            ("potential.target", &self.target),
            ("grid.nodes", &self.nodes),
            ("tol.boundary", &self.tol),
            ("tol.affine", &self.tol),
            ("run.seed", &self.seed),
            ("run.samples", &self.samples),
            ("run.amplitude", &self.amplitude),
            ("run.max_steps", &self.max_steps),
            ("solve.method", &self.method),
            ("sweep.f", &self.sweep_f),
            ("sweep.h", &self.sweep_h),
            ("sweep.alpha_threshold", &self.alpha_threshold),
            ("output.dir", &self.out),
        ];
        for (key, value) in overrides {
            if let Some(v) = value {
                cfg.set(key, v)
                    .map_err(|e| Failure::Usage(format!("--{}: {e}", flag_name(key))))?;
            }
        }
        Ok(cfg)
    }

    fn exec(&self) -> Execution {
        if self.sequential {
            Execution::Sequential
        } else {
            Execution::Parallel
        }
    }
}

fn flag_name(key: &str) -> &str {
    match key {
        "functional.f" => "f",
        "functional.h" => "h",
        "potential.target" => "target",
        "grid.nodes" => "nodes",
        "tol.boundary" | "tol.affine" => "tol",
        "run.seed" => "seed",
        "run.samples" => "samples",
        "run.amplitude" => "amplitude",
        "run.max_steps" => "max-steps",
        "solve.method" => "method",
        "sweep.f" => "sweep-f",
        "sweep.h" => "sweep-h",
        "sweep.alpha_threshold" => "alpha-threshold",
        "output.dir" => "out",
        k => k,
    }
}

struct Setup {
    cfg: RunConfig,
    geom: Arc<ProfileGeometry>,
    phi: HolomorphyPotential,
}

fn setup(cfg: RunConfig) -> Result<Setup, Failure> {
    let geom = cfg.geometry.build(cfg.nodes)?;
    let phi = match cfg.target {
        Some(t) => normalize_potential(&geom, t),
        None => HolomorphyPotential::canonical(&geom),
    };
    Ok(Setup { cfg, geom, phi })
}

fn load_profile(s: &Setup) -> Result<MetricProfile, Failure> {
    let profile = match &s.cfg.profile {
        ProfileSource::Round => round_profile(&s.geom)?,
        ProfileSource::Random { seed, amplitude } => {
            random_admissible_profile(&s.geom, *seed, *amplitude)?
        }
        ProfileSource::File(path) => read_profile(path, &s.geom).map_err(|e| match e {
            Error::Io(_) | Error::Parse(_) => Failure::Usage(format!("{}: {e}", path.display())),
            e => e.into(),
        })?,
    };
    profile.ensure_admissible(&s.cfg.tol)?;
    Ok(profile)
}

fn out_path(cfg: &RunConfig, name: &str) -> PathBuf {
    cfg.out.join(name)
}

fn opt_float(v: Option<f64>) -> String {
    v.map(format_float).unwrap_or_default()
}

fn cmd_evaluate(c: &Common) -> CmdResult {
    let s = setup(c.resolve()?)?;
    let profile = load_profile(&s)?;
    let (report, psi, scalar) = evaluate(&profile, &s.cfg.f, &s.cfg.h, &s.phi, &s.cfg.tol)?;
    write_json(&out_path(&s.cfg, "evaluate.json"), &report)?;
    write_text(
        &out_path(&s.cfg, "psi.csv"),
        &potential_csv(&s.geom, &psi, &scalar)?,
    )?;
    println!(
        "S = {}  critical = {}  futaki = {:e}",
        report.functional, report.el_report.is_critical, report.futaki
    );
    Ok(())
}

fn cmd_invariance(c: &Common) -> CmdResult {
    let s = setup(c.resolve()?)?;
    let cfg = &s.cfg;
    let report = invariance_report(
        &s.geom,
        &cfg.h,
        &s.phi,
        cfg.samples,
        cfg.seed,
        cfg.amplitude,
        c.exec(),
    )?;
    write_json(&out_path(cfg, "invariance.json"), &report)?;
    let mut csv = String::from("seed,equivariant,equivariant_imag,scalar_moment,futaki,error\n");
    for r in &report.samples {
        csv.push_str(&csv_row(&[
            r.seed.to_string(),
            opt_float(r.values.map(|v| v.equivariant)),
            opt_float(r.values.map(|v| v.equivariant_imag)),
            opt_float(r.values.map(|v| v.scalar_moment)),
            opt_float(r.values.map(|v| v.futaki)),
            r.error.clone().unwrap_or_default(),
        ]));
    }
    write_text(&out_path(cfg, "invariance.csv"), &csv)?;
    let failed = report.samples.iter().filter(|r| r.error.is_some()).count();
    println!(
        "{} samples ({failed} failed)  spread = {:e}  max |F| = {:e}  path spread = {:e}",
        report.samples.len(),
        report.sample_spreads.equivariant,
        report.max_abs_futaki,
        report.max_path_spreads.equivariant
    );
    Ok(())
}

fn cmd_solve(c: &Common) -> CmdResult {
    let s = setup(c.resolve()?)?;
    let cfg = &s.cfg;
    let result = match cfg.method {
        SolveMethod::Shoot => {
            let opts = SolverOptions {
                tol: cfg.tol,
                ..SolverOptions::default()
            };
            solve_critical(&s.geom, &cfg.f, &cfg.h, &s.phi, None, &opts)?
        }
        SolveMethod::Minimize => {
            let init = load_profile(&s)?;
            let opts = MinimizeOptions {
                tol: cfg.tol,
                ..MinimizeOptions::default()
            };
            residual_minimize(&s.geom, &cfg.f, &cfg.h, &s.phi, &init, &opts)?
        }
    };
    let scalar = calabi_core::scalar_curvature(&result.profile)?;
    let psi = match result.outcome {
        SolveOutcome::Critical => result.report.psi.clone(),
        SolveOutcome::EveryMetricCritical => el_potential(&result.profile, &cfg.f, &cfg.h, &s.phi)?,
    };
    write_json(&out_path(cfg, "solve.json"), &result.document())?;
    write_text(
        &out_path(cfg, "profile.csv"),
        &profile_to_csv(&result.profile),
    )?;
    write_json(
        &out_path(cfg, "profile.json"),
        &ProfileDocument::from_profile(&result.profile),
    )?;
    write_text(
        &out_path(cfg, "psi.csv"),
        &potential_csv(&s.geom, &psi, &scalar)?,
    )?;
    println!(
        "alpha = {}  beta = {}  defect = {:e}  iterations = {}",
        result.alpha, result.beta, result.report.defect_affine, result.iterations
    );
    if result.converged {
        Ok(())
    } else {
        Err(Failure::Numerical(format!(
            "solution is not critical: defect {:e} above tolerance {:e}",
            result.report.defect_affine, result.report.tolerance
        )))
    }
}

fn status_name(s: StepStatus) -> &'static str {
    match s {
        StepStatus::Continued => "continued",
        StepStatus::Converged => "converged",
        StepStatus::ZeroField => "zero_field",
        StepStatus::Failed => "failed",
    }
}

fn cmd_iterate(c: &Common) -> CmdResult {
    let s = setup(c.resolve()?)?;
    let cfg = &s.cfg;
    let opts = SolverOptions {
        tol: cfg.tol,
        ..SolverOptions::default()
    };
    let trace = iterate(&s.geom, &cfg.f, &cfg.h, &s.phi, cfg.max_steps, &opts)?;
    write_json(&out_path(cfg, "iterate.json"), &trace)?;
    let mut csv = String::from(
        "index,potential_scale,potential_shift,status,alpha,beta,defect_affine,theta_max,scalar_min,scalar_max\n",
    );
    for st in &trace.steps {
        csv.push_str(&csv_row(&[
            st.index.to_string(),
            format_float(st.potential_scale),
            format_float(st.potential_shift),
            status_name(st.status).to_string(),
            opt_float(st.alpha),
            opt_float(st.beta),
            opt_float(st.defect_affine),
            opt_float(st.theta_max),
            opt_float(st.scalar_min),
            opt_float(st.scalar_max),
        ]));
    }
    write_text(&out_path(cfg, "iterate.csv"), &csv)?;
    let last = trace
        .steps
        .last()
        .map(|st| status_name(st.status))
        .unwrap_or("none");
    println!("{} steps, last status {last}", trace.steps.len());
    Ok(())
}

fn cmd_variation(c: &Common) -> CmdResult {
    let s = setup(c.resolve()?)?;
    let cfg = &s.cfg;
    let report = variation_report(&s.geom, c.exec())?;
    write_json(&out_path(cfg, "variation.json"), &report)?;
    let mut header = vec!["f".to_string(), "h".into(), "u".into(), "analytic".into()];
    header.extend((1..=VARIATION_STEPS.len()).map(|k| format!("error_{k}")));
    header.extend((1..VARIATION_STEPS.len()).map(|k| format!("order_{k}")));
    header.push("min_order".into());
    let mut csv = csv_row(&header);
    for case in &report.cases {
        let mut row = vec![
            case.f.clone(),
            case.h.clone(),
            case.u.clone(),
            format_float(case.analytic),
        ];
        row.extend(case.errors.iter().map(|&e| format_float(e)));
        row.extend(case.orders.iter().map(|&o| format_float(o)));
        row.push(format_float(case.min_order));
        csv.push_str(&csv_row(&row));
    }
    write_text(&out_path(cfg, "variation.csv"), &csv)?;
    let manifest = conventions_manifest(cfg.nodes, c.exec())?;
    write_json(&out_path(cfg, "conventions.json"), &manifest)?;
    println!(
        "kappa = ({}, {})  pinned = {}  min order = {:.3}",
        report.kappa_theta, report.kappa_phi, report.pinned_by_oracle, report.min_convergence_order
    );
    if !report.pinned_by_oracle {
        return Err(Failure::Numerical(
            "convention oracle did not pin a candidate".into(),
        ));
    }
    if !(report.min_convergence_order >= 1.9) {
        return Err(Failure::Numerical(format!(
            "convergence order {:.3} below 1.9",
            report.min_convergence_order
        )));
    }
    Ok(())
}

fn cmd_sweep(c: &Common) -> CmdResult {
    let s = setup(c.resolve()?)?;
    let cfg = &s.cfg;
    let opts = SolverOptions {
        tol: cfg.tol,
        ..SolverOptions::default()
    };
    let rows = sweep(
        &s.geom,
        &cfg.sweep_f,
        &cfg.sweep_h,
        &s.phi,
        cfg.alpha_threshold,
        &opts,
        c.exec(),
    );
    write_text(&out_path(cfg, "sweep.csv"), &sweep_csv(&rows))?;
    write_json(&out_path(cfg, "sweep.json"), &rows)?;
    let failed = rows
        .iter()
        .filter(|r| r.status.starts_with("failed"))
        .count();
    let flagged = rows.iter().filter(|r| r.flagged).count();
    println!("{} runs, {failed} failed, {flagged} flagged", rows.len());
    Ok(())
}

fn run(cli: &Cli) -> CmdResult {
    match &cli.command {
        Command::Evaluate(c) => cmd_evaluate(c),
        Command::Invariance(c) => cmd_invariance(c),
        Command::Solve(c) => cmd_solve(c),
        Command::Iterate(c) => cmd_iterate(c),
        Command::VariationCheck(c) => cmd_variation(c),
        Command::Sweep(c) => cmd_sweep(c),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Numerical(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}
