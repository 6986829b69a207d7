//! `weylab`: run experiments from a TOML config and write JSON/CSV reports.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use num_complex::Complex64;
use serde::Serialize;
use serde_json::json;
use weylab::experiments::config::{ExperimentConfig, ModeName, Overrides};
use weylab::experiments::identities::identity_checks;
use weylab::experiments::line::{line_model_check, line_model_trials};
use weylab::experiments::run_ensemble;
use weylab::experiments::weyl::{eigenvalue_rows, pseudospectrum_grid, LevelContext, TrialRecord};
use weylab::operator::GridParams;
use weylab::perturbation::{derive_params, DeltaMode, PlanInputs};
use weylab::phase::{estimate_kappa, volume_estimate, KappaOptions, PhaseGrid};
use weylab::region::Region;
use weylab::spectral::eigenvalues_with_residuals;
use weylab::trig::TrigPoly;
use weylab::{Execution, LabError};

#[derive(Parser)]
#[command(
    name = "weylab",
    version,
    about = "Eigenvalue counting for randomly perturbed non-self-adjoint operators on the circle"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print the perturbation windows and write params.json.
    DeriveParams(Common),
    /// Phase-space volumes, Weyl predictions and volume exponents.
    Volume(Common),
    /// Eigenvalues and pseudospectrum of the unperturbed operator.
    Spectrum(SpectrumArgs),
    /// Monte Carlo counting ensemble over all configured h.
    WeylEnsemble(Common),
    /// Closed-form spectrum of hD + e^{-ix} and its perturbations.
    LineCheck(LineArgs),
    /// Bordered-solve, determinant and log-det derivative identities.
    IdentityChecks(IdentityArgs),
}

#[derive(Args, Clone)]
struct Common {
    /// Experiment config (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Output directory, created if missing.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Run a single h instead of h_list.
    #[arg(long)]
    h: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long, value_enum)]
    mode: Option<Mode>,
}

#[derive(Args)]
struct SpectrumArgs {
    #[command(flatten)]
    common: Common,
    /// Pseudospectrum grid points per side.
    #[arg(long, default_value_t = 24)]
    grid: usize,
    /// Margin added around Γ for the pseudospectrum grid.
    #[arg(long, default_value_t = 0.25)]
    margin: f64,
}

#[derive(Args)]
struct LineArgs {
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long, default_value_t = 0.1)]
    h: f64,
    /// Truncation K.
    #[arg(long = "K", default_value_t = 80)]
    k: usize,
    #[arg(long, default_value_t = 5)]
    k_max: usize,
    #[arg(long, default_value_t = 50)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1e-12)]
    delta_eff: f64,
}

#[derive(Args)]
struct IdentityArgs {
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Paper,
    Effective,
}

enum Failure {
    Config(String),
    Numeric(String),
}

impl From<LabError> for Failure {
    fn from(e: LabError) -> Self {
        match e {
            LabError::Config(_) | LabError::Parameter { .. } => Failure::Config(e.to_string()),
            other => Failure::Numeric(other.to_string()),
        }
    }
}

fn io_failure(path: &Path, e: impl std::fmt::Display) -> Failure {
    Failure::Numeric(format!("cannot write {}: {e}", path.display()))
}

type Outcome<T> = std::result::Result<T, Failure>;

fn load(common: &Common) -> Outcome<ExperimentConfig> {
    let text =
        fs::read_to_string(&common.config).map_err(|e| Failure::Config(format!("cannot read config {}: {e}", common.config.display())))?;
    let mut cfg = ExperimentConfig::from_toml(&text).map_err(|e| Failure::Config(format!("{}: {e}", common.config.display())))?;
    cfg.apply(&Overrides {
        h: common.h,
        seed: common.seed,
        trials: common.trials,
        mode: common.mode.map(|m| match m {
            Mode::Paper => ModeName::Paper,
            Mode::Effective => ModeName::Effective,
        }),
    });
    Ok(cfg)
}

fn out_dir(dir: &Path) -> Outcome<()> {
    fs::create_dir_all(dir).map_err(|e| io_failure(dir, e))
}

fn write_json(dir: &Path, name: &str, value: &impl Serialize) -> Outcome<PathBuf> {
    let path = dir.join(name);
    let text = serde_json::to_string_pretty(value).map_err(|e| io_failure(&path, e))?;
    fs::write(&path, text + "\n").map_err(|e| io_failure(&path, e))?;
    Ok(path)
}

/// CSV with the schema in row 1 and the resolved config (compact JSON) in row 2.
fn write_csv<R: Serialize>(dir: &Path, name: &str, schema: &str, config: &serde_json::Value, rows: &[R]) -> Outcome<PathBuf> {
    let path = dir.join(name);
    let mut file = fs::File::create(&path).map_err(|e| io_failure(&path, e))?;
    writeln!(file, "# schema: {schema}").map_err(|e| io_failure(&path, e))?;
    writeln!(file, "# config: {config}").map_err(|e| io_failure(&path, e))?;
    let mut w = csv::Writer::from_writer(file);
    for r in rows {
        w.serialize(r).map_err(|e| io_failure(&path, e))?;
    }
    w.flush().map_err(|e| io_failure(&path, e))?;
    Ok(path)
}

#[derive(Serialize)]
struct PointRow {
    re: f64,
    im: f64,
    value: f64,
}

fn point_rows(points: &[(Complex64, f64)]) -> Vec<PointRow> {
    points
        .iter()
        .map(|(z, v)| PointRow {
            re: z.re,
            im: z.im,
            value: *v,
        })
        .collect()
}

fn plan_inputs(cfg: &ExperimentConfig, h: f64) -> Outcome<PlanInputs> {
    Ok(PlanInputs {
        n: 1,
        s: cfg.plan.s,
        epsilon: cfg.plan.epsilon,
        kappa: cfg.kappa(),
        h,
        tau0: cfg.plan.tau0_for(h),
        mode: cfg.plan.delta_mode()?,
        l_cap: None,
    })
}

fn derive_params_cmd(common: &Common) -> Outcome<()> {
    let cfg = load(common)?;
    out_dir(&common.out)?;
    let mut plans = Vec::new();
    for &h in &cfg.h_list {
        let plan = derive_params(plan_inputs(&cfg, h)?)?;
        println!(
            "h={h} M={:?} ({}) M~={:?} ({}) N1={:?} ({}) L={:.6e} R={:.6e} D={} delta={:.6e} eps0={:.6e}",
            plan.m,
            plan.m_exact,
            plan.m_tilde,
            plan.m_tilde_exact,
            plan.n1,
            plan.n1_exact,
            plan.l,
            plan.r,
            plan.d,
            plan.delta,
            plan.epsilon0
        );
        for c in plan.checks.iter().filter(|c| !c.holds) {
            println!("  window {} fails: {} < {}", c.name, c.lhs, c.rhs);
        }
        plans.push(plan);
    }
    write_json(
        &common.out,
        "params.json",
        &json!({ "schema": "weylab.params.v1", "config": cfg, "plans": plans }),
    )?;
    Ok(())
}

fn volume_cmd(common: &Common) -> Outcome<()> {
    let cfg = load(common)?;
    cfg.validate()?;
    out_dir(&common.out)?;
    let exec = Execution::default();
    let q = cfg.quadrature;
    let grid = PhaseGrid::certified(&cfg.symbol, &cfg.region, q.n_x, q.n_xi)?;
    let vol = volume_estimate(&cfg.symbol, &cfg.region, &grid, exec)?;
    let tube = Region::boundary_tube(cfg.region.clone(), cfg.tube_radius)?;
    let tgrid = PhaseGrid::certified(&cfg.symbol, &tube, q.n_x, q.n_xi)?;
    let tube_vol = volume_estimate(&cfg.symbol, &tube, &tgrid, exec)?;
    let predictions: Vec<_> = cfg
        .h_list
        .iter()
        .map(|&h| json!({ "h": h, "prediction": vol.volume / (2.0 * std::f64::consts::PI * h) }))
        .collect();
    let kappas: Vec<_> = cfg
        .probe_points()
        .into_iter()
        .map(|z| match estimate_kappa(&cfg.symbol, z, 1e-4, 1e-1, 13, KappaOptions::default()) {
            Ok(fit) => json!({ "z": [z.re, z.im], "fit": fit }),
            Err(e) => json!({ "z": [z.re, z.im], "error": e.to_string() }),
        })
        .collect();
    println!(
        "vol p^-1(Γ) = {:.6} ± {:.2e}; tube volume = {:.6}",
        vol.volume, vol.boundary_measure, tube_vol.volume
    );
    write_json(
        &common.out,
        "volume.json",
        &json!({
            "schema": "weylab.volume.v1",
            "config": cfg,
            "volume": vol,
            "tube_volume": tube_vol,
            "predictions": predictions,
            "kappa": kappas,
        }),
    )?;
    Ok(())
}

fn spectrum_cmd(args: &SpectrumArgs) -> Outcome<()> {
    let common = &args.common;
    let mut cfg = load(common)?;
    cfg.h_list.truncate(1);
    cfg.probes.log_det = false;
    cfg.validate()?;
    out_dir(&common.out)?;
    let exec = Execution::default();
    let ctx = LevelContext::build(&cfg, 0, exec)?;
    let spec = eigenvalues_with_residuals(&ctx.p)?;
    let cfg_json = serde_json::to_value(&cfg).expect("config serializes");
    let h = ctx.h;
    let eig_rows: Vec<(Complex64, f64)> = spec.eigenvalues.iter().map(|&z| (z, z.norm())).collect();
    write_csv(
        &common.out,
        &format!("eigs_{h}_baseline.csv"),
        "weylab.eigs.v1",
        &cfg_json,
        &point_rows(&eig_rows),
    )?;
    let ps = pseudospectrum_grid(&ctx, &cfg.region, args.grid, args.margin, exec);
    write_csv(
        &common.out,
        &format!("pseudospec_{h}.csv"),
        "weylab.pseudospec.v1",
        &cfg_json,
        &point_rows(&ps),
    )?;
    let count = weylab::spectral::count_in_region(&spec, &cfg.region);
    println!(
        "h={h} N={} count={count} prediction={:.3} max eigenpair residual {:.2e}",
        spec.matrix_dim,
        ctx.prediction,
        spec.max_residual.unwrap_or(f64::NAN)
    );
    write_json(
        &common.out,
        "spectrum.json",
        &json!({
            "schema": "weylab.spectrum.v1",
            "config": cfg,
            "h": h,
            "K": ctx.grid.k,
            "count": count,
            "prediction": ctx.prediction,
            "spectrum": spec,
        }),
    )?;
    Ok(())
}

#[derive(Serialize)]
struct TrialRow {
    h_index: usize,
    h: f64,
    trial: String,
    stream: Option<u64>,
    count: Option<usize>,
    prediction: f64,
    abs_error: Option<f64>,
    rel_error: Option<f64>,
    alpha_norm: Option<f64>,
    error: String,
}

fn trial_row(t: &TrialRecord) -> TrialRow {
    TrialRow {
        h_index: t.h_index,
        h: t.h,
        trial: t.trial.map_or_else(|| "baseline".to_string(), |i| i.to_string()),
        stream: t.stream,
        count: t.count,
        prediction: t.prediction,
        abs_error: t.abs_error,
        rel_error: t.rel_error,
        alpha_norm: t.alpha_norm,
        error: t.error.clone().unwrap_or_default(),
    }
}

fn ensemble_cmd(common: &Common) -> Outcome<()> {
    let cfg = load(common)?;
    out_dir(&common.out)?;
    let report = run_ensemble(&cfg, Execution::default())?;
    let cfg_json = serde_json::to_value(&report.config).expect("config serializes");
    let rows: Vec<TrialRow> = report.baselines.iter().chain(&report.trials).map(trial_row).collect();
    write_csv(&common.out, "trials.csv", "weylab.trials.v1", &cfg_json, &rows)?;
    for t in &report.trials {
        let name = format!("eigs_{}_{}.csv", t.h, t.trial.unwrap_or_default());
        write_csv(&common.out, &name, "weylab.eigs.v1", &cfg_json, &point_rows(&eigenvalue_rows(t)))?;
    }
    let path = common.out.join("report.json");
    fs::write(&path, report.to_json() + "\n").map_err(|e| io_failure(&path, e))?;
    for l in &report.levels {
        println!(
            "h={} N={} prediction={:.3} median count={} median rel error={:.4} success={:.2}",
            l.h, l.matrix_dim, l.prediction, l.median_count, l.median_rel_error, l.success_fraction
        );
    }
    if let Some(fit) = &report.constant_fit {
        println!("fitted C = {:.4e} at h = {}", fit.c, report.levels[fit.h_index].h);
    }
    Ok(())
}

fn line_cmd(args: &LineArgs) -> Outcome<()> {
    out_dir(&args.out)?;
    let g = TrigPoly::mode(-1, 1.0);
    let grid = GridParams::new(args.h, args.k)?;
    let check = line_model_check(&g, args.h, args.k_max, grid)?;
    let plan = derive_params(PlanInputs {
        n: 1,
        s: 2.0,
        epsilon: 0.5,
        kappa: 0.5,
        h: args.h,
        tau0: args.h.sqrt(),
        mode: DeltaMode::Effective { delta_eff: args.delta_eff },
        l_cap: Some(grid.xi_max()),
    })?;
    let regions = vec![
        Region::rectangle(-1.0, 1.0, 0.1, 0.5),
        Region::rectangle(-1.0, 1.0, -0.5, -0.1),
        Region::rectangle(-0.05, 1.0, -0.1, 0.1),
    ];
    let trials = line_model_trials(&g, &plan, &regions, args.trials, args.seed)?;
    println!("max quasimode residual {:.3e}, tail {:.3e}", check.max_residual, check.tail);
    let settings =
        json!({ "h": args.h, "K": args.k, "k_max": args.k_max, "trials": args.trials, "seed": args.seed, "delta_eff": args.delta_eff });
    write_json(
        &args.out,
        "line_check.json",
        &json!({ "schema": "weylab.line_check.v1", "config": settings, "check": check, "regions": regions, "trials": trials }),
    )?;
    Ok(())
}

fn identity_cmd(args: &IdentityArgs) -> Outcome<()> {
    out_dir(&args.out)?;
    let report = identity_checks(args.seed, Execution::default())?;
    println!(
        "max residuals: determinant {:.2e}, bordered solve {:.2e}, log-det derivative {:.2e}",
        report.max_det_residual, report.max_grushin_residual, report.max_deriv_residual
    );
    write_json(
        &args.out,
        "identities.json",
        &json!({ "schema": "weylab.identities.v1", "config": { "seed": args.seed }, "report": report }),
    )?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::DeriveParams(c) => derive_params_cmd(c),
        Command::Volume(c) => volume_cmd(c),
        Command::Spectrum(a) => spectrum_cmd(a),
        Command::WeylEnsemble(c) => ensemble_cmd(c),
        Command::LineCheck(a) => line_cmd(a),
        Command::IdentityChecks(a) => identity_cmd(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(msg)) => {
            eprintln!("weylab: config error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Numeric(msg)) => {
            eprintln!("weylab: {msg}");
            ExitCode::from(3)
        }
    }
}
