//! Random-perturbation Weyl ensembles.
//!
//! For each `h` the unperturbed operator, the prediction `(2πh)^{-1} vol p^{-1}(Γ)`
//! and the probe setup are built once; trials then only sample `q`, form
//! `P_δ`, and diagonalize. Every trial owns its RNG stream, so the report does
//! not depend on how trials are scheduled.

use std::f64::consts::PI;
use std::time::Instant;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, Truncation};
use crate::error::{LabError, Result};
use crate::exec::{map_indexed, Execution};
use crate::modified::{search_modified_symbol, GuardedSymbol};
use crate::operator::{assemble_differential, assemble_toroidal_pdo, GridParams, OperatorMatrix};
use crate::perturbation::{build_perturbed, derive_params, sample_potential, PerturbationPlan, PlanInputs};
use crate::phase::{volume_estimate, PhaseGrid, VolumeEstimate};
use crate::region::Region;
use crate::spectral::{self, log_abs_det, singular_values};
use crate::symbol::SymbolSpec;

pub const REPORT_SCHEMA: &str = "weylab.weyl_report.v1";

/// `(2πh)^{-1} vol p^{-1}(Γ)` for `n = 1`.
pub fn weyl_prediction(volume: f64, h: f64) -> f64 {
    volume / (2.0 * PI * h)
}

/// Right-hand side of the counting bound for a given constant `C`:
/// `(C/h^n) (ε̃/r + C (r + ln(1/r) vol p^{-1}(∂Γ + D(0, r))))`.
pub fn theorem_rhs(c: f64, h: f64, n: u32, eps_tilde: f64, r: f64, tube_volume: f64) -> f64 {
    let hn = h.powi(n as i32);
    (c / hn) * (eps_tilde / r + c * (r + (1.0 / r).ln() * tube_volume))
}

/// Smallest `C >= 0` with `theorem_rhs(C) >= err`, from the quadratic in `C`.
pub fn fit_constant(err: f64, h: f64, n: u32, eps_tilde: f64, r: f64, tube_volume: f64) -> f64 {
    if err <= 0.0 {
        return 0.0;
    }
    let hn = h.powi(n as i32);
    let a = (r + (1.0 / r).ln() * tube_volume) / hn;
    let b = eps_tilde / (r * hn);
    if a <= 0.0 {
        return err / b;
    }
    (-b + (b * b + 4.0 * a * err).sqrt()) / (2.0 * a)
}

/// Per-probe data shared by every trial at one `h`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeSetup {
    pub z: [f64; 2],
    #[serde(skip_serializing_if = "Option::is_none")]
    pub modifier: Option<GuardedSymbol>,
    /// `ln |det(P̃ - z)|`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub log_det_tilde: Option<f64>,
    /// `(2πh)^{-1} ∬ ln |p_z| dx dξ`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub log_det_prediction: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl ProbeSetup {
    pub fn point(&self) -> Complex64 {
        Complex64::new(self.z[0], self.z[1])
    }
}

/// Everything about one `h` that does not depend on the trial.
#[derive(Debug, Clone)]
pub struct LevelContext {
    pub h_index: usize,
    pub h: f64,
    pub grid: GridParams,
    pub p: OperatorMatrix,
    pub plan: PerturbationPlan,
    pub volume: VolumeEstimate,
    pub prediction: f64,
    pub tube_volume: f64,
    pub eps_tilde: f64,
    pub probes: Vec<ProbeSetup>,
}

fn truncation_grid(cfg: &ExperimentConfig, h: f64) -> Result<GridParams> {
    match cfg.truncation {
        Truncation::Auto => GridParams::for_xi_bound(h, cfg.xi_bound()?),
        Truncation::Explicit { k } => GridParams::new(h, k),
    }
}

/// `(2πh)^{-1} ∬ ln|p_z|` with `|p_z|^2 = |p - z|^2 / |p̃ - z|^2`; the integrand
/// vanishes outside the set where `p̃ ≠ p`.
pub fn log_det_prediction(
    spec: &SymbolSpec,
    g: &GuardedSymbol,
    z: Complex64,
    h: f64,
    n_x: usize,
    n_xi: usize,
    exec: Execution,
) -> Result<f64> {
    let grid = PhaseGrid::certified(spec, &g.modifier.support(), n_x, n_xi)?;
    let m = g.modifier;
    let integral = grid.integrate(spec, exec, move |p| {
        let num = (p - z).norm_sqr().max(f64::MIN_POSITIVE);
        let den = (m.apply(p) - z).norm_sqr();
        0.5 * (num / den).ln()
    });
    Ok(integral / (2.0 * PI * h))
}

/// Quantization of `p̃`, as `P + Op(p̃ - p)` so lower-order terms of `P` carry over.
pub fn quantize_modified(spec: &SymbolSpec, p: &OperatorMatrix, g: &GuardedSymbol) -> Result<OperatorMatrix> {
    let grid = p.grid;
    if g.xi_support > grid.xi_max() {
        return Err(LabError::Resolution(format!(
            "p̃ differs from p up to |ξ| = {:.4}, beyond hK = {:.4}",
            g.xi_support,
            grid.xi_max()
        )));
    }
    let m = g.modifier;
    let n_x = (4 * grid.k + 8).next_power_of_two();
    let diff = assemble_toroidal_pdo(
        |x, xi| {
            let v = crate::symbol::horner(&spec.coefficients_at(x), xi);
            m.apply(v) - v
        },
        grid,
        n_x,
        Execution::Sequential,
    )?;
    Ok(p.add(&diff))
}

fn setup_probe(cfg: &ExperimentConfig, p: &OperatorMatrix, z: Complex64, exec: Execution) -> ProbeSetup {
    let mut out = ProbeSetup {
        z: [z.re, z.im],
        modifier: None,
        log_det_tilde: None,
        log_det_prediction: None,
        error: None,
    };
    if !cfg.probes.log_det {
        return out;
    }
    let res = (|| -> Result<(GuardedSymbol, f64, f64)> {
        let g = search_modified_symbol(&cfg.symbol, z, &[z], &cfg.probes.guard)?;
        let pt = quantize_modified(&cfg.symbol, p, &g)?;
        let ldt = log_abs_det(&pt, z)?;
        let q = cfg.quadrature;
        let pred = log_det_prediction(&cfg.symbol, &g, z, p.grid.h, q.n_x, q.n_xi, exec)?;
        Ok((g, ldt, pred))
    })();
    match res {
        Ok((g, ldt, pred)) => {
            out.modifier = Some(g);
            out.log_det_tilde = Some(ldt);
            out.log_det_prediction = Some(pred);
        }
        Err(e) => out.error = Some(e.to_string()),
    }
    out
}

impl LevelContext {
    pub fn build(cfg: &ExperimentConfig, h_index: usize, exec: Execution) -> Result<Self> {
        let h = cfg.h_list[h_index];
        let grid = truncation_grid(cfg, h)?;
        let p = assemble_differential(&cfg.symbol, grid)?;
        let plan = derive_params(PlanInputs {
            n: 1,
            s: cfg.plan.s,
            epsilon: cfg.plan.epsilon,
            kappa: cfg.kappa(),
            h,
            tau0: cfg.plan.tau0_for(h),
            mode: cfg.plan.delta_mode()?,
            l_cap: cfg.plan.cap_l_at_grid.then(|| grid.xi_max()),
        })?;
        let q = cfg.quadrature;
        let vgrid = PhaseGrid::certified(&cfg.symbol, &cfg.region, q.n_x, q.n_xi)?;
        let volume = volume_estimate(&cfg.symbol, &cfg.region, &vgrid, exec)?;
        let tube = Region::boundary_tube(cfg.region.clone(), cfg.tube_radius)?;
        let tgrid = PhaseGrid::certified(&cfg.symbol, &tube, q.n_x, q.n_xi)?;
        let tube_volume = volume_estimate(&cfg.symbol, &tube, &tgrid, exec)?.volume;
        let probes = cfg.probe_points().into_iter().map(|z| setup_probe(cfg, &p, z, exec)).collect();
        Ok(Self {
            h_index,
            h,
            grid,
            prediction: weyl_prediction(volume.volume, h),
            volume,
            tube_volume,
            eps_tilde: cfg.eps_tilde_factor * plan.epsilon0,
            plan,
            p,
            probes,
        })
    }

    pub fn stream(&self, trial: usize) -> u64 {
        ((self.h_index as u64) << 32) | trial as u64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeRecord {
    pub z: [f64; 2],
    /// `t₁(P_δ - z)`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub smallest_singular: Option<f64>,
    /// `ln |det P_{δ,z}| = ln|det(P_δ - z)| - ln|det(P̃ - z)|`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub log_det_pz: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub h_index: usize,
    pub h: f64,
    /// `None` for the unperturbed baseline.
    pub trial: Option<usize>,
    pub stream: Option<u64>,
    pub count: Option<usize>,
    pub prediction: f64,
    pub abs_error: Option<f64>,
    pub rel_error: Option<f64>,
    pub alpha_norm: Option<f64>,
    pub probes: Vec<ProbeRecord>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    /// Wall-clock seconds; kept out of the report so it stays reproducible.
    #[serde(skip)]
    pub runtime_s: f64,
    #[serde(skip)]
    pub eigenvalues: Vec<Complex64>,
}

fn probe_record(m: &OperatorMatrix, setup: &ProbeSetup) -> ProbeRecord {
    let z = setup.point();
    let mut rec = ProbeRecord {
        z: setup.z,
        smallest_singular: None,
        log_det_pz: None,
        error: setup.error.clone(),
    };
    match singular_values(m, z) {
        Ok(s) => rec.smallest_singular = s.first().copied(),
        Err(e) => rec.error = Some(e.to_string()),
    }
    if let Some(ldt) = setup.log_det_tilde {
        match log_abs_det(m, z) {
            Ok(ld) => rec.log_det_pz = Some(ld - ldt),
            Err(e) => rec.error = Some(e.to_string()),
        }
    }
    rec
}

fn record_for(ctx: &LevelContext, cfg: &ExperimentConfig, trial: Option<usize>, m: Result<(OperatorMatrix, Option<f64>)>) -> TrialRecord {
    let start = Instant::now();
    let mut rec = TrialRecord {
        h_index: ctx.h_index,
        h: ctx.h,
        trial,
        stream: trial.map(|t| ctx.stream(t)),
        count: None,
        prediction: ctx.prediction,
        abs_error: None,
        rel_error: None,
        alpha_norm: None,
        probes: Vec::new(),
        error: None,
        runtime_s: 0.0,
        eigenvalues: Vec::new(),
    };
    let (m, alpha_norm) = match m {
        Ok(v) => v,
        Err(e) => {
            rec.error = Some(e.to_string());
            return rec;
        }
    };
    rec.alpha_norm = alpha_norm;
    match spectral::eigenvalues(&m) {
        Ok(spec) => {
            let count = spectral::count_in_region(&spec, &cfg.region);
            let err = (count as f64 - ctx.prediction).abs();
            rec.count = Some(count);
            rec.abs_error = Some(err);
            rec.rel_error = Some(err / ctx.prediction.max(1.0));
            rec.eigenvalues = spec.eigenvalues;
        }
        Err(e) => rec.error = Some(e.to_string()),
    }
    rec.probes = ctx.probes.iter().map(|s| probe_record(&m, s)).collect();
    rec.runtime_s = start.elapsed().as_secs_f64();
    rec
}

/// The unperturbed operator, measured like a trial.
pub fn run_baseline(ctx: &LevelContext, cfg: &ExperimentConfig) -> TrialRecord {
    record_for(ctx, cfg, None, Ok((ctx.p.clone(), None)))
}

pub fn run_trial(ctx: &LevelContext, cfg: &ExperimentConfig, trial: usize) -> TrialRecord {
    let built = sample_potential(&ctx.plan, cfg.master_seed, ctx.stream(trial), cfg.plan.real_potential).and_then(|q| {
        let (m, _) = build_perturbed(&ctx.p, &ctx.plan, &q, None)?;
        Ok((m, Some(q.alpha_norm())))
    });
    record_for(ctx, cfg, Some(trial), built)
}

/// Linear-interpolation quantile of sorted data.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeSummary {
    pub z: [f64; 2],
    #[serde(skip_serializing_if = "Option::is_none")]
    pub modifier: Option<GuardedSymbol>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub log_det_prediction: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub median_log_det_pz: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub baseline_smallest_singular: Option<f64>,
    /// Fraction of trials with `t₁(P_δ - z) >= t₁(P - z)`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fraction_not_below_baseline: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelSummary {
    pub h: f64,
    #[serde(rename = "K")]
    pub k: usize,
    pub matrix_dim: usize,
    pub volume: f64,
    pub volume_boundary_measure: f64,
    pub prediction: f64,
    pub baseline_count: Option<usize>,
    pub n_ok: usize,
    pub n_failed: usize,
    pub median_count: f64,
    pub median_rel_error: f64,
    pub q1_rel_error: f64,
    pub q3_rel_error: f64,
    pub max_abs_error: f64,
    /// Fraction of trials with relative error at most the configured tolerance.
    pub success_fraction: f64,
    pub epsilon0: f64,
    pub eps_tilde: f64,
    pub r: f64,
    pub tube_volume: f64,
    /// Bound evaluated with the fitted constant.
    pub theorem_rhs: Option<f64>,
    pub theorem_success_fraction: Option<f64>,
    pub probes: Vec<ProbeSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstantFit {
    /// Index into `h_list` of the `h` the constant was fitted at (the largest).
    pub h_index: usize,
    pub c: f64,
    /// `C r <= 1` and `ε̃ >= C ε₀`.
    pub within_hypotheses: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeylReport {
    pub schema: String,
    pub config: ExperimentConfig,
    pub plans: Vec<PerturbationPlan>,
    pub levels: Vec<LevelSummary>,
    pub constant_fit: Option<ConstantFit>,
    pub baselines: Vec<TrialRecord>,
    pub trials: Vec<TrialRecord>,
}

impl WeylReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

fn summarize(ctx: &LevelContext, cfg: &ExperimentConfig, baseline: &TrialRecord, trials: &[TrialRecord]) -> LevelSummary {
    let ok: Vec<&TrialRecord> = trials.iter().filter(|t| t.count.is_some()).collect();
    let mut rel: Vec<f64> = ok.iter().filter_map(|t| t.rel_error).collect();
    rel.sort_by(f64::total_cmp);
    let mut counts: Vec<f64> = ok.iter().filter_map(|t| t.count.map(|c| c as f64)).collect();
    counts.sort_by(f64::total_cmp);
    let frac = |pass: usize| if ok.is_empty() { 0.0 } else { pass as f64 / ok.len() as f64 };
    let probes = ctx
        .probes
        .iter()
        .enumerate()
        .map(|(i, setup)| {
            let mut lds: Vec<f64> = trials.iter().filter_map(|t| t.probes.get(i)?.log_det_pz).collect();
            lds.sort_by(f64::total_cmp);
            let base = baseline.probes.get(i).and_then(|p| p.smallest_singular);
            let pert: Vec<f64> = trials.iter().filter_map(|t| t.probes.get(i)?.smallest_singular).collect();
            ProbeSummary {
                z: setup.z,
                modifier: setup.modifier,
                log_det_prediction: setup.log_det_prediction,
                median_log_det_pz: (!lds.is_empty()).then(|| quantile(&lds, 0.5)),
                baseline_smallest_singular: base,
                fraction_not_below_baseline: base
                    .filter(|_| !pert.is_empty())
                    .map(|b| pert.iter().filter(|&&t| t >= b).count() as f64 / pert.len() as f64),
                error: setup.error.clone(),
            }
        })
        .collect();
    LevelSummary {
        h: ctx.h,
        k: ctx.grid.k,
        matrix_dim: ctx.grid.dim(),
        volume: ctx.volume.volume,
        volume_boundary_measure: ctx.volume.boundary_measure,
        prediction: ctx.prediction,
        baseline_count: baseline.count,
        n_ok: ok.len(),
        n_failed: trials.len() - ok.len(),
        median_count: quantile(&counts, 0.5),
        median_rel_error: quantile(&rel, 0.5),
        q1_rel_error: quantile(&rel, 0.25),
        q3_rel_error: quantile(&rel, 0.75),
        max_abs_error: ok.iter().filter_map(|t| t.abs_error).fold(0.0, f64::max),
        success_fraction: frac(rel.iter().filter(|&&e| e <= cfg.tolerance).count()),
        epsilon0: ctx.plan.epsilon0,
        eps_tilde: ctx.eps_tilde,
        r: cfg.tube_radius,
        tube_volume: ctx.tube_volume,
        theorem_rhs: None,
        theorem_success_fraction: None,
        probes,
    }
}

/// Runs every `h` in the configuration. Trials run through `exec`; the report is
/// identical for any thread count.
pub fn run_ensemble(cfg: &ExperimentConfig, exec: Execution) -> Result<WeylReport> {
    cfg.validate()?;
    let mut plans = Vec::new();
    let mut levels = Vec::new();
    let mut baselines = Vec::new();
    let mut all = Vec::new();
    for h_index in 0..cfg.h_list.len() {
        let ctx = LevelContext::build(cfg, h_index, exec)?;
        let baseline = run_baseline(&ctx, cfg);
        let trials = map_indexed(cfg.n_trials, exec, |t| run_trial(&ctx, cfg, t));
        levels.push(summarize(&ctx, cfg, &baseline, &trials));
        plans.push(ctx.plan.clone());
        baselines.push(baseline);
        all.extend(trials);
    }
    let constant_fit = fit_at_largest_h(cfg, &mut levels, &all);
    Ok(WeylReport {
        schema: REPORT_SCHEMA.to_string(),
        config: cfg.clone(),
        plans,
        levels,
        constant_fit,
        baselines,
        trials: all,
    })
}

/// Fits `C` at the largest `h` and evaluates the bound with it at every level.
fn fit_at_largest_h(cfg: &ExperimentConfig, levels: &mut [LevelSummary], trials: &[TrialRecord]) -> Option<ConstantFit> {
    let (h_index, lvl) = levels
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.h.total_cmp(&b.1.h).then(b.0.cmp(&a.0)))?;
    if lvl.n_ok == 0 {
        return None;
    }
    let c = fit_constant(lvl.max_abs_error, lvl.h, 1, lvl.eps_tilde, lvl.r, lvl.tube_volume);
    let within = c * lvl.r <= 1.0 && cfg.eps_tilde_factor >= c;
    for (i, l) in levels.iter_mut().enumerate() {
        let rhs = theorem_rhs(c, l.h, 1, l.eps_tilde, l.r, l.tube_volume);
        let level_trials: Vec<f64> = trials.iter().filter(|t| t.h_index == i).filter_map(|t| t.abs_error).collect();
        l.theorem_rhs = Some(rhs);
        l.theorem_success_fraction =
            (!level_trials.is_empty()).then(|| level_trials.iter().filter(|&&e| e <= rhs).count() as f64 / level_trials.len() as f64);
    }
    Some(ConstantFit {
        h_index,
        c,
        within_hypotheses: within,
    })
}

/// Eigenvalues of one trial as `re,im,|λ|` rows.
pub fn eigenvalue_rows(rec: &TrialRecord) -> Vec<(Complex64, f64)> {
    rec.eigenvalues.iter().map(|&z| (z, z.norm())).collect()
}

/// Smallest singular value of `P - z` over a rectangular grid covering Γ plus a margin.
pub fn pseudospectrum_grid(ctx: &LevelContext, region: &Region, n: usize, margin: f64, exec: Execution) -> Vec<(Complex64, f64)> {
    let (a, b, c, d) = region.bounding_box();
    let (a, b, c, d) = (a - margin, b + margin, c - margin, d + margin);
    let pts: Vec<Complex64> = (0..n * n)
        .map(|k| {
            let (i, j) = (k / n, k % n);
            let f = |lo: f64, hi: f64, t: usize| {
                if n == 1 {
                    0.5 * (lo + hi)
                } else {
                    lo + (hi - lo) * t as f64 / (n - 1) as f64
                }
            };
            Complex64::new(f(a, b, i), f(c, d, j))
        })
        .collect();
    let vals = spectral::pseudospectrum(&ctx.p, &pts, exec);
    pts.into_iter().zip(vals).map(|(z, v)| (z, v.unwrap_or(f64::NAN))).collect()
}
