//! The transport operator `hD + g(x)`, whose spectrum is known in closed form.
//!
//! With `G₀' = g - ⟨g⟩` and `∫ G₀ = 0`, the functions
//! `u_k(x) = exp(ikx - (i/h) G₀(x))` satisfy `(hD + g) u_k = (⟨g⟩ + hk) u_k`,
//! so the spectrum is the horizontal line `⟨g⟩ + hZ`.

use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{param, LabError, Result};
use crate::operator::{assemble_differential, GridParams};
use crate::perturbation::{sample_potential, PerturbationPlan};
use crate::region::Region;
use crate::symbol::SymbolSpec;
use crate::trig::TrigPoly;

/// Largest admissible relative coefficient mass outside the retained window.
pub const TAIL_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LineCheck {
    pub h: f64,
    #[serde(rename = "K")]
    pub k: usize,
    pub k_max: usize,
    pub mean: [f64; 2],
    /// `⟨g⟩ + hk` for `|k| <= k_max`.
    pub eigenvalues: Vec<[f64; 2]>,
    /// `‖(P - λ_k) u_k‖ / ‖u_k‖` with `u_k` truncated to the grid.
    pub residuals: Vec<f64>,
    pub max_residual: f64,
    /// Relative norm of `exp(-(i/h) G₀)` outside the window the grid can hold.
    pub tail: f64,
    /// `max_k |Im λ_k - Im ⟨g⟩|`.
    pub max_im_deviation: f64,
}

/// Fourier coefficients `w_m`, `|m| <= n/2`, of `exp(-(i/h) G₀)` from `n` samples.
fn phase_coefficients(g: &TrigPoly, h: f64, n: usize) -> Vec<(i64, Complex64)> {
    let g0 = g.zero_mean_antiderivative();
    let mut buf: Vec<Complex64> = g0
        .sample(n)
        .into_iter()
        .map(|v| (Complex64::new(0.0, -1.0 / h) * v).exp())
        .collect();
    FftPlanner::<f64>::new().plan_fft_forward(n).process(&mut buf);
    let half = (n / 2) as i64;
    (-half + 1..=half)
        .map(|m| (m, buf[m.rem_euclid(n as i64) as usize] / n as f64))
        .collect()
}

/// Checks the closed-form eigenpairs of `hD + g` on the grid for `|k| <= k_max`.
pub fn line_model_check(g: &TrigPoly, h: f64, k_max: usize, grid: GridParams) -> Result<LineCheck> {
    if k_max >= grid.k {
        return Err(param("k_max", format!("must be below K = {}", grid.k)));
    }
    if (grid.h - h).abs() > 1e-15 * h {
        return Err(param("h", "does not match the grid"));
    }
    let window = (grid.k - k_max) as i64;
    let n_fft = (8 * (2 * grid.k + 1)).max(1024).next_power_of_two();
    let w = phase_coefficients(g, h, n_fft);
    let half = (n_fft / 2) as i64;
    let total: f64 = w.iter().map(|(_, c)| c.norm_sqr()).sum();
    let outside: f64 = w.iter().filter(|(m, _)| m.abs() > window).map(|(_, c)| c.norm_sqr()).sum();
    let tail = (outside / total).sqrt();
    if !(tail <= TAIL_TOLERANCE) {
        return Err(LabError::Resolution(format!(
            "quasimode mass {tail:.3e} lies beyond |m| = {window}; increase K"
        )));
    }
    let p = assemble_differential(&SymbolSpec::transport(g.clone()), grid)?;
    let mean = g.mean();
    let n = grid.dim();
    let mut eigenvalues = Vec::new();
    let mut residuals = Vec::new();
    for k in -(k_max as i64)..=k_max as i64 {
        let lam = mean + h * k as f64;
        // u_k has coefficient w_{j-k} at frequency j.
        let v: Vec<Complex64> = (0..n)
            .map(|i| {
                let m = grid.freq(i) - k;
                if m.abs() <= window {
                    w[(m + half - 1) as usize].1
                } else {
                    Complex64::new(0.0, 0.0)
                }
            })
            .collect();
        let norm = v.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
        let res = (0..n)
            .map(|i| {
                let pv: Complex64 = (0..n).map(|j| p.get(i, j) * v[j]).sum();
                (pv - lam * v[i]).norm_sqr()
            })
            .sum::<f64>()
            .sqrt();
        eigenvalues.push([lam.re, lam.im]);
        residuals.push(res / norm);
    }
    let max_im_deviation = eigenvalues.iter().map(|l| (l[1] - mean.im).abs()).fold(0.0, f64::max);
    Ok(LineCheck {
        h,
        k: grid.k,
        k_max,
        mean: [mean.re, mean.im],
        max_residual: residuals.iter().copied().fold(0.0, f64::max),
        eigenvalues,
        residuals,
        tail,
        max_im_deviation,
    })
}

/// Number of points of `⟨g⟩ + hZ` in the region, counted exactly.
pub fn closed_form_count(g: &TrigPoly, h: f64, region: &Region) -> usize {
    let mean = g.mean();
    let (a, b, _, _) = region.bounding_box();
    let lo = ((a - mean.re) / h).floor() as i64 - 1;
    let hi = ((b - mean.re) / h).ceil() as i64 + 1;
    (lo..=hi).filter(|&k| region.contains(mean + h * k as f64)).count()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LineTrial {
    pub trial: usize,
    /// `Im ⟨g + coupling q⟩`, the height of the perturbed line.
    pub line_im: f64,
    /// Closed-form counts, one per region.
    pub counts: Vec<usize>,
}

/// Closed-form counts for `hD + g + coupling · q` with `q` drawn per trial.
///
/// The sampled `q` has no zero mode, so the line stays at `Im ⟨g⟩`.
pub fn line_model_trials(g: &TrigPoly, plan: &PerturbationPlan, regions: &[Region], n_trials: usize, seed: u64) -> Result<Vec<LineTrial>> {
    (0..n_trials)
        .map(|t| {
            let q = sample_potential(plan, seed, t as u64, false)?;
            let gt = g.add(&q.q.scale(plan.coupling.into()));
            Ok(LineTrial {
                trial: t,
                line_im: gt.mean().im,
                counts: regions.iter().map(|r| closed_form_count(&gt, plan.inputs.h, r)).collect(),
            })
        })
        .collect()
}
