//! Admissible parameter windows, random potentials and perturbed operators.
//!
//! The window exponents are computed in exact rational arithmetic from the binary
//! values of the float inputs, so the inequalities between exponents are checked
//! without rounding.

use num_bigint::BigInt;
use num_complex::Complex64;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{param, LabError, Result};
use crate::operator::{assemble_multiplier, OperatorMatrix};
use crate::rng::stream_rng;
use crate::trig::TrigPoly;

/// The unspecified constants `C` of the L and R windows, and the lower-window margin.
pub const WINDOW_CONSTANT: f64 = 1.0;
pub const WINDOW_MARGIN: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DeltaMode {
    /// `δ = τ₀ h^{N₁+n}`, coupling `δ h^{N₁}`.
    Paper,
    /// Coupling `δ_eff / R`, so the perturbation is `δ_eff` times a potential of coefficient norm at most 1.
    Effective { delta_eff: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanInputs {
    pub n: u32,
    pub s: f64,
    pub epsilon: f64,
    pub kappa: f64,
    pub h: f64,
    pub tau0: f64,
    pub mode: DeltaMode,
    /// Caps `L` (typically at `hK`, the largest representable frequency).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub l_cap: Option<f64>,
}

/// One window inequality `h^{lhs} <= h^{rhs}` (for `h < 1`: `lhs >= rhs`), as exact exponents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowCheck {
    pub name: String,
    pub lhs: String,
    pub rhs: String,
    pub holds: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum PlanWarning {
    /// Effective `δ` at or above `h`.
    DeltaAboveH { delta: f64, h: f64 },
    /// Base-operator weight `δ₀` above `h`.
    BaseDeltaAboveH { delta0: f64, h: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbationPlan {
    pub inputs: PlanInputs,
    pub m: f64,
    pub m_tilde: f64,
    pub n1: f64,
    pub m_exact: String,
    pub m_tilde_exact: String,
    pub n1_exact: String,
    pub window_constant: f64,
    pub window_margin: f64,
    /// `h^{-M}` before any cap.
    pub l_paper: f64,
    pub l: f64,
    pub l_capped: bool,
    pub r: f64,
    pub d: usize,
    pub delta_paper: f64,
    pub delta: f64,
    /// Weight multiplying `Conv(q)` in `P_δ`.
    pub coupling: f64,
    pub epsilon0: f64,
    pub checks: Vec<WindowCheck>,
    pub warnings: Vec<PlanWarning>,
}

fn rat(x: f64) -> BigRational {
    BigRational::from_float(x).expect("finite input")
}

fn rat_int(n: i64) -> BigRational {
    BigRational::from_integer(BigInt::from(n))
}

fn to_f64(r: &BigRational) -> f64 {
    r.to_f64().unwrap_or(f64::NAN)
}

fn show(r: &BigRational) -> String {
    if r.is_integer() {
        r.numer().to_string()
    } else {
        format!("{}/{}", r.numer(), r.denom())
    }
}

/// `ε₀(h) = (h^κ + h^n ln(1/h)) (ln(1/τ₀) + (ln(1/h))^2)`.
pub fn epsilon0(h: f64, kappa: f64, n: u32, tau0: f64) -> f64 {
    let lh = (1.0 / h).ln();
    (h.powf(kappa) + h.powi(n as i32) * lh) * ((1.0 / tau0).ln() + lh * lh)
}

/// `2⌊L/h⌋`, counting `k ≠ 0` with `h|k| <= L`. A relative slack of 1e-12 keeps
/// `L = hK` from losing a mode to rounding.
pub fn mode_count(l: f64, h: f64) -> usize {
    2 * ((l / h) * (1.0 + 1e-12)).floor() as usize
}

pub fn derive_params(inputs: PlanInputs) -> Result<PerturbationPlan> {
    let PlanInputs {
        n,
        s,
        epsilon,
        kappa,
        h,
        tau0,
        mode,
        l_cap,
    } = inputs.clone();
    if n == 0 {
        return Err(param("n", "dimension must be positive"));
    }
    let half_n = n as f64 / 2.0;
    if !(s > half_n) {
        return Err(param("s", format!("need s > n/2, got s = {s}")));
    }
    if !(epsilon > 0.0 && epsilon < s - half_n) {
        return Err(param("epsilon", format!("need 0 < ε < s - n/2 = {}, got {epsilon}", s - half_n)));
    }
    if !(kappa > 0.0 && kappa <= 1.0) {
        return Err(param("kappa", format!("need 0 < κ <= 1, got {kappa}")));
    }
    if !(h > 0.0 && h < 1.0) {
        return Err(param("h", format!("need 0 < h < 1, got {h}")));
    }
    if !(tau0 > 0.0 && tau0 <= h.sqrt()) {
        return Err(param("tau0", format!("need 0 < τ₀ <= √h, got {tau0}")));
    }
    if let DeltaMode::Effective { delta_eff } = mode {
        if !(delta_eff >= 0.0) {
            return Err(param("delta_eff", "must be non-negative"));
        }
    }
    if let Some(cap) = l_cap {
        if !(cap > 0.0) {
            return Err(param("l_cap", "must be positive"));
        }
    }

    let (nr, sr, er, kr) = (rat_int(n as i64), rat(s), rat(epsilon), rat(kappa));
    let two = rat_int(2);
    let three = rat_int(3);
    let half_nr = &nr / &two;
    let gap = &sr - &half_nr - &er;
    let m_min = (&three * &nr - &kr) / &gap;
    let m = m_min.clone();
    let mt_min = &three * &nr / &two - &kr + (&half_nr + &er) * &m;
    let m_tilde = mt_min.clone();
    let n1 = &m_tilde + &sr * &m + &half_nr;

    // For h < 1, h^a >= h^b iff a <= b. L = C h^{-M} and R = C h^{-M̃} with C = 1.
    let l_exp = -m.clone();
    let l_lo = (&kr - &three * &nr) / &gap;
    let r_exp = -m_tilde.clone();
    let r_lo = -(&half_nr + &er) * &m + &kr - &three * &nr / &two;
    let check = |name: &str, lhs: &BigRational, rhs: &BigRational, holds: bool| WindowCheck {
        name: name.to_string(),
        lhs: show(lhs),
        rhs: show(rhs),
        holds,
    };
    let checks = vec![
        check("M >= (3n - κ)/(s - n/2 - ε)", &m, &m_min, m >= m_min),
        check("M̃ >= 3n/2 - κ + (n/2 + ε)M", &m_tilde, &mt_min, m_tilde >= mt_min),
        check("L >= h^{(κ - 3n)/(s - n/2 - ε)}", &l_exp, &l_lo, l_exp <= l_lo),
        check("L <= C h^{-M}", &l_exp, &-m.clone(), l_exp >= -m.clone()),
        check("R >= h^{-(n/2 + ε)M + κ - 3n/2}", &r_exp, &r_lo, r_exp <= r_lo),
        check("R <= C h^{-M̃}", &r_exp, &-m_tilde.clone(), r_exp >= -m_tilde.clone()),
        check("N₁ = M̃ + sM + n/2 > 0", &n1, &BigRational::zero(), n1 > BigRational::zero()),
        check("κ <= 1", &kr, &BigRational::one(), kr <= BigRational::one()),
    ];
    if let Some(bad) = checks.iter().find(|c| !c.holds) {
        return Err(param("window", format!("derived plan violates {}", bad.name)));
    }

    let (mf, mtf, n1f) = (to_f64(&m), to_f64(&m_tilde), to_f64(&n1));
    let l_paper = WINDOW_CONSTANT * h.powf(-mf);
    let (l, l_capped) = match l_cap {
        Some(cap) if cap < l_paper => (cap, true),
        _ => (l_paper, false),
    };
    let r = WINDOW_CONSTANT * h.powf(-mtf);
    let d = mode_count(l, h);
    let delta_paper = tau0 * h.powf(n1f + n as f64);
    let (delta, coupling) = match mode {
        DeltaMode::Paper => (delta_paper, delta_paper * h.powf(n1f)),
        DeltaMode::Effective { delta_eff } => (delta_eff, delta_eff / r),
    };
    let mut warnings = Vec::new();
    if matches!(mode, DeltaMode::Effective { .. }) && delta >= h {
        warnings.push(PlanWarning::DeltaAboveH { delta, h });
    }
    Ok(PerturbationPlan {
        inputs,
        m: mf,
        m_tilde: mtf,
        n1: n1f,
        m_exact: show(&m),
        m_tilde_exact: show(&m_tilde),
        n1_exact: show(&n1),
        window_constant: WINDOW_CONSTANT,
        window_margin: WINDOW_MARGIN,
        l_paper,
        l,
        l_capped,
        r,
        d,
        delta_paper,
        delta,
        coupling,
        epsilon0: epsilon0(h, kappa, n, tau0),
        checks,
        warnings,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomPotential {
    pub q: TrigPoly,
    /// Coefficients in the order `k = -D/2, ..., -1, 1, ..., D/2`.
    pub alpha: Vec<Complex64>,
    pub seed: u64,
    pub stream: u64,
    pub real: bool,
}

impl RandomPotential {
    pub fn alpha_norm(&self) -> f64 {
        self.alpha.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt()
    }
}

/// Uniform point in the Euclidean ball of radius `radius` in `R^dim`.
fn uniform_ball(rng: &mut impl Rng, dim: usize, radius: f64) -> Vec<f64> {
    let mut g: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
    let norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
    let u: f64 = rng.random();
    let scale = radius * u.powf(1.0 / dim as f64) / norm;
    g.iter_mut().for_each(|v| *v *= scale);
    g
}

/// Draws `α` uniformly from the ball `|α| <= R` and forms `q = Σ α_k e^{ikx}/√(2π)`.
///
/// In real mode only `k > 0` is free: `α_k = (β_c - iβ_s)/√2` with `β` uniform in
/// the real ball of dimension `D`, and `α_{-k} = conj(α_k)`, which keeps `|α| = |β|`.
pub fn sample_potential(plan: &PerturbationPlan, seed: u64, stream: u64, real: bool) -> Result<RandomPotential> {
    if plan.d == 0 {
        return Err(LabError::EmptyBasis);
    }
    let half = (plan.d / 2) as i64;
    let mut rng = stream_rng(seed, stream);
    let norm = 1.0 / (2.0 * std::f64::consts::PI).sqrt();
    let mut by_freq = std::collections::BTreeMap::new();
    if real {
        let beta = uniform_ball(&mut rng, plan.d, plan.r);
        for k in 1..=half {
            let i = 2 * (k - 1) as usize;
            let a = Complex64::new(beta[i], -beta[i + 1]) / 2f64.sqrt();
            by_freq.insert(k, a);
            by_freq.insert(-k, a.conj());
        }
    } else {
        let g = uniform_ball(&mut rng, 2 * plan.d, plan.r);
        let freqs = (-half..0).chain(1..=half);
        for (i, k) in freqs.enumerate() {
            by_freq.insert(k, Complex64::new(g[2 * i], g[2 * i + 1]));
        }
    }
    let alpha: Vec<Complex64> = by_freq.values().copied().collect();
    let q = TrigPoly::from_pairs(by_freq.iter().map(|(&k, &a)| (k, a * norm)));
    Ok(RandomPotential {
        q,
        alpha,
        seed,
        stream,
        real,
    })
}

/// Optional generalized base `P₀ = P + δ₀ (h^{n/2} q₁ + q₂)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaseShift {
    pub delta0: f64,
    pub q1: TrigPoly,
    pub q2: TrigPoly,
}

/// `P + coupling · Conv(q)`, after first replacing `P` by `P₀` when `base` is given.
pub fn build_perturbed(
    p: &OperatorMatrix,
    plan: &PerturbationPlan,
    q: &RandomPotential,
    base: Option<&BaseShift>,
) -> Result<(OperatorMatrix, Vec<PlanWarning>)> {
    let mut warnings = Vec::new();
    let h = plan.inputs.h;
    let mut out = p.clone();
    if let Some(b) = base {
        if b.delta0 > h {
            warnings.push(PlanWarning::BaseDeltaAboveH { delta0: b.delta0, h });
        }
        let w1 = b.delta0 * h.powf(plan.inputs.n as f64 / 2.0);
        let shift = assemble_multiplier(&b.q1.scale(w1.into()).add(&b.q2.scale(b.delta0.into())), p.grid)?;
        out = out.add(&shift);
    }
    if plan.coupling != 0.0 {
        let conv = assemble_multiplier(&q.q, p.grid)?;
        out = out.add(&conv.scaled(plan.coupling.into()));
    }
    Ok((out, warnings))
}
