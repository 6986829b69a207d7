//! Trace and regularized log-det of `S = P_z^* P_z`, `P_z = (P̃ - z)^{-1}(P - z)`,
//! against their phase-space integrals.

use std::f64::consts::PI;

use faer::linalg::solvers::Solve;
use faer::Mat;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::weyl::quantize_modified;
use crate::error::{param, Result};
use crate::exec::Execution;
use crate::modified::{GuardedSymbol, ModifiedSymbol};
use crate::operator::{assemble_differential, GridParams, TRUNCATION_MARGIN};
use crate::phase::{certified_xi_bound, PhaseGrid};
use crate::spectral::{functional_from_eigenvalues, psd_eigenvalues, BumpFunction};
use crate::symbol::SymbolSpec;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FunctionalInputs {
    pub z: [f64; 2],
    pub modifier: ModifiedSymbol,
    pub h: f64,
    /// `α` of the trace `tr χ(S/α)`.
    pub alpha: f64,
    /// Exponent in the normalization `α^κ / h` of the trace gap.
    pub kappa: f64,
    /// `|ξ|` range kept by the truncation; at least the support of `p̃ - p`.
    pub xi_window: f64,
    pub n_x: usize,
    pub n_xi: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FunctionalCheck {
    pub h: f64,
    #[serde(rename = "K")]
    pub k: usize,
    pub alpha: f64,
    /// `tr χ(S/α)`.
    pub trace_val: f64,
    /// `(2πh)^{-1} ∬ χ(s/α)`.
    pub trace_weyl: f64,
    pub trace_gap: f64,
    /// `trace_gap / (α^κ / h)`.
    pub trace_gap_normalized: f64,
    /// `ln det(S + hχ(S/h))`.
    pub logdet_reg: f64,
    /// `(2πh)^{-1} ∬ ln s`.
    pub logdet_weyl: f64,
    pub logdet_gap: f64,
    /// Smallest eigenvalue of `S`.
    pub s_min: f64,
}

/// Eigenvalues of `S` on a grid.
pub fn s_eigenvalues(spec: &SymbolSpec, modifier: &ModifiedSymbol, z: Complex64, grid: GridParams) -> Result<Vec<f64>> {
    let p = assemble_differential(spec, grid)?;
    let xi_support = certified_xi_bound(spec, modifier.support().sup_modulus())?;
    let g = GuardedSymbol {
        modifier: *modifier,
        margin: f64::NAN,
        xi_support,
    };
    let pt = quantize_modified(spec, &p, &g)?;
    let a = pt.shifted(z);
    let b = p.shifted(z);
    let pz = a.partial_piv_lu().solve(&b);
    let s = pz.adjoint() * &pz;
    let n = s.nrows();
    let s = Mat::from_fn(n, n, |i, j| (s[(i, j)] + s[(j, i)].conj()) * 0.5);
    psd_eigenvalues(&s)
}

pub fn functional_check(spec: &SymbolSpec, inp: &FunctionalInputs, exec: Execution) -> Result<FunctionalCheck> {
    let FunctionalInputs { h, alpha, .. } = *inp;
    if !(alpha > 0.0 && alpha < 1.0) || !(h > 0.0 && h < 1.0) {
        return Err(param("alpha", "α and h must lie in (0, 1)"));
    }
    let z = Complex64::new(inp.z[0], inp.z[1]);
    let m = inp.modifier;
    let xi_support = certified_xi_bound(spec, m.support().sup_modulus())?;
    let grid = GridParams::for_xi_bound(h, inp.xi_window.max(xi_support))?;
    let lam = s_eigenvalues(spec, &m, z, grid)?;
    let chi = BumpFunction::default();
    let trace_val = functional_from_eigenvalues(&lam, &chi, alpha, 0.5).trace_val;
    let logdet_reg = functional_from_eigenvalues(&lam, &chi, h, 0.5).logdet_reg;

    // Outside the support of p̃ - p we have s = 1, where both integrands vanish.
    let qgrid = PhaseGrid::certified(spec, &m.support(), inp.n_x, inp.n_xi)?;
    let s_of = move |p: Complex64| (p - z).norm_sqr().max(f64::MIN_POSITIVE) / (m.apply(p) - z).norm_sqr();
    let pref = 1.0 / (2.0 * PI * h);
    let trace_weyl = pref * qgrid.integrate(spec, exec, move |p| chi.eval(s_of(p) / alpha));
    let logdet_weyl = pref * qgrid.integrate(spec, exec, move |p| s_of(p).ln());
    let trace_gap = (trace_val - trace_weyl).abs();
    Ok(FunctionalCheck {
        h,
        k: grid.k,
        alpha,
        trace_val,
        trace_weyl,
        trace_gap,
        trace_gap_normalized: trace_gap / (alpha.powf(inp.kappa) / h),
        logdet_reg,
        logdet_weyl,
        logdet_gap: (logdet_reg - logdet_weyl).abs(),
        s_min: lam.first().copied().unwrap_or(f64::NAN),
    })
}

/// Default `ξ` window: the certified support of `p̃ - p` with the truncation margin.
pub fn default_xi_window(spec: &SymbolSpec, m: &ModifiedSymbol) -> Result<f64> {
    Ok(certified_xi_bound(spec, m.support().sup_modulus())? * TRUNCATION_MARGIN)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trace_matches_phase_integral() {
        let spec = SymbolSpec::quadratic_model();
        let m = ModifiedSymbol {
            z_c: [0.5, 0.3],
            m_shift: 1.6,
            rho: 2.0,
        };
        let inp = FunctionalInputs {
            z: [0.5, 0.3],
            modifier: m,
            h: 0.1,
            alpha: 0.1,
            kappa: 0.5,
            xi_window: 3.5,
            n_x: 1000,
            n_xi: 1000,
        };
        let c = functional_check(&spec, &inp, Execution::Sequential).unwrap();
        assert!(c.trace_gap_normalized <= 1.0, "{c:?}");
        assert!(c.s_min >= 0.0);
        assert!(c.logdet_reg.is_finite() && c.logdet_weyl.is_finite());
    }
}
