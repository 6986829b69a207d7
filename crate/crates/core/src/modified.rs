//! The modified symbol `p̃ = p + i M φ(|p - z_c| / ρ)`.
//!
//! `p̃` agrees with `p` wherever `|p - z_c| >= 2ρ` and is pushed off the test
//! points near `z_c`, so `P̃ - z` is invertible and `P_z = (P̃ - z)^{-1}(P - z)`
//! makes sense. The pair `(M, ρ)` is chosen by grid search and accepted only if
//! `|p̃ - z|` stays above a guard on a certified phase grid.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::exec::{map_indexed, Execution};
use crate::phase::{certified_xi_bound, PhaseGrid};
use crate::region::Region;
use crate::symbol::{horner, SymbolSpec};

/// Smooth step: 1 on `[0, 1]`, 0 on `[2, ∞)`, `C^∞` in between.
pub fn smooth_step(r: f64) -> f64 {
    if r <= 1.0 {
        return 1.0;
    }
    if r >= 2.0 {
        return 0.0;
    }
    let f = |t: f64| (-1.0 / t).exp();
    let a = f(2.0 - r);
    a / (a + f(r - 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModifiedSymbol {
    pub z_c: [f64; 2],
    pub m_shift: f64,
    pub rho: f64,
}

impl ModifiedSymbol {
    pub fn center(&self) -> Complex64 {
        Complex64::new(self.z_c[0], self.z_c[1])
    }

    /// `p̃` as a function of the value `p(x, ξ)`.
    pub fn apply(&self, p: Complex64) -> Complex64 {
        let r = (p - self.center()).norm() / self.rho;
        p + Complex64::new(0.0, self.m_shift * smooth_step(r))
    }

    pub fn eval(&self, spec: &SymbolSpec, x: f64, xi: f64) -> Complex64 {
        self.apply(horner(&spec.coefficients_at(x), xi))
    }

    /// Region of the spectral plane where `p̃ ≠ p`.
    pub fn support(&self) -> Region {
        Region::disk(self.center(), 2.0 * self.rho)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GuardSearch {
    pub rhos: Vec<f64>,
    pub shifts: Vec<f64>,
    pub guard: f64,
    pub n_x: usize,
    pub n_xi: usize,
}

impl Default for GuardSearch {
    fn default() -> Self {
        Self {
            rhos: vec![0.5, 1.0, 1.5, 2.0, 3.0],
            shifts: vec![0.4, 0.8, 1.2, 1.6, 2.0, 3.0],
            guard: 0.1,
            n_x: 400,
            n_xi: 400,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GuardedSymbol {
    pub modifier: ModifiedSymbol,
    /// `min |p̃ - z|` over the grid and the test points.
    pub margin: f64,
    /// Certified `|ξ|` bound of the set where `p̃ ≠ p`.
    pub xi_support: f64,
}

/// `min |p̃ - z|` over a grid certified to contain every point where this could drop below `guard`.
pub fn guard_margin(spec: &SymbolSpec, modifier: &ModifiedSymbol, tests: &[Complex64], guard: f64, n_x: usize, n_xi: usize) -> Result<f64> {
    // Beyond this modulus p̃ = p and |p - z| > guard for every test point.
    let reach = tests
        .iter()
        .map(|z| z.norm() + guard)
        .fold(modifier.center().norm() + 2.0 * modifier.rho, f64::max);
    let grid = PhaseGrid::certified(spec, &Region::disk(Complex64::new(0.0, 0.0), reach), n_x, n_xi)?;
    let rows = map_indexed(grid.n_x, Execution::default(), |i| {
        let a = spec.coefficients_at(grid.x_at(i));
        let mut m = f64::INFINITY;
        for j in 0..grid.n_xi {
            let pt = modifier.apply(horner(&a, grid.xi_at(j)));
            for z in tests {
                m = m.min((pt - z).norm());
            }
        }
        m
    });
    Ok(rows.into_iter().fold(f64::INFINITY, f64::min))
}

/// Tries `ρ` from small to large, then `|M|` from small to large with both signs,
/// and returns the first pair whose margin clears the guard.
pub fn search_modified_symbol(spec: &SymbolSpec, z_c: Complex64, tests: &[Complex64], opts: &GuardSearch) -> Result<GuardedSymbol> {
    let mut best = f64::NEG_INFINITY;
    for &rho in &opts.rhos {
        for &m in &opts.shifts {
            for sign in [1.0, -1.0] {
                let modifier = ModifiedSymbol {
                    z_c: [z_c.re, z_c.im],
                    m_shift: sign * m,
                    rho,
                };
                let margin = guard_margin(spec, &modifier, tests, opts.guard, opts.n_x, opts.n_xi)?;
                if margin >= opts.guard {
                    let xi_support = certified_xi_bound(spec, modifier.support().sup_modulus())?;
                    return Ok(GuardedSymbol {
                        modifier,
                        margin,
                        xi_support,
                    });
                }
                best = best.max(margin);
            }
        }
    }
    Err(LabError::Guard {
        margin: best,
        required: opts.guard,
    })
}
