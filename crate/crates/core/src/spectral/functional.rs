//! Functional calculus of a Hermitian positive semidefinite matrix `S`.

use faer::{c64, Mat, Side};
use serde::{Deserialize, Serialize};

use crate::error::{param, LabError, Result};
use crate::exec::pairwise_sum;

/// `χ_c(t) = exp(1 - 1/(1 - (t/c)^2))` on `[0, c)`, zero elsewhere; `χ_c(0) = 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BumpFunction {
    pub c: f64,
}

impl Default for BumpFunction {
    fn default() -> Self {
        Self { c: 1.0 }
    }
}

impl BumpFunction {
    pub fn eval(&self, t: f64) -> f64 {
        if !(0.0..self.c).contains(&t) {
            return 0.0;
        }
        let u = t / self.c;
        (1.0 - 1.0 / (1.0 - u * u)).exp()
    }

    pub fn derivative(&self, t: f64) -> f64 {
        if !(0.0..self.c).contains(&t) {
            return 0.0;
        }
        let u = t / self.c;
        let w = 1.0 - u * u;
        self.eval(t) * (-2.0 * u) / (self.c * w * w)
    }
}

/// `ψ(E) = (χ(E) - Eχ'(E)) / (E + χ(E))`, with `χ'` in closed form.
pub fn psi(chi: &BumpFunction, e: f64) -> f64 {
    let x = chi.eval(e);
    (x - e * chi.derivative(e)) / (e + x)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FunctionalValues {
    /// `tr χ(S/α)`
    pub trace_val: f64,
    /// `ln det(S + αχ(S/α))`
    pub logdet_reg: f64,
    /// `|F'(t) - Σ ψ(λ/t)/t|` with `F(t) = Σ ln(λ + tχ(λ/t))`, `F'` by central differences.
    pub deriv_residual: f64,
}

/// Relative step of the central difference in `deriv_residual`.
pub const DIFF_STEP: f64 = 1e-5;

/// Eigenvalues of a Hermitian PSD matrix. Roundoff negatives down to
/// `-1e-12 max(1, ‖S‖)` are clamped to zero; anything lower is rejected.
pub fn psd_eigenvalues(s: &Mat<c64>) -> Result<Vec<f64>> {
    let scale = s.norm_max().max(1.0);
    let mut defect: f64 = 0.0;
    for j in 0..s.ncols() {
        for i in 0..=j {
            defect = defect.max((s[(i, j)] - s[(j, i)].conj()).norm());
        }
    }
    if defect > 1e-12 * scale {
        return Err(LabError::NotHermitian { defect });
    }
    let mut lam = s
        .self_adjoint_eigenvalues(Side::Lower)
        .map_err(|e| LabError::Solver(format!("Hermitian eigensolver failed: {e:?}")))?;
    let floor = -1e-12 * scale * s.nrows() as f64;
    for l in lam.iter_mut() {
        if *l < floor {
            return Err(param("S", format!("matrix is not positive semidefinite (eigenvalue {l:.3e})")));
        }
        *l = l.max(0.0);
    }
    Ok(lam)
}

pub fn spectral_functional(s: &Mat<c64>, chi: &BumpFunction, alpha: f64, t_probe: f64) -> Result<FunctionalValues> {
    if !(alpha > 0.0 && alpha < 1.0) || !(t_probe > 0.0 && t_probe < 1.0) {
        return Err(param("alpha", "α and t_probe must lie in (0, 1)"));
    }
    if !(chi.c > 0.0) {
        return Err(param("chi", "support length must be positive"));
    }
    let lam = psd_eigenvalues(s)?;
    Ok(functional_from_eigenvalues(&lam, chi, alpha, t_probe))
}

pub fn functional_from_eigenvalues(lam: &[f64], chi: &BumpFunction, alpha: f64, t: f64) -> FunctionalValues {
    let sum = |f: &dyn Fn(f64) -> f64| pairwise_sum(&lam.iter().map(|&l| f(l)).collect::<Vec<_>>());
    let trace_val = sum(&|l| chi.eval(l / alpha));
    let logdet = |a: f64| sum(&|l| (l + a * chi.eval(l / a)).ln());
    let d = DIFF_STEP * t;
    let fd = (logdet(t + d) - logdet(t - d)) / (2.0 * d);
    let exact = sum(&|l| psi(chi, l / t) / t);
    FunctionalValues {
        trace_val,
        logdet_reg: logdet(alpha),
        deriv_residual: (fd - exact).abs(),
    }
}
