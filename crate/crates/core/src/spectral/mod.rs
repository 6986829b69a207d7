//! Dense spectral computations on [`OperatorMatrix`] values.

pub(crate) mod extended;
pub(crate) mod functional;
pub(crate) mod grushin;

pub use functional::{functional_from_eigenvalues, psd_eigenvalues, psi, spectral_functional, BumpFunction, FunctionalValues};
pub use grushin::{conjugate_functions, coupling_matrix, det_factorization_residual, grushin_solve, GrushinSolution};

use std::io::Write;

use faer::{c64, Mat};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::exec::{map_indexed, Execution};
use crate::operator::OperatorMatrix;
use crate::region::Region;

/// Largest matrix handed to the dense eigensolver by default.
pub const DEFAULT_DIM_CAP: usize = 4096;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumResult {
    pub eigenvalues: Vec<Complex64>,
    pub matrix_dim: usize,
    pub h: f64,
    /// `max_j ‖(M - λ_j) v_j‖` over unit eigenvectors, when requested.
    pub max_residual: Option<f64>,
}

fn check_cap(n: usize, cap: usize) -> Result<()> {
    if n > cap {
        return Err(LabError::Dimension(format!("matrix dimension {n} exceeds the cap {cap}")));
    }
    Ok(())
}

/// All eigenvalues of `M`, without residual diagnostics.
pub fn eigenvalues(m: &OperatorMatrix) -> Result<SpectrumResult> {
    check_cap(m.dim(), DEFAULT_DIM_CAP)?;
    let ev = m
        .entries
        .eigenvalues()
        .map_err(|e| LabError::Solver(format!("eigenvalue iteration did not converge: {e:?}")))?;
    Ok(SpectrumResult {
        eigenvalues: ev,
        matrix_dim: m.dim(),
        h: m.grid.h,
        max_residual: None,
    })
}

/// Eigenvalues plus the largest eigenpair residual.
pub fn eigenvalues_with_residuals(m: &OperatorMatrix) -> Result<SpectrumResult> {
    check_cap(m.dim(), DEFAULT_DIM_CAP)?;
    let eig = m
        .entries
        .eigen()
        .map_err(|e| LabError::Solver(format!("eigendecomposition did not converge: {e:?}")))?;
    let u = eig.U();
    let s = eig.S();
    let n = m.dim();
    let mu = &m.entries * u;
    let mut worst: f64 = 0.0;
    let mut values = Vec::with_capacity(n);
    for j in 0..n {
        let lam = s[j];
        values.push(lam);
        let mut norm_v = 0.0;
        let mut norm_r = 0.0;
        for i in 0..n {
            norm_v += u[(i, j)].norm_sqr();
            norm_r += (mu[(i, j)] - lam * u[(i, j)]).norm_sqr();
        }
        worst = worst.max((norm_r / norm_v).sqrt());
    }
    Ok(SpectrumResult {
        eigenvalues: values,
        matrix_dim: n,
        h: m.grid.h,
        max_residual: Some(worst),
    })
}

/// Eigenvalues inside the closed region; boundary points count as inside.
pub fn count_in_region(spectrum: &SpectrumResult, region: &Region) -> usize {
    count_points(&spectrum.eigenvalues, region)
}

pub fn count_points(points: &[Complex64], region: &Region) -> usize {
    points.iter().filter(|&&z| region.contains(z)).count()
}

/// Singular values of `M - z` in ascending order.
pub fn singular_values(m: &OperatorMatrix, z: Complex64) -> Result<Vec<f64>> {
    check_cap(m.dim(), DEFAULT_DIM_CAP)?;
    ascending_singular_values(&m.shifted(z))
}

pub fn ascending_singular_values(a: &Mat<c64>) -> Result<Vec<f64>> {
    let mut s = a
        .singular_values()
        .map_err(|e| LabError::Solver(format!("SVD did not converge: {e:?}")))?;
    s.reverse();
    Ok(s)
}

/// `ln |det(M - z)|` from the pivots of a partially pivoted LU factorization.
///
/// Tiny pivots trigger a singular value check; the matrix is rejected when its
/// smallest singular value is at most `1e-14` times the largest.
pub fn log_abs_det(m: &OperatorMatrix, z: Complex64) -> Result<f64> {
    log_abs_det_mat(&m.shifted(z))
}

pub(crate) fn log_abs_det_mat(a: &Mat<c64>) -> Result<f64> {
    let lu = a.partial_piv_lu();
    let u = lu.U();
    let n = a.nrows();
    let pivots: Vec<f64> = (0..n).map(|i| u[(i, i)].norm()).collect();
    let max = pivots.iter().copied().fold(0.0, f64::max);
    let min = pivots.iter().copied().fold(f64::INFINITY, f64::min);
    if !(min > 1e-10 * max) {
        let s = ascending_singular_values(a)?;
        if n == 0 || !(s[0] > 1e-14 * s[n - 1]) {
            return Err(LabError::Singular {
                smallest: s.first().copied().unwrap_or(0.0),
            });
        }
    }
    Ok(pivots.iter().map(|p| p.ln()).sum())
}

/// Smallest singular value of `M - z` at each grid point; failures are reported per point.
pub fn pseudospectrum(m: &OperatorMatrix, z_grid: &[Complex64], exec: Execution) -> Vec<Result<f64>> {
    map_indexed(z_grid.len(), exec, |i| singular_values(m, z_grid[i]).map(|s| s[0]))
}

/// CSV with a schema line, then `re,im,value` rows.
pub fn write_points_csv<W: Write>(mut w: W, schema: &str, rows: &[(Complex64, f64)]) -> std::io::Result<()> {
    writeln!(w, "{schema}")?;
    writeln!(w, "re,im,value")?;
    for (z, v) in rows {
        writeln!(w, "{:e},{:e},{:e}", z.re, z.im, v)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operator::{assemble_differential, GridParams};
    use crate::symbol::SymbolSpec;
    use crate::trig::TrigPoly;
    use faer::Side;
    use rand::Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn sorted_re(mut v: Vec<Complex64>) -> Vec<Complex64> {
        v.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
        v
    }

    fn from_mat(m: Mat<c64>) -> OperatorMatrix {
        let k = (m.nrows() - 1) / 2;
        OperatorMatrix {
            entries: m,
            grid: GridParams::new(1.0, k.max(1)).unwrap(),
        }
    }

    fn random_mat(n: usize, seed: u64) -> Mat<c64> {
        let mut rng = crate::rng::stream_rng(seed, 0);
        Mat::from_fn(n, n, |_, _| c(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5))
    }

    #[test]
    fn eigenvalue_examples() {
        let g = GridParams::new(0.25, 1).unwrap();
        let xi = SymbolSpec::new(1, vec![TrigPoly::zero(), TrigPoly::constant(1.0)]).unwrap();
        let r = eigenvalues_with_residuals(&assemble_differential(&xi, g).unwrap()).unwrap();
        let ev = sorted_re(r.eigenvalues);
        for (got, want) in ev.iter().zip([-0.25, 0.0, 0.25]) {
            assert!((got - c(want, 0.0)).norm() < 1e-14);
        }
        assert!(r.max_residual.unwrap() < 1e-14);

        let shift = SymbolSpec::new(0, vec![TrigPoly::mode(1, 1.0)]).unwrap();
        let r = eigenvalues(&assemble_differential(&shift, g).unwrap()).unwrap();
        assert!(r.eigenvalues.iter().all(|z| z.norm() < 1e-14));
        assert_eq!(r.matrix_dim, 3);
    }

    #[test]
    fn hermitian_matches_symmetric_solver() {
        let a = random_mat(30, 4);
        let hmat = &a + a.adjoint();
        let general: Vec<f64> = {
            let mut v: Vec<f64> = hmat.eigenvalues().unwrap().iter().map(|z| z.re).collect();
            v.sort_by(f64::total_cmp);
            v
        };
        let symmetric = hmat.self_adjoint_eigenvalues(Side::Lower).unwrap();
        for (g, s) in general.iter().zip(&symmetric) {
            assert!((g - s).abs() < 1e-10);
        }
    }

    #[test]
    fn counting_examples() {
        let unit = Region::rectangle(0.0, 1.0, 0.0, 1.0);
        assert_eq!(count_points(&[], &unit), 0);
        assert_eq!(count_points(&[c(0.5, 0.5)], &unit), 1);
        assert_eq!(count_points(&[c(1.0, 0.0), c(1.0 + 1e-9, 0.5)], &unit), 1);
    }

    #[test]
    fn singular_value_examples() {
        // A diagonal unitary.
        let u = from_mat(Mat::from_fn(3, 3, |i, j| {
            if i == j {
                Complex64::from_polar(1.0, i as f64)
            } else {
                c(0.0, 0.0)
            }
        }));
        assert!(singular_values(&u, c(0.0, 0.0)).unwrap().iter().all(|s| (s - 1.0).abs() < 1e-14));

        let d = [c(1.0, 0.0), c(-2.0, 1.0), c(0.3, 0.3)];
        let m = from_mat(Mat::from_fn(3, 3, |i, j| if i == j { d[i] } else { c(0.0, 0.0) }));
        let z = c(0.1, 0.2);
        let mut want: Vec<f64> = d.iter().map(|v| (v - z).norm()).collect();
        want.sort_by(f64::total_cmp);
        for (g, w) in singular_values(&m, z).unwrap().iter().zip(&want) {
            assert!((g - w).abs() < 1e-14);
        }

        let r = from_mat(random_mat(25, 8));
        let t = singular_values(&r, z).unwrap();
        let a = r.shifted(z);
        let gram = a.adjoint() * &a;
        let lam = gram.self_adjoint_eigenvalues(Side::Lower).unwrap();
        for (ti, li) in t.iter().zip(&lam) {
            assert!((ti * ti - li).abs() <= 1e-10 * li.abs().max(1e-300));
        }
    }

    #[test]
    fn log_det_examples() {
        let g = GridParams::new(0.5, 1).unwrap();
        assert!(log_abs_det(&OperatorMatrix::identity(g), c(0.0, 0.0)).unwrap().abs() < 1e-15);

        let d = Mat::from_fn(2, 2, |i, j| if i == j { c((i + 2) as f64, 0.0) } else { c(0.0, 0.0) });
        assert!((log_abs_det_mat(&d).unwrap() - 6f64.ln()).abs() < 1e-15);

        let r = from_mat(random_mat(40, 2));
        let z = c(0.2, -0.1);
        let ld = log_abs_det(&r, z).unwrap();
        let via_svd: f64 = singular_values(&r, z).unwrap().iter().map(|s| s.ln()).sum();
        assert!((ld - via_svd).abs() <= 1e-8 * ld.abs());

        let sing = from_mat(Mat::from_fn(3, 3, |i, _| c(i as f64, 0.0)));
        assert!(matches!(log_abs_det(&sing, c(0.0, 0.0)), Err(LabError::Singular { .. })));
    }

    #[test]
    fn pseudospectrum_examples() {
        let d = [c(1.0, 0.0), c(-1.0, 0.5), c(0.0, -1.0)];
        let m = from_mat(Mat::from_fn(3, 3, |i, j| if i == j { d[i] } else { c(0.0, 0.0) }));
        let pts = [c(0.0, 0.0), c(0.5, 0.5), c(2.0, 0.0)];
        let vals = pseudospectrum(&m, &pts, Execution::Parallel);
        for (z, v) in pts.iter().zip(vals) {
            let dist = d.iter().map(|e| (e - z).norm()).fold(f64::INFINITY, f64::min);
            assert!((v.unwrap() - dist).abs() < 1e-14);
        }

        // Nilpotent 3x3 shift at z = 0.5 against a direct SVD.
        let mut s = Mat::<c64>::zeros(3, 3);
        s[(1, 0)] = c(1.0, 0.0);
        s[(2, 1)] = c(1.0, 0.0);
        let sm = from_mat(s);
        let direct = ascending_singular_values(&sm.shifted(c(0.5, 0.0))).unwrap()[0];
        let got = pseudospectrum(&sm, &[c(0.5, 0.0)], Execution::Sequential)[0]
            .as_ref()
            .copied()
            .unwrap();
        assert!((got - direct).abs() < 1e-15);
        assert!(got < 0.5);
    }

    #[test]
    fn pseudospectrum_is_lipschitz() {
        let m = from_mat(random_mat(20, 5));
        let pts: Vec<Complex64> = (0..10).map(|i| c(0.1 * i as f64, 0.05 * i as f64)).collect();
        let v: Vec<f64> = pseudospectrum(&m, &pts, Execution::Parallel)
            .into_iter()
            .map(|r| r.unwrap())
            .collect();
        for i in 1..pts.len() {
            assert!((v[i] - v[i - 1]).abs() <= (pts[i] - pts[i - 1]).norm() + 1e-12);
        }
    }

    #[test]
    fn count_is_monotone_under_inclusion() {
        let m = from_mat(random_mat(40, 6));
        let spec = eigenvalues(&m).unwrap();
        let small = Region::rectangle(-0.5, 0.5, -0.5, 0.5);
        let big = Region::rectangle(-1.0, 1.0, -1.0, 1.0);
        assert!(count_in_region(&spec, &small) <= count_in_region(&spec, &big));
    }

    #[test]
    fn csv_layout() {
        let mut out = Vec::new();
        write_points_csv(&mut out, "# schema: pseudospec/v1", &[(c(1.0, 2.0), 0.5)]).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert_eq!(text, "# schema: pseudospec/v1\nre,im,value\n1e0,2e0,5e-1\n");
    }
}
