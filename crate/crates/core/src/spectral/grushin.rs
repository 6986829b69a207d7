//! Bordered (Grushin) problems built from the lowest singular vectors of `M - z`.

use faer::linalg::solvers::DenseSolveCore;
use faer::{c64, Mat};
use serde::Serialize;

use super::{ascending_singular_values, extended};
use crate::error::{LabError, Result};
use crate::operator::{assemble_multiplier, max_abs_diff, GridParams};
use crate::trig::TrigPoly;

/// Minimum separation between `t_{N_small}` and `t_{N_small + 1}`.
pub const PROJECTION_GAP: f64 = 1e-12;

/// Solution operator of `𝒫 = [[M - z, R₋], [R₊, 0]]`, split into blocks
/// `𝒫^{-1} = [[E, E₊], [E₋, E₋₊]]`.
#[derive(Debug, Clone, Serialize)]
pub struct GrushinSolution {
    pub n_small: usize,
    /// All singular values of `M - z`, ascending.
    pub t: Vec<f64>,
    #[serde(skip)]
    pub r_plus: Mat<c64>,
    #[serde(skip)]
    pub r_minus: Mat<c64>,
    #[serde(skip)]
    pub e: Mat<c64>,
    #[serde(skip)]
    pub e_plus: Mat<c64>,
    #[serde(skip)]
    pub e_minus: Mat<c64>,
    #[serde(skip)]
    pub e_mp: Mat<c64>,
}

struct Border {
    t: Vec<f64>,
    r_plus: Mat<c64>,
    r_minus: Mat<c64>,
}

/// `R₊` has rows `e_j^*` (right singular vectors), `R₋` has columns `f_j` (left
/// singular vectors), for the `n_small` smallest singular values `t_j`, so that
/// `(M - z) e_j = t_j f_j`.
fn border(a: &Mat<c64>, n_small: usize) -> Result<Border> {
    let n = a.nrows();
    if n_small == 0 || n_small > n {
        return Err(LabError::Dimension(format!("N_small = {n_small} must lie in 1..={n}")));
    }
    let svd = a.svd().map_err(|e| LabError::Solver(format!("SVD did not converge: {e:?}")))?;
    let s = svd.S().column_vector();
    // faer orders singular values non-increasingly; index n-1-j is the j-th smallest.
    let t: Vec<f64> = (0..n).map(|j| s[n - 1 - j].re).collect();
    if n_small < n && t[n_small] - t[n_small - 1] <= PROJECTION_GAP {
        return Err(LabError::DegenerateProjection {
            index: n_small - 1,
            next: n_small,
            gap: t[n_small] - t[n_small - 1],
        });
    }
    let (u, v) = (svd.U(), svd.V());
    let r_plus = Mat::from_fn(n_small, n, |j, i| v[(i, n - 1 - j)].conj());
    let r_minus = Mat::from_fn(n, n_small, |i, j| u[(i, n - 1 - j)]);
    Ok(Border { t, r_plus, r_minus })
}

fn bordered(a: &Mat<c64>, b: &Border) -> Mat<c64> {
    let n = a.nrows();
    let ns = b.r_plus.nrows();
    Mat::from_fn(n + ns, n + ns, |i, j| match (i < n, j < n) {
        (true, true) => a[(i, j)],
        (true, false) => b.r_minus[(i, j - n)],
        (false, true) => b.r_plus[(i - n, j)],
        (false, false) => c64::new(0.0, 0.0),
    })
}

pub fn grushin_solve(m: &crate::operator::OperatorMatrix, z: c64, n_small: usize) -> Result<GrushinSolution> {
    grushin_solve_mat(&m.shifted(z), n_small)
}

pub(crate) fn grushin_solve_mat(a: &Mat<c64>, n_small: usize) -> Result<GrushinSolution> {
    let n = a.nrows();
    let b = border(a, n_small)?;
    let p = bordered(a, &b);
    let inv = p.partial_piv_lu().inverse();
    let check = &p * &inv;
    let defect = max_abs_diff(&check, &Mat::identity(n + n_small, n + n_small));
    let scale = p.norm_max() * inv.norm_max();
    if !(defect <= 1e-9 * scale.max(1.0)) {
        return Err(LabError::Solver(format!("bordered solve residual {defect:.3e}")));
    }
    let block = |r0: usize, c0: usize, nr: usize, nc: usize| Mat::from_fn(nr, nc, |i, j| inv[(r0 + i, c0 + j)]);
    Ok(GrushinSolution {
        n_small,
        e: block(0, 0, n, n),
        e_plus: block(0, n, n, n_small),
        e_minus: block(n, 0, n_small, n),
        e_mp: block(n, n, n_small, n_small),
        t: b.t,
        r_plus: b.r_plus,
        r_minus: b.r_minus,
    })
}

impl GrushinSolution {
    /// `(u, u₋)` solving `(M - z)u + R₋u₋ = v`, `R₊u = v₊`.
    pub fn solve(&self, v: &Mat<c64>, v_plus: &Mat<c64>) -> (Mat<c64>, Mat<c64>) {
        let u = &self.e * v + &self.e_plus * v_plus;
        let u_minus = &self.e_minus * v + &self.e_mp * v_plus;
        (u, u_minus)
    }

    /// Largest entry of the reassembled right-hand side minus the input.
    pub fn residual(&self, a: &Mat<c64>, v: &Mat<c64>, v_plus: &Mat<c64>) -> f64 {
        let (u, u_minus) = self.solve(v, v_plus);
        let lhs = a * &u + &self.r_minus * &u_minus;
        let lhs_plus = &self.r_plus * &u;
        max_abs_diff(&lhs, v).max(max_abs_diff(&lhs_plus, v_plus))
    }
}

/// Relative defect of `ln|det(M - z)| = ln|det 𝒫| + ln|det E₋₊|`.
///
/// All three determinants are factorized in double-double arithmetic so the
/// comparison is not limited by the conditioning of `M - z` itself. When
/// `ln|det(M - z)|` is exactly zero the absolute defect is returned.
pub fn det_factorization_residual(m: &crate::operator::OperatorMatrix, z: c64, n_small: usize) -> Result<f64> {
    det_factorization_residual_mat(&m.shifted(z), n_small)
}

pub(crate) fn det_factorization_residual_mat(a: &Mat<c64>, n_small: usize) -> Result<f64> {
    let n = a.nrows();
    let t = ascending_singular_values(a)?;
    if n == 0 || !(t[0] > 1e-14 * t[n - 1]) {
        return Err(LabError::Singular {
            smallest: t.first().copied().unwrap_or(0.0),
        });
    }
    if n_small == 0 {
        return Ok(0.0);
    }
    let b = border(a, n_small)?;
    let lhs = extended::log_abs_det(a);
    let (lp, le) = extended::bordered_log_dets(&bordered(a, &b), n_small);
    let defect = (lhs - (lp + le)).abs();
    Ok(if lhs == 0.0 { defect } else { defect / lhs.abs() })
}

/// `M_{jk} = ⟨Conv(q) e_k, f_j⟩` for basis columns `e_k` and `f_j` given by their
/// Fourier coefficients.
pub fn coupling_matrix(q: &TrigPoly, grid: GridParams, e: &Mat<c64>, f: &Mat<c64>) -> Result<Mat<c64>> {
    let n = grid.dim();
    if e.nrows() != n || f.nrows() != n || e.ncols() != f.ncols() {
        return Err(LabError::Dimension(format!(
            "coupling needs {n}-row bases of equal width, got {}x{} and {}x{}",
            e.nrows(),
            e.ncols(),
            f.nrows(),
            f.ncols()
        )));
    }
    let qm = assemble_multiplier(q, grid)?;
    Ok(f.adjoint() * (&qm.entries * e))
}

/// Coefficients of the pointwise conjugate `conj(u)` of each column `u`:
/// `conj(Σ c_k ε_k) = Σ conj(c_{-k}) ε_k`.
pub fn conjugate_functions(e: &Mat<c64>) -> Mat<c64> {
    let n = e.nrows();
    Mat::from_fn(n, e.ncols(), |i, j| e[(n - 1 - i, j)].conj())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operator::OperatorMatrix;
    use rand::Rng;
    use std::f64::consts::PI;

    fn c(re: f64, im: f64) -> c64 {
        c64::new(re, im)
    }

    fn random_mat(rows: usize, cols: usize, seed: u64) -> Mat<c64> {
        let mut rng = crate::rng::stream_rng(seed, 1);
        Mat::from_fn(rows, cols, |_, _| c(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5))
    }

    #[test]
    fn diagonal_problem_gives_minus_diag_t() {
        let d = [c(0.0, 0.3), c(-1.0, 0.0), c(2.0, 0.0), c(0.0, -4.0)];
        let a = Mat::from_fn(4, 4, |i, j| if i == j { d[i] } else { c(0.0, 0.0) });
        let g = grushin_solve_mat(&a, 2).unwrap();
        assert_eq!(g.t.len(), 4);
        assert!((g.t[0] - 0.3).abs() < 1e-15 && (g.t[1] - 1.0).abs() < 1e-15);
        // Up to phases: |E₋₊| is diag(t) and off-diagonal entries vanish.
        for i in 0..2 {
            for j in 0..2 {
                let want = if i == j { g.t[i] } else { 0.0 };
                assert!((g.e_mp[(i, j)].norm() - want).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn unperturbed_block_has_singular_values_t() {
        let a = random_mat(15, 15, 3);
        let g = grushin_solve_mat(&a, 3).unwrap();
        let mut s = g.e_mp.singular_values().unwrap();
        s.reverse();
        for j in 0..3 {
            assert!((s[j] - g.t[j]).abs() < 1e-9);
        }
    }

    #[test]
    fn well_posedness_residual() {
        let a = random_mat(20, 20, 9);
        let g = grushin_solve_mat(&a, 3).unwrap();
        let v = random_mat(20, 1, 10);
        let vp = random_mat(3, 1, 11);
        assert!(g.residual(&a, &v, &vp) < 1e-9);
    }

    #[test]
    fn hand_solved_two_by_two() {
        let a = Mat::from_fn(2, 2, |i, j| if i == 1 && j == 1 { c(2.0, 0.0) } else { c(0.0, 0.0) });
        let g = grushin_solve_mat(&a, 1).unwrap();
        assert_eq!(g.t[0], 0.0);
        assert!(g.e_mp[(0, 0)].norm() < 1e-15);
    }

    #[test]
    fn degenerate_gap_is_rejected() {
        let a = Mat::<c64>::identity(4, 4);
        assert!(matches!(grushin_solve_mat(&a, 2), Err(LabError::DegenerateProjection { .. })));
    }

    #[test]
    fn determinant_identity() {
        let a = random_mat(20, 20, 21);
        for ns in 1..=3 {
            assert!(det_factorization_residual_mat(&a, ns).unwrap() <= 1e-8);
        }
        assert_eq!(det_factorization_residual_mat(&a, 0).unwrap(), 0.0);
    }

    #[test]
    fn determinant_identity_near_singular() {
        // Replace the smallest singular value by 1e-10.
        let a = random_mat(20, 20, 22);
        let svd = a.svd().unwrap();
        let mut s: Vec<f64> = (0..20).map(|i| svd.S().column_vector()[i].re).collect();
        s[19] = 1e-10;
        let d = Mat::from_fn(20, 20, |i, j| if i == j { c(s[i], 0.0) } else { c(0.0, 0.0) });
        let b = svd.U() * &d * svd.V().adjoint();
        let r = det_factorization_residual_mat(&b, 1).unwrap();
        assert!(r <= 1e-8, "{r}");
    }

    #[test]
    fn coupling_examples() {
        let grid = GridParams::new(0.1, 6).unwrap();
        let n = grid.dim();
        let e = random_mat(n, 4, 30).qr().compute_thin_Q();
        let m = coupling_matrix(&TrigPoly::constant(1.0), grid, &e, &e).unwrap();
        assert!(max_abs_diff(&m, &Mat::identity(4, 4)) < 1e-14);

        let q = TrigPoly::from(vec![(-2, 0.3, 0.1), (1, 1.0, -0.4)]);
        let f = conjugate_functions(&e);
        let m = coupling_matrix(&q, grid, &e, &f).unwrap();
        assert!(max_abs_diff(&m, &m.transpose().to_owned()) < 1e-12);

        assert!(coupling_matrix(&q, grid, &e, &random_mat(n, 3, 31)).is_err());
    }

    #[test]
    fn single_mode_coupling_matches_quadrature() {
        let grid = GridParams::new(0.1, 4).unwrap();
        let n = grid.dim();
        let e = random_mat(n, 3, 40);
        let f = random_mat(n, 3, 41);
        let k0 = 2;
        let q = TrigPoly::basis(k0);
        let m = coupling_matrix(&q, grid, &e, &f).unwrap();

        let func = |v: &Mat<c64>, col: usize, x: f64| -> c64 {
            (0..n)
                .map(|i| v[(i, col)] * c64::from_polar(1.0, grid.freq(i) as f64 * x))
                .sum::<c64>()
                / (2.0 * PI).sqrt()
        };
        let nx = 64;
        let dx = 2.0 * PI / nx as f64;
        for j in 0..3 {
            for k in 0..3 {
                let mut acc = c(0.0, 0.0);
                for l in 0..nx {
                    let x = l as f64 * dx;
                    acc += q.eval(x) * func(&e, k, x) * func(&f, j, x).conj() * dx;
                }
                assert!((acc - m[(j, k)]).norm() < 1e-12, "({j},{k})");
            }
        }
    }

    #[test]
    fn operator_entry_point() {
        let grid = GridParams::new(0.5, 2).unwrap();
        let m = OperatorMatrix {
            entries: random_mat(5, 5, 50),
            grid,
        };
        let g = grushin_solve(&m, c(0.1, 0.0), 2).unwrap();
        assert_eq!(g.e_mp.nrows(), 2);
        assert!(det_factorization_residual(&m, c(0.1, 0.0), 2).unwrap() < 1e-12);
    }
}
