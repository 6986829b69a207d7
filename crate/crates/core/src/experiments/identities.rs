//! Exact algebraic identities checked on random matrices: the bordered solve,
//! the determinant factorization, and the log-det derivative formula.

use faer::{c64, Mat};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::exec::{map_indexed, Execution};
use crate::rng::stream_rng;
use crate::spectral::grushin::{det_factorization_residual_mat, grushin_solve_mat};
use crate::spectral::{spectral_functional, BumpFunction};

/// Stream offsets keep the three suites' draws apart under one seed.
const DET_STREAM: u64 = 1 << 40;
const FUNCTIONAL_STREAM: u64 = 2 << 40;

fn gaussian(rng: &mut impl Rng, n: usize, m: usize) -> Mat<c64> {
    Mat::from_fn(n, m, |_, _| {
        let re: f64 = StandardNormal.sample(rng);
        let im: f64 = StandardNormal.sample(rng);
        c64::new(re, im)
    })
}

fn unitary(rng: &mut impl Rng, n: usize) -> Mat<c64> {
    gaussian(rng, n, n).qr().compute_thin_Q()
}

/// `U diag(t) V^*` with random unitaries and the given singular values.
pub fn matrix_with_singular_values(rng: &mut impl Rng, t: &[f64]) -> Mat<c64> {
    let n = t.len();
    let u = unitary(rng, n);
    let v = unitary(rng, n);
    let us = Mat::from_fn(n, n, |i, j| u[(i, j)] * t[j]);
    us * v.adjoint()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetCase {
    pub case: usize,
    pub n_small: usize,
    pub t1: f64,
    pub residual: f64,
    /// Largest defect of the bordered solve on a random right-hand side.
    pub grushin_residual: f64,
}

/// `n_cases` random `dim × dim` matrices, `N_small` cycling through 1, 2, 3. Every
/// other case has `t₁` log-uniform in `[1e-12, 1e-10]`; the remaining singular
/// values are log-uniform in `[0.1, 10]`.
pub fn det_identity_suite(n_cases: usize, dim: usize, seed: u64, exec: Execution) -> Result<Vec<DetCase>> {
    map_indexed(n_cases, exec, |case| {
        let mut rng = stream_rng(seed, DET_STREAM + case as u64);
        let mut t: Vec<f64> = (0..dim).map(|_| 10f64.powf(rng.random_range(-1.0..1.0))).collect();
        if case % 2 == 0 {
            t[0] = 10f64.powf(rng.random_range(-12.0..-10.0));
        }
        t.sort_by(f64::total_cmp);
        let a = matrix_with_singular_values(&mut rng, &t);
        let n_small = 1 + case % 3;
        let residual = det_factorization_residual_mat(&a, n_small)?;
        let g = grushin_solve_mat(&a, n_small)?;
        let v = gaussian(&mut rng, dim, 1);
        let vp = gaussian(&mut rng, n_small, 1);
        Ok(DetCase {
            case,
            n_small,
            t1: t[0],
            residual,
            grushin_residual: g.residual(&a, &v, &vp),
        })
    })
    .into_iter()
    .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FunctionalCase {
    pub seed: u64,
    pub deriv_residual: f64,
}

/// Random PSD `S = B^*B / dim` per seed, checked at `α` and `t`.
pub fn functional_identity_suite(
    n_seeds: usize,
    dim: usize,
    alpha: f64,
    t_probe: f64,
    seed: u64,
    exec: Execution,
) -> Result<Vec<FunctionalCase>> {
    map_indexed(n_seeds, exec, |i| {
        let mut rng = stream_rng(seed, FUNCTIONAL_STREAM + i as u64);
        let b = gaussian(&mut rng, dim, dim);
        let s = b.adjoint() * &b;
        let s = Mat::from_fn(dim, dim, |r, c| (s[(r, c)] + s[(c, r)].conj()) * (0.5 / dim as f64));
        let v = spectral_functional(&s, &BumpFunction::default(), alpha, t_probe)?;
        Ok(FunctionalCase {
            seed: i as u64,
            deriv_residual: v.deriv_residual,
        })
    })
    .into_iter()
    .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentityReport {
    pub det: Vec<DetCase>,
    pub functional: Vec<FunctionalCase>,
    pub max_det_residual: f64,
    pub max_grushin_residual: f64,
    pub max_deriv_residual: f64,
}

/// The full suite at its reference sizes.
pub fn identity_checks(seed: u64, exec: Execution) -> Result<IdentityReport> {
    let det = det_identity_suite(50, 20, seed, exec)?;
    let functional = functional_identity_suite(20, 50, 0.2, 0.3, seed, exec)?;
    let max = |v: &mut dyn Iterator<Item = f64>| v.fold(0.0, f64::max);
    Ok(IdentityReport {
        max_det_residual: max(&mut det.iter().map(|c| c.residual)),
        max_grushin_residual: max(&mut det.iter().map(|c| c.grushin_residual)),
        max_deriv_residual: max(&mut functional.iter().map(|c| c.deriv_residual)),
        det,
        functional,
    })
}
