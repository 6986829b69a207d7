//! Dense matrices of operators in the truncated Fourier basis `e^{ikx}/√(2π)`, `|k| <= K`.
//!
//! Row and column `i` correspond to frequency `k = i - K`. In this basis `hD` is
//! diagonal and multiplication by `u = Σ c_k e^{ikx}` is the Toeplitz matrix
//! `Conv(u)_{jk} = c_{j-k}`, so truncation is the only discretization error.

use std::io::Write;

use faer::{c64, Mat};
use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{param, LabError, Result};
use crate::exec::{map_indexed, Execution};
use crate::symbol::SymbolSpec;
use crate::trig::TrigPoly;

/// `K` must satisfy `hK >= 1.5 ξ_b`.
pub const TRUNCATION_MARGIN: f64 = 1.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridParams {
    pub h: f64,
    #[serde(rename = "K")]
    pub k: usize,
}

impl GridParams {
    pub fn new(h: f64, k: usize) -> Result<Self> {
        if !(h > 0.0 && h <= 1.0) {
            return Err(param("h", format!("h = {h} is outside (0, 1]")));
        }
        if k < 1 {
            return Err(param("K", "need at least one mode on each side"));
        }
        Ok(Self { h, k })
    }

    /// Truncation rule `K = ceil(1.5 ξ_b / h)`.
    pub fn for_xi_bound(h: f64, xi_bound: f64) -> Result<Self> {
        Self::new(h, ((TRUNCATION_MARGIN * xi_bound / h).ceil() as usize).max(1))
    }

    pub fn dim(&self) -> usize {
        2 * self.k + 1
    }

    pub fn freq(&self, i: usize) -> i64 {
        i as i64 - self.k as i64
    }

    pub fn index(&self, k: i64) -> Option<usize> {
        let i = k + self.k as i64;
        (0..self.dim() as i64).contains(&i).then_some(i as usize)
    }

    /// Largest representable frequency `hK`.
    pub fn xi_max(&self) -> f64 {
        self.h * self.k as f64
    }
}

#[derive(Debug, Clone)]
pub struct OperatorMatrix {
    pub entries: Mat<c64>,
    pub grid: GridParams,
}

impl OperatorMatrix {
    pub fn zeros(grid: GridParams) -> Self {
        let n = grid.dim();
        Self {
            entries: Mat::zeros(n, n),
            grid,
        }
    }

    pub fn identity(grid: GridParams) -> Self {
        let mut m = Self::zeros(grid);
        for i in 0..grid.dim() {
            m.entries[(i, i)] = c64::new(1.0, 0.0);
        }
        m
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn get(&self, i: usize, j: usize) -> Complex64 {
        self.entries[(i, j)]
    }

    pub fn add(&self, other: &OperatorMatrix) -> OperatorMatrix {
        OperatorMatrix {
            entries: &self.entries + &other.entries,
            grid: self.grid,
        }
    }

    pub fn scaled(&self, s: Complex64) -> OperatorMatrix {
        let n = self.dim();
        OperatorMatrix {
            entries: Mat::from_fn(n, n, |i, j| self.entries[(i, j)] * s),
            grid: self.grid,
        }
    }

    /// `M - z I`
    pub fn shifted(&self, z: Complex64) -> Mat<c64> {
        let mut a = self.entries.clone();
        for i in 0..self.dim() {
            a[(i, i)] -= z;
        }
        a
    }

    pub fn max_abs_diff(&self, other: &OperatorMatrix) -> f64 {
        max_abs_diff(&self.entries, &other.entries)
    }

    /// `max |M^T - J M J|` with `J` the flip `k -> -k`.
    pub fn conjugation_defect(&self) -> f64 {
        let n = self.dim();
        let mut d: f64 = 0.0;
        for i in 0..n {
            for j in 0..n {
                d = d.max((self.entries[(j, i)] - self.entries[(n - 1 - i, n - 1 - j)]).norm());
            }
        }
        d
    }

    /// `(M + J M^T J) / 2`, the part satisfying `M^T = J M J`.
    pub fn symmetrize(&self) -> OperatorMatrix {
        let n = self.dim();
        let e = &self.entries;
        OperatorMatrix {
            entries: Mat::from_fn(n, n, |i, j| (e[(i, j)] + e[(n - 1 - j, n - 1 - i)]) * 0.5),
            grid: self.grid,
        }
    }

    /// Header `N h K`, then one line per row of `re im` pairs.
    pub fn write_text<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "{} {:e} {}", self.dim(), self.grid.h, self.grid.k)?;
        for i in 0..self.dim() {
            let row: Vec<String> = (0..self.dim())
                .map(|j| {
                    let z = self.entries[(i, j)];
                    format!("{:e} {:e}", z.re, z.im)
                })
                .collect();
            writeln!(w, "{}", row.join(" "))?;
        }
        Ok(())
    }
}

pub(crate) fn max_abs_diff(a: &Mat<c64>, b: &Mat<c64>) -> f64 {
    let mut d: f64 = 0.0;
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            d = d.max((a[(i, j)] - b[(i, j)]).norm());
        }
    }
    d
}

fn check_bandwidth(what: impl FnOnce() -> String, q: &TrigPoly, grid: GridParams) -> Result<()> {
    let limit = 2 * grid.k as i64;
    if q.bandwidth() > limit {
        return Err(LabError::Bandwidth {
            what: what(),
            bandwidth: q.bandwidth(),
            limit,
        });
    }
    Ok(())
}

/// Adds `scale * Conv(u) Diag((hk)^alpha)` into `m`.
fn add_term(m: &mut Mat<c64>, u: &TrigPoly, alpha: usize, scale: f64, grid: GridParams) {
    let n = grid.dim();
    for (freq, c) in u.iter() {
        for col in 0..n {
            let row = col as i64 + freq;
            if row < 0 || row >= n as i64 {
                continue;
            }
            let weight = (grid.h * grid.freq(col) as f64).powi(alpha as i32) * scale;
            m[(row as usize, col)] += c * weight;
        }
    }
}

/// `Σ_α Conv(a_α) Diag((hk)^α)`, with the `h_corrections` entering as `h Σ_α Conv(b_α) Diag((hk)^α)`.
pub fn assemble_differential(spec: &SymbolSpec, grid: GridParams) -> Result<OperatorMatrix> {
    for (alpha, a) in spec.coefficients().iter().enumerate() {
        check_bandwidth(|| format!("a_{alpha}"), a, grid)?;
    }
    for (alpha, b) in spec.h_corrections().iter().enumerate() {
        check_bandwidth(|| format!("h-correction of a_{alpha}"), b, grid)?;
    }
    let mut m = OperatorMatrix::zeros(grid);
    for (alpha, a) in spec.coefficients().iter().enumerate() {
        add_term(&mut m.entries, a, alpha, 1.0, grid);
    }
    for (alpha, b) in spec.h_corrections().iter().enumerate() {
        add_term(&mut m.entries, b, alpha, grid.h, grid);
    }
    Ok(m)
}

/// Multiplication by `q`, the Toeplitz matrix `Conv(q)`.
pub fn assemble_multiplier(q: &TrigPoly, grid: GridParams) -> Result<OperatorMatrix> {
    check_bandwidth(|| "multiplier".to_string(), q, grid)?;
    let mut m = OperatorMatrix::zeros(grid);
    add_term(&mut m.entries, q, 0, 1.0, grid);
    Ok(m)
}

/// Left (Kohn-Nirenberg) quantization of a general symbol:
/// `entry(j, k) = (1/n_x) Σ_x σ(x, hk) e^{-i(j-k)x}` over a uniform x grid.
///
/// Each column is one FFT of `σ(·, hk)`. With `n_x >= 4K + 4` every frequency
/// difference `j - k` is resolved without aliasing.
pub fn assemble_toroidal_pdo<F>(symbol: F, grid: GridParams, n_x: usize, exec: Execution) -> Result<OperatorMatrix>
where
    F: Fn(f64, f64) -> Complex64 + Sync + Send,
{
    let min = 4 * grid.k + 4;
    if n_x < min {
        return Err(param("n_x", format!("need n_x >= 4K + 4 = {min}, got {n_x}")));
    }
    let fft = FftPlanner::<f64>::new().plan_fft_forward(n_x);
    let n = grid.dim();
    let dx = 2.0 * std::f64::consts::PI / n_x as f64;
    let columns = map_indexed(n, exec, |col| {
        let xi = grid.h * grid.freq(col) as f64;
        let mut buf: Vec<Complex64> = (0..n_x).map(|l| symbol(l as f64 * dx, xi)).collect();
        fft.process(&mut buf);
        (0..n)
            .map(|row| {
                let d = row as i64 - col as i64;
                buf[d.rem_euclid(n_x as i64) as usize] / n_x as f64
            })
            .collect::<Vec<_>>()
    });
    let entries = Mat::from_fn(n, n, |i, j| columns[j][i]);
    Ok(OperatorMatrix { entries, grid })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormMode {
    /// Weight `(1 + (hk)^2)^s`.
    Semiclassical,
    /// Weight `(1 + k^2)^s`, i.e. `h = 1`.
    Classical,
}

/// `(Σ_k (1 + (hk)^2)^s |⟨q, ε_k⟩|^2)^{1/2}` with `⟨q, ε_k⟩ = √(2π) c_k`.
pub fn hs_norm(q: &TrigPoly, s: f64, h: f64, mode: NormMode) -> f64 {
    let h = match mode {
        NormMode::Semiclassical => h,
        NormMode::Classical => 1.0,
    };
    let two_pi = 2.0 * std::f64::consts::PI;
    q.iter()
        .map(|(k, c)| (1.0 + (h * k as f64).powi(2)).powf(s) * two_pi * c.norm_sqr())
        .sum::<f64>()
        .sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn pure_xi() -> SymbolSpec {
        SymbolSpec::new(1, vec![TrigPoly::zero(), TrigPoly::constant(1.0)]).unwrap()
    }

    fn shift() -> SymbolSpec {
        SymbolSpec::new(0, vec![TrigPoly::mode(1, 1.0)]).unwrap()
    }

    #[test]
    fn transport_is_diagonal() {
        let g = GridParams::new(0.3, 1).unwrap();
        let m = assemble_differential(&pure_xi(), g).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let want = if i == j { 0.3 * (i as f64 - 1.0) } else { 0.0 };
                assert!((m.get(i, j) - c(want, 0.0)).norm() < 1e-15);
            }
        }
    }

    #[test]
    fn exponential_multiplier_is_a_shift() {
        let g = GridParams::new(0.5, 1).unwrap();
        let m = assemble_differential(&shift(), g).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let want = if i == j + 1 { 1.0 } else { 0.0 };
                assert_eq!(m.get(i, j), c(want, 0.0));
            }
        }
    }

    #[test]
    fn quadratic_model_by_hand() {
        let g = GridParams::new(1.0, 1).unwrap();
        let m = assemble_differential(&SymbolSpec::quadratic_model(), g).unwrap();
        let want = [[1.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 1.0]];
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(m.get(i, j), c(want[i][j], 0.0), "({i},{j})");
            }
        }
    }

    #[test]
    fn bandwidth_overflow_names_the_coefficient() {
        let spec = SymbolSpec::new(1, vec![TrigPoly::mode(5, 1.0), TrigPoly::constant(1.0)]).unwrap();
        let err = assemble_differential(&spec, GridParams::new(0.1, 2).unwrap()).unwrap_err();
        match err {
            LabError::Bandwidth { what, bandwidth, limit } => {
                assert_eq!(what, "a_0");
                assert_eq!((bandwidth, limit), (5, 4));
            }
            e => panic!("{e:?}"),
        }
    }

    #[test]
    fn h_corrections_are_scaled_by_h() {
        let g = GridParams::new(0.1, 3).unwrap();
        let spec = pure_xi().with_h_corrections(vec![TrigPoly::constant(2.0)]).unwrap();
        let m = assemble_differential(&spec, g).unwrap();
        let plain = assemble_differential(&pure_xi(), g).unwrap();
        let diff = m.add(&plain.scaled(c(-1.0, 0.0)));
        assert!(diff.max_abs_diff(&OperatorMatrix::identity(g).scaled(c(0.2, 0.0))) < 1e-15);
    }

    #[test]
    fn multiplier_examples() {
        let g = GridParams::new(0.1, 2).unwrap();
        let one = assemble_multiplier(&TrigPoly::constant(1.0), g).unwrap();
        assert_eq!(one.max_abs_diff(&OperatorMatrix::identity(g)), 0.0);

        let cos = assemble_multiplier(&TrigPoly::cos(1), g).unwrap();
        for i in 0..5usize {
            for j in 0..5 {
                let want = if i.abs_diff(j) == 1 { 0.5 } else { 0.0 };
                assert_eq!(cos.get(i, j), c(want, 0.0));
            }
        }
    }

    #[test]
    fn real_multiplier_symmetries() {
        // For any real q: M_{jk} = conj(M_{(-j)(-k)}).
        let q = TrigPoly::cos(1).add(&TrigPoly::sin(2).scale(c(0.7, 0.0)));
        let g = GridParams::new(0.1, 4).unwrap();
        let m = assemble_multiplier(&q, g).unwrap();
        let n = m.dim();
        for i in 0..n {
            for j in 0..n {
                assert!((m.get(i, j) - m.get(n - 1 - i, n - 1 - j).conj()).norm() < 1e-15);
            }
        }
        // With real Fourier coefficients the transposed form holds as well.
        let m = assemble_multiplier(&TrigPoly::cos(1).add(&TrigPoly::cos(3)), g).unwrap();
        for i in 0..n {
            for j in 0..n {
                assert!((m.get(i, j) - m.get(n - 1 - j, n - 1 - i).conj()).norm() < 1e-15);
            }
        }
    }

    #[test]
    fn symmetric_model_satisfies_conjugation_identity() {
        let g = GridParams::new(0.1, 12).unwrap();
        let m = assemble_differential(&SymbolSpec::quadratic_model(), g).unwrap();
        assert_eq!(m.conjugation_defect(), 0.0);
        let lin = assemble_differential(&SymbolSpec::linear_model(), g).unwrap();
        assert!(lin.conjugation_defect() > 0.1);
        assert!(lin.symmetrize().conjugation_defect() < 1e-15);
    }

    #[test]
    fn toroidal_quantization_consistency() {
        let g = GridParams::new(0.2, 6).unwrap();
        let nx = 4 * 6 + 4;
        let tq = assemble_toroidal_pdo(|_, xi| c(xi, 0.0), g, nx, Execution::Sequential).unwrap();
        let d = assemble_differential(&pure_xi(), g).unwrap();
        assert!(tq.max_abs_diff(&d) < 1e-14);

        let q = TrigPoly::from(vec![(-3, 0.4, 0.1), (0, 1.0, 0.0), (2, -0.2, 0.5), (7, 0.3, 0.3)]);
        let tq = assemble_toroidal_pdo(|x, _| q.eval(x), g, nx, Execution::Sequential).unwrap();
        let m = assemble_multiplier(&q, g).unwrap();
        assert!(tq.max_abs_diff(&m) < 1e-12);

        let cst = assemble_toroidal_pdo(|_, _| c(2.0, -1.0), g, nx, Execution::Parallel).unwrap();
        assert!(cst.max_abs_diff(&OperatorMatrix::identity(g).scaled(c(2.0, -1.0))) < 1e-14);

        assert!(assemble_toroidal_pdo(|_, _| c(1.0, 0.0), g, nx - 1, Execution::Sequential).is_err());
    }

    #[test]
    fn toroidal_quantization_of_the_model_matches_assembly() {
        let g = GridParams::new(0.1, 10).unwrap();
        let spec = SymbolSpec::quadratic_model();
        let tq = assemble_toroidal_pdo(
            |x, xi| spec.eval(x, xi, crate::symbol::SymbolPart::Principal),
            g,
            64,
            Execution::Parallel,
        )
        .unwrap();
        assert!(tq.max_abs_diff(&assemble_differential(&spec, g).unwrap()) < 1e-13);
    }

    #[test]
    fn hs_norm_examples() {
        let (h, s, k0) = (0.1, 1.5, 7);
        let e = TrigPoly::basis(k0);
        let want = (1.0 + (h * k0 as f64).powi(2)).powf(s / 2.0);
        assert!((hs_norm(&e, s, h, NormMode::Semiclassical) - want).abs() < 1e-13);

        for (s, h) in [(0.0, 0.5), (2.0, 0.01)] {
            let v = hs_norm(&TrigPoly::constant(c(0.0, -3.0)), s, h, NormMode::Semiclassical);
            assert!((v - 3.0 * (2.0 * PI).sqrt()).abs() < 1e-13);
        }

        let q = TrigPoly::constant(1.0).add(&TrigPoly::mode(1, 1.0));
        assert!((hs_norm(&q, 1.0, 1.0, NormMode::Semiclassical) - (6.0 * PI).sqrt()).abs() < 1e-13);
        assert!((hs_norm(&q, 1.0, 0.01, NormMode::Classical) - (6.0 * PI).sqrt()).abs() < 1e-13);
    }

    #[test]
    fn text_export_header() {
        let g = GridParams::new(0.5, 1).unwrap();
        let mut out = Vec::new();
        OperatorMatrix::identity(g).write_text(&mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "3 5e-1 1");
        assert_eq!(lines.count(), 3);
    }

    fn arb_poly() -> impl Strategy<Value = TrigPoly> {
        prop::collection::vec((-3i64..=3, -1.0f64..1.0, -1.0f64..1.0), 0..5).prop_map(TrigPoly::from)
    }

    proptest! {
        #[test]
        fn assembly_is_linear(a0 in arb_poly(), a1 in arb_poly(), b0 in arb_poly(), lam in -2.0f64..2.0) {
            let g = GridParams::new(0.1, 4).unwrap();
            let one = TrigPoly::constant(1.0);
            let p = SymbolSpec::new(2, vec![a0.clone(), a1.clone(), one.clone()]).unwrap();
            let q = SymbolSpec::new(2, vec![b0.clone(), TrigPoly::zero(), one.clone()]).unwrap();
            let sum = SymbolSpec::new(
                2,
                vec![a0.add(&b0.scale(c(lam, 0.0))), a1, one.scale(c(1.0 + lam, 0.0))],
            ).unwrap();
            let lhs = assemble_differential(&sum, g).unwrap();
            let rhs = assemble_differential(&p, g).unwrap()
                .add(&assemble_differential(&q, g).unwrap().scaled(c(lam, 0.0)));
            prop_assert!(lhs.max_abs_diff(&rhs) < 1e-12);
        }

        #[test]
        fn even_real_symbols_satisfy_transpose_flip(
            a0 in prop::collection::vec((1i64..=3, -1.0f64..1.0), 0..3),
            a2 in prop::collection::vec((1i64..=3, -0.3f64..0.3), 0..3),
        ) {
            // Real and x-independent top coefficients keep M^T = J M J exact.
            let mut q0 = TrigPoly::zero();
            for (k, v) in a0 { q0 = q0.add(&TrigPoly::cos(k).scale(c(v, 0.0))); }
            let mut q2 = TrigPoly::constant(1.0);
            for (_, v) in a2 { q2 = q2.add(&TrigPoly::constant(v * v)); }
            let spec = SymbolSpec::new(2, vec![q0, TrigPoly::zero(), q2]).unwrap();
            let m = assemble_differential(&spec, GridParams::new(0.1, 6).unwrap()).unwrap();
            prop_assert!(m.conjugation_defect() < 1e-14);
        }
    }
}
