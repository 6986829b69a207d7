//! Finite Fourier series on the circle, `u(x) = sum_k c_k e^{ikx}`.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

/// Trigonometric polynomial stored as a sparse frequency map.
///
/// Exact zeros are never stored, so the zero polynomial has an empty map.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(from = "Vec<(i64, f64, f64)>", into = "Vec<(i64, f64, f64)>")]
pub struct TrigPoly {
    coeffs: BTreeMap<i64, Complex64>,
}

impl TrigPoly {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn constant(c: impl Into<Complex64>) -> Self {
        Self::from_pairs([(0, c.into())])
    }

    /// `c * e^{ikx}`
    pub fn mode(k: i64, c: impl Into<Complex64>) -> Self {
        Self::from_pairs([(k, c.into())])
    }

    /// `cos(kx)`
    pub fn cos(k: i64) -> Self {
        Self::from_pairs([(k, Complex64::new(0.5, 0.0)), (-k, Complex64::new(0.5, 0.0))])
    }

    /// `sin(kx)`
    pub fn sin(k: i64) -> Self {
        Self::from_pairs([(k, Complex64::new(0.0, -0.5)), (-k, Complex64::new(0.0, 0.5))])
    }

    /// Normalized exponential `e^{ikx} / sqrt(2 pi)`, the L2-orthonormal basis element.
    pub fn basis(k: i64) -> Self {
        Self::mode(k, 1.0 / (2.0 * PI).sqrt())
    }

    /// Builds from `(k, c_k)` pairs; repeated frequencies accumulate.
    pub fn from_pairs(pairs: impl IntoIterator<Item = (i64, Complex64)>) -> Self {
        let mut coeffs = BTreeMap::new();
        for (k, c) in pairs {
            *coeffs.entry(k).or_insert(Complex64::new(0.0, 0.0)) += c;
        }
        coeffs.retain(|_, c: &mut Complex64| *c != Complex64::new(0.0, 0.0));
        Self { coeffs }
    }

    pub fn coeff(&self, k: i64) -> Complex64 {
        self.coeffs.get(&k).copied().unwrap_or_default()
    }

    pub fn iter(&self) -> impl Iterator<Item = (i64, Complex64)> + '_ {
        self.coeffs.iter().map(|(&k, &c)| (k, c))
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.is_empty()
    }

    /// Largest `|k|` carrying a nonzero coefficient.
    pub fn bandwidth(&self) -> i64 {
        self.coeffs.keys().map(|k| k.abs()).max().unwrap_or(0)
    }

    pub fn eval(&self, x: f64) -> Complex64 {
        self.iter().map(|(k, c)| c * Complex64::from_polar(1.0, k as f64 * x)).sum()
    }

    /// Mean value over the circle, `c_0`.
    pub fn mean(&self) -> Complex64 {
        self.coeff(0)
    }

    /// `sum |c_k|`, an upper bound for `sup |u|`.
    pub fn l1_coeff_norm(&self) -> f64 {
        self.coeffs.values().map(|c| c.norm()).sum()
    }

    /// L2(0, 2pi) norm by Parseval.
    pub fn l2_norm(&self) -> f64 {
        (2.0 * PI * self.coeffs.values().map(|c| c.norm_sqr()).sum::<f64>()).sqrt()
    }

    /// True when `c_{-k} = conj(c_k)` to within `tol`, i.e. the function is real valued.
    pub fn is_real(&self, tol: f64) -> bool {
        self.iter().all(|(k, c)| (self.coeff(-k) - c.conj()).norm() <= tol)
    }

    pub fn scale(&self, s: Complex64) -> Self {
        Self::from_pairs(self.iter().map(|(k, c)| (k, c * s)))
    }

    pub fn add(&self, other: &Self) -> Self {
        Self::from_pairs(self.iter().chain(other.iter()))
    }

    /// Pointwise product (coefficient convolution).
    pub fn mul(&self, other: &Self) -> Self {
        let mut pairs = Vec::with_capacity(self.len() * other.len());
        for (j, a) in self.iter() {
            for (k, b) in other.iter() {
                pairs.push((j + k, a * b));
            }
        }
        Self::from_pairs(pairs)
    }

    /// Removes the mean and integrates: the unique zero-mean `G` with `G' = u - <u>`.
    pub fn zero_mean_antiderivative(&self) -> Self {
        Self::from_pairs(
            self.iter()
                .filter(|&(k, _)| k != 0)
                .map(|(k, c)| (k, c / Complex64::new(0.0, k as f64))),
        )
    }

    /// Values at `n` equispaced points `x_j = 2 pi j / n`.
    pub fn sample(&self, n: usize) -> Vec<Complex64> {
        (0..n).map(|j| self.eval(2.0 * PI * j as f64 / n as f64)).collect()
    }
}

impl From<Vec<(i64, f64, f64)>> for TrigPoly {
    fn from(triples: Vec<(i64, f64, f64)>) -> Self {
        Self::from_pairs(triples.into_iter().map(|(k, re, im)| (k, Complex64::new(re, im))))
    }
}

impl From<TrigPoly> for Vec<(i64, f64, f64)> {
    fn from(p: TrigPoly) -> Self {
        p.iter().map(|(k, c)| (k, c.re, c.im)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn zero_polynomial_is_empty() {
        assert!(TrigPoly::zero().is_empty());
        let cancelled = TrigPoly::mode(3, 1.0).add(&TrigPoly::mode(3, -1.0));
        assert!(cancelled.is_empty());
    }

    #[test]
    fn cos_and_sin_are_real() {
        assert!(TrigPoly::cos(2).is_real(0.0));
        assert!(TrigPoly::sin(1).is_real(0.0));
        assert!(!TrigPoly::mode(1, 1.0).is_real(1e-15));
    }

    #[test]
    fn antiderivative_of_exp_minus_ix() {
        // d/dx (i e^{-ix}) = e^{-ix}
        let g = TrigPoly::mode(-1, 1.0);
        let big_g = g.zero_mean_antiderivative();
        assert_eq!(big_g.coeff(-1), Complex64::new(0.0, 1.0));
    }

    proptest! {
        #[test]
        fn eval_is_the_finite_sum(
            cs in prop::collection::vec((-6i64..=6, -2.0f64..2.0, -2.0f64..2.0), 0..8),
            x in 0.0f64..(2.0 * PI),
        ) {
            let p = TrigPoly::from(cs.clone());
            let direct: Complex64 = cs
                .iter()
                .map(|&(k, re, im)| Complex64::new(re, im) * Complex64::from_polar(1.0, k as f64 * x))
                .sum();
            prop_assert!((p.eval(x) - direct).norm() < 1e-12);
        }

        #[test]
        fn product_matches_pointwise(
            a in prop::collection::vec((-4i64..=4, -1.0f64..1.0, -1.0f64..1.0), 1..5),
            b in prop::collection::vec((-4i64..=4, -1.0f64..1.0, -1.0f64..1.0), 1..5),
            x in 0.0f64..(2.0 * PI),
        ) {
            let (pa, pb) = (TrigPoly::from(a), TrigPoly::from(b));
            prop_assert!((pa.mul(&pb).eval(x) - pa.eval(x) * pb.eval(x)).norm() < 1e-12);
        }
    }
}
