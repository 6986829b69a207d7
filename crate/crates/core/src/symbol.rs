//! Polynomial-in-ξ symbols `p(x, ξ) = Σ_α a_α(x) ξ^α` on the cotangent bundle of the circle.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{param, Result};
use crate::trig::TrigPoly;

/// Symbol of an order-`m` semiclassical differential operator `Σ a_α(x) (hD)^α`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSymbol", into = "RawSymbol")]
pub struct SymbolSpec {
    order: usize,
    coefficients: Vec<TrigPoly>,
    h_corrections: Vec<TrigPoly>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSymbol {
    order: usize,
    coefficients: Vec<TrigPoly>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    h_corrections: Vec<TrigPoly>,
}

impl TryFrom<RawSymbol> for SymbolSpec {
    type Error = crate::LabError;

    fn try_from(raw: RawSymbol) -> Result<Self> {
        let spec = SymbolSpec::new(raw.order, raw.coefficients)?;
        spec.with_h_corrections(raw.h_corrections)
    }
}

impl From<SymbolSpec> for RawSymbol {
    fn from(s: SymbolSpec) -> Self {
        RawSymbol {
            order: s.order,
            coefficients: s.coefficients,
            h_corrections: s.h_corrections,
        }
    }
}

/// Which part of the symbol to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SymbolPart {
    /// The full semiclassical principal symbol `Σ_{α≤m} a_α ξ^α`.
    Principal,
    /// Only the top-degree term `a_m ξ^m`.
    Leading,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ellipticity {
    pub holds: bool,
    /// `C` with `|p_m(x, ξ)| >= |ξ|^m / C`; infinite when `a_m` vanishes on the sample grid.
    pub best_constant: f64,
}

impl SymbolSpec {
    /// `coefficients[α]` multiplies `ξ^α`; there must be exactly `order + 1` of them.
    pub fn new(order: usize, coefficients: Vec<TrigPoly>) -> Result<Self> {
        if coefficients.len() != order + 1 {
            return Err(param(
                "coefficients",
                format!(
                    "expected {} coefficient lists for order {order}, got {}",
                    order + 1,
                    coefficients.len()
                ),
            ));
        }
        if coefficients[order].is_zero() {
            return Err(param("coefficients", "leading coefficient a_m is identically zero"));
        }
        Ok(Self {
            order,
            coefficients,
            h_corrections: Vec::new(),
        })
    }

    /// Attaches the O(h) parts of the lower-order coefficients. The top coefficient
    /// is h-independent, so a correction at index `m` is rejected.
    pub fn with_h_corrections(mut self, corrections: Vec<TrigPoly>) -> Result<Self> {
        if corrections.len() > self.order && corrections[self.order..].iter().any(|c| !c.is_zero()) {
            return Err(param("h_corrections", "the degree-m coefficient must be h-independent"));
        }
        self.h_corrections = corrections;
        Ok(self)
    }

    /// `ξ^2 + e^{ix}`: even in ξ, elliptic, non-normal.
    pub fn quadratic_model() -> Self {
        Self::new(2, vec![TrigPoly::mode(1, 1.0), TrigPoly::zero(), TrigPoly::constant(1.0)]).expect("valid model")
    }

    /// `ξ + e^{-ix}`: first order, not even in ξ.
    pub fn linear_model() -> Self {
        Self::new(1, vec![TrigPoly::mode(-1, 1.0), TrigPoly::constant(1.0)]).expect("valid model")
    }

    /// `hD + g(x)`, the line-spectrum operator.
    pub fn transport(g: TrigPoly) -> Self {
        Self::new(1, vec![g, TrigPoly::constant(1.0)]).expect("valid model")
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn coefficients(&self) -> &[TrigPoly] {
        &self.coefficients
    }

    pub fn h_corrections(&self) -> &[TrigPoly] {
        &self.h_corrections
    }

    pub fn coefficient(&self, alpha: usize) -> &TrigPoly {
        &self.coefficients[alpha]
    }

    /// `a_α(x)` for every α, suitable for Horner evaluation along a ξ column.
    pub fn coefficients_at(&self, x: f64) -> Vec<Complex64> {
        self.coefficients.iter().map(|a| a.eval(x)).collect()
    }

    pub fn eval(&self, x: f64, xi: f64, part: SymbolPart) -> Complex64 {
        match part {
            SymbolPart::Principal => horner(&self.coefficients_at(x), xi),
            SymbolPart::Leading => self.coefficients[self.order].eval(x) * xi.powi(self.order as i32),
        }
    }

    pub fn check_ellipticity(&self, x_samples: usize) -> Result<Ellipticity> {
        if x_samples < 16 {
            return Err(param("x_samples", "at least 16 samples are required"));
        }
        let min = self.coefficients[self.order]
            .sample(x_samples)
            .iter()
            .map(|v| v.norm())
            .fold(f64::INFINITY, f64::min);
        // 1e-14 is below any meaningful coefficient scale; treat it as a zero.
        Ok(if min > 1e-14 {
            Ellipticity {
                holds: true,
                best_constant: 1.0 / min,
            }
        } else {
            Ellipticity {
                holds: false,
                best_constant: f64::INFINITY,
            }
        })
    }

    /// Coefficient-level test of `p(x, -ξ) = p(x, ξ)`: every odd power vanishes.
    pub fn check_symmetry(&self) -> bool {
        self.coefficients
            .iter()
            .enumerate()
            .filter(|(alpha, _)| alpha % 2 == 1)
            .all(|(_, a)| a.is_zero())
    }

    /// Rigorous lower bound `|ξ|^m / C - Σ_{α<m} sup|a_α| |ξ|^α` for `|p(x, ξ)|`.
    pub fn modulus_lower_bound(&self, xi: f64, constant: f64) -> f64 {
        let r = xi.abs();
        let lower: f64 = self.coefficients[..self.order]
            .iter()
            .enumerate()
            .map(|(alpha, a)| a.l1_coeff_norm() * r.powi(alpha as i32))
            .sum();
        r.powi(self.order as i32) / constant - lower
    }
}

pub(crate) fn horner(coeffs: &[Complex64], xi: f64) -> Complex64 {
    coeffs.iter().rev().fold(Complex64::new(0.0, 0.0), |acc, &a| acc * xi + a)
}
