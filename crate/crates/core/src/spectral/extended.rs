//! Double-double complex LU for the small bordered systems of the determinant identity.
//!
//! `ln|det|` of a matrix with `t₁ ~ 1e-10` is ill conditioned in double precision
//! (`u ‖A‖ / t₁ ~ 1e-6`), which swamps the identity being checked. Factorizing the
//! stored double matrices in ~106-bit arithmetic removes that noise; the result is
//! still the determinant of exactly the matrix that was stored.

use std::ops::{Add, Div, Mul, Neg, Sub};

use faer::{c64, Mat};
use twofloat::TwoFloat;

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Dd {
    re: TwoFloat,
    im: TwoFloat,
}

impl Dd {
    const ZERO: Dd = Dd {
        re: TwoFloat::from_f64(0.0),
        im: TwoFloat::from_f64(0.0),
    };
    const ONE: Dd = Dd {
        re: TwoFloat::from_f64(1.0),
        im: TwoFloat::from_f64(0.0),
    };

    fn from_c64(z: c64) -> Self {
        Dd {
            re: TwoFloat::from_f64(z.re),
            im: TwoFloat::from_f64(z.im),
        }
    }

    fn norm_sqr(self) -> TwoFloat {
        self.re * self.re + self.im * self.im
    }

    /// `ln |z|`, accurate to double precision.
    fn ln_abs(self) -> f64 {
        let s = self.norm_sqr();
        0.5 * (s.hi().ln() + (s.lo() / s.hi()).ln_1p())
    }
}

impl Add for Dd {
    type Output = Dd;
    fn add(self, o: Dd) -> Dd {
        Dd {
            re: self.re + o.re,
            im: self.im + o.im,
        }
    }
}

impl Sub for Dd {
    type Output = Dd;
    fn sub(self, o: Dd) -> Dd {
        Dd {
            re: self.re - o.re,
            im: self.im - o.im,
        }
    }
}

impl Neg for Dd {
    type Output = Dd;
    fn neg(self) -> Dd {
        Dd {
            re: -self.re,
            im: -self.im,
        }
    }
}

impl Mul for Dd {
    type Output = Dd;
    fn mul(self, o: Dd) -> Dd {
        Dd {
            re: self.re * o.re - self.im * o.im,
            im: self.re * o.im + self.im * o.re,
        }
    }
}

/// `a / b` by long division on the leading parts. `TwoFloat`'s own quotient is
/// only accurate to about `1e-17`.
fn tf_div(a: TwoFloat, b: TwoFloat) -> TwoFloat {
    let q1 = a.hi() / b.hi();
    let r = a - b * q1;
    let q2 = r.hi() / b.hi();
    let r = r - b * q2;
    let q3 = r.hi() / b.hi();
    TwoFloat::new_add(q1, q2) + TwoFloat::from_f64(q3)
}

impl Div for Dd {
    type Output = Dd;
    fn div(self, o: Dd) -> Dd {
        let d = o.norm_sqr();
        Dd {
            re: tf_div(self.re * o.re + self.im * o.im, d),
            im: tf_div(self.im * o.re - self.re * o.im, d),
        }
    }
}

/// Column-major square matrix.
#[derive(Clone)]
pub(crate) struct DdMat {
    n: usize,
    data: Vec<Dd>,
}

impl DdMat {
    pub(crate) fn from_mat(m: &Mat<c64>) -> Self {
        let n = m.nrows();
        let mut data = Vec::with_capacity(n * n);
        for j in 0..n {
            for i in 0..n {
                data.push(Dd::from_c64(m[(i, j)]));
            }
        }
        DdMat { n, data }
    }

    fn at(&self, i: usize, j: usize) -> Dd {
        self.data[j * self.n + i]
    }

    fn at_mut(&mut self, i: usize, j: usize) -> &mut Dd {
        &mut self.data[j * self.n + i]
    }
}

/// `PA = LU` with unit-diagonal `L` stored below the diagonal.
pub(crate) struct DdLu {
    lu: DdMat,
    perm: Vec<usize>,
}

impl DdLu {
    pub(crate) fn new(mut a: DdMat) -> Self {
        let n = a.n;
        let mut perm: Vec<usize> = (0..n).collect();
        for k in 0..n {
            let p = (k..n)
                .max_by(|&x, &y| a.at(x, k).norm_sqr().hi().total_cmp(&a.at(y, k).norm_sqr().hi()))
                .unwrap();
            if p != k {
                perm.swap(p, k);
                for j in 0..n {
                    a.data.swap(j * n + p, j * n + k);
                }
            }
            let pivot = a.at(k, k);
            if pivot == Dd::ZERO {
                continue;
            }
            for i in k + 1..n {
                let l = a.at(i, k) / pivot;
                *a.at_mut(i, k) = l;
                for j in k + 1..n {
                    let v = a.at(i, j) - l * a.at(k, j);
                    *a.at_mut(i, j) = v;
                }
            }
        }
        DdLu { lu: a, perm }
    }

    pub(crate) fn log_abs_det(&self) -> f64 {
        (0..self.lu.n).map(|i| self.lu.at(i, i).ln_abs()).sum()
    }

    fn solve(&self, b: &[Dd]) -> Vec<Dd> {
        let n = self.lu.n;
        let mut x: Vec<Dd> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            for j in 0..i {
                x[i] = x[i] - self.lu.at(i, j) * x[j];
            }
        }
        for i in (0..n).rev() {
            for j in i + 1..n {
                x[i] = x[i] - self.lu.at(i, j) * x[j];
            }
            x[i] = x[i] / self.lu.at(i, i);
        }
        x
    }
}

pub(crate) fn log_abs_det(a: &Mat<c64>) -> f64 {
    DdLu::new(DdMat::from_mat(a)).log_abs_det()
}

/// `(ln|det 𝒫|, ln|det E₋₊|)` for the bordered matrix `𝒫`, whose last `n_small`
/// rows and columns are the border. `E₋₊` is the trailing block of `𝒫^{-1}`.
pub(crate) fn bordered_log_dets(bordered: &Mat<c64>, n_small: usize) -> (f64, f64) {
    let total = bordered.nrows();
    let n = total - n_small;
    let lu = DdLu::new(DdMat::from_mat(bordered));
    let mut emp = DdMat {
        n: n_small,
        data: vec![Dd::ZERO; n_small * n_small],
    };
    for c in 0..n_small {
        let mut rhs = vec![Dd::ZERO; total];
        rhs[n + c] = Dd::ONE;
        let col = lu.solve(&rhs);
        for r in 0..n_small {
            *emp.at_mut(r, c) = col[n + r];
        }
    }
    (lu.log_abs_det(), DdLu::new(emp).log_abs_det())
}
