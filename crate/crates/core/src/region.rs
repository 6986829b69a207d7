//! Closed regions of the spectral plane.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{param, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Region {
    Rectangle {
        re_lo: f64,
        re_hi: f64,
        im_lo: f64,
        im_hi: f64,
    },
    Disk {
        center: [f64; 2],
        radius: f64,
    },
    /// Points within distance `r` of the boundary of `base`.
    BoundaryTube {
        base: Box<Region>,
        r: f64,
    },
}

impl Region {
    pub fn rectangle(re_lo: f64, re_hi: f64, im_lo: f64, im_hi: f64) -> Self {
        Region::Rectangle {
            re_lo,
            re_hi,
            im_lo,
            im_hi,
        }
    }

    pub fn disk(center: Complex64, radius: f64) -> Self {
        Region::Disk {
            center: [center.re, center.im],
            radius,
        }
    }

    pub fn boundary_tube(base: Region, r: f64) -> Result<Self> {
        if !(r > 0.0) {
            return Err(param("r", "tube radius must be positive"));
        }
        Ok(Region::BoundaryTube { base: Box::new(base), r })
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Region::Rectangle {
                re_lo,
                re_hi,
                im_lo,
                im_hi,
            } => {
                if !(re_lo <= re_hi && im_lo <= im_hi) {
                    return Err(param("region", "rectangle bounds are inverted"));
                }
            }
            Region::Disk { radius, .. } => {
                if !(*radius >= 0.0) {
                    return Err(param("region", "disk radius must be non-negative"));
                }
            }
            Region::BoundaryTube { base, r } => {
                if !(*r > 0.0) {
                    return Err(param("region", "tube radius must be positive"));
                }
                base.validate()?;
            }
        }
        Ok(())
    }

    /// Closed-region membership: boundary points count as inside.
    pub fn contains(&self, z: Complex64) -> bool {
        match self {
            Region::Rectangle {
                re_lo,
                re_hi,
                im_lo,
                im_hi,
            } => z.re >= *re_lo && z.re <= *re_hi && z.im >= *im_lo && z.im <= *im_hi,
            Region::Disk { center, radius } => (z - Complex64::new(center[0], center[1])).norm_sqr() <= radius * radius,
            Region::BoundaryTube { base, r } => base.boundary_distance(z) <= *r,
        }
    }

    /// Euclidean distance from `z` to the boundary of the region.
    pub fn boundary_distance(&self, z: Complex64) -> f64 {
        match self {
            Region::Rectangle {
                re_lo,
                re_hi,
                im_lo,
                im_hi,
            } => {
                let dx_out = (re_lo - z.re).max(z.re - re_hi).max(0.0);
                let dy_out = (im_lo - z.im).max(z.im - im_hi).max(0.0);
                if dx_out > 0.0 || dy_out > 0.0 {
                    dx_out.hypot(dy_out)
                } else {
                    (z.re - re_lo).min(re_hi - z.re).min(z.im - im_lo).min(im_hi - z.im)
                }
            }
            Region::Disk { center, radius } => ((z - Complex64::new(center[0], center[1])).norm() - radius).abs(),
            Region::BoundaryTube { base, r } => (base.boundary_distance(z) - r).abs(),
        }
    }

    /// `sup |z|` over the region.
    pub fn sup_modulus(&self) -> f64 {
        match self {
            Region::Rectangle {
                re_lo,
                re_hi,
                im_lo,
                im_hi,
            } => re_lo.abs().max(re_hi.abs()).hypot(im_lo.abs().max(im_hi.abs())),
            Region::Disk { center, radius } => center[0].hypot(center[1]) + radius,
            Region::BoundaryTube { base, r } => base.sup_modulus() + r,
        }
    }

    /// Axis-aligned bounding box `(re_lo, re_hi, im_lo, im_hi)`.
    pub fn bounding_box(&self) -> (f64, f64, f64, f64) {
        match self {
            Region::Rectangle {
                re_lo,
                re_hi,
                im_lo,
                im_hi,
            } => (*re_lo, *re_hi, *im_lo, *im_hi),
            Region::Disk { center, radius } => (center[0] - radius, center[0] + radius, center[1] - radius, center[1] + radius),
            Region::BoundaryTube { base, r } => {
                let (a, b, c, d) = base.bounding_box();
                (a - r, b + r, c - r, d + r)
            }
        }
    }

    /// `n` points spread along the boundary, starting from a corner (or the
    /// rightmost point of a disk) and walking counter-clockwise by arc length.
    pub fn boundary_points(&self, n: usize) -> Vec<Complex64> {
        match self {
            Region::Rectangle {
                re_lo,
                re_hi,
                im_lo,
                im_hi,
            } => {
                let w = re_hi - re_lo;
                let ht = im_hi - im_lo;
                let perimeter = 2.0 * (w + ht);
                (0..n)
                    .map(|i| {
                        let mut s = perimeter * i as f64 / n as f64;
                        if s < w {
                            return Complex64::new(re_lo + s, *im_lo);
                        }
                        s -= w;
                        if s < ht {
                            return Complex64::new(*re_hi, im_lo + s);
                        }
                        s -= ht;
                        if s < w {
                            return Complex64::new(re_hi - s, *im_hi);
                        }
                        s -= w;
                        Complex64::new(*re_lo, im_hi - s)
                    })
                    .collect()
            }
            Region::Disk { center, radius } => (0..n)
                .map(|i| {
                    Complex64::new(center[0], center[1]) + Complex64::from_polar(*radius, 2.0 * std::f64::consts::PI * i as f64 / n as f64)
                })
                .collect(),
            Region::BoundaryTube { base, .. } => base.boundary_points(n),
        }
    }

    /// Whether every point of `self` lies in `outer`, tested on a sample grid.
    pub fn is_inside(&self, outer: &Region) -> bool {
        let (a, b, c, d) = self.bounding_box();
        let n = 24;
        (0..=n).all(|i| {
            (0..=n).all(|j| {
                let z = Complex64::new(a + (b - a) * i as f64 / n as f64, c + (d - c) * j as f64 / n as f64);
                !self.contains(z) || outer.contains(z)
            })
        })
    }
}
