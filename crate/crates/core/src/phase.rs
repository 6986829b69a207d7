//! Midpoint quadrature on the phase space `[0, 2π) × [ξ_lo, ξ_hi]`.
//!
//! Integrands here are functions of the symbol value `p(x, ξ)` only, which covers
//! indicator functions of regions as well as the `χ(s/α)` and `ln s` integrands of
//! the trace and determinant formulas. Each x-slice is summed independently and the
//! slice sums are combined by a fixed pairwise reduction, so results do not depend
//! on the number of worker threads.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{param, LabError, Result};
use crate::exec::{map_indexed, pairwise_sum, Execution};
use crate::region::Region;
use crate::symbol::{horner, SymbolSpec};

/// Number of x samples used when certifying ellipticity constants.
const ELLIPTIC_SAMPLES: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseGrid {
    pub n_x: usize,
    pub xi_lo: f64,
    pub xi_hi: f64,
    pub n_xi: usize,
}

/// Volume together with the measure of cells whose membership differs from a neighbour.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VolumeEstimate {
    pub volume: f64,
    pub boundary_measure: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KappaFit {
    pub kappa_hat: f64,
    pub r2: f64,
    pub t: Vec<f64>,
    pub volume: Vec<f64>,
}

/// Smallest `ξ_b > 0` with `|p(x, ξ)| > sup_modulus` whenever `|ξ| >= ξ_b`.
///
/// The lower bound `|ξ|^m/C - Σ sup|a_α| |ξ|^α` has a single sign change on
/// `(0, ∞)`, so bisection on `[0, ξ_hi]` finds its unique crossing.
pub fn certified_xi_bound(spec: &SymbolSpec, sup_modulus: f64) -> Result<f64> {
    if spec.order() == 0 {
        return Err(param("symbol", "order-0 symbols have unbounded preimages"));
    }
    let ell = spec.check_ellipticity(ELLIPTIC_SAMPLES)?;
    if !ell.holds {
        return Err(param("symbol", "leading coefficient vanishes; not elliptic"));
    }
    let c = ell.best_constant;
    let f = |xi: f64| spec.modulus_lower_bound(xi, c) - sup_modulus;
    let mut hi = 1.0;
    while f(hi) <= 0.0 {
        hi *= 2.0;
        if hi > 1e12 {
            return Err(param("symbol", "could not bracket the ellipticity bound"));
        }
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
        if hi - lo < 1e-13 * hi {
            break;
        }
    }
    Ok(hi)
}

impl PhaseGrid {
    pub fn new(n_x: usize, xi_lo: f64, xi_hi: f64, n_xi: usize) -> Self {
        Self { n_x, xi_lo, xi_hi, n_xi }
    }

    /// Symmetric grid whose ξ window certifiably contains `p^{-1}(region)`.
    pub fn certified(spec: &SymbolSpec, region: &Region, n_x: usize, n_xi: usize) -> Result<Self> {
        let b = certified_xi_bound(spec, region.sup_modulus())?;
        // Stretch slightly so the end points sit strictly beyond the crossing.
        let b = b * 1.02 + 1e-9;
        Ok(Self::new(n_x, -b, b, n_xi))
    }

    pub fn dx(&self) -> f64 {
        2.0 * PI / self.n_x as f64
    }

    pub fn dxi(&self) -> f64 {
        (self.xi_hi - self.xi_lo) / self.n_xi as f64
    }

    pub fn cell_area(&self) -> f64 {
        self.dx() * self.dxi()
    }

    pub fn x_at(&self, i: usize) -> f64 {
        (i as f64 + 0.5) * self.dx()
    }

    pub fn xi_at(&self, j: usize) -> f64 {
        self.xi_lo + (j as f64 + 0.5) * self.dxi()
    }

    /// Checks the ellipticity bound at both ξ end points against `sup |z|` over the region.
    pub fn certify(&self, spec: &SymbolSpec, region: &Region) -> Result<()> {
        if self.n_x == 0 || self.n_xi == 0 || !(self.xi_hi > self.xi_lo) {
            return Err(param("grid", "empty phase grid"));
        }
        let ell = spec.check_ellipticity(ELLIPTIC_SAMPLES)?;
        let required = region.sup_modulus();
        for (bound, xi) in [("xi_lo", self.xi_lo), ("xi_hi", self.xi_hi)] {
            let value = if ell.holds {
                spec.modulus_lower_bound(xi, ell.best_constant)
            } else {
                f64::NEG_INFINITY
            };
            if !(value > required) {
                return Err(LabError::Containment { bound, value, required });
            }
        }
        Ok(())
    }

    /// Midpoint rule for `∬ f(p(x, ξ)) dx dξ` over the grid.
    pub fn integrate<F>(&self, spec: &SymbolSpec, exec: Execution, f: F) -> f64
    where
        F: Fn(Complex64) -> f64 + Sync + Send,
    {
        let slices = map_indexed(self.n_x, exec, |i| {
            let a = spec.coefficients_at(self.x_at(i));
            let row: Vec<f64> = (0..self.n_xi).map(|j| f(horner(&a, self.xi_at(j)))).collect();
            pairwise_sum(&row)
        });
        pairwise_sum(&slices) * self.cell_area()
    }

    fn membership_slice(&self, spec: &SymbolSpec, region: &Region, i: usize) -> Vec<bool> {
        let a = spec.coefficients_at(self.x_at(i));
        (0..self.n_xi).map(|j| region.contains(horner(&a, self.xi_at(j)))).collect()
    }

    /// Integer cell counts keep the result exactly independent of scheduling.
    fn count_cells(&self, spec: &SymbolSpec, region: &Region, exec: Execution) -> u64 {
        map_indexed(self.n_x, exec, |i| {
            self.membership_slice(spec, region, i).iter().filter(|&&b| b).count() as u64
        })
        .into_iter()
        .sum()
    }
}

/// Measure of `{(x, ξ) : p(x, ξ) ∈ region}`.
pub fn volume_preimage(spec: &SymbolSpec, region: &Region, grid: &PhaseGrid) -> Result<f64> {
    volume_preimage_with(spec, region, grid, Execution::default())
}

pub fn volume_preimage_with(spec: &SymbolSpec, region: &Region, grid: &PhaseGrid, exec: Execution) -> Result<f64> {
    grid.certify(spec, region)?;
    Ok(grid.count_cells(spec, region, exec) as f64 * grid.cell_area())
}

/// Volume plus the boundary-cell measure used as its error bar.
pub fn volume_estimate(spec: &SymbolSpec, region: &Region, grid: &PhaseGrid, exec: Execution) -> Result<VolumeEstimate> {
    grid.certify(spec, region)?;
    let rows = map_indexed(grid.n_x, exec, |i| grid.membership_slice(spec, region, i));
    let n_x = grid.n_x;
    let n_xi = grid.n_xi;
    let mut inside = 0u64;
    let mut boundary = 0u64;
    for i in 0..n_x {
        let prev = &rows[(i + n_x - 1) % n_x];
        let next = &rows[(i + 1) % n_x];
        let row = &rows[i];
        for j in 0..n_xi {
            let m = row[j];
            inside += m as u64;
            let differs = prev[j] != m || next[j] != m || (j > 0 && row[j - 1] != m) || (j + 1 < n_xi && row[j + 1] != m);
            boundary += differs as u64;
        }
    }
    Ok(VolumeEstimate {
        volume: inside as f64 * grid.cell_area(),
        boundary_measure: boundary as f64 * grid.cell_area(),
    })
}

/// Resolution used by [`estimate_kappa`] and [`sublevel_volumes`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KappaOptions {
    pub n_x: usize,
    pub n_xi: usize,
}

impl Default for KappaOptions {
    fn default() -> Self {
        Self { n_x: 4096, n_xi: 4096 }
    }
}

/// `V_z(t) = vol{|p - z|^2 <= t}` for each requested `t`.
pub fn sublevel_volumes(spec: &SymbolSpec, z: Complex64, ts: &[f64], opts: KappaOptions, exec: Execution) -> Result<Vec<f64>> {
    let t_max = ts.iter().copied().fold(0.0, f64::max);
    let region = Region::disk(z, t_max.sqrt());
    let grid = PhaseGrid::certified(spec, &region, opts.n_x, opts.n_xi)?;
    let mut dist: Vec<f64> = map_indexed(grid.n_x, exec, |i| {
        let a = spec.coefficients_at(grid.x_at(i));
        (0..grid.n_xi)
            .map(|j| (horner(&a, grid.xi_at(j)) - z).norm_sqr())
            .filter(|&d| d <= t_max)
            .collect::<Vec<_>>()
    })
    .concat();
    dist.sort_by(f64::total_cmp);
    let cell = grid.cell_area();
    Ok(ts.iter().map(|&t| dist.partition_point(|&d| d <= t) as f64 * cell).collect())
}

/// Geometric grid of `n` points from `lo` to `hi` inclusive.
pub fn geometric_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..n).map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp()).collect()
}

/// Least-squares slope of `log V_z(t)` against `log t`.
pub fn estimate_kappa(spec: &SymbolSpec, z: Complex64, t_lo: f64, t_hi: f64, n_points: usize, opts: KappaOptions) -> Result<KappaFit> {
    if !(t_lo > 0.0 && t_lo < t_hi) {
        return Err(param("t", "need 0 < t_lo < t_hi"));
    }
    if n_points < 4 {
        return Err(param("n_points", "at least 4 points are required"));
    }
    let ts = geometric_grid(t_lo, t_hi, n_points);
    let vs = sublevel_volumes(spec, z, &ts, opts, Execution::default())?;
    if let Some((&t, _)) = ts.iter().zip(&vs).find(|(_, &v)| v <= 0.0) {
        return Err(LabError::DegenerateFit { t });
    }
    let xs: Vec<f64> = ts.iter().map(|t| t.ln()).collect();
    let ys: Vec<f64> = vs.iter().map(|v| v.ln()).collect();
    let (slope, r2) = linear_fit(&xs, &ys);
    Ok(KappaFit {
        kappa_hat: slope,
        r2,
        t: ts,
        volume: vs,
    })
}

/// `V_z(t) / t^{1/(2m)}` over a grid of `t`, with its spread.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KappaFloor {
    pub z: [f64; 2],
    pub exponent: f64,
    pub t: Vec<f64>,
    pub ratio: Vec<f64>,
    pub median: f64,
    /// `max ratio / median ratio`.
    pub spread: f64,
}

pub fn kappa_floor(spec: &SymbolSpec, z: Complex64, ts: &[f64], opts: KappaOptions, exec: Execution) -> Result<KappaFloor> {
    let exponent = 1.0 / (2.0 * spec.order() as f64);
    let vs = sublevel_volumes(spec, z, ts, opts, exec)?;
    let ratio: Vec<f64> = ts.iter().zip(&vs).map(|(t, v)| v / t.powf(exponent)).collect();
    let mut sorted = ratio.clone();
    sorted.sort_by(f64::total_cmp);
    let mid = sorted.len() / 2;
    let median = if sorted.len() % 2 == 1 {
        sorted[mid]
    } else {
        0.5 * (sorted[mid - 1] + sorted[mid])
    };
    let max = sorted.last().copied().unwrap_or(f64::NAN);
    Ok(KappaFloor {
        z: [z.re, z.im],
        exponent,
        t: ts.to_vec(),
        ratio,
        median,
        spread: max / median,
    })
}

/// Ordinary least squares `y ≈ a + b x`; returns `(b, R^2)`.
pub(crate) fn linear_fit(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let b = sxy / sxx;
    let r2 = if syy == 0.0 {
        1.0
    } else {
        (sxy * sxy / (sxx * syy)).clamp(0.0, 1.0)
    };
    (b, r2)
}

/// Distance from `z` to the sampled range of `p` over `grid`, and the largest
/// jump of `p` between neighbouring cells. `z` is treated as a point of `Σ(p)`
/// when the distance does not exceed that jump.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RangeSample {
    pub distance: f64,
    pub resolution: f64,
}

impl RangeSample {
    pub fn in_range(&self) -> bool {
        self.distance <= self.resolution
    }
}

pub fn sample_range_distance(spec: &SymbolSpec, grid: &PhaseGrid, z: Complex64) -> RangeSample {
    let parts = map_indexed(grid.n_x, Execution::default(), |i| {
        let a = spec.coefficients_at(grid.x_at(i));
        let b = spec.coefficients_at(grid.x_at((i + 1) % grid.n_x));
        let mut dist = f64::INFINITY;
        let mut jump: f64 = 0.0;
        let mut prev: Option<Complex64> = None;
        for j in 0..grid.n_xi {
            let xi = grid.xi_at(j);
            let p = horner(&a, xi);
            dist = dist.min((p - z).norm());
            jump = jump.max((horner(&b, xi) - p).norm());
            if let Some(q) = prev {
                jump = jump.max((p - q).norm());
            }
            prev = Some(p);
        }
        (dist, jump)
    });
    let distance = parts.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
    let resolution = parts.iter().map(|p| p.1).fold(0.0, f64::max);
    RangeSample { distance, resolution }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trig::TrigPoly;

    fn pure_xi() -> SymbolSpec {
        SymbolSpec::new(1, vec![TrigPoly::zero(), TrigPoly::constant(1.0)]).unwrap()
    }

    /// Closed form for `p = ξ + e^{-ix}` on a rectangle: the ξ-length of the fibre
    /// over each `x` is `b - a` whenever `-sin x ∈ [c, d]`.
    fn linear_model_rect_volume(a: f64, b: f64, c: f64, d: f64) -> f64 {
        assert!(-1.0 <= c && c <= d && d <= 1.0);
        // meas{x ∈ [0, 2π): -sin x ∈ [c, d]} = 2 (asin d - asin c)
        (b - a) * 2.0 * (d.asin() - c.asin())
    }

    #[test]
    fn linear_model_rectangle_volume() {
        let spec = SymbolSpec::linear_model();
        let region = Region::rectangle(-1.0, 1.0, 0.1, 0.9);
        let exact = linear_model_rect_volume(-1.0, 1.0, 0.1, 0.9);
        assert!((exact - 4.0784).abs() < 1e-4);
        // Brute-force oracle at two resolutions.
        for n in [1024, 2048] {
            let grid = PhaseGrid::certified(&spec, &region, n, n).unwrap();
            let est = volume_estimate(&spec, &region, &grid, Execution::Sequential).unwrap();
            assert!((est.volume - exact).abs() <= est.boundary_measure, "n={n}");
            assert!((est.volume - exact).abs() < 1e-2);
        }
    }

    #[test]
    fn disjoint_region_has_zero_volume() {
        let spec = SymbolSpec::quadratic_model();
        let region = Region::rectangle(-3.0, -2.0, 3.0, 4.0);
        let grid = PhaseGrid::certified(&spec, &region, 256, 256).unwrap();
        assert_eq!(volume_preimage(&spec, &region, &grid).unwrap(), 0.0);
    }

    #[test]
    fn pure_transport_disk_volume() {
        let region = Region::disk(Complex64::new(0.0, 0.0), 0.2);
        let grid = PhaseGrid::certified(&pure_xi(), &region, 64, 4096).unwrap();
        let v = volume_preimage(&pure_xi(), &region, &grid).unwrap();
        assert!((v - 4.0 * PI * 0.2).abs() < 1e-3, "{v}");
    }

    #[test]
    fn uncertified_grid_is_rejected() {
        let spec = SymbolSpec::quadratic_model();
        let region = Region::rectangle(0.0, 2.0, -0.4, 0.4);
        let grid = PhaseGrid::new(64, -1.0, 1.0, 64);
        match volume_preimage(&spec, &region, &grid) {
            Err(LabError::Containment { bound, .. }) => assert_eq!(bound, "xi_lo"),
            other => panic!("expected containment error, got {other:?}"),
        }
    }

    #[test]
    fn kappa_of_pure_transport_is_one_half() {
        let fit = estimate_kappa(
            &pure_xi(),
            Complex64::new(0.0, 0.0),
            1e-3,
            1e-1,
            6,
            KappaOptions { n_x: 32, n_xi: 8192 },
        )
        .unwrap();
        assert!((fit.kappa_hat - 0.5).abs() < 0.02, "{}", fit.kappa_hat);
        assert!(fit.r2 > 0.99);
    }

    #[test]
    fn kappa_of_linear_model_interior_point_is_one() {
        let fit = estimate_kappa(
            &SymbolSpec::linear_model(),
            Complex64::new(0.0, 0.5),
            1e-3,
            1e-1,
            6,
            KappaOptions::default(),
        )
        .unwrap();
        assert!((fit.kappa_hat - 1.0).abs() < 0.05, "{}", fit.kappa_hat);
    }

    #[test]
    fn kappa_outside_the_range_is_degenerate() {
        let r = estimate_kappa(
            &SymbolSpec::linear_model(),
            Complex64::new(0.0, 3.0),
            1e-3,
            1e-1,
            5,
            KappaOptions { n_x: 128, n_xi: 128 },
        );
        assert!(matches!(r, Err(LabError::DegenerateFit { .. })));
    }

    #[test]
    fn volume_is_additive_over_disjoint_regions() {
        let spec = SymbolSpec::quadratic_model();
        let whole = Region::rectangle(0.0, 2.0, -0.4, 0.4);
        let lower = Region::rectangle(0.0, 2.0, -0.4, 0.0);
        // Upper half starts just above 0 so the pieces do not share a boundary line.
        let upper = Region::rectangle(0.0, 2.0, 1e-12, 0.4);
        let grid = PhaseGrid::certified(&spec, &whole, 512, 512).unwrap();
        let w = volume_estimate(&spec, &whole, &grid, Execution::Sequential).unwrap();
        let l = volume_estimate(&spec, &lower, &grid, Execution::Sequential).unwrap();
        let u = volume_estimate(&spec, &upper, &grid, Execution::Sequential).unwrap();
        let cell = grid.cell_area();
        assert!((w.volume - l.volume - u.volume).abs() <= 2.0 * cell);
    }

    #[test]
    fn refinement_stays_within_boundary_measure() {
        let spec = SymbolSpec::quadratic_model();
        let region = Region::rectangle(0.0, 2.0, -0.4, 0.4);
        let coarse = PhaseGrid::certified(&spec, &region, 256, 256).unwrap();
        let fine = PhaseGrid {
            n_x: 512,
            n_xi: 512,
            ..coarse
        };
        let c = volume_estimate(&spec, &region, &coarse, Execution::Sequential).unwrap();
        let f = volume_estimate(&spec, &region, &fine, Execution::Sequential).unwrap();
        assert!((c.volume - f.volume).abs() < c.boundary_measure);
    }

    #[test]
    fn parallel_and_sequential_integrals_agree_bitwise() {
        let spec = SymbolSpec::quadratic_model();
        let region = Region::disk(Complex64::new(0.5, 0.3), 1.0);
        let grid = PhaseGrid::certified(&spec, &region, 300, 300).unwrap();
        let f = |p: Complex64| (p - Complex64::new(0.5, 0.3)).norm().ln();
        let a = grid.integrate(&spec, Execution::Sequential, f);
        let b = grid.integrate(&spec, Execution::Parallel, f);
        assert_eq!(a.to_bits(), b.to_bits());
    }

    #[test]
    fn range_sampling_detects_interior_and_exterior() {
        let spec = SymbolSpec::quadratic_model();
        let region = Region::disk(Complex64::new(0.0, 0.0), 3.0);
        let grid = PhaseGrid::certified(&spec, &region, 256, 256).unwrap();
        assert!(sample_range_distance(&spec, &grid, Complex64::new(1.0, 0.2)).in_range());
        assert!(!sample_range_distance(&spec, &grid, Complex64::new(0.0, 2.0)).in_range());
    }

    #[test]
    fn geometric_grid_endpoints() {
        let g = geometric_grid(1e-4, 1e-1, 7);
        assert!((g[0] - 1e-4).abs() < 1e-18);
        assert!((g[6] - 1e-1).abs() < 1e-15);
        assert!((g[3] / g[2] - g[1] / g[0]).abs() < 1e-12);
    }

    #[test]
    fn kappa_floor_of_the_linear_model() {
        let spec = SymbolSpec::linear_model();
        let ts = geometric_grid(1e-4, 1e-1, 7);
        let opts = KappaOptions { n_x: 1024, n_xi: 1024 };
        let f = kappa_floor(&spec, Complex64::new(0.0, 0.5), &ts, opts, Execution::default()).unwrap();
        assert_eq!(f.exponent, 0.5);
        // V grows like t, so the ratio grows like t^{1/2}.
        assert!(f.spread > 3.0 && f.spread < 10.0, "{}", f.spread);
    }
}
