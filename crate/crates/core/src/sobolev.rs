//! Empirical constants in the semiclassical Sobolev multiplication inequalities.
//!
//! For random band-limited `u, v` with frequencies `|k| <= ceil(1/h)` we record
//! the largest observed value of
//!
//! * `‖uv‖_{H_h^s} / (h^{-1/2} ‖u‖_{H_h^s} ‖v‖_{H_h^s})` (product),
//! * `sup|u| / (h^{-1/2} ‖u‖_{H_h^s})` (sup),
//! * `‖uv‖_{H_h^s} / (‖u‖_{H^s} ‖v‖_{H_h^s})` (mixed).
//!
//! The inequalities hold with h-independent constants when every maximum stays
//! bounded as `h` shrinks.

use num_complex::Complex64;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::exec::{map_indexed, Execution};
use crate::operator::{hs_norm, NormMode};
use crate::rng::stream_rng;
use crate::trig::TrigPoly;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SobolevRatios {
    pub h: f64,
    pub s: f64,
    pub product: f64,
    pub sup: f64,
    pub mixed: f64,
}

fn random_band_limited(band: i64, rng: &mut impl rand::Rng) -> TrigPoly {
    TrigPoly::from_pairs((-band..=band).map(|k| {
        let re: f64 = StandardNormal.sample(rng);
        let im: f64 = StandardNormal.sample(rng);
        (k, Complex64::new(re, im))
    }))
}

/// Sup norm sampled on a grid 16 times finer than the band.
fn sampled_sup(u: &TrigPoly) -> f64 {
    let n = 16 * (2 * u.bandwidth() as usize + 1);
    u.sample(n).iter().map(|z| z.norm()).fold(0.0, f64::max)
}

pub fn sobolev_ratios(h: f64, s: f64, n_pairs: usize, seed: u64, exec: Execution) -> SobolevRatios {
    let band = (1.0 / h).ceil() as i64;
    let scale = h.powf(-0.5);
    let per_pair = map_indexed(n_pairs, exec, |i| {
        let mut rng = stream_rng(seed, i as u64);
        let u = random_band_limited(band, &mut rng);
        let v = random_band_limited(band, &mut rng);
        let uv = hs_norm(&u.mul(&v), s, h, NormMode::Semiclassical);
        let nu = hs_norm(&u, s, h, NormMode::Semiclassical);
        let nv = hs_norm(&v, s, h, NormMode::Semiclassical);
        let nu_classical = hs_norm(&u, s, h, NormMode::Classical);
        [uv / (scale * nu * nv), sampled_sup(&u) / (scale * nu), uv / (nu_classical * nv)]
    });
    let max_of = |idx: usize| per_pair.iter().map(|r| r[idx]).fold(0.0, f64::max);
    SobolevRatios {
        h,
        s,
        product: max_of(0),
        sup: max_of(1),
        mixed: max_of(2),
    }
}
