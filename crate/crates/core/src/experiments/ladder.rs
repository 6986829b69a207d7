//! Rung-by-rung lower bounds on the small singular values of `P_δ - z`.
//!
//! Starting from `N⁽⁰⁾ = #{t_ν < τ₀}`, the count shrinks by the factor `1 - θ`
//! while it is at least `N(θ)`, then by one down to `N⁽ᵏ¹⁾ = 1`. Rung `k`,
//! `1 <= k <= k₁`, covers `N⁽ᵏ⁾ < ν <= N⁽ᵏ⁻¹⁾` with threshold `τ₀ h^{k N₂}`; a
//! final rung holds `ν = 1` with threshold `τ₀ h^{(k₁+1) N₂}`.

use serde::{Deserialize, Serialize};

use crate::error::{param, Result};
use crate::perturbation::PerturbationPlan;

/// Default slack added to `N₂ = 2(N₁ + n)`.
pub const N2_SLACK: f64 = 0.1;

/// `N⁽⁰⁾, N⁽¹⁾, …, 1`.
pub fn ladder_sizes(n0: usize, theta: f64, n_theta: usize) -> Result<Vec<usize>> {
    if !(theta > 0.0 && theta < 1.0) {
        return Err(param("theta", "must lie in (0, 1)"));
    }
    if n_theta < 1 {
        return Err(param("n_theta", "must be at least 1"));
    }
    let mut sizes = Vec::new();
    let mut cur = n0;
    while cur >= 1 {
        sizes.push(cur);
        cur = if cur == 1 {
            0
        } else if cur >= n_theta {
            // Never stall, never skip past 1.
            (((1.0 - theta) * cur as f64).floor() as usize).clamp(1, cur - 1)
        } else {
            cur - 1
        };
    }
    Ok(sizes)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rung {
    pub index: usize,
    /// Covered indices `nu_lo < ν <= nu_hi`.
    pub nu_lo: usize,
    pub nu_hi: usize,
    /// `τ₀ h^{k N₂}`.
    pub threshold: f64,
    /// Smallest `t_ν` over the covered indices.
    pub observed_min: f64,
    /// `observed_min >= (1 - h^{N₁+n}) threshold`; not asserted for the unperturbed operator.
    pub holds: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LadderProfile {
    pub h: f64,
    pub tau0: f64,
    pub theta: f64,
    pub n_theta: usize,
    pub n2: f64,
    pub n0: usize,
    pub sizes: Vec<usize>,
    pub rungs: Vec<Rung>,
    /// Ascending singular values below `τ₀`.
    pub small_singular_values: Vec<f64>,
}

impl LadderProfile {
    pub fn all_hold(&self) -> bool {
        self.rungs.iter().all(|r| r.holds != Some(false))
    }
}

/// Profile from the ascending singular values `t` of `P_δ - z`.
pub fn singular_ladder_profile(t: &[f64], plan: &PerturbationPlan, theta: f64, n_theta: usize, slack: f64) -> Result<LadderProfile> {
    if !(slack > 0.0) {
        return Err(param("slack", "must be positive"));
    }
    let h = plan.inputs.h;
    let tau0 = plan.inputs.tau0;
    let n = plan.inputs.n as f64;
    let n2 = 2.0 * (plan.n1 + n) + slack;
    let n0 = t.iter().take_while(|&&v| v < tau0).count();
    let sizes = ladder_sizes(n0, theta, n_theta)?;
    let perturbed = plan.coupling != 0.0;
    let shrink = 1.0 - h.powf(plan.n1 + n);
    let k1 = sizes.len().saturating_sub(1);
    let rung = |k: usize, nu_lo: usize, nu_hi: usize| {
        let threshold = tau0 * h.powf(k as f64 * n2);
        let observed_min = t[nu_lo];
        Rung {
            index: k,
            nu_lo,
            nu_hi,
            threshold,
            observed_min,
            holds: perturbed.then_some(observed_min >= shrink * threshold),
        }
    };
    let mut rungs: Vec<Rung> = (1..=k1).map(|k| rung(k, sizes[k], sizes[k - 1])).collect();
    if n0 > 0 {
        rungs.push(rung(k1 + 1, 0, 1));
    }
    Ok(LadderProfile {
        h,
        tau0,
        theta,
        n_theta,
        n2,
        n0,
        sizes,
        rungs,
        small_singular_values: t[..n0].to_vec(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::perturbation::{derive_params, DeltaMode, PlanInputs};
    use proptest::prelude::*;

    #[test]
    fn reference_sequence() {
        assert_eq!(ladder_sizes(16, 0.25, 4).unwrap(), vec![16, 12, 9, 6, 4, 3, 2, 1]);
        assert!(ladder_sizes(0, 0.25, 4).unwrap().is_empty());
        assert!(ladder_sizes(5, 1.0, 4).is_err());
    }

    fn plan(mode: DeltaMode) -> PerturbationPlan {
        derive_params(PlanInputs {
            n: 1,
            s: 2.0,
            epsilon: 0.5,
            kappa: 0.25,
            h: 0.1,
            tau0: 0.1f64.sqrt(),
            mode,
            l_cap: Some(3.0),
        })
        .unwrap()
    }

    #[test]
    fn profile_over_synthetic_values() {
        let p = plan(DeltaMode::Paper);
        let t: Vec<f64> = (0..40).map(|i| 0.01 * (i + 1) as f64).collect();
        let prof = singular_ladder_profile(&t, &p, 0.25, 4, N2_SLACK).unwrap();
        assert_eq!(prof.n0, 31);
        assert_eq!(prof.n2, 2.0 * 11.0 + 0.1);
        assert_eq!(prof.sizes, vec![31, 23, 17, 12, 9, 6, 4, 3, 2, 1]);
        assert_eq!((prof.rungs[0].nu_lo, prof.rungs[0].nu_hi), (23, 31));
        assert_eq!(prof.rungs[0].observed_min, t[23]);
        assert_eq!(prof.rungs.len(), 10);
        let last = prof.rungs.last().unwrap();
        assert_eq!((last.index, last.nu_hi, last.observed_min), (10, 1, t[0]));
        // Thresholds fall by h^{N₂} per rung, far below the synthetic values.
        assert!(prof.all_hold());
    }

    #[test]
    fn baseline_asserts_nothing() {
        let p = plan(DeltaMode::Effective { delta_eff: 0.0 });
        let t = [1e-30, 0.01, 0.2, 1.0];
        let prof = singular_ladder_profile(&t, &p, 0.25, 4, N2_SLACK).unwrap();
        assert!(prof.rungs.iter().all(|r| r.holds.is_none()));
        assert_eq!(prof.small_singular_values, vec![1e-30, 0.01, 0.2]);
    }

    proptest! {
        #[test]
        fn sizes_decrease_to_one(n0 in 1usize..500, theta in 0.01f64..0.99, n_theta in 1usize..20) {
            let s = ladder_sizes(n0, theta, n_theta).unwrap();
            prop_assert_eq!(s[0], n0);
            prop_assert_eq!(*s.last().unwrap(), 1);
            prop_assert!(s.windows(2).all(|w| w[1] < w[0]));
            prop_assert!(s.windows(2).all(|w| w[0] < n_theta || w[1] == 1 || w[1] as f64 <= (1.0 - theta) * w[0] as f64));
        }
    }
}
