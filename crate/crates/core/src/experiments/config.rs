//! Experiment configuration, read from TOML.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{param, LabError, Result};
use crate::modified::GuardSearch;
use crate::perturbation::DeltaMode;
use crate::phase::{certified_xi_bound, sample_range_distance, PhaseGrid};
use crate::region::Region;
use crate::symbol::SymbolSpec;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum KappaChoice {
    Value(f64),
    Named(AutoTag),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AutoTag {
    Auto,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Tau0Choice {
    Value(f64),
    Named(SqrtHTag),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SqrtHTag {
    SqrtH,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModeName {
    Paper,
    Effective,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanConfig {
    pub s: f64,
    pub epsilon: f64,
    /// A number in (0, 1], or `"auto"` for the universal `1/(2m)`.
    pub kappa: KappaChoice,
    /// A number, or `"sqrt_h"` for the largest admissible `τ₀ = √h`.
    pub tau0: Tau0Choice,
    pub mode: ModeName,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta_eff: Option<f64>,
    #[serde(default)]
    pub real_potential: bool,
    /// Cap `L` at `hK` so every sampled mode is representable.
    #[serde(default = "yes")]
    pub cap_l_at_grid: bool,
}

fn yes() -> bool {
    true
}

impl PlanConfig {
    pub fn kappa_for(&self, order: usize) -> f64 {
        match self.kappa {
            KappaChoice::Value(k) => k,
            KappaChoice::Named(AutoTag::Auto) => 1.0 / (2.0 * order.max(1) as f64),
        }
    }

    pub fn tau0_for(&self, h: f64) -> f64 {
        match self.tau0 {
            Tau0Choice::Value(t) => t,
            Tau0Choice::Named(SqrtHTag::SqrtH) => h.sqrt(),
        }
    }

    pub fn delta_mode(&self) -> Result<DeltaMode> {
        match (self.mode, self.delta_eff) {
            (ModeName::Paper, _) => Ok(DeltaMode::Paper),
            (ModeName::Effective, Some(delta_eff)) => Ok(DeltaMode::Effective { delta_eff }),
            (ModeName::Effective, None) => Err(LabError::Config("plan.mode = \"effective\" requires plan.delta_eff".into())),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case", deny_unknown_fields)]
pub enum Truncation {
    /// `K = ceil(1.5 ξ_b / h)` with `ξ_b` certified for the region.
    #[default]
    Auto,
    Explicit {
        #[serde(rename = "K")]
        k: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuadratureConfig {
    pub n_x: usize,
    pub n_xi: usize,
}

impl Default for QuadratureConfig {
    fn default() -> Self {
        Self { n_x: 2048, n_xi: 2048 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbeConfig {
    /// Explicit probe points `[re, im]`; by default 5 points on `∂Γ`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub points: Option<Vec<[f64; 2]>>,
    #[serde(default = "default_probe_count")]
    pub count: usize,
    #[serde(default)]
    pub guard: GuardSearch,
    #[serde(default = "yes")]
    pub log_det: bool,
}

fn default_probe_count() -> usize {
    5
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self {
            points: None,
            count: default_probe_count(),
            guard: GuardSearch::default(),
            log_det: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub master_seed: u64,
    pub n_trials: usize,
    pub h_list: Vec<f64>,
    pub tube_radius: f64,
    /// Relative count tolerance for the success fraction.
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
    /// `ε̃ = eps_tilde_factor · ε₀(h)`.
    #[serde(default = "one")]
    pub eps_tilde_factor: f64,
    /// Require `p(x, -ξ) = p(x, ξ)`; on for Weyl runs.
    #[serde(default = "yes")]
    pub require_symmetry: bool,
    pub symbol: SymbolSpec,
    pub region: Region,
    pub omega: Region,
    pub plan: PlanConfig,
    #[serde(default)]
    pub truncation: Truncation,
    #[serde(default)]
    pub quadrature: QuadratureConfig,
    #[serde(default)]
    pub probes: ProbeConfig,
}

fn default_tolerance() -> f64 {
    0.15
}

fn one() -> f64 {
    1.0
}

/// Command-line style overrides applied after parsing.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub h: Option<f64>,
    pub seed: Option<u64>,
    pub trials: Option<usize>,
    pub mode: Option<ModeName>,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| LabError::Config(e.to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always representable")
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(h) = o.h {
            self.h_list = vec![h];
        }
        if let Some(s) = o.seed {
            self.master_seed = s;
        }
        if let Some(t) = o.trials {
            self.n_trials = t;
        }
        if let Some(m) = o.mode {
            self.plan.mode = m;
        }
    }

    pub fn kappa(&self) -> f64 {
        self.plan.kappa_for(self.symbol.order())
    }

    /// Probe points: explicit ones, or `count` points spread along `∂Γ`.
    pub fn probe_points(&self) -> Vec<Complex64> {
        match &self.probes.points {
            Some(p) => p.iter().map(|z| Complex64::new(z[0], z[1])).collect(),
            None => self.region.boundary_points(self.probes.count),
        }
    }

    /// Checks every hypothesis that can be checked before running.
    pub fn validate(&self) -> Result<()> {
        let bad = |key: &str, why: String| LabError::Config(format!("{key}: {why}"));
        if self.h_list.is_empty() {
            return Err(bad("h_list", "must not be empty".into()));
        }
        if let Some(h) = self.h_list.iter().find(|&&h| !(h > 0.0 && h < 1.0)) {
            return Err(bad("h_list", format!("{h} is outside (0, 1)")));
        }
        if self.n_trials < 1 {
            return Err(bad("n_trials", "need at least one trial".into()));
        }
        if !(self.tube_radius > 0.0) {
            return Err(bad("tube_radius", "must be positive".into()));
        }
        if !(self.tolerance > 0.0) {
            return Err(bad("tolerance", "must be positive".into()));
        }
        self.region.validate().map_err(|e| bad("region", e.to_string()))?;
        self.omega.validate().map_err(|e| bad("omega", e.to_string()))?;
        self.plan.delta_mode()?;
        let kappa = self.kappa();
        if !(kappa > 0.0 && kappa <= 1.0) {
            return Err(bad("plan.kappa", format!("{kappa} is outside (0, 1]")));
        }
        for &h in &self.h_list {
            let tau0 = self.plan.tau0_for(h);
            if !(tau0 > 0.0 && tau0 <= h.sqrt()) {
                return Err(bad("plan.tau0", format!("τ₀ = {tau0} violates 0 < τ₀ <= √h at h = {h}")));
            }
        }
        let ell = self.symbol.check_ellipticity(256)?;
        if !ell.holds {
            return Err(bad("symbol", "leading coefficient vanishes; the symbol is not elliptic".into()));
        }
        if self.require_symmetry && !self.symbol.check_symmetry() {
            return Err(bad("symbol", "odd powers of ξ present; Weyl runs need p(x, -ξ) = p(x, ξ)".into()));
        }
        if !self.region.is_inside(&self.omega) {
            return Err(bad("region", "Γ is not contained in Ω".into()));
        }
        if let Truncation::Explicit { k } = self.truncation {
            if k < 1 {
                return Err(bad("truncation.K", "must be at least 1".into()));
            }
        }
        self.check_omega_leaves_range()?;
        self.check_range_clearance()?;
        Ok(())
    }

    fn range_grid(&self, reach: f64) -> Result<PhaseGrid> {
        let disk = Region::disk(Complex64::new(0.0, 0.0), reach);
        PhaseGrid::certified(&self.symbol, &disk, 512, 512)
    }

    /// Ω must contain a sample point outside the sampled range `Σ(p)`.
    fn check_omega_leaves_range(&self) -> Result<()> {
        let grid = self.range_grid(self.omega.sup_modulus())?;
        let (a, b, c, d) = self.omega.bounding_box();
        let n = 16;
        let outside = (0..=n).flat_map(|i| (0..=n).map(move |j| (i, j))).any(|(i, j)| {
            let z = Complex64::new(a + (b - a) * i as f64 / n as f64, c + (d - c) * j as f64 / n as f64);
            self.omega.contains(z) && !sample_range_distance(&self.symbol, &grid, z).in_range()
        });
        if outside {
            Ok(())
        } else {
            Err(LabError::Config("omega: Ω appears to lie entirely inside Σ(p)".into()))
        }
    }

    /// Γ stays `2r` away from `∂Σ(p)`: the `2r`-neighbourhood of Γ is sampled and
    /// must lie entirely inside or entirely outside the sampled range.
    fn check_range_clearance(&self) -> Result<()> {
        let pad = 2.0 * self.tube_radius;
        let grid = self.range_grid(self.region.sup_modulus() + pad)?;
        let (a, b, c, d) = self.region.bounding_box();
        let (a, b, c, d) = (a - pad, b + pad, c - pad, d + pad);
        let n = 16;
        let mut seen = [false, false];
        for i in 0..=n {
            for j in 0..=n {
                let z = Complex64::new(a + (b - a) * i as f64 / n as f64, c + (d - c) * j as f64 / n as f64);
                if self.region.contains(z) || self.region.boundary_distance(z) <= pad {
                    seen[sample_range_distance(&self.symbol, &grid, z).in_range() as usize] = true;
                }
            }
        }
        if seen[0] && seen[1] {
            return Err(param("region", "Γ comes within 2r of the boundary of Σ(p)"));
        }
        Ok(())
    }

    /// Certified `ξ_b` for the counting region.
    pub fn xi_bound(&self) -> Result<f64> {
        certified_xi_bound(&self.symbol, self.region.sup_modulus())
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    pub(crate) const QUADRATIC: &str = r#"
master_seed = 7
n_trials = 2
h_list = [0.1]
tube_radius = 0.05

[symbol]
order = 2
coefficients = [[[1, 1.0, 0.0]], [], [[0, 1.0, 0.0]]]

[region]
kind = "rectangle"
re_lo = 0.0
re_hi = 2.0
im_lo = -0.4
im_hi = 0.4

[omega]
kind = "rectangle"
re_lo = -1.0
re_hi = 3.0
im_lo = -2.0
im_hi = 2.0

[plan]
s = 2.0
epsilon = 0.5
kappa = "auto"
tau0 = "sqrt_h"
mode = "effective"
delta_eff = 1e-12
"#;

    #[test]
    fn parses_and_validates() {
        let cfg = ExperimentConfig::from_toml(QUADRATIC).unwrap();
        cfg.validate().unwrap();
        assert_eq!(cfg.kappa(), 0.25);
        assert_eq!(cfg.truncation, Truncation::Auto);
        assert_eq!(cfg.probe_points().len(), 5);
        let again = ExperimentConfig::from_toml(&cfg.to_toml()).unwrap();
        assert_eq!(cfg, again);
    }

    #[test]
    fn unknown_keys_name_the_key_and_line() {
        let text = QUADRATIC.replace("tube_radius = 0.05", "tube_radius = 0.05\nbogus_key = 1");
        let err = ExperimentConfig::from_toml(&text).unwrap_err().to_string();
        assert!(err.contains("bogus_key"), "{err}");
        assert!(err.contains("line"), "{err}");
    }

    #[test]
    fn hypotheses_are_enforced() {
        let linear = QUADRATIC.replace(
            "order = 2\ncoefficients = [[[1, 1.0, 0.0]], [], [[0, 1.0, 0.0]]]",
            "order = 1\ncoefficients = [[[-1, 1.0, 0.0]], [[0, 1.0, 0.0]]]",
        );
        let cfg = ExperimentConfig::from_toml(&linear).unwrap();
        assert!(cfg.validate().unwrap_err().to_string().contains("odd powers"));

        let inside = QUADRATIC.replace(
            "re_lo = -1.0\nre_hi = 3.0\nim_lo = -2.0\nim_hi = 2.0",
            "re_lo = 0.0\nre_hi = 2.5\nim_lo = -0.5\nim_hi = 0.5",
        );
        let cfg = ExperimentConfig::from_toml(&inside).unwrap();
        assert!(cfg.validate().unwrap_err().to_string().contains("inside Σ(p)"));

        let straddle = QUADRATIC.replace("im_lo = -0.4\nim_hi = 0.4", "im_lo = -0.4\nim_hi = 1.4");
        let cfg = ExperimentConfig::from_toml(&straddle).unwrap();
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn overrides() {
        let mut cfg = ExperimentConfig::from_toml(QUADRATIC).unwrap();
        cfg.apply(&Overrides {
            h: Some(0.05),
            seed: Some(3),
            trials: Some(9),
            mode: Some(ModeName::Paper),
        });
        assert_eq!((cfg.h_list.clone(), cfg.master_seed, cfg.n_trials), (vec![0.05], 3, 9));
        assert_eq!(cfg.plan.delta_mode().unwrap(), DeltaMode::Paper);
    }
}
