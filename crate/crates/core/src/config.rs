//! Suite configuration, read from JSON. Every key is optional; unknown keys
//! are rejected.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::green::InitialProfile;
use crate::grid::GridSpec;

/// A built-in profile by name, or a full profile description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ProfileChoice {
    Named(String),
    Custom(InitialProfile),
}

impl Default for ProfileChoice {
    fn default() -> Self {
        ProfileChoice::Named("pure_mode".into())
    }
}

impl ProfileChoice {
    pub fn resolve(&self) -> Result<InitialProfile> {
        match self {
            ProfileChoice::Named(name) => InitialProfile::builtin(name),
            ProfileChoice::Custom(p) => Ok(p.clone()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GapSettings {
    /// Scan direction and extent in κ.
    pub khat: [f64; 3],
    pub kappa_max: f64,
    pub kappa_step: f64,
}

impl Default for GapSettings {
    fn default() -> Self {
        Self { khat: [1.0, 0.0, 0.0], kappa_max: 2.0, kappa_step: 0.05 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BranchSettings {
    pub kappas: Vec<f64>,
    pub fit_window: (f64, f64),
    /// Relative tolerance on the wave speeds (slow grid).
    pub speed_tolerance: f64,
}

impl Default for BranchSettings {
    fn default() -> Self {
        Self { kappas: crate::spectral::default_kappas(), fit_window: (0.02, 0.2), speed_tolerance: 0.03 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChainSettings {
    pub j_max: usize,
    pub t_max: f64,
    /// Log-spaced output times from `t_min` to `t_max`, plus `t = 0`.
    pub t_min: f64,
    pub samples: usize,
    /// Window for the per-j order fits (onset of each iterate).
    pub order_window: (f64, f64),
    /// Window for exponential tail rates.
    pub tail_window: (f64, f64),
    /// Grid for the quadrature oracles.
    pub oracle_n: usize,
    pub oracle_t: f64,
    pub oracle_intervals: usize,
}

impl Default for ChainSettings {
    fn default() -> Self {
        Self {
            j_max: 4,
            t_max: 30.0,
            t_min: 1e-3,
            samples: 200,
            order_window: (0.01, 1.0),
            tail_window: (0.5, 27.0),
            oracle_n: 5,
            oracle_t: 1.0,
            oracle_intervals: 256,
        }
    }
}

impl ChainSettings {
    pub fn times(&self) -> Vec<f64> {
        let mut ts = vec![0.0];
        let (a, b) = (self.t_min.ln(), self.t_max.ln());
        let n = self.samples.max(2);
        ts.extend((0..n).map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp()));
        ts
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RegimeSettings {
    /// `βε / δ̂` for the three regimes.
    pub regime_i_fraction: f64,
    pub regime_ii_fractions: Vec<f64>,
    pub regime_iii_fraction: f64,
    pub regime_iii_profile: ProfileChoice,
    pub regime_iii_k_max: usize,
    /// Mode sum vs Gaussian integral tolerance and its time range.
    pub alpha0: f64,
    pub mode_sum_range: (f64, f64),
    /// Regime III envelope window in units of `1/(βε)²`.
    pub envelope_window: (f64, f64),
    pub envelope_samples: usize,
    /// Regime II runs to `horizon / ε²`.
    pub regime_ii_horizon: f64,
    pub regime_ii_samples: usize,
}

impl Default for RegimeSettings {
    fn default() -> Self {
        Self {
            regime_i_fraction: 2.0,
            regime_ii_fractions: vec![0.5, 0.7],
            regime_iii_fraction: 0.05,
            regime_iii_profile: ProfileChoice::Named("narrow_bump".into()),
            regime_iii_k_max: 8,
            alpha0: 0.05,
            mode_sum_range: (5.0, 50.0),
            envelope_window: (0.5, 5.0),
            envelope_samples: 41,
            regime_ii_horizon: 5.0,
            regime_ii_samples: 201,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SingularSettings {
    pub n_per_axis: usize,
    pub radius: f64,
    pub d_values: Vec<f64>,
}

impl Default for SingularSettings {
    fn default() -> Self {
        Self { n_per_axis: 65, radius: 2.4, d_values: vec![0.16, 0.22, 0.28, 0.34, 0.4] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CommutatorSettings {
    pub coarse_n: usize,
    pub fine_n: usize,
    /// `βε` of the tested mode `k = (1, 0, 0)`.
    pub kappa: f64,
    pub t_values: Vec<f64>,
}

impl Default for CommutatorSettings {
    fn default() -> Self {
        Self { coarse_n: 9, fine_n: 17, kappa: 1.0, t_values: vec![0.1, 0.25, 0.5] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SuiteConfig {
    pub seed: u64,
    pub grid: GridSpec,
    pub gammas: Vec<f64>,
    /// Grid size for the slow checks.
    pub slow_n: usize,
    pub slow: bool,
    pub profile: ProfileChoice,
    pub k_max: Option<usize>,
    pub delta_override: Option<f64>,
    /// Snapshot times of the decomposition stage.
    pub times: Vec<f64>,
    pub coercivity_samples: usize,
    pub kernel_pairs: usize,
    pub gap: GapSettings,
    pub branches: BranchSettings,
    pub chain: ChainSettings,
    pub regimes: RegimeSettings,
    pub singular: SingularSettings,
    pub commutator: CommutatorSettings,
    /// Enabled check ids; empty enables all.
    pub checks: Vec<String>,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        Self {
            seed: 20240601,
            grid: GridSpec::default(),
            gammas: vec![0.0, -1.0],
            slow_n: 15,
            slow: false,
            profile: ProfileChoice::default(),
            k_max: None,
            delta_override: None,
            times: vec![0.0, 0.5, 1.0, 2.0, 4.0, 8.0],
            coercivity_samples: 200,
            kernel_pairs: 50,
            gap: GapSettings::default(),
            branches: BranchSettings::default(),
            chain: ChainSettings::default(),
            regimes: RegimeSettings::default(),
            singular: SingularSettings::default(),
            commutator: CommutatorSettings::default(),
            checks: Vec::new(),
        }
    }
}

pub const CHECK_IDS: [&str; 11] = ["A1", "A2", "A3", "A4", "A5", "A6", "A7", "A8", "A9", "A10", "A11"];

impl SuiteConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: SuiteConfig = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        self.grid.validate().map_err(|e| Error::Config(e.to_string()))?;
        let bad = |m: String| Err(Error::Config(m));
        if self.gammas.is_empty() {
            return bad("gammas must not be empty".into());
        }
        if let Some(g) = self.gammas.iter().find(|g| !(**g > -2.0 && **g <= 1.0)) {
            return bad(format!("gamma {g} outside (-2, 1]"));
        }
        if self.slow_n < 5 || self.slow_n % 2 == 0 {
            return bad(format!("slow_n must be odd and at least 5, got {}", self.slow_n));
        }
        if let Some(id) = self.checks.iter().find(|id| !CHECK_IDS.contains(&id.as_str())) {
            return bad(format!("unknown check id {id}"));
        }
        if self.times.iter().any(|t| !(*t >= 0.0 && t.is_finite())) {
            return bad("snapshot times must be finite and non-negative".into());
        }
        if let Some(d) = self.delta_override {
            if !(d > 0.0) {
                return bad(format!("delta_override must be positive, got {d}"));
            }
        }
        let c = &self.chain;
        if !(c.t_min > 0.0 && c.t_max > c.t_min && c.samples >= 8) {
            return bad("chain needs 0 < t_min < t_max and at least 8 samples".into());
        }
        if self.regimes.regime_ii_fractions.len() < 2 {
            return bad("regime II needs at least two fractions".into());
        }
        if self.commutator.fine_n <= self.commutator.coarse_n {
            return bad("commutator fine_n must exceed coarse_n".into());
        }
        self.profile.resolve().map_err(|e| Error::Config(e.to_string()))?;
        self.regimes.regime_iii_profile.resolve().map_err(|e| Error::Config(e.to_string()))?;
        Ok(())
    }

    pub fn enabled(&self, id: &str) -> bool {
        self.checks.is_empty() || self.checks.iter().any(|c| c == id)
    }

    /// Mode cap for the decomposition stage.
    pub fn k_max(&self) -> usize {
        self.k_max.unwrap_or(self.grid.k_max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_object_is_the_default() {
        assert_eq!(SuiteConfig::from_json("{}").unwrap(), SuiteConfig::default());
    }

    #[test]
    fn partial_grid_keys_fill_from_defaults() {
        let cfg = SuiteConfig::from_json(r#"{"grid": {"n_per_axis": 7, "gamma": -1.0}, "profile": "cosine_bump"}"#).unwrap();
        assert_eq!(cfg.grid.n_per_axis, 7);
        assert_eq!(cfg.grid.radius, GridSpec::default().radius);
        assert_eq!(cfg.profile, ProfileChoice::Named("cosine_bump".into()));
    }

    #[test]
    fn custom_profile_object() {
        let text = r#"{"profile": {"spatial": {"kind": "cosine_bump", "half_width": 0.3},
                       "velocity": {"kind": "gaussian_ratio", "shift": [0.2, 0, 0], "temperature": 0.9}}}"#;
        let cfg = SuiteConfig::from_json(text).unwrap();
        assert!(matches!(cfg.profile, ProfileChoice::Custom(_)));
    }

    #[test]
    fn rejects_malformed() {
        for text in [
            "{",
            r#"{"bogus": 1}"#,
            r#"{"grid": {"n_per_axis": 8}}"#,
            r#"{"grid": {"spacing": 1}}"#,
            r#"{"profile": "nope"}"#,
            r#"{"checks": ["A12"]}"#,
            r#"{"gammas": []}"#,
        ] {
            assert!(matches!(SuiteConfig::from_json(text), Err(Error::Config(_))), "{text}");
        }
    }

    #[test]
    fn chain_times_are_increasing_from_zero() {
        let ts = ChainSettings::default().times();
        assert_eq!(ts[0], 0.0);
        assert!(ts.windows(2).all(|w| w[1] > w[0]));
        assert!((ts[ts.len() - 1] - 30.0).abs() < 1e-9);
    }
}
