//! Run configuration: one TOML file drives every subcommand.
//!
//! Unknown keys are rejected so typos fail loudly. The `[model]` table is
//! required; `[truncation]` pins the Fock cutoff, otherwise commands
//! auto-converge with `[convergence].energy_tol`. Command-specific tables
//! are optional and carry their own defaults.

use serde::{Deserialize, Serialize};

use dicke_dft::{ModelParams, Truncation};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelParams,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truncation: Option<Truncation>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub convergence: Option<Convergence>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spectrum: Option<SpectrumConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub curve: Option<CurveConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub functional: Option<FunctionalConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub adiabatic: Option<AdiabaticConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub regular_set: Option<RegularSetConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hk_scan: Option<HkScanConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Convergence {
    pub energy_tol: f64,
}

fn default_k() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectrumConfig {
    /// Number of lowest eigenpairs.
    #[serde(default = "default_k")]
    pub k: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub v: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub j: Option<Vec<f64>>,
}

impl Default for SpectrumConfig {
    fn default() -> Self {
        SpectrumConfig {
            k: 1,
            v: None,
            j: None,
        }
    }
}

fn default_sigma_points() -> usize {
    41
}

fn default_sigma_max() -> f64 {
    0.99
}

fn default_tol() -> f64 {
    1e-8
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CurveConfig {
    pub lambdas: Vec<f64>,
    #[serde(default = "default_sigma_points")]
    pub sigma_points: usize,
    #[serde(default = "default_sigma_max")]
    pub sigma_max: f64,
    #[serde(default)]
    pub xi: f64,
    #[serde(default = "default_tol")]
    pub tol: f64,
    /// Evaluate through the constrained search instead of the inverse map
    /// (required for models beyond one spin and one mode).
    #[serde(default)]
    pub use_constrained_search: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FunctionalTarget {
    pub sigma: Vec<f64>,
    pub xi: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FunctionalConfig {
    pub targets: Vec<FunctionalTarget>,
    /// "fll", "fl" or "both".
    #[serde(default = "default_kind")]
    pub kind: String,
    #[serde(default = "default_tol")]
    pub tol: f64,
}

fn default_kind() -> String {
    "both".into()
}

fn default_quad_tol() -> f64 {
    1e-6
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdiabaticConfig {
    /// One magnetization vector per trace.
    pub sigmas: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub xi: Option<Vec<f64>>,
    #[serde(default = "default_quad_tol")]
    pub quad_tol: f64,
    /// Disable warm-start chaining along s.
    #[serde(default)]
    pub independent_nodes: bool,
}

fn default_samples() -> usize {
    100_000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegularSetConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_spins: Option<usize>,
    #[serde(default = "default_samples")]
    pub samples: usize,
}

fn default_grid() -> usize {
    5
}

fn default_range() -> f64 {
    1.0
}

fn default_hk_tol() -> f64 {
    1e-6
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HkScanConfig {
    #[serde(default = "default_grid")]
    pub nv: usize,
    #[serde(default = "default_grid")]
    pub nj: usize,
    #[serde(default = "default_range")]
    pub range: f64,
    #[serde(default = "default_hk_tol")]
    pub tol: f64,
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, String> {
        toml::from_str(text).map_err(|e| e.to_string())
    }

    pub fn load(path: &std::path::Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| format!("cannot read {}: {e}", path.display()))?;
        Self::from_toml_str(&text)
    }
}
