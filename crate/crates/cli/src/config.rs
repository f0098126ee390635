//! Run configuration: one flat struct shared by every subcommand, mirrored
//! one-to-one by the TOML config file and echoed into output manifests.

use serde::{Deserialize, Serialize};

fn default_horizon() -> f64 {
    1.0
}
fn default_n_paths() -> u64 {
    100_000
}
fn default_h() -> f64 {
    1e-3
}
fn default_max_steps() -> u64 {
    100_000_000
}
fn default_tolerance() -> f64 {
    1.5e-3
}
fn default_mc_slack() -> f64 {
    0.01
}
fn default_r_min() -> f64 {
    1e-3
}
fn default_r_max() -> f64 {
    1e3
}
fn default_r_points() -> usize {
    200
}
fn default_walkers() -> u64 {
    100_000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// One of: solve-mc, solve-quad, compare, density, octrw, residual,
    /// reduce-history.
    pub command: String,
    /// Kernel spec, e.g. `stable:0.5`, `tempered:0.5,1.0`,
    /// `tabulated:nu.csv`.
    #[serde(default)]
    pub kernel: Option<String>,
    /// Spatial spec: `free-bm:1`, `killed-interval[:a,b]`,
    /// `reflected-half-line`, `spectral-interval:0.5`.
    #[serde(default)]
    pub spatial: Option<String>,
    /// Data form: `history` (default) or `caputo`.
    #[serde(default)]
    pub form: Option<String>,
    /// History datum (history form).
    #[serde(default)]
    pub phi: Option<String>,
    /// Initial datum (caputo form).
    #[serde(default)]
    pub phi0: Option<String>,
    /// Forcing term.
    #[serde(default)]
    pub forcing: Option<String>,
    #[serde(default = "default_horizon")]
    pub horizon: f64,
    #[serde(default)]
    pub t_grid: Vec<f64>,
    #[serde(default)]
    pub x_grid: Vec<f64>,
    #[serde(default = "default_n_paths")]
    pub n_paths: u64,
    #[serde(default = "default_h")]
    pub h: f64,
    #[serde(default = "default_max_steps")]
    pub max_steps: u64,
    #[serde(default)]
    pub seed: u64,
    /// Quadrature accuracy target.
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
    /// Absolute slack added to the 3-SE band in `compare`.
    #[serde(default = "default_mc_slack")]
    pub mc_slack: f64,
    /// Evaluation level for `density`.
    #[serde(default)]
    pub t: Option<f64>,
    #[serde(default = "default_r_min")]
    pub r_min: f64,
    #[serde(default = "default_r_max")]
    pub r_max: f64,
    #[serde(default = "default_r_points")]
    pub r_points: usize,
    /// Tail index for `octrw`.
    #[serde(default)]
    pub alpha: Option<f64>,
    #[serde(default)]
    pub scales: Vec<u64>,
    #[serde(default = "default_walkers")]
    pub walkers: u64,
    #[serde(default)]
    pub bins: Option<usize>,
    #[serde(default)]
    pub hist_lo: Option<f64>,
    #[serde(default)]
    pub hist_hi: Option<f64>,
    /// `sweep` (default) or `hist` for `octrw`.
    #[serde(default)]
    pub octrw_mode: Option<String>,
    /// `strong`, `weak` or `duality` for `residual`.
    #[serde(default)]
    pub residual_kind: Option<String>,
    /// Output CSV path.
    #[serde(default)]
    pub output: Option<String>,
    /// Worker threads; defaults to `CEE_WORKERS` or the machine parallelism.
    /// Affects wall time only, never results.
    #[serde(default)]
    pub workers: Option<usize>,
}

impl RunConfig {
    pub fn new(command: &str) -> Self {
        Self {
            command: command.to_string(),
            kernel: None,
            spatial: None,
            form: None,
            phi: None,
            phi0: None,
            forcing: None,
            horizon: default_horizon(),
            t_grid: Vec::new(),
            x_grid: Vec::new(),
            n_paths: default_n_paths(),
            h: default_h(),
            max_steps: default_max_steps(),
            seed: 0,
            tolerance: default_tolerance(),
            mc_slack: default_mc_slack(),
            t: None,
            r_min: default_r_min(),
            r_max: default_r_max(),
            r_points: default_r_points(),
            alpha: None,
            scales: Vec::new(),
            walkers: default_walkers(),
            bins: None,
            hist_lo: None,
            hist_hi: None,
            octrw_mode: None,
            residual_kind: None,
            output: None,
            workers: None,
        }
    }

    /// Serialize to the canonical TOML form used by config files and
    /// manifests.
    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn from_toml(s: &str) -> Result<Self, String> {
        toml::from_str::<RunConfig>(s).map_err(|e| e.to_string())
    }
}

/// A manifest document: the config echo plus run metadata. Feeding a
/// manifest back through `--config` re-runs the identical configuration.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ManifestDoc {
    pub config: RunConfig,
    #[serde(default)]
    pub result: Option<ManifestResult>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ManifestResult {
    pub version: String,
    pub wall_ms: u64,
    pub rows: usize,
}

/// Load a config file, accepting either a bare `RunConfig` or a manifest
/// with a `[config]` table.
pub fn load_config_file(path: &str) -> Result<RunConfig, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("{path}: {e}"))?;
    if let Ok(doc) = toml::from_str::<ManifestDoc>(&text) {
        return Ok(doc.config);
    }
    RunConfig::from_toml(&text)
}
