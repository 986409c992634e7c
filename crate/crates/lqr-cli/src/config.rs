//! Experiment configuration: a flat TOML document plus CLI overrides.

use std::path::Path;
use std::str::FromStr;

use serde::Deserialize;

use crate::error::{CliError, CliResult};
use crate::instances::{self, Instance};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OfflineAlgorithm {
    Nominal,
    PgSimple,
    PgVf,
    Dfo,
    LspiV1,
    LspiV2,
    Optimal,
}

impl OfflineAlgorithm {
    pub const ALL: [OfflineAlgorithm; 7] = [
        OfflineAlgorithm::Nominal,
        OfflineAlgorithm::PgSimple,
        OfflineAlgorithm::PgVf,
        OfflineAlgorithm::Dfo,
        OfflineAlgorithm::LspiV1,
        OfflineAlgorithm::LspiV2,
        OfflineAlgorithm::Optimal,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            OfflineAlgorithm::Nominal => "nominal",
            OfflineAlgorithm::PgSimple => "pg_simple",
            OfflineAlgorithm::PgVf => "pg_vf",
            OfflineAlgorithm::Dfo => "dfo",
            OfflineAlgorithm::LspiV1 => "lspi_v1",
            OfflineAlgorithm::LspiV2 => "lspi_v2",
            OfflineAlgorithm::Optimal => "optimal",
        }
    }
}

impl FromStr for OfflineAlgorithm {
    type Err = CliError;
    fn from_str(s: &str) -> CliResult<Self> {
        Self::ALL
            .into_iter()
            .find(|a| a.tag() == s)
            .ok_or_else(|| {
                CliError::Config(format!(
                    "key `algorithms`: unknown offline algorithm `{s}` (expected one of {})",
                    Self::ALL.map(|a| a.tag()).join(", ")
                ))
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OnlineAlgorithm {
    LspiAdaptive,
    NominalAdaptive,
    Optimal,
}

impl OnlineAlgorithm {
    pub const ALL: [OnlineAlgorithm; 3] = [
        OnlineAlgorithm::LspiAdaptive,
        OnlineAlgorithm::NominalAdaptive,
        OnlineAlgorithm::Optimal,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            OnlineAlgorithm::LspiAdaptive => "lspi_adaptive",
            OnlineAlgorithm::NominalAdaptive => "nominal_adaptive",
            OnlineAlgorithm::Optimal => "optimal",
        }
    }
}

impl FromStr for OnlineAlgorithm {
    type Err = CliError;
    fn from_str(s: &str) -> CliResult<Self> {
        Self::ALL
            .into_iter()
            .find(|a| a.tag() == s)
            .ok_or_else(|| {
                CliError::Config(format!(
                    "key `algorithms`: unknown online algorithm `{s}` (expected one of {})",
                    Self::ALL.map(|a| a.tag()).join(", ")
                ))
            })
    }
}

/// Named schedule presets for the online experiment.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OnlinePreset {
    /// Linear epochs, step-ladder inner iterations, warm start, cumulative
    /// data, LSPI with data reuse inside each estimation call.
    PaperOnline,
    /// Doubling epochs, linear-in-epoch inner iterations, per-epoch data,
    /// LSPI with fresh data per inner iteration.
    TheoryOnline,
}

impl FromStr for OnlinePreset {
    type Err = CliError;
    fn from_str(s: &str) -> CliResult<Self> {
        match s {
            "online-paper" | "paper-online" => Ok(OnlinePreset::PaperOnline),
            "theory-online" => Ok(OnlinePreset::TheoryOnline),
            other => Err(CliError::Config(format!(
                "key `preset`: unknown online preset `{other}` (expected online-paper or theory-online)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct RawConfig {
    pub instance: Option<String>,
    pub algorithms: Option<Vec<String>>,
    pub trials: Option<usize>,
    pub seed: Option<u64>,
    pub budget: Option<usize>,
    pub horizon: Option<usize>,
    pub checkpoints: Option<usize>,
    pub preset: Option<String>,
    pub format: Option<String>,

    // offline hyperparameters
    pub rollout_len: Option<usize>,
    pub pg_sigma_eta: Option<f64>,
    pub pg_step: Option<f64>,
    pub dfo_sigma_eta: Option<f64>,
    pub dfo_step: Option<f64>,
    pub sigma_u: Option<f64>,
    pub lspi_v1_iters: Option<usize>,
    pub lspi_v2_iters: Option<usize>,
    pub lspi_sigma_eta: Option<f64>,

    // online hyperparameters
    pub epochs: Option<usize>,
    pub t_mult: Option<usize>,
    pub count_warm_start_regret: Option<bool>,
    pub inner_solver: Option<String>,
}

impl RawConfig {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("config file {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::Config(format!("config file: {e}")))
    }
}

/// Output serialization formats.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputFormat {
    Csv,
    Json,
    Both,
}

impl FromStr for OutputFormat {
    type Err = CliError;
    fn from_str(s: &str) -> CliResult<Self> {
        match s {
            "csv" => Ok(OutputFormat::Csv),
            "json" => Ok(OutputFormat::Json),
            "both" => Ok(OutputFormat::Both),
            other => Err(CliError::Config(format!(
                "key `format`: unknown output format `{other}` (expected csv, json, or both)"
            ))),
        }
    }
}

fn resolve_instance(name: Option<&str>, default: &str) -> CliResult<Instance> {
    let name = name.unwrap_or(default);
    match name {
        "offline-paper" => Ok(instances::offline_paper()),
        "adaptive-dean" => Ok(instances::adaptive_dean()),
        path => instances::load_custom(Path::new(path)),
    }
}

/// Fully resolved offline experiment settings.
#[derive(Debug, Clone)]
pub struct OfflineConfig {
    pub instance: Instance,
    pub algorithms: Vec<OfflineAlgorithm>,
    pub trials: usize,
    pub seed: u64,
    /// Simulation-step budget per trial.
    pub budget: usize,
    /// Number of log-spaced checkpoints at which the current gain is scored.
    pub checkpoints: usize,
    /// Rollout horizon per gradient iteration.
    pub rollout_len: usize,
    pub pg_sigma_eta: f64,
    pub pg_step: f64,
    pub dfo_sigma_eta: f64,
    pub dfo_step: f64,
    /// Input noise std for the nominal model-fitting rollouts.
    pub sigma_u: f64,
    pub lspi_v1_iters: usize,
    pub lspi_v2_iters: usize,
    pub lspi_sigma_eta: f64,
    pub format: OutputFormat,
}

impl OfflineConfig {
    pub fn from_raw(raw: &RawConfig) -> CliResult<Self> {
        let algorithms = match &raw.algorithms {
            None => OfflineAlgorithm::ALL.to_vec(),
            Some(list) => list
                .iter()
                .map(|s| s.parse())
                .collect::<CliResult<Vec<_>>>()?,
        };
        let cfg = Self {
            instance: resolve_instance(raw.instance.as_deref(), "offline-paper")?,
            algorithms,
            trials: raw.trials.unwrap_or(100),
            seed: raw.seed.unwrap_or(0),
            budget: raw.budget.unwrap_or(1_000_000),
            checkpoints: raw.checkpoints.unwrap_or(20),
            rollout_len: raw.rollout_len.unwrap_or(100),
            pg_sigma_eta: raw.pg_sigma_eta.unwrap_or(1.0),
            pg_step: raw.pg_step.unwrap_or(1e-5),
            dfo_sigma_eta: raw.dfo_sigma_eta.unwrap_or(1e-3),
            dfo_step: raw.dfo_step.unwrap_or(1e-4),
            sigma_u: raw.sigma_u.unwrap_or(1.0),
            lspi_v1_iters: raw.lspi_v1_iters.unwrap_or(15),
            lspi_v2_iters: raw.lspi_v2_iters.unwrap_or(3),
            lspi_sigma_eta: raw.lspi_sigma_eta.unwrap_or(1.0),
            format: raw.format.as_deref().unwrap_or("csv").parse()?,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> CliResult<()> {
        if self.trials == 0 {
            return Err(CliError::Config("key `trials`: must be >= 1".into()));
        }
        if self.rollout_len == 0 {
            return Err(CliError::Config("key `rollout_len`: must be >= 1".into()));
        }
        for (key, v) in [
            ("pg_sigma_eta", self.pg_sigma_eta),
            ("dfo_sigma_eta", self.dfo_sigma_eta),
            ("lspi_sigma_eta", self.lspi_sigma_eta),
            ("sigma_u", self.sigma_u),
        ] {
            if v <= 0.0 {
                return Err(CliError::Config(format!("key `{key}`: must be > 0")));
            }
        }
        Ok(())
    }
}

/// Fully resolved online experiment settings.
#[derive(Debug, Clone)]
pub struct OnlineConfig {
    pub instance: Instance,
    pub algorithms: Vec<OnlineAlgorithm>,
    pub trials: usize,
    pub seed: u64,
    pub preset: OnlinePreset,
    /// Adaptive steps after the warm start (paper preset) or epoch count
    /// override (theory preset uses `epochs`).
    pub horizon: usize,
    pub epochs: usize,
    pub t_mult: usize,
    pub count_warm_start_regret: Option<bool>,
    /// Override for the inner estimator of `lspi_adaptive`.
    pub inner_solver: Option<lqr::adaptive::InnerSolver>,
    pub format: OutputFormat,
}

impl OnlineConfig {
    pub fn from_raw(raw: &RawConfig) -> CliResult<Self> {
        let algorithms = match &raw.algorithms {
            None => OnlineAlgorithm::ALL.to_vec(),
            Some(list) => list
                .iter()
                .map(|s| s.parse())
                .collect::<CliResult<Vec<_>>>()?,
        };
        let inner_solver = match raw.inner_solver.as_deref() {
            None => None,
            Some("lspi_v1") => Some(lqr::adaptive::InnerSolver::LspiV1),
            Some("lspi_v2") => Some(lqr::adaptive::InnerSolver::LspiV2),
            Some(other) => {
                return Err(CliError::Config(format!(
                    "key `inner_solver`: unknown solver `{other}` (expected lspi_v1 or lspi_v2)"
                )))
            }
        };
        let cfg = Self {
            instance: resolve_instance(raw.instance.as_deref(), "adaptive-dean")?,
            algorithms,
            trials: raw.trials.unwrap_or(100),
            seed: raw.seed.unwrap_or(0),
            preset: raw.preset.as_deref().unwrap_or("online-paper").parse()?,
            horizon: raw.horizon.unwrap_or(10_000),
            epochs: raw.epochs.unwrap_or(8),
            t_mult: raw.t_mult.unwrap_or(500),
            count_warm_start_regret: raw.count_warm_start_regret,
            inner_solver,
            format: raw.format.as_deref().unwrap_or("csv").parse()?,
        };
        if cfg.trials == 0 {
            return Err(CliError::Config("key `trials`: must be >= 1".into()));
        }
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_without_config_file() {
        let cfg = OfflineConfig::from_raw(&RawConfig::default()).unwrap();
        assert_eq!(cfg.trials, 100);
        assert_eq!(cfg.budget, 1_000_000);
        assert_eq!(cfg.algorithms.len(), 7);
        assert_eq!(cfg.instance.name, "offline-paper");
        assert_eq!(cfg.pg_step, 1e-5);
        assert_eq!(cfg.dfo_sigma_eta, 1e-3);

        let cfg = OnlineConfig::from_raw(&RawConfig::default()).unwrap();
        assert_eq!(cfg.preset, OnlinePreset::PaperOnline);
        assert_eq!(cfg.horizon, 10_000);
        assert_eq!(cfg.instance.name, "adaptive-dean");
    }

    #[test]
    fn unknown_key_is_named_in_error() {
        let err = toml::from_str::<RawConfig>("not_a_key = 3").unwrap_err();
        assert!(err.to_string().contains("not_a_key"));
    }

    #[test]
    fn unknown_algorithm_is_rejected() {
        let raw = RawConfig {
            algorithms: Some(vec!["q_learning".into()]),
            ..RawConfig::default()
        };
        let err = OfflineConfig::from_raw(&raw).unwrap_err();
        assert!(err.to_string().contains("q_learning"));
    }

    #[test]
    fn zero_trials_rejected() {
        let raw = RawConfig { trials: Some(0), ..RawConfig::default() };
        assert!(OfflineConfig::from_raw(&raw).is_err());
    }
}
