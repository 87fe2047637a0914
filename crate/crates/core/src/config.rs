//! Scenario configuration files.
//!
//! Every section is optional; missing values take the base-case defaults
//! (see [`VirusEnv::default`], [`ServiceConfig::default`]). Only the two
//! input paths are required.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::demand::{DemandError, OdDemand, ServicePlan};
use crate::risk::{InfectionRates, RiskError, RiskOptions, ScalingFactors, VirusEnv};
use crate::scenario::Scenario;
use crate::topology::{LineTopology, TopologyError};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {reason}")]
    File { path: String, reason: String },
    #[error("{path}: {reason}")]
    Parse { path: String, reason: String },
    #[error("{path}: field `{field}`: {reason}")]
    Invalid {
        path: String,
        field: String,
        reason: String,
    },
    #[error("{path}: {source}")]
    Topology { path: String, source: TopologyError },
    #[error("{path}: {source}")]
    Demand { path: String, source: DemandError },
}

impl ConfigError {
    pub fn code(&self) -> &'static str {
        match self {
            ConfigError::File { .. } => "file",
            ConfigError::Parse { .. } => "parse",
            ConfigError::Invalid { .. } => "invalid_config",
            ConfigError::Topology { source, .. } => source.code(),
            ConfigError::Demand { source, .. } => source.code(),
        }
    }
}

fn default_interval() -> f64 {
    15.0
}

/// Headways in minutes, as timetables state them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ServiceConfig {
    pub branch_headway_min: f64,
    /// Defaults to an even split of the branch headway.
    pub h_ab_min: Option<f64>,
    pub cars_per_train: usize,
    /// Defaults to equal shares.
    pub car_shares: Option<Vec<f64>>,
    pub period: String,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        ServiceConfig {
            branch_headway_min: 9.0,
            h_ab_min: None,
            cars_per_train: 6,
            car_shares: None,
            period: "pm-peak".into(),
        }
    }
}

impl ServiceConfig {
    pub fn plan(&self) -> Result<ServicePlan, DemandError> {
        let headway = self.branch_headway_min / 60.0;
        let h_ab = self.h_ab_min.map_or(headway / 2.0, |m| m / 60.0);
        let shares = match &self.car_shares {
            Some(s) => {
                if s.len() != self.cars_per_train {
                    return Err(DemandError::InvalidShares(format!(
                        "{} shares for {} cars",
                        s.len(),
                        self.cars_per_train
                    )));
                }
                s.clone()
            }
            None if self.cars_per_train == 0 => {
                return Err(DemandError::InvalidShares("a train needs at least one car".into()))
            }
            None => vec![1.0 / self.cars_per_train as f64; self.cars_per_train],
        };
        ServicePlan::new(headway, h_ab, shares, self.period.clone())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputOptions {
    /// Report probabilities per 1000 riders in CSV output.
    pub per_1000: bool,
    /// Significant digits of CSV numbers.
    pub precision: usize,
}

impl Default for OutputOptions {
    fn default() -> Self {
        OutputOptions {
            per_1000: false,
            precision: crate::format::CSV_DIGITS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    /// Relative paths resolve against the config file's directory.
    pub topology: PathBuf,
    pub demand: PathBuf,
    #[serde(default = "default_interval")]
    pub interval_minutes: f64,
    #[serde(default)]
    pub virus: VirusEnv,
    #[serde(default)]
    pub infection_rate: InfectionRates,
    #[serde(default)]
    pub factors: ScalingFactors,
    #[serde(default)]
    pub service: ServiceConfig,
    #[serde(default)]
    pub risk: RiskOptions,
    #[serde(default)]
    pub output: OutputOptions,
}

/// A loaded scenario plus what it was loaded from.
#[derive(Debug, Clone)]
pub struct LoadedScenario {
    pub config: ScenarioConfig,
    pub scenario: Scenario,
    /// SHA-256 over the config, topology and demand bytes.
    pub fingerprint: String,
}

fn read(path: &Path) -> Result<String, ConfigError> {
    fs::read_to_string(path).map_err(|e| ConfigError::File {
        path: path.display().to_string(),
        reason: e.to_string(),
    })
}

fn invalid(path: &Path, field: &str, reason: impl ToString) -> ConfigError {
    ConfigError::Invalid {
        path: path.display().to_string(),
        field: field.into(),
        reason: reason.to_string(),
    }
}

impl ScenarioConfig {
    pub fn from_json_str(text: &str, path: &Path) -> Result<Self, ConfigError> {
        serde_json::from_str(text).map_err(|e| ConfigError::Parse {
            path: path.display().to_string(),
            reason: format!("line {} column {}: {e}", e.line(), e.column()),
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<LoadedScenario, ConfigError> {
        let path = path.as_ref();
        let text = read(path)?;
        let config = Self::from_json_str(&text, path)?;
        let base = path.parent().unwrap_or(Path::new("."));
        let topo_path = base.join(&config.topology);
        let demand_path = base.join(&config.demand);
        let topo_text = read(&topo_path)?;
        let demand_text = read(&demand_path)?;
        let scenario = config.build(&topo_text, &demand_text, path, &topo_path, &demand_path)?;
        let mut hasher = Sha256::new();
        for part in [&text, &topo_text, &demand_text] {
            hasher.update((part.len() as u64).to_le_bytes());
            hasher.update(part.as_bytes());
        }
        Ok(LoadedScenario {
            config,
            scenario,
            fingerprint: hex::encode(hasher.finalize()),
        })
    }

    /// Builds the scenario from already-read topology JSON and OD CSV text.
    pub fn build(
        &self,
        topology: &str,
        demand: &str,
        config_path: &Path,
        topo_path: &Path,
        demand_path: &Path,
    ) -> Result<Scenario, ConfigError> {
        let risk_field = |field: &str| {
            let field = field.to_string();
            move |e: RiskError| invalid(config_path, &field, e)
        };
        self.virus.validate().map_err(risk_field("virus"))?;
        self.factors.validate().map_err(risk_field("factors"))?;
        self.infection_rate.validate().map_err(risk_field("infection_rate"))?;
        if !(self.interval_minutes.is_finite() && self.interval_minutes > 0.0) {
            return Err(invalid(config_path, "interval_minutes", "must be positive"));
        }
        if self.output.precision == 0 || self.output.precision > 17 {
            return Err(invalid(config_path, "output.precision", "must lie in 1..=17"));
        }
        let plan = self.service.plan().map_err(|e| invalid(config_path, "service", e))?;
        let topology = LineTopology::from_json_str(topology).map_err(|source| ConfigError::Topology {
            path: topo_path.display().to_string(),
            source,
        })?;
        let demand = OdDemand::from_csv(demand.as_bytes(), &topology, self.interval_minutes).map_err(
            |source| ConfigError::Demand {
                path: demand_path.display().to_string(),
                source,
            },
        )?;
        let scenario = Scenario {
            topology,
            demand,
            plan,
            env: self.virus,
            rates: self.infection_rate.clone(),
            factors: self.factors,
            options: self.risk,
        };
        // group names must resolve for every OD pair
        scenario.model().map_err(|e| invalid(config_path, "infection_rate", e))?;
        Ok(scenario)
    }
}
