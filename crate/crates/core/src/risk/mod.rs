//! Wells-Riley risk for riders sharing train cars, aggregated over OD
//! pairs, cars and services.

mod model;
mod params;
mod wells_riley;

use thiserror::Error;

use crate::demand::DemandError;
use crate::topology::TopologyError;

pub use model::{
    system_risk, EvalParams, GroupRisk, OdRisk, RiskModel, RiskOptions, RiskReport, SystemRisk,
};
pub use params::{
    meta_a, meta_b, GroupBasis, InfectionRates, MetaParams, ScalingFactors, ViralLoad, VirusEnv,
};
pub use wells_riley::{
    expected_infections, survival_term, truncation_bound, truncation_tail, wells_riley,
    wells_riley_masked,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RiskError {
    #[error("invalid parameter: {0}")]
    InvalidParam(String),
    #[error("ventilation factor epsilon is zero")]
    ZeroVentilation,
    #[error("no susceptible riders in the evaluated demand")]
    EmptyDemand,
    #[error("no infection rate for station group `{0}`")]
    UnknownGroup(String),
    #[error(transparent)]
    Demand(#[from] DemandError),
    #[error(transparent)]
    Topology(#[from] TopologyError),
}

impl RiskError {
    pub fn code(&self) -> &'static str {
        match self {
            RiskError::InvalidParam(_) => "invalid_param",
            RiskError::ZeroVentilation => "zero_ventilation",
            RiskError::EmptyDemand => "empty_demand",
            RiskError::UnknownGroup(_) => "unknown_group",
            RiskError::Demand(e) => e.code(),
            RiskError::Topology(e) => e.code(),
        }
    }
}
