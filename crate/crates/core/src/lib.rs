//! Schedule-based airborne transmission risk for rail transit lines.
//!
//! The pipeline runs from a [`topology::LineTopology`] and
//! [`demand::OdDemand`] through per-trip train loads into the
//! [`risk::RiskModel`], which evaluates Wells-Riley infection probabilities
//! with Poisson-distributed carriers for every OD pair, car and service.
//! [`scenario`] builds sweeps, solvers and allocation searches on top.

pub mod cli;
pub mod config;
pub mod demand;
pub mod exec;
pub mod fixture;
pub mod format;
pub mod montecarlo;
pub mod risk;
pub mod scenario;
pub mod topology;

pub use demand::{OdDemand, OdPair, ServicePlan};
pub use exec::Exec;
pub use risk::{EvalParams, InfectionRates, RiskModel, RiskReport, ScalingFactors, VirusEnv};
pub use topology::LineTopology;
