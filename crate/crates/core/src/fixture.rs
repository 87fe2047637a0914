//! Synthetic Red-Line-like test line, embedded so tests and benches need no
//! files on disk.
//!
//! 13 trunk stations split into a 4-station Ashmont branch and a 5-station
//! Braintree branch; PM-peak demand is synthetic and Braintree-heavy.

use std::path::Path;

use crate::config::{ConfigError, ScenarioConfig};
use crate::risk::{GroupBasis, InfectionRates};
use crate::scenario::Scenario;

pub const TOPOLOGY: &str = include_str!("../fixtures/redline/topology.json");
pub const OD_CSV: &str = include_str!("../fixtures/redline/od.csv");
pub const SCENARIO: &str = include_str!("../fixtures/redline/scenario.json");

/// Directory holding the fixture files in the source tree.
pub fn dir() -> &'static Path {
    Path::new(concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures/redline"))
}

pub fn config() -> Result<ScenarioConfig, ConfigError> {
    ScenarioConfig::from_json_str(SCENARIO, &dir().join("scenario.json"))
}

/// The base case.
pub fn redline() -> Result<Scenario, ConfigError> {
    let d = dir();
    config()?.build(
        TOPOLOGY,
        OD_CSV,
        &d.join("scenario.json"),
        &d.join("topology.json"),
        &d.join("od.csv"),
    )
}

/// Carrier rates by line section: trunk 0.8%, Braintree 0.5%, Ashmont 1.5%.
pub fn spatial_rates() -> InfectionRates {
    InfectionRates::ByGroup {
        basis: GroupBasis::Branch,
        rates: [("trunk", 0.008), ("braintree", 0.005), ("ashmont", 0.015)]
            .into_iter()
            .map(|(g, r)| (g.to_string(), r))
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    #[test]
    fn loads() {
        let s = super::redline().unwrap();
        assert_eq!(s.topology.len(), 22);
        assert_eq!(s.topology.branch_count(), 2);
        assert!(s.demand.len() > 100);
    }
}
