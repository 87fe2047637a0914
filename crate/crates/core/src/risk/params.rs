use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::RiskError;
use crate::demand::OdPair;
use crate::topology::{LineTopology, Placement};

/// Virus and cabin environment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VirusEnv {
    /// Quanta generation rate `q`, quanta/hour.
    pub quanta_rate: f64,
    /// Breathing rate `p`, m³/hour.
    pub breathing_rate: f64,
    /// Clean-air ventilation `Q` of one car, m³/hour.
    pub ventilation: f64,
    /// Fraction of riders wearing masks, `f_m`.
    pub mask_fraction: f64,
    /// Share of exhaled particles passing an infector's mask, `R_m`.
    pub exhale_penetration: f64,
    /// Share of particles passing a susceptible rider's mask, `F_m`.
    pub inhale_penetration: f64,
}

impl Default for VirusEnv {
    fn default() -> Self {
        VirusEnv {
            quanta_rate: 270.0,
            breathing_rate: 0.72,
            ventilation: 1958.0,
            mask_fraction: 0.0,
            exhale_penetration: 0.5,
            inhale_penetration: 0.5,
        }
    }
}

fn check_fraction(name: &str, v: f64) -> Result<(), RiskError> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(RiskError::InvalidParam(format!("{name} must lie in [0, 1], got {v}")))
    }
}

fn check_nonnegative(name: &str, v: f64) -> Result<(), RiskError> {
    if v.is_finite() && v >= 0.0 {
        Ok(())
    } else {
        Err(RiskError::InvalidParam(format!("{name} must be a non-negative number, got {v}")))
    }
}

impl VirusEnv {
    pub fn validate(&self) -> Result<(), RiskError> {
        check_nonnegative("quanta_rate", self.quanta_rate)?;
        check_nonnegative("breathing_rate", self.breathing_rate)?;
        if !(self.ventilation.is_finite() && self.ventilation > 0.0) {
            return Err(RiskError::InvalidParam(format!(
                "ventilation must be positive, got {}",
                self.ventilation
            )));
        }
        check_fraction("mask_fraction", self.mask_fraction)?;
        check_fraction("exhale_penetration", self.exhale_penetration)?;
        check_fraction("inhale_penetration", self.inhale_penetration)
    }

    /// Carrier-hours to per-carrier exponent: `p q / Q`.
    pub fn dose_per_carrier_hour(&self) -> f64 {
        self.breathing_rate * self.quanta_rate / self.ventilation
    }
}

/// Multipliers on base-case infectiousness, headway, demand, travel time and ventilation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScalingFactors {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub delta: f64,
    pub epsilon: f64,
}

impl Default for ScalingFactors {
    fn default() -> Self {
        ScalingFactors {
            alpha: 1.0,
            beta: 1.0,
            gamma: 1.0,
            delta: 1.0,
            epsilon: 1.0,
        }
    }
}

impl ScalingFactors {
    pub fn validate(&self) -> Result<(), RiskError> {
        for (name, v) in [
            ("alpha", self.alpha),
            ("beta", self.beta),
            ("gamma", self.gamma),
            ("delta", self.delta),
            ("epsilon", self.epsilon),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(RiskError::InvalidParam(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

/// Viral-load and passenger-load meta-parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetaParams {
    pub a: f64,
    pub b: f64,
}

/// `A = αδ/ε · (1 − f_m(1 − R_m)) · F_m`
pub fn meta_a(
    factors: &ScalingFactors,
    mask_fraction: f64,
    exhale_penetration: f64,
    inhale_penetration: f64,
) -> Result<f64, RiskError> {
    if factors.epsilon == 0.0 {
        return Err(RiskError::ZeroVentilation);
    }
    Ok(source_strength(factors, mask_fraction, exhale_penetration) * inhale_penetration)
}

/// `B = βγ`
pub fn meta_b(factors: &ScalingFactors) -> f64 {
    factors.beta * factors.gamma
}

// A without the susceptible's own mask term
fn source_strength(factors: &ScalingFactors, mask_fraction: f64, exhale_penetration: f64) -> f64 {
    factors.alpha * factors.delta / factors.epsilon * (1.0 - mask_fraction * (1.0 - exhale_penetration))
}

/// Per-carrier exponent multipliers for masked and unmasked susceptibles,
/// applied to the base-case exposure unit `p q° t° / Q°`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ViralLoad {
    pub masked: f64,
    pub unmasked: f64,
}

impl ViralLoad {
    /// Masked multiplier is `A`; unmasked drops the `F_m` term, `A / F_m`.
    pub fn from_meta(a: f64, inhale_penetration: f64) -> Result<Self, RiskError> {
        check_nonnegative("A", a)?;
        check_fraction("inhale_penetration", inhale_penetration)?;
        if inhale_penetration == 0.0 {
            return Err(RiskError::InvalidParam(
                "unmasked viral load is undefined from A when F_m = 0".into(),
            ));
        }
        Ok(ViralLoad {
            masked: a,
            unmasked: a / inhale_penetration,
        })
    }

    pub fn from_factors(factors: &ScalingFactors, env: &VirusEnv) -> Result<Self, RiskError> {
        factors.validate()?;
        env.validate()?;
        let a = meta_a(factors, env.mask_fraction, env.exhale_penetration, env.inhale_penetration)?;
        if env.inhale_penetration > 0.0 {
            Self::from_meta(a, env.inhale_penetration)
        } else {
            Ok(ViralLoad {
                masked: a,
                unmasked: source_strength(factors, env.mask_fraction, env.exhale_penetration),
            })
        }
    }
}

/// Which station's group sets the carrier rate of an OD pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GroupBasis {
    Origin,
    Destination,
    /// Branch-bound trips take their branch station's group, trunk trips the origin's.
    #[default]
    Branch,
}

/// Carrier (infection) rate field `π`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum InfectionRates {
    Uniform(f64),
    ByGroup {
        #[serde(default)]
        basis: GroupBasis,
        rates: BTreeMap<String, f64>,
    },
}

impl Default for InfectionRates {
    fn default() -> Self {
        InfectionRates::Uniform(0.0092)
    }
}

impl InfectionRates {
    pub fn validate(&self) -> Result<(), RiskError> {
        match self {
            InfectionRates::Uniform(r) => check_fraction("infection rate", *r),
            InfectionRates::ByGroup { rates, .. } => rates
                .iter()
                .try_for_each(|(g, r)| check_fraction(&format!("infection rate of `{g}`"), *r)),
        }
    }

    pub fn rate_for(&self, topo: &LineTopology, pair: OdPair) -> Result<f64, RiskError> {
        match self {
            InfectionRates::Uniform(r) => Ok(*r),
            InfectionRates::ByGroup { basis, rates } => {
                let station = match basis {
                    GroupBasis::Origin => pair.origin,
                    GroupBasis::Destination => pair.destination,
                    GroupBasis::Branch => match topo.placement(pair.destination) {
                        Placement::Branch(_) => pair.destination,
                        Placement::Trunk => pair.origin,
                    },
                };
                let group = &topo.station(station).group;
                rates
                    .get(group)
                    .copied()
                    .ok_or_else(|| RiskError::UnknownGroup(group.clone()))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() < 1e-12
    }

    #[test]
    fn meta_a_values() {
        let base = ScalingFactors::default();
        assert!(close(meta_a(&base, 0.0, 0.5, 0.5).unwrap(), 0.5));
        let f = ScalingFactors { alpha: 1.2, ..base };
        assert!(close(meta_a(&f, 0.0, 0.5, 0.5).unwrap(), 0.6));
        assert_eq!(meta_a(&base, 1.0, 0.0, 0.5).unwrap(), 0.0);
        let f = ScalingFactors { epsilon: 0.0, ..base };
        assert_eq!(meta_a(&f, 0.0, 0.5, 0.5), Err(RiskError::ZeroVentilation));
    }

    #[test]
    fn meta_b_values() {
        let base = ScalingFactors::default();
        assert_eq!(meta_b(&base), 1.0);
        assert!(close(meta_b(&ScalingFactors { beta: 0.85, ..base }), 0.85));
        assert_eq!(meta_b(&ScalingFactors { gamma: 0.0, ..base }), 0.0);
    }

    #[test]
    fn viral_load_split() {
        let env = VirusEnv::default();
        let v = ViralLoad::from_factors(&ScalingFactors::default(), &env).unwrap();
        assert_eq!(v.masked, 0.5);
        assert_eq!(v.unmasked, 1.0);
        let open = VirusEnv { inhale_penetration: 0.0, ..env };
        let v = ViralLoad::from_factors(&ScalingFactors::default(), &open).unwrap();
        assert_eq!((v.masked, v.unmasked), (0.0, 1.0));
        assert!(ViralLoad::from_meta(0.5, 0.0).is_err());
    }

    #[test]
    fn env_validation() {
        assert!(VirusEnv::default().validate().is_ok());
        assert!(VirusEnv { ventilation: 0.0, ..Default::default() }.validate().is_err());
        assert!(VirusEnv { mask_fraction: 1.5, ..Default::default() }.validate().is_err());
        assert!(VirusEnv { quanta_rate: -1.0, ..Default::default() }.validate().is_err());
    }

    #[test]
    fn rates_parse_from_json() {
        let u: InfectionRates = serde_json::from_str("0.01").unwrap();
        assert_eq!(u, InfectionRates::Uniform(0.01));
        let g: InfectionRates =
            serde_json::from_str(r#"{"rates": {"trunk": 0.008, "ashmont": 0.015}}"#).unwrap();
        assert!(matches!(g, InfectionRates::ByGroup { basis: GroupBasis::Branch, .. }));
    }
}
