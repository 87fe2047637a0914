//! Scenario studies on top of the risk model: two-axis sweeps, trade-off
//! solvers, branch headway allocation, car-load comparison and quanta
//! calibration.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::demand::{validate_shares, DemandError, OdDemand, ServicePlan};
use crate::exec::Exec;
use crate::risk::{
    EvalParams, GroupRisk, InfectionRates, RiskError, RiskModel, RiskOptions, ScalingFactors,
    SystemRisk, ViralLoad, VirusEnv,
};
use crate::topology::LineTopology;

/// Relative tolerance on system probability for [`compensate_b`].
pub const BISECTION_RTOL: f64 = 1e-6;
pub const BISECTION_MAX_ITER: usize = 200;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScenarioError {
    #[error("empty range: {0}")]
    EmptyRange(String),
    #[error("unknown sweep axis `{0}` (expected one of A, B, headway, pi, fm, alpha)")]
    UnknownAxis(String),
    #[error("axes `{0}` and `{1}` cannot be swept together")]
    ExclusiveAxes(String, String),
    #[error(
        "target {target} is outside [{low_value}, {high_value}], the values at B = {low_b} and B = {high_b}"
    )]
    TargetUnreachable {
        target: f64,
        low_b: f64,
        high_b: f64,
        low_value: f64,
        high_value: f64,
    },
    #[error("bisection did not reach the target within {0} iterations")]
    NoConvergence(usize),
    #[error("no mask can reach A = {target}: required F_m = {required}")]
    NoFeasibleMask { target: f64, required: f64 },
    #[error("no mask-wearing share can reach A = {target}: required f_m = {required}")]
    NoFeasibleProportion { target: f64, required: f64 },
    #[error("masks with R_m = 1 do not change the viral load")]
    DegenerateMask,
    #[error("attack rate must lie in [0, 1), got {0}")]
    InvalidAttackRate(f64),
    #[error("invalid parameter: {0}")]
    InvalidParam(String),
    #[error(transparent)]
    Risk(#[from] RiskError),
    #[error(transparent)]
    Demand(#[from] DemandError),
}

impl ScenarioError {
    pub fn code(&self) -> &'static str {
        match self {
            ScenarioError::EmptyRange(_) => "empty_range",
            ScenarioError::UnknownAxis(_) => "unknown_axis",
            ScenarioError::ExclusiveAxes(..) => "exclusive_axes",
            ScenarioError::TargetUnreachable { .. } => "target_unreachable",
            ScenarioError::NoConvergence(_) => "no_convergence",
            ScenarioError::NoFeasibleMask { .. } => "no_feasible_mask",
            ScenarioError::NoFeasibleProportion { .. } => "no_feasible_proportion",
            ScenarioError::DegenerateMask => "degenerate_mask",
            ScenarioError::InvalidAttackRate(_) => "invalid_attack_rate",
            ScenarioError::InvalidParam(_) => "invalid_param",
            ScenarioError::Risk(e) => e.code(),
            ScenarioError::Demand(e) => e.code(),
        }
    }
}

/// Complete base-case inputs.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub topology: LineTopology,
    pub demand: OdDemand,
    pub plan: ServicePlan,
    pub env: VirusEnv,
    pub rates: InfectionRates,
    pub factors: ScalingFactors,
    pub options: RiskOptions,
}

impl Scenario {
    pub fn model(&self) -> Result<RiskModel, ScenarioError> {
        Ok(RiskModel::new(
            &self.topology,
            &self.demand,
            &self.plan,
            &self.env,
            &self.rates,
            self.options,
        )?)
    }

    pub fn base_params(&self) -> Result<EvalParams, ScenarioError> {
        Ok(EvalParams::from_factors(&self.factors, &self.env)?)
    }

    /// Trunk headway of the base plan in hours: the branch headway shared
    /// among the alternating branch patterns.
    pub fn trunk_headway(&self) -> f64 {
        self.plan.branch_headway / self.topology.branch_count().max(1) as f64
    }

    pub fn with_rates(&self, rates: InfectionRates) -> Self {
        Scenario {
            rates,
            ..self.clone()
        }
    }

    pub fn with_plan(&self, plan: ServicePlan) -> Self {
        Scenario {
            plan,
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Axis {
    A,
    B,
    /// Trunk headway in minutes; sets `β = headway / base trunk headway`.
    #[serde(rename = "headway")]
    Headway,
    /// Uniform carrier rate.
    #[serde(rename = "pi")]
    Pi,
    /// Mask-wearing share.
    #[serde(rename = "fm")]
    Fm,
    #[serde(rename = "alpha")]
    Alpha,
}

impl Axis {
    pub fn name(self) -> &'static str {
        match self {
            Axis::A => "A",
            Axis::B => "B",
            Axis::Headway => "headway",
            Axis::Pi => "pi",
            Axis::Fm => "fm",
            Axis::Alpha => "alpha",
        }
    }
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Axis {
    type Err = ScenarioError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "A" => Axis::A,
            "B" => Axis::B,
            "headway" => Axis::Headway,
            "pi" => Axis::Pi,
            "fm" => Axis::Fm,
            "alpha" => Axis::Alpha,
            other => return Err(ScenarioError::UnknownAxis(other.to_string())),
        })
    }
}

/// Inclusive `start:stop:step` range.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AxisRange {
    pub start: f64,
    pub stop: f64,
    pub step: f64,
}

impl AxisRange {
    pub fn new(start: f64, stop: f64, step: f64) -> Result<Self, ScenarioError> {
        if !(start.is_finite() && stop.is_finite() && step.is_finite()) {
            return Err(ScenarioError::EmptyRange(format!("{start}:{stop}:{step} is not finite")));
        }
        if step <= 0.0 {
            return Err(ScenarioError::EmptyRange(format!("step {step} must be positive")));
        }
        if stop < start {
            return Err(ScenarioError::EmptyRange(format!("stop {stop} is below start {start}")));
        }
        Ok(AxisRange { start, stop, step })
    }

    pub fn len(&self) -> usize {
        ((self.stop - self.start) / self.step + 1e-9).floor() as usize + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// `start + i·step`, computed per index so values do not drift.
    pub fn values(&self) -> Vec<f64> {
        (0..self.len()).map(|i| self.start + i as f64 * self.step).collect()
    }
}

impl FromStr for AxisRange {
    type Err = ScenarioError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parts: Vec<&str> = s.split(':').collect();
        if parts.len() != 3 {
            return Err(ScenarioError::EmptyRange(format!("`{s}` is not lo:hi:step")));
        }
        let num = |p: &str| {
            p.trim()
                .parse::<f64>()
                .map_err(|_| ScenarioError::EmptyRange(format!("`{p}` in `{s}` is not a number")))
        };
        AxisRange::new(num(parts[0])?, num(parts[1])?, num(parts[2])?)
    }
}

/// Which system probability a grid reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    /// Blended over masked and unmasked susceptibles.
    #[default]
    Blended,
    Masked,
    Unmasked,
}

impl Metric {
    pub fn pick(self, s: &SystemRisk) -> f64 {
        match self {
            Metric::Blended => s.probability,
            Metric::Masked => s.probability_masked,
            Metric::Unmasked => s.probability_unmasked,
        }
    }
}

impl FromStr for Metric {
    type Err = ScenarioError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "blended" => Ok(Metric::Blended),
            "masked" => Ok(Metric::Masked),
            "unmasked" => Ok(Metric::Unmasked),
            other => Err(ScenarioError::InvalidParam(format!("unknown metric `{other}`"))),
        }
    }
}

/// Two-axis grid of system probabilities, row-major (axis 1 outer).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepGrid {
    pub axis1: Axis,
    pub range1: AxisRange,
    pub axis2: Axis,
    pub range2: AxisRange,
    pub metric: Metric,
    pub values1: Vec<f64>,
    pub values2: Vec<f64>,
    pub cells: Vec<f64>,
}

impl SweepGrid {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.cells[i * self.values2.len() + j]
    }

    pub fn rows(&self) -> impl Iterator<Item = (f64, f64, f64)> + '_ {
        self.values1.iter().enumerate().flat_map(move |(i, &x)| {
            self.values2.iter().enumerate().map(move |(j, &y)| (x, y, self.get(i, j)))
        })
    }
}

fn check_axes(axis1: Axis, axis2: Axis) -> Result<(), ScenarioError> {
    let clash = axis1 == axis2
        || matches!(
            (axis1, axis2),
            (Axis::A, Axis::Alpha) | (Axis::Alpha, Axis::A) | (Axis::B, Axis::Headway) | (Axis::Headway, Axis::B)
        );
    if clash {
        return Err(ScenarioError::ExclusiveAxes(axis1.to_string(), axis2.to_string()));
    }
    Ok(())
}

/// Evaluation parameters for one grid cell.
pub fn cell_params(scenario: &Scenario, assignments: &[(Axis, f64)]) -> Result<EvalParams, ScenarioError> {
    let mut factors = scenario.factors;
    let mut env = scenario.env;
    let mut uniform_rate = None;
    for &(axis, v) in assignments {
        match axis {
            Axis::Headway => factors.beta = v / 60.0 / scenario.trunk_headway(),
            Axis::Fm => env.mask_fraction = v,
            Axis::Alpha => factors.alpha = v,
            Axis::Pi => uniform_rate = Some(v),
            Axis::A | Axis::B => {}
        }
    }
    let mut params = EvalParams::from_factors(&factors, &env)?;
    params.uniform_rate = uniform_rate;
    for &(axis, v) in assignments {
        match axis {
            Axis::A => params.viral = ViralLoad::from_meta(v, env.inhale_penetration)?,
            Axis::B => params.b = v,
            _ => {}
        }
    }
    Ok(params)
}

/// System risk at every cell of an `axis1 × axis2` grid. Cells are
/// independent; `exec` only changes scheduling, never the result.
pub fn sweep_systems(
    scenario: &Scenario,
    model: &RiskModel,
    axis1: (Axis, AxisRange),
    axis2: (Axis, AxisRange),
    exec: Exec,
) -> Result<Vec<SystemRisk>, ScenarioError> {
    check_axes(axis1.0, axis2.0)?;
    let v1 = axis1.1.values();
    let v2 = axis2.1.values();
    let cells: Vec<(f64, f64)> = v1.iter().flat_map(|&x| v2.iter().map(move |&y| (x, y))).collect();
    exec.try_map(&cells, |&(x, y)| {
        let params = cell_params(scenario, &[(axis1.0, x), (axis2.0, y)])?;
        Ok(model.system(&params, Exec::Serial)?)
    })
}

pub fn sweep(
    scenario: &Scenario,
    model: &RiskModel,
    axis1: (Axis, AxisRange),
    axis2: (Axis, AxisRange),
    metric: Metric,
    exec: Exec,
) -> Result<SweepGrid, ScenarioError> {
    let systems = sweep_systems(scenario, model, axis1, axis2, exec)?;
    Ok(SweepGrid {
        axis1: axis1.0,
        range1: axis1.1,
        axis2: axis2.0,
        range2: axis2.1,
        metric,
        values1: axis1.1.values(),
        values2: axis2.1.values(),
        cells: systems.iter().map(|s| metric.pick(s)).collect(),
    })
}

/// Masked and unmasked iso-risk grids over meta-parameters `A × B`.
pub fn sweep_ab(
    scenario: &Scenario,
    model: &RiskModel,
    a: AxisRange,
    b: AxisRange,
    exec: Exec,
) -> Result<(SweepGrid, SweepGrid), ScenarioError> {
    let systems = sweep_systems(scenario, model, (Axis::A, a), (Axis::B, b), exec)?;
    let grid = |metric: Metric| SweepGrid {
        axis1: Axis::A,
        range1: a,
        axis2: Axis::B,
        range2: b,
        metric,
        values1: a.values(),
        values2: b.values(),
        cells: systems.iter().map(|s| metric.pick(s)).collect(),
    };
    Ok((grid(Metric::Masked), grid(Metric::Unmasked)))
}

/// System probability against trunk headway (minutes) for several levels of
/// a second axis (`pi`, `fm` or `alpha`).
pub fn sweep_headway(
    scenario: &Scenario,
    model: &RiskModel,
    headways: AxisRange,
    level: (Axis, AxisRange),
    exec: Exec,
) -> Result<SweepGrid, ScenarioError> {
    if !matches!(level.0, Axis::Pi | Axis::Fm | Axis::Alpha) {
        return Err(ScenarioError::ExclusiveAxes("headway".into(), level.0.to_string()));
    }
    if headways.start <= 0.0 {
        return Err(ScenarioError::EmptyRange("headways must be positive".into()));
    }
    sweep(scenario, model, (Axis::Headway, headways), level, Metric::Blended, exec)
}

/// Load multiplier `B*` that brings system risk at viral load `a_new` back
/// to `target`, by bisection over `[b_low, b_high]`. Risk rises with `B`,
/// but steps up slightly wherever a carrier bound `⌈B·N°⌉` grows; a target
/// inside such a step ends in [`ScenarioError::NoConvergence`].
pub fn compensate_b(
    scenario: &Scenario,
    model: &RiskModel,
    target: f64,
    a_new: f64,
    b_low: f64,
    b_high: f64,
) -> Result<f64, ScenarioError> {
    if !(target.is_finite() && target >= 0.0) {
        return Err(ScenarioError::InvalidParam(format!("target {target}")));
    }
    if !(b_low >= 0.0 && b_high > b_low) {
        return Err(ScenarioError::EmptyRange(format!("B interval [{b_low}, {b_high}]")));
    }
    let base = scenario.base_params()?;
    let viral = ViralLoad::from_meta(a_new, scenario.env.inhale_penetration)?;
    let eval = |b: f64| -> Result<f64, ScenarioError> {
        let params = EvalParams { viral, b, ..base };
        Ok(model.system(&params, Exec::Serial)?.probability)
    };
    let tol = BISECTION_RTOL * target;
    let (mut lo, mut hi) = (b_low, b_high);
    let (f_lo, f_hi) = (eval(lo)? - target, eval(hi)? - target);
    if f_lo.abs() <= tol {
        return Ok(lo);
    }
    if f_hi.abs() <= tol {
        return Ok(hi);
    }
    if f_lo > 0.0 || f_hi < 0.0 {
        return Err(ScenarioError::TargetUnreachable {
            target,
            low_b: b_low,
            high_b: b_high,
            low_value: f_lo + target,
            high_value: f_hi + target,
        });
    }
    for _ in 0..BISECTION_MAX_ITER {
        let mid = 0.5 * (lo + hi);
        let f = eval(mid)? - target;
        if f.abs() <= tol {
            return Ok(mid);
        }
        if f < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Err(ScenarioError::NoConvergence(BISECTION_MAX_ITER))
}

/// Inhale penetration `F_m` keeping `A` at `a_target` when infectiousness is
/// scaled by `alpha`.
pub fn inhale_penetration_for_alpha(
    alpha: f64,
    a_target: f64,
    mask_fraction: f64,
    exhale_penetration: f64,
    delta: f64,
    epsilon: f64,
) -> Result<f64, ScenarioError> {
    let denom = alpha * delta * (1.0 - mask_fraction * (1.0 - exhale_penetration));
    let required = a_target * epsilon / denom;
    if denom == 0.0 || !required.is_finite() || !(0.0..=1.0).contains(&required) {
        return Err(ScenarioError::NoFeasibleMask {
            target: a_target,
            required,
        });
    }
    Ok(required)
}

/// Mask-wearing share `f_m` keeping `A` at `a_target` when infectiousness is
/// scaled by `alpha`.
pub fn mask_fraction_for_alpha(
    alpha: f64,
    a_target: f64,
    inhale_penetration: f64,
    exhale_penetration: f64,
    delta: f64,
    epsilon: f64,
) -> Result<f64, ScenarioError> {
    if exhale_penetration == 1.0 {
        return Err(ScenarioError::DegenerateMask);
    }
    let required =
        (1.0 - a_target * epsilon / (alpha * delta * inhale_penetration)) / (1.0 - exhale_penetration);
    if !required.is_finite() || !(0.0..=1.0).contains(&required) {
        return Err(ScenarioError::NoFeasibleProportion {
            target: a_target,
            required,
        });
    }
    Ok(required)
}

/// Quanta generation rate that reproduces an observed attack rate:
/// `q = −Q ln(1 − P) / (I p t)`.
pub fn calibrate_q(
    attack_rate: f64,
    infectors: f64,
    breathing_rate: f64,
    hours: f64,
    ventilation: f64,
) -> Result<f64, ScenarioError> {
    if !(0.0..1.0).contains(&attack_rate) {
        return Err(ScenarioError::InvalidAttackRate(attack_rate));
    }
    for (name, v) in [
        ("infectors", infectors),
        ("breathing rate", breathing_rate),
        ("exposure time", hours),
        ("ventilation", ventilation),
    ] {
        if !(v.is_finite() && v > 0.0) {
            return Err(ScenarioError::InvalidParam(format!("{name} must be positive, got {v}")));
        }
    }
    Ok(-ventilation * (-attack_rate).ln_1p() / (infectors * breathing_rate * hours))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AllocationRow {
    /// Hours.
    pub h_ab: f64,
    pub h_ba: f64,
    pub system_p: f64,
    pub services: Vec<GroupRisk>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AllocationResult {
    pub rows: Vec<AllocationRow>,
    pub argmin_h_ab: f64,
}

/// Re-derives train loads for every trunk split `h_ab` (hours) and reports
/// system and per-service risk. Ties go to the smaller `h_ab`.
pub fn allocate_branch_headways(
    scenario: &Scenario,
    h_ab: &[f64],
    exec: Exec,
) -> Result<AllocationResult, ScenarioError> {
    if h_ab.is_empty() {
        return Err(ScenarioError::EmptyRange("no h_ab values".into()));
    }
    let mut values = h_ab.to_vec();
    values.sort_by(f64::total_cmp);
    let params = scenario.base_params()?;
    let rows = exec.try_map(&values, |&h| -> Result<AllocationRow, ScenarioError> {
        let plan = scenario.plan.with_h_ab(h)?;
        let model = scenario.with_plan(plan.clone()).model()?;
        let (system, services, _) = model.breakdown(&params, Exec::Serial)?;
        Ok(AllocationRow {
            h_ab: h,
            h_ba: plan.h_ba(),
            system_p: system.probability,
            services,
        })
    })?;
    let mut best = 0;
    for (i, row) in rows.iter().enumerate() {
        if row.system_p < rows[best].system_p {
            best = i;
        }
    }
    Ok(AllocationResult {
        argmin_h_ab: rows[best].h_ab,
        rows,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CarComparison {
    pub shares: Vec<f64>,
    pub system_p: f64,
    pub car_p: Vec<f64>,
    /// Zero-based index of the car with the largest share (first on ties).
    pub most_crowded_car: usize,
    pub most_crowded_p: f64,
    pub least_crowded_car: usize,
    pub least_crowded_p: f64,
}

pub fn compare_car_distributions(
    scenario: &Scenario,
    distributions: &[Vec<f64>],
    exec: Exec,
) -> Result<Vec<CarComparison>, ScenarioError> {
    for shares in distributions {
        validate_shares(shares)?;
    }
    let params = scenario.base_params()?;
    exec.try_map(distributions, |shares| -> Result<CarComparison, ScenarioError> {
        let plan = scenario.plan.with_car_shares(shares.clone())?;
        let model = scenario.with_plan(plan).model()?;
        let (system, _, cars) = model.breakdown(&params, Exec::Serial)?;
        let mut most = 0;
        let mut least = 0;
        for (i, &s) in shares.iter().enumerate() {
            if s > shares[most] {
                most = i;
            }
            if s < shares[least] {
                least = i;
            }
        }
        Ok(CarComparison {
            shares: shares.clone(),
            system_p: system.probability,
            car_p: cars.iter().map(|c| c.probability).collect(),
            most_crowded_car: most,
            most_crowded_p: cars[most].probability,
            least_crowded_car: least,
            least_crowded_p: cars[least].probability,
        })
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn axis_ranges() {
        assert_eq!("0:0:1".parse::<AxisRange>().unwrap().values(), [0.0]);
        assert_eq!("0.1:1.5:0.1".parse::<AxisRange>().unwrap().len(), 15);
        assert_eq!("2:7:0.5".parse::<AxisRange>().unwrap().len(), 11);
        assert!("1:0:1".parse::<AxisRange>().is_err());
        assert!("0:1:0".parse::<AxisRange>().is_err());
        assert!("0:1".parse::<AxisRange>().is_err());
        assert!("a:1:1".parse::<AxisRange>().is_err());
    }

    #[test]
    fn axis_names() {
        for name in ["A", "B", "headway", "pi", "fm", "alpha"] {
            assert_eq!(name.parse::<Axis>().unwrap().name(), name);
        }
        assert!("gamma".parse::<Axis>().is_err());
        assert!(check_axes(Axis::A, Axis::Alpha).is_err());
        assert!(check_axes(Axis::Headway, Axis::B).is_err());
        assert!(check_axes(Axis::Pi, Axis::Pi).is_err());
        assert!(check_axes(Axis::A, Axis::B).is_ok());
    }

    #[test]
    fn mask_solvers() {
        assert_eq!(inhale_penetration_for_alpha(1.0, 0.5, 0.0, 0.5, 1.0, 1.0).unwrap(), 0.5);
        assert_eq!(inhale_penetration_for_alpha(2.0, 0.5, 0.0, 0.5, 1.0, 1.0).unwrap(), 0.25);
        assert!(matches!(
            inhale_penetration_for_alpha(0.4, 0.5, 0.0, 0.5, 1.0, 1.0),
            Err(ScenarioError::NoFeasibleMask { .. })
        ));
        assert_eq!(mask_fraction_for_alpha(1.0, 0.5, 0.5, 0.5, 1.0, 1.0).unwrap(), 0.0);
        assert_eq!(mask_fraction_for_alpha(2.0, 0.5, 0.5, 0.5, 1.0, 1.0).unwrap(), 1.0);
        assert!(matches!(
            mask_fraction_for_alpha(2.5, 0.5, 0.5, 0.5, 1.0, 1.0),
            Err(ScenarioError::NoFeasibleProportion { .. })
        ));
        assert_eq!(
            mask_fraction_for_alpha(2.0, 0.5, 0.5, 1.0, 1.0, 1.0),
            Err(ScenarioError::DegenerateMask)
        );
    }

    #[test]
    fn calibration() {
        assert_eq!(calibrate_q(0.0, 1.0, 0.72, 0.5, 1958.0).unwrap(), 0.0);
        assert_eq!(calibrate_q(1.0, 1.0, 0.72, 0.5, 1958.0), Err(ScenarioError::InvalidAttackRate(1.0)));
        assert!(calibrate_q(0.1, 0.0, 0.72, 0.5, 1958.0).is_err());
        let q = calibrate_q(0.048430443, 1.0, 0.72, 0.5, 1958.0).unwrap();
        assert!((q - 270.0).abs() < 1e-5, "{q}");
    }
}
