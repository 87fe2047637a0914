//! OD demand ingestion, service plans and per-trip train loads.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Read;

use serde::Deserialize;
use thiserror::Error;

use crate::topology::{LineTopology, Placement, StationIdx, TopologyError};

/// Tolerance used for share sums and headway consistency.
pub const PLAN_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DemandError {
    #[error("line {line}: {reason}")]
    MalformedRow { line: u64, reason: String },
    #[error("line {line}: unknown station `{id}`")]
    UnknownStation { line: u64, id: String },
    #[error("line {line}: negative flow {flow}")]
    NegativeFlow { line: u64, flow: f64 },
    #[error("line {line}: duplicate row for {origin}->{destination} at {interval}")]
    DuplicateRow {
        line: u64,
        origin: String,
        destination: String,
        interval: String,
    },
    #[error(transparent)]
    Topology(#[from] TopologyError),
    #[error("negative scaling factor {0}")]
    NegativeFactor(f64),
    #[error("invalid service plan: {0}")]
    InvalidPlan(String),
    #[error("invalid car shares: {0}")]
    InvalidShares(String),
    #[error("lines with {0} branches are not supported (at most two)")]
    UnsupportedBranchCount(usize),
}

impl DemandError {
    pub fn code(&self) -> &'static str {
        match self {
            DemandError::MalformedRow { .. } => "malformed_row",
            DemandError::UnknownStation { .. } => "unknown_station",
            DemandError::NegativeFlow { .. } => "negative_flow",
            DemandError::DuplicateRow { .. } => "duplicate_row",
            DemandError::Topology(e) => e.code(),
            DemandError::NegativeFactor(_) => "negative_factor",
            DemandError::InvalidPlan(_) => "invalid_plan",
            DemandError::InvalidShares(_) => "invalid_shares",
            DemandError::UnsupportedBranchCount(_) => "unsupported_branch_count",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct OdPair {
    pub origin: StationIdx,
    pub destination: StationIdx,
}

impl OdPair {
    pub fn new(origin: StationIdx, destination: StationIdx) -> Self {
        OdPair {
            origin,
            destination,
        }
    }

    pub fn as_tuple(self) -> (StationIdx, StationIdx) {
        (self.origin, self.destination)
    }
}

/// Period-average demand in passengers per hour, keyed by OD pair.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct OdDemand {
    rates: BTreeMap<OdPair, f64>,
}

#[derive(Deserialize)]
struct OdRow {
    origin: String,
    destination: String,
    interval_start: String,
    flow: f64,
}

fn parse_clock(text: &str) -> Option<u32> {
    let (h, m) = text.trim().split_once(':')?;
    if h.is_empty() || h.len() > 2 || m.len() != 2 {
        return None;
    }
    let h: u32 = h.parse().ok()?;
    let m: u32 = m.parse().ok()?;
    (h < 24 && m < 60).then_some(h * 60 + m)
}

impl OdDemand {
    /// Builds demand from `(origin id, destination id, pax/hour)` triples.
    pub fn from_rates<'a>(
        topo: &LineTopology,
        entries: impl IntoIterator<Item = (&'a str, &'a str, f64)>,
    ) -> Result<Self, DemandError> {
        let mut rates = BTreeMap::new();
        for (k, (o, d, rate)) in entries.into_iter().enumerate() {
            let line = k as u64 + 1;
            if !(rate.is_finite() && rate >= 0.0) {
                return Err(DemandError::NegativeFlow { line, flow: rate });
            }
            let pair = OdPair::new(topo.lookup(o)?, topo.lookup(d)?);
            topo.path(pair.origin, pair.destination)?;
            *rates.entry(pair).or_insert(0.0) += rate;
        }
        Ok(OdDemand { rates })
    }

    /// Reads the `origin,destination,interval_start,flow` CSV. `flow` counts
    /// passengers per interval of `interval_minutes`; each OD rate is the
    /// mean over all intervals present in the file, so an OD missing from a
    /// slice counts as zero there.
    pub fn from_csv<R: Read>(
        reader: R,
        topo: &LineTopology,
        interval_minutes: f64,
    ) -> Result<Self, DemandError> {
        if !(interval_minutes.is_finite() && interval_minutes > 0.0) {
            return Err(DemandError::InvalidPlan(format!(
                "interval length must be positive, got {interval_minutes} min"
            )));
        }
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers = rdr
            .headers()
            .map_err(|e| DemandError::MalformedRow { line: 1, reason: e.to_string() })?
            .clone();
        let expected = ["origin", "destination", "interval_start", "flow"];
        if headers.iter().collect::<Vec<_>>() != expected {
            return Err(DemandError::MalformedRow {
                line: 1,
                reason: format!("expected header `{}`", expected.join(",")),
            });
        }

        let mut totals: BTreeMap<OdPair, f64> = BTreeMap::new();
        let mut seen: BTreeSet<(OdPair, u32)> = BTreeSet::new();
        let mut intervals: BTreeSet<u32> = BTreeSet::new();
        for record in rdr.records() {
            let record = record.map_err(|e| DemandError::MalformedRow {
                line: e.position().map_or(0, |p| p.line()),
                reason: e.to_string(),
            })?;
            let line = record.position().map_or(0, |p| p.line());
            let row: OdRow = record
                .deserialize(Some(&headers))
                .map_err(|e| DemandError::MalformedRow { line, reason: e.to_string() })?;
            let start = parse_clock(&row.interval_start).ok_or_else(|| DemandError::MalformedRow {
                line,
                reason: format!("interval_start `{}` is not HH:MM", row.interval_start),
            })?;
            if !row.flow.is_finite() {
                return Err(DemandError::MalformedRow { line, reason: "flow is not finite".into() });
            }
            if row.flow < 0.0 {
                return Err(DemandError::NegativeFlow { line, flow: row.flow });
            }
            let lookup = |id: &str| {
                topo.lookup(id)
                    .map_err(|_| DemandError::UnknownStation { line, id: id.to_string() })
            };
            let pair = OdPair::new(lookup(&row.origin)?, lookup(&row.destination)?);
            topo.path(pair.origin, pair.destination)?;
            if !seen.insert((pair, start)) {
                return Err(DemandError::DuplicateRow {
                    line,
                    origin: row.origin,
                    destination: row.destination,
                    interval: row.interval_start,
                });
            }
            intervals.insert(start);
            *totals.entry(pair).or_insert(0.0) += row.flow;
        }
        let per_hour = 60.0 / interval_minutes;
        let slices = intervals.len().max(1) as f64;
        let rates = totals
            .into_iter()
            .map(|(pair, total)| (pair, total * per_hour / slices))
            .collect();
        Ok(OdDemand { rates })
    }

    pub fn rate(&self, pair: OdPair) -> f64 {
        self.rates.get(&pair).copied().unwrap_or(0.0)
    }

    pub fn iter(&self) -> impl Iterator<Item = (OdPair, f64)> + '_ {
        self.rates.iter().map(|(&k, &v)| (k, v))
    }

    pub fn len(&self) -> usize {
        self.rates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rates.is_empty()
    }

    pub fn total_rate(&self) -> f64 {
        self.rates.values().sum()
    }

    /// Every rate multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Result<Self, DemandError> {
        if !(factor.is_finite() && factor >= 0.0) {
            return Err(DemandError::NegativeFactor(factor));
        }
        Ok(OdDemand {
            rates: self.rates.iter().map(|(&k, &v)| (k, v * factor)).collect(),
        })
    }
}

/// Headways and car layout of the service pattern.
///
/// On a two-branch line trains alternate between the branches. `h_ab` is the
/// trunk headway ahead of a train bound for the first branch (name order),
/// measured from the second-branch train in front of it.
#[derive(Debug, Clone, PartialEq)]
pub struct ServicePlan {
    /// Headway on each branch, hours. For an unbranched line, the line headway.
    pub branch_headway: f64,
    pub h_ab: f64,
    pub cars_per_train: usize,
    pub car_shares: Vec<f64>,
    pub period: String,
}

impl ServicePlan {
    pub fn new(
        branch_headway: f64,
        h_ab: f64,
        car_shares: Vec<f64>,
        period: impl Into<String>,
    ) -> Result<Self, DemandError> {
        let plan = ServicePlan {
            branch_headway,
            h_ab,
            cars_per_train: car_shares.len(),
            car_shares,
            period: period.into(),
        };
        plan.validate()?;
        Ok(plan)
    }

    /// Even trunk split and equal car loads.
    pub fn even(branch_headway: f64, cars: usize) -> Result<Self, DemandError> {
        if cars == 0 {
            return Err(DemandError::InvalidShares("a train needs at least one car".into()));
        }
        Self::new(branch_headway, branch_headway / 2.0, vec![1.0 / cars as f64; cars], "")
    }

    pub fn h_ba(&self) -> f64 {
        self.branch_headway - self.h_ab
    }

    pub fn validate(&self) -> Result<(), DemandError> {
        if !(self.branch_headway.is_finite() && self.branch_headway > 0.0) {
            return Err(DemandError::InvalidPlan(format!(
                "headway must be positive, got {}",
                self.branch_headway
            )));
        }
        if !(self.h_ab > 0.0 && self.h_ab < self.branch_headway) {
            return Err(DemandError::InvalidPlan(format!(
                "h_ab {} must lie strictly inside (0, {})",
                self.h_ab, self.branch_headway
            )));
        }
        validate_shares(&self.car_shares)?;
        if self.car_shares.len() != self.cars_per_train {
            return Err(DemandError::InvalidShares(format!(
                "{} shares for {} cars",
                self.car_shares.len(),
                self.cars_per_train
            )));
        }
        Ok(())
    }

    /// All headways multiplied by `beta`.
    pub fn with_headway_scale(&self, beta: f64) -> Result<Self, DemandError> {
        let mut plan = self.clone();
        plan.branch_headway *= beta;
        plan.h_ab *= beta;
        plan.validate()?;
        Ok(plan)
    }

    pub fn with_h_ab(&self, h_ab: f64) -> Result<Self, DemandError> {
        let mut plan = self.clone();
        plan.h_ab = h_ab;
        plan.validate()?;
        Ok(plan)
    }

    pub fn with_car_shares(&self, shares: Vec<f64>) -> Result<Self, DemandError> {
        let mut plan = self.clone();
        plan.cars_per_train = shares.len();
        plan.car_shares = shares;
        plan.validate()?;
        Ok(plan)
    }
}

pub fn validate_shares(shares: &[f64]) -> Result<(), DemandError> {
    if shares.is_empty() {
        return Err(DemandError::InvalidShares("no cars".into()));
    }
    if let Some(bad) = shares.iter().find(|s| !(s.is_finite() && **s >= 0.0)) {
        return Err(DemandError::InvalidShares(format!("share {bad} is negative")));
    }
    let sum: f64 = shares.iter().sum();
    if (sum - 1.0).abs() > PLAN_TOLERANCE {
        return Err(DemandError::InvalidShares(format!("shares sum to {sum}, not 1")));
    }
    Ok(())
}

/// A train pattern: one per branch, or `single` on an unbranched line.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Service {
    pub label: String,
    pub branch: Option<usize>,
}

pub fn services(topo: &LineTopology) -> Result<Vec<Service>, DemandError> {
    match topo.branch_count() {
        0 => Ok(vec![Service {
            label: "single".into(),
            branch: None,
        }]),
        n @ (1 | 2) => Ok((0..n)
            .map(|b| Service {
                label: topo.branch_name(b).to_string(),
                branch: Some(b),
            })
            .collect()),
        n => Err(DemandError::UnsupportedBranchCount(n)),
    }
}

/// Services whose trains carry riders of `pair`.
pub fn serving_services(topo: &LineTopology, pair: OdPair) -> Result<Vec<Service>, DemandError> {
    topo.path(pair.origin, pair.destination)?;
    let all = services(topo)?;
    Ok(match topo.placement(pair.destination) {
        Placement::Trunk => all,
        Placement::Branch(b) => all.into_iter().filter(|s| s.branch == Some(b)).collect(),
    })
}

/// Per-trip loads of one service pattern.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainLoad {
    pub service: Service,
    /// Passengers per trip by OD pair.
    pub loads: BTreeMap<OdPair, f64>,
    /// `car_loads[c]` holds car `c`'s share of every OD load.
    pub car_loads: Vec<BTreeMap<OdPair, f64>>,
}

/// Headway that collects riders of `pair` for `service`: branch-bound riders
/// wait a full branch headway; trunk riders board the first train, so each
/// train carries the riders that arrived since the train in front of it.
fn collecting_headway(
    topo: &LineTopology,
    plan: &ServicePlan,
    service: &Service,
    pair: OdPair,
) -> Option<f64> {
    match (topo.placement(pair.destination), service.branch) {
        (_, None) => Some(plan.branch_headway),
        (Placement::Branch(b), Some(s)) => (b == s).then_some(plan.branch_headway),
        (Placement::Trunk, Some(s)) => Some(match topo.branch_count() {
            1 => plan.branch_headway,
            _ if s == 0 => plan.h_ab,
            _ => plan.h_ba(),
        }),
    }
}

pub fn train_loads(
    demand: &OdDemand,
    plan: &ServicePlan,
    topo: &LineTopology,
) -> Result<Vec<TrainLoad>, DemandError> {
    plan.validate()?;
    services(topo)?
        .into_iter()
        .map(|service| {
            let mut loads = BTreeMap::new();
            for (pair, rate) in demand.iter() {
                topo.path(pair.origin, pair.destination)?;
                if let Some(h) = collecting_headway(topo, plan, &service, pair) {
                    loads.insert(pair, rate * h);
                }
            }
            let car_loads = plan
                .car_shares
                .iter()
                .map(|&share| loads.iter().map(|(&k, &v)| (k, v * share)).collect())
                .collect();
            Ok(TrainLoad {
                service,
                loads,
                car_loads,
            })
        })
        .collect()
}
