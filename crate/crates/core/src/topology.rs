//! Line topology: a trunk plus branches hanging off the trunk's last station.
//!
//! Stations are stored in one table, trunk first and then each branch in
//! name order, so every station except the trunk head has exactly one
//! predecessor. Paths are walks up that predecessor chain, which makes the
//! line an out-tree rooted at the first trunk station.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TopologyError {
    #[error("unknown station `{0}`")]
    UnknownStation(String),
    #[error("station `{to}` is not reachable from `{from}` in the analysis direction")]
    UnreachablePair { from: String, to: String },
    #[error("trip from `{0}` to itself")]
    SameStation(String),
    #[error("{location}: {reason}")]
    Invalid { location: String, reason: String },
    #[error("{path}: {reason}")]
    File { path: String, reason: String },
}

impl TopologyError {
    pub fn code(&self) -> &'static str {
        match self {
            TopologyError::UnknownStation(_) => "unknown_station",
            TopologyError::UnreachablePair { .. } => "unreachable_pair",
            TopologyError::SameStation(_) => "same_station",
            TopologyError::Invalid { .. } => "invalid_topology",
            TopologyError::File { .. } => "topology_file",
        }
    }

    fn invalid(location: impl Into<String>, reason: impl Into<String>) -> Self {
        TopologyError::Invalid {
            location: location.into(),
            reason: reason.into(),
        }
    }
}

/// Index of a station in its topology's station table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct StationIdx(pub usize);

impl StationIdx {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Station {
    pub id: String,
    pub name: String,
    /// Label used to look up spatial infection rates.
    pub group: String,
}

impl Station {
    pub fn new(id: &str, name: &str, group: &str) -> Self {
        Station {
            id: id.to_string(),
            name: name.to_string(),
            group: group.to_string(),
        }
    }
}

/// Where a station sits on the line.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Placement {
    Trunk,
    Branch(usize),
}

#[derive(Debug, Clone)]
struct Branch {
    name: String,
    first: usize,
    len: usize,
}

#[derive(Debug, Clone)]
pub struct LineTopology {
    stations: Vec<Station>,
    by_id: HashMap<String, StationIdx>,
    trunk_len: usize,
    branches: Vec<Branch>,
    // hours from the predecessor station (door-close to door-close); 0 at the trunk head
    inbound_time: Vec<f64>,
}

/// Ordered station list of one directed ride, boarding and alighting inclusive.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RideSegment {
    pub boarding: StationIdx,
    pub alighting: StationIdx,
    pub stations: Vec<StationIdx>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct TopologyFile {
    trunk: Vec<Station>,
    #[serde(default)]
    branches: BTreeMap<String, Vec<Station>>,
    segment_times: Vec<SegmentRecord>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SegmentRecord {
    from: String,
    to: String,
    hours: f64,
}

impl LineTopology {
    /// Builds a topology and checks every structural invariant.
    ///
    /// `segment_times` lists `(from, to, hours)` for each adjacent pair; branches
    /// attach at the last trunk station and are ordered by name.
    pub fn new(
        trunk: Vec<Station>,
        branches: BTreeMap<String, Vec<Station>>,
        segment_times: &[(String, String, f64)],
    ) -> Result<Self, TopologyError> {
        if trunk.is_empty() {
            return Err(TopologyError::invalid("trunk", "trunk has no stations"));
        }
        let trunk_len = trunk.len();
        let mut stations = Vec::with_capacity(trunk_len);
        let mut locations = Vec::new();
        for (k, s) in trunk.into_iter().enumerate() {
            locations.push(format!("trunk[{k}]"));
            stations.push(s);
        }
        let mut branch_table = Vec::new();
        for (name, list) in branches {
            if list.is_empty() {
                return Err(TopologyError::invalid(
                    format!("branches.{name}"),
                    "branch has no stations",
                ));
            }
            branch_table.push(Branch {
                name: name.clone(),
                first: stations.len(),
                len: list.len(),
            });
            for (k, s) in list.into_iter().enumerate() {
                locations.push(format!("branches.{name}[{k}]"));
                stations.push(s);
            }
        }
        if stations.len() < 2 {
            return Err(TopologyError::invalid("trunk", "a line needs at least two stations"));
        }

        let mut by_id = HashMap::with_capacity(stations.len());
        for (k, s) in stations.iter().enumerate() {
            if s.id.is_empty() {
                return Err(TopologyError::invalid(&locations[k], "empty station id"));
            }
            if by_id.insert(s.id.clone(), StationIdx(k)).is_some() {
                return Err(TopologyError::invalid(
                    &locations[k],
                    format!("duplicate station id `{}`", s.id),
                ));
            }
        }

        let mut topo = LineTopology {
            stations,
            by_id,
            trunk_len,
            branches: branch_table,
            inbound_time: Vec::new(),
        };

        let mut inbound: Vec<Option<f64>> = vec![None; topo.stations.len()];
        for (k, (from, to, hours)) in segment_times.iter().enumerate() {
            let loc = format!("segment_times[{k}]");
            let a = topo
                .lookup(from)
                .map_err(|_| TopologyError::invalid(&loc, format!("unknown station `{from}`")))?;
            let b = topo
                .lookup(to)
                .map_err(|_| TopologyError::invalid(&loc, format!("unknown station `{to}`")))?;
            if topo.predecessor(b) != Some(a) {
                return Err(TopologyError::invalid(
                    &loc,
                    format!("`{from}` -> `{to}` is not an adjacent pair in the analysis direction"),
                ));
            }
            if !(hours.is_finite() && *hours > 0.0) {
                return Err(TopologyError::invalid(
                    &loc,
                    format!("segment time must be positive, got {hours}"),
                ));
            }
            if inbound[b.0].replace(*hours).is_some() {
                return Err(TopologyError::invalid(
                    &loc,
                    format!("duplicate segment `{from}` -> `{to}`"),
                ));
            }
        }
        let mut inbound_time = Vec::with_capacity(inbound.len());
        for (k, t) in inbound.into_iter().enumerate() {
            match (t, topo.predecessor(StationIdx(k))) {
                (Some(t), _) => inbound_time.push(t),
                (None, None) => inbound_time.push(0.0),
                (None, Some(prev)) => {
                    return Err(TopologyError::invalid(
                        "segment_times",
                        format!(
                            "missing segment time `{}` -> `{}`",
                            topo.stations[prev.0].id, topo.stations[k].id
                        ),
                    ))
                }
            }
        }
        topo.inbound_time = inbound_time;
        Ok(topo)
    }

    pub fn from_json_str(text: &str) -> Result<Self, TopologyError> {
        let file: TopologyFile = serde_json::from_str(text).map_err(|e| {
            TopologyError::invalid(format!("line {} column {}", e.line(), e.column()), e.to_string())
        })?;
        let segs: Vec<(String, String, f64)> = file
            .segment_times
            .into_iter()
            .map(|s| (s.from, s.to, s.hours))
            .collect();
        Self::new(file.trunk, file.branches, &segs)
    }

    /// Reads and validates a topology file; errors carry the file path.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, TopologyError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| TopologyError::File {
            path: path.display().to_string(),
            reason: e.to_string(),
        })?;
        Self::from_json_str(&text).map_err(|e| TopologyError::File {
            path: path.display().to_string(),
            reason: e.to_string(),
        })
    }

    pub fn stations(&self) -> &[Station] {
        &self.stations
    }

    pub fn station(&self, idx: StationIdx) -> &Station {
        &self.stations[idx.0]
    }

    pub fn len(&self) -> usize {
        self.stations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.stations.is_empty()
    }

    pub fn lookup(&self, id: &str) -> Result<StationIdx, TopologyError> {
        self.by_id
            .get(id)
            .copied()
            .ok_or_else(|| TopologyError::UnknownStation(id.to_string()))
    }

    pub fn branch_count(&self) -> usize {
        self.branches.len()
    }

    pub fn branch_names(&self) -> impl Iterator<Item = &str> {
        self.branches.iter().map(|b| b.name.as_str())
    }

    pub fn branch_name(&self, branch: usize) -> &str {
        &self.branches[branch].name
    }

    pub fn trunk_len(&self) -> usize {
        self.trunk_len
    }

    pub fn placement(&self, idx: StationIdx) -> Placement {
        if idx.0 < self.trunk_len {
            return Placement::Trunk;
        }
        let b = self
            .branches
            .iter()
            .position(|b| idx.0 >= b.first && idx.0 < b.first + b.len)
            .expect("station index out of range");
        Placement::Branch(b)
    }

    fn predecessor(&self, idx: StationIdx) -> Option<StationIdx> {
        match self.placement(idx) {
            Placement::Trunk if idx.0 == 0 => None,
            Placement::Trunk => Some(StationIdx(idx.0 - 1)),
            Placement::Branch(b) if idx.0 == self.branches[b].first => {
                Some(StationIdx(self.trunk_len - 1))
            }
            Placement::Branch(_) => Some(StationIdx(idx.0 - 1)),
        }
    }

    /// Time in hours of the segment that ends at `idx`.
    pub fn inbound_time(&self, idx: StationIdx) -> f64 {
        self.inbound_time[idx.0]
    }

    /// Directed path between two stations, by station id.
    pub fn path_by_id(&self, from: &str, to: &str) -> Result<RideSegment, TopologyError> {
        self.path(self.lookup(from)?, self.lookup(to)?)
    }

    pub fn path(&self, from: StationIdx, to: StationIdx) -> Result<RideSegment, TopologyError> {
        if from.0 >= self.len() {
            return Err(TopologyError::UnknownStation(format!("#{}", from.0)));
        }
        if to.0 >= self.len() {
            return Err(TopologyError::UnknownStation(format!("#{}", to.0)));
        }
        if from == to {
            return Err(TopologyError::SameStation(self.stations[from.0].id.clone()));
        }
        let mut stations = vec![to];
        let mut cur = to;
        while let Some(prev) = self.predecessor(cur) {
            stations.push(prev);
            if prev == from {
                stations.reverse();
                return Ok(RideSegment {
                    boarding: from,
                    alighting: to,
                    stations,
                });
            }
            cur = prev;
        }
        Err(TopologyError::UnreachablePair {
            from: self.stations[from.0].id.clone(),
            to: self.stations[to.0].id.clone(),
        })
    }

    pub fn is_reachable(&self, from: StationIdx, to: StationIdx) -> bool {
        self.path(from, to).is_ok()
    }

    /// Total ride time of a segment.
    pub fn ride_time(&self, seg: &RideSegment) -> f64 {
        seg.stations[1..].iter().map(|&s| self.inbound_time(s)).sum()
    }

    /// Longest common sub-ride of two trips, `None` when they share no segment.
    pub fn overlap(
        &self,
        first: (StationIdx, StationIdx),
        second: (StationIdx, StationIdx),
    ) -> Result<Option<RideSegment>, TopologyError> {
        let p1 = self.path(first.0, first.1)?;
        let p2 = self.path(second.0, second.1)?;
        Ok(common_segment(&p1, &p2))
    }

    /// Hours the riders of `first` share a car with riders of `second`.
    pub fn exposure_time(
        &self,
        first: (StationIdx, StationIdx),
        second: (StationIdx, StationIdx),
    ) -> Result<f64, TopologyError> {
        Ok(self
            .overlap(first, second)?
            .map_or(0.0, |seg| self.ride_time(&seg)))
    }
}

/// Intersection of two directed paths in the out-tree. The shared stations
/// are contiguous in both paths, so keeping path order of `a` is enough.
pub(crate) fn common_segment(a: &RideSegment, b: &RideSegment) -> Option<RideSegment> {
    let in_b: HashSet<StationIdx> = b.stations.iter().copied().collect();
    let stations: Vec<StationIdx> = a
        .stations
        .iter()
        .copied()
        .filter(|s| in_b.contains(s))
        .collect();
    if stations.len() < 2 {
        return None;
    }
    Some(RideSegment {
        boarding: stations[0],
        alighting: *stations.last().unwrap(),
        stations,
    })
}

impl fmt::Display for RideSegment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let ids: Vec<String> = self.stations.iter().map(|s| s.0.to_string()).collect();
        write!(f, "[{}]", ids.join(" -> "))
    }
}
