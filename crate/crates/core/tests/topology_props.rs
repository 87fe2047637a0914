use std::collections::BTreeMap;

use proptest::prelude::*;
use transit_risk::topology::{LineTopology, Station, StationIdx};

fn line(hours: &[f64]) -> LineTopology {
    let n = hours.len() + 1;
    let trunk = (0..n).map(|i| Station::new(&format!("s{i}"), &format!("S{i}"), "trunk")).collect();
    let segs: Vec<_> = (0..hours.len())
        .map(|i| (format!("s{i}"), format!("s{}", i + 1), hours[i]))
        .collect();
    LineTopology::new(trunk, BTreeMap::new(), &segs).unwrap()
}

fn idx(topo: &LineTopology, i: usize) -> StationIdx {
    topo.lookup(&format!("s{i}")).unwrap()
}

// shared travel time of rides [a, b) and [c, d) on a line, summed per segment
fn interval_overlap(hours: &[f64], (a, b): (usize, usize), (c, d): (usize, usize)) -> f64 {
    (a.max(c)..b.min(d)).map(|k| hours[k]).sum()
}

fn hours_and_two_rides() -> impl Strategy<Value = (Vec<f64>, (usize, usize), (usize, usize))> {
    prop::collection::vec(0.01f64..0.2, 1..10).prop_flat_map(|hours| {
        let n = hours.len() + 1;
        let ride = (0..n - 1).prop_flat_map(move |a| (Just(a), a + 1..n));
        (Just(hours), ride.clone(), ride)
    })
}

proptest! {
    #[test]
    fn exposure_matches_interval_intersection((hours, r1, r2) in hours_and_two_rides()) {
        let topo = line(&hours);
        let t = topo
            .exposure_time((idx(&topo, r1.0), idx(&topo, r1.1)), (idx(&topo, r2.0), idx(&topo, r2.1)))
            .unwrap();
        let expected = interval_overlap(&hours, r1, r2);
        prop_assert!((t - expected).abs() < 1e-12, "{} vs {}", t, expected);
    }

    #[test]
    fn overlap_is_symmetric_and_bounded((hours, r1, r2) in hours_and_two_rides()) {
        let topo = line(&hours);
        let a = (idx(&topo, r1.0), idx(&topo, r1.1));
        let b = (idx(&topo, r2.0), idx(&topo, r2.1));
        let ab = topo.overlap(a, b).unwrap();
        let ba = topo.overlap(b, a).unwrap();
        prop_assert_eq!(&ab, &ba);
        let t = topo.exposure_time(a, b).unwrap();
        let ride = |r: (StationIdx, StationIdx)| topo.ride_time(&topo.path(r.0, r.1).unwrap());
        prop_assert!(t <= ride(a).min(ride(b)) + 1e-15);
        prop_assert!(t >= 0.0);
        prop_assert_eq!(topo.exposure_time(a, a).unwrap(), ride(a));
    }

    #[test]
    fn ride_time_is_additive(hours in prop::collection::vec(0.01f64..0.2, 2..10), picks in any::<(u8, u8, u8)>()) {
        let topo = line(&hours);
        let n = hours.len() + 1;
        let mut p = [picks.0 as usize % n, picks.1 as usize % n, picks.2 as usize % n];
        p.sort();
        prop_assume!(p[0] < p[1] && p[1] < p[2]);
        let t = |a: usize, b: usize| topo.ride_time(&topo.path(idx(&topo, a), idx(&topo, b)).unwrap());
        prop_assert!((t(p[0], p[2]) - t(p[0], p[1]) - t(p[1], p[2])).abs() < 1e-12);
    }

    #[test]
    fn backward_rides_are_unreachable(hours in prop::collection::vec(0.01f64..0.2, 1..10), a in 0usize..10, b in 0usize..10) {
        let topo = line(&hours);
        let n = hours.len() + 1;
        let (a, b) = (a % n, b % n);
        prop_assume!(a != b);
        prop_assert_eq!(topo.is_reachable(idx(&topo, a), idx(&topo, b)), a < b);
    }
}

fn forked() -> LineTopology {
    LineTopology::from_json_str(
        r#"{
          "trunk": [{"id": "t0", "name": "T0", "group": "trunk"}, {"id": "t1", "name": "T1", "group": "trunk"}],
          "branches": {
            "A": [{"id": "a0", "name": "A0", "group": "ga"}],
            "B": [{"id": "b0", "name": "B0", "group": "gb"}, {"id": "b1", "name": "B1", "group": "gb"}]
          },
          "segment_times": [
            {"from": "t0", "to": "t1", "hours": 0.1},
            {"from": "t1", "to": "a0", "hours": 0.05},
            {"from": "t1", "to": "b0", "hours": 0.2},
            {"from": "b0", "to": "b1", "hours": 0.1}
          ]
        }"#,
    )
    .unwrap()
}

#[test]
fn rides_on_different_branches_share_only_the_trunk() {
    let topo = forked();
    let id = |s: &str| topo.lookup(s).unwrap();
    let t = topo.exposure_time((id("t0"), id("a0")), (id("t0"), id("b1"))).unwrap();
    assert!((t - 0.1).abs() < 1e-15);
    assert_eq!(topo.exposure_time((id("t1"), id("a0")), (id("t1"), id("b0"))).unwrap(), 0.0);
    assert!(!topo.is_reachable(id("a0"), id("b0")));
    assert!(topo.path_by_id("a0", "b1").is_err());
}

#[test]
fn loader_reports_the_location_of_a_bad_segment() {
    let err = LineTopology::from_json_str(
        r#"{"trunk": [{"id": "x", "name": "X", "group": "g"}, {"id": "y", "name": "Y", "group": "g"}],
            "segment_times": [{"from": "x", "to": "y", "hours": -1}]}"#,
    )
    .unwrap_err();
    assert!(err.to_string().contains("segment_times[0]"), "{err}");
    let err = LineTopology::from_json_str("{\"trunk\": [}").unwrap_err();
    assert!(err.to_string().contains("line 1"), "{err}");
}

#[test]
fn fixture_topology_has_the_expected_shape() {
    let topo = LineTopology::from_json_str(transit_risk::fixture::TOPOLOGY).unwrap();
    assert_eq!(topo.trunk_len(), 13);
    assert_eq!(topo.branch_names().collect::<Vec<_>>(), ["A", "B"]);
    assert!(topo.path_by_id("alewife", "braintree").is_ok());
    assert!(topo.path_by_id("ashmont", "jfk").is_err());
}
