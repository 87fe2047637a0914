#!/usr/bin/env python3
"""Writes the synthetic Red-Line-like fixture (topology, OD slices, scenario).

Station layout mirrors the real line (13 trunk, 5 Braintree, 4 Ashmont);
demand is synthetic, gravity-shaped, Braintree-heavy.
"""
import json
import os
import pathlib

OUT = pathlib.Path(__file__).resolve().parent.parent / "crates/core/fixtures/redline"

TRUNK = [
    ("alewife", "Alewife"), ("davis", "Davis"), ("porter", "Porter"),
    ("harvard", "Harvard"), ("central", "Central"), ("kendall", "Kendall/MIT"),
    ("charles", "Charles/MGH"), ("park", "Park Street"), ("dtx", "Downtown Crossing"),
    ("south", "South Station"), ("broadway", "Broadway"), ("andrew", "Andrew"),
    ("jfk", "JFK/UMass"),
]
ASHMONT = [("savin", "Savin Hill"), ("fields", "Fields Corner"),
           ("shawmut", "Shawmut"), ("ashmont", "Ashmont")]
BRAINTREE = [("nquincy", "North Quincy"), ("wollaston", "Wollaston"),
             ("qcenter", "Quincy Center"), ("qadams", "Quincy Adams"),
             ("braintree", "Braintree")]

# minutes, door-close to door-close
TRUNK_MIN = [2.5, 1.5, 2.5, 2.0, 2.0, 2.0, 2.0, 1.0, 1.5, 2.0, 1.5, 2.5]
ASHMONT_MIN = [2.5, 2.0, 1.5, 1.5]
BRAINTREE_MIN = [5.5, 2.0, 2.5, 3.0, 3.5]

BOARD = {
    "alewife": 150, "davis": 120, "porter": 110, "harvard": 260, "central": 200,
    "kendall": 340, "charles": 160, "park": 380, "dtx": 360, "south": 420,
    "broadway": 60, "andrew": 50, "jfk": 90,
    "savin": 10, "fields": 10, "shawmut": 5,
    "nquincy": 15, "wollaston": 15, "qcenter": 20, "qadams": 10,
}
ATTRACT = {
    "davis": 30, "porter": 40, "harvard": 80, "central": 70, "kendall": 50,
    "charles": 40, "park": 60, "dtx": 60, "south": 70, "broadway": 60,
    "andrew": 70, "jfk": 120,
    "savin": 60, "fields": 90, "shawmut": 40, "ashmont": 150,
    "nquincy": 130, "wollaston": 110, "qcenter": 150, "qadams": 120, "braintree": 200,
}
PROFILE = [0.8, 0.9, 1.0, 1.1, 1.2, 1.2, 1.1, 1.0, 0.9, 0.8]

# boardings multiplier and branch preference by origin region
KNOBS = {"bt_time": 0.6, "ash_time": 1.8, "trunk_attr": 1.0, "scale": 0.6,
         "north_a": 2.0, "north_b": 0.5, "down_a": 0.5, "down_b": 1.5}
KNOBS.update(json.loads(os.environ.get("FIXTURE_KNOBS", "{}")))
NORTH = {"alewife", "davis", "porter", "harvard", "central", "kendall", "charles"}
DOWNTOWN = {"park", "dtx", "south"}


def bias(o, d):
    a = d in {s for s, _ in ASHMONT}
    b = d in {s for s, _ in BRAINTREE}
    if o in NORTH:
        return KNOBS["north_a"] if a else KNOBS["north_b"] if b else KNOBS["trunk_attr"]
    if o in DOWNTOWN:
        return KNOBS["down_a"] if a else KNOBS["down_b"] if b else KNOBS["trunk_attr"]
    return 1.0 if a or b else KNOBS["trunk_attr"]


def downstream(o):
    t = [s for s, _ in TRUNK]
    a = [s for s, _ in ASHMONT]
    b = [s for s, _ in BRAINTREE]
    if o in t:
        return t[t.index(o) + 1:] + a + b
    for br in (a, b):
        if o in br:
            return br[br.index(o) + 1:]
    raise KeyError(o)


def main():
    def st(items, group):
        return [{"id": i, "name": n, "group": group} for i, n in items]

    seg = []
    chain = [s for s, _ in TRUNK]
    for k, m in enumerate(TRUNK_MIN):
        seg.append({"from": chain[k], "to": chain[k + 1], "hours": m / 60})
    ash = [m * KNOBS["ash_time"] for m in ASHMONT_MIN]
    bt = [m * KNOBS["bt_time"] for m in BRAINTREE_MIN]
    for items, mins in ((ASHMONT, ash), (BRAINTREE, bt)):
        chain = ["jfk"] + [s for s, _ in items]
        for k, m in enumerate(mins):
            seg.append({"from": chain[k], "to": chain[k + 1], "hours": m / 60})
    topo = {
        "trunk": st(TRUNK, "trunk"),
        "branches": {"A": st(ASHMONT, "ashmont"), "B": st(BRAINTREE, "braintree")},
        "segment_times": seg,
    }
    (OUT / "topology.json").write_text(json.dumps(topo, indent=2) + "\n")

    rows = ["origin,destination,interval_start,flow"]
    for o, board in BOARD.items():
        ds = downstream(o)
        total = sum(ATTRACT[d] * bias(o, d) for d in ds)
        for d in ds:
            hourly = KNOBS["scale"] * board * ATTRACT[d] * bias(o, d) / total
            for k, f in enumerate(PROFILE):
                minute = 16 * 60 + 15 * k
                flow = round(hourly / 4 * f)
                rows.append(f"{o},{d},{minute // 60:02d}:{minute % 60:02d},{flow}")
    (OUT / "od.csv").write_text("\n".join(rows) + "\n")


if __name__ == "__main__":
    main()
