#!/usr/bin/env python3
"""Independent brute-force evaluation of the fixture's reference values.

Plain loops, factorial-based Poisson weights, no shared code with the
Rust crate. Prints the values frozen into the crate's tests.
"""
import csv
import json
import math
import pathlib
import sys
from collections import defaultdict

FIX = pathlib.Path(__file__).resolve().parent.parent / "crates/core/fixtures/redline"


def load():
    topo = json.loads((FIX / "topology.json").read_text())
    trunk = [s["id"] for s in topo["trunk"]]
    branches = {k: [s["id"] for s in v] for k, v in topo["branches"].items()}
    group = {s["id"]: s["group"] for s in topo["trunk"]}
    for v in topo["branches"].values():
        group.update({s["id"]: s["group"] for s in v})
    seg = {(e["from"], e["to"]): e["hours"] for e in topo["segment_times"]}
    slices = defaultdict(float)
    intervals = set()
    with open(FIX / "od.csv") as fh:
        for row in csv.DictReader(fh):
            slices[(row["origin"], row["destination"])] += float(row["flow"]) * 4.0
            intervals.add(row["interval_start"])
    rates = {k: v / len(intervals) for k, v in slices.items()}
    return trunk, branches, group, seg, rates


def line_of(trunk, branches, o, d):
    if d in trunk:
        return None, trunk
    for name, br in branches.items():
        if d in br:
            return name, trunk + br
    raise KeyError(d)


def path(trunk, branches, o, d):
    _, line = line_of(trunk, branches, o, d)
    return line[line.index(o): line.index(d) + 1]


def exposure(trunk, branches, seg, od1, od2):
    p1 = path(trunk, branches, *od1)
    p2 = path(trunk, branches, *od2)
    e1 = set(zip(p1, p1[1:]))
    e2 = set(zip(p2, p2[1:]))
    return sum(seg[e] for e in zip(p1, p1[1:]) if e in e2)


def survival(n_load, pi, a):
    # carrier count Poisson, conditioned on at most ceil(load) carriers
    lam = n_load * pi
    k = math.ceil(n_load)
    w = [math.exp(-lam) * lam ** n / math.factorial(n) for n in range(k + 1)]
    return sum(math.exp(-n * a) * wn for n, wn in enumerate(w)) / sum(w)


def system_p(h_ab=4.5 / 60, headway=9 / 60, shares=(1 / 6,) * 6, pi_of=None,
             q=270.0, p=0.72, vent=1958.0, fm=0.0, rm=0.5, Fm=0.5, beta=1.0,
             detail=False):
    trunk, branches, group, seg, rates = load()
    names = sorted(branches)
    services = {}
    for name in names:
        loads = {}
        for (o, d), r in rates.items():
            if d in trunk:
                h = h_ab if name == names[0] else headway - h_ab
                loads[(o, d)] = r * h * beta
            elif d in branches[name]:
                loads[(o, d)] = r * headway * beta
        services[name] = loads
    src = 1 - fm * (1 - rm)
    tot_r = 0.0
    tot_d = 0.0
    per_car = defaultdict(lambda: [0.0, 0.0])
    per_service = defaultdict(lambda: [0.0, 0.0])
    for name, loads in services.items():
        ods = sorted(loads)
        for c, share in enumerate(shares):
            for ij in ods:
                log_nm = 0.0
                log_m = 0.0
                for rs in ods:
                    t = exposure(trunk, branches, seg, ij, rs)
                    if t == 0.0:
                        continue
                    n_load = loads[rs] * share
                    pi = pi_of(rs, group, trunk) if pi_of else 0.0092
                    u = p * q * t / vent
                    log_nm += math.log(survival(n_load, pi, src * u))
                    log_m += math.log(survival(n_load, pi, Fm * src * u))
                d = loads[ij] * share
                r = (1 - math.exp(log_nm)) * (1 - fm) * d + (1 - math.exp(log_m)) * fm * d
                tot_r += r
                tot_d += d
                per_car[c][0] += r
                per_car[c][1] += d
                per_service[name][0] += r
                per_service[name][1] += d
    if detail:
        return tot_r / tot_d, {k: v[0] / v[1] for k, v in per_car.items()}, \
            {k: v[0] / v[1] for k, v in per_service.items()}
    return tot_r / tot_d


def scenario1(rs, group, trunk):
    o, d = rs
    g = group[d] if d not in trunk else group[o]
    return {"trunk": 0.008, "braintree": 0.005, "ashmont": 0.015}[g]


def main():
    base = system_p()
    print(f"base system_P = {base!r}  ({base * 1000:.4f}/1000)")
    if "--quick" in sys.argv:
        return
    print("fm=0.5 reduction", 1 - system_p(fm=0.5) / base)
    print("fm=0.95 reduction", 1 - system_p(fm=0.95) / base)
    trunk, branches, group, seg, rates = load()
    num = sum(scenario1(k, group, trunk) * v for k, v in rates.items())
    den = sum(rates.values())
    uni = num / den
    s1 = system_p(pi_of=scenario1)
    s2 = system_p(pi_of=lambda rs, g, t: uni)
    print(f"equivalent uniform rate {uni!r}; scenario1 {s1!r} scenario2 {s2!r} ratio {s1 / s2}")
    for hab in [2.0, 3.0, 3.5, 4.0, 4.5, 5.0, 5.5, 6.0, 7.0]:
        print(f"h_ab={hab}: uniform {system_p(h_ab=hab / 60)!r}  scen1 {system_p(h_ab=hab / 60, pi_of=scenario1)!r}")
    sp, cars, _ = system_p(shares=(.125, .125, .25, .25, .125, .125), detail=True)
    print("car scenario 1:", repr(sp), cars)


if __name__ == "__main__":
    main()
