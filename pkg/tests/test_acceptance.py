"""Acceptance criteria 1-10, one PASS/FAIL line each.

Run alone with ``pytest tests/test_acceptance.py -v``; the lines are listed
in the "acceptance criteria" section of the terminal summary. Criterion 9 runs
the reduced experiment grid (about five minutes on one core); set
``MESHSIM_WORKERS`` to spread its cells over several processes.
"""

import math
import os
import random

import pytest

from meshsim.config import ScenarioConfig
from meshsim.engine import RngStream, to_us
from meshsim.experiment import DROP_CAUSES, emit_results, run_matrix
from meshsim.mac import ACK_AIRTIME, CTS_AIRTIME, RTS_AIRTIME, BusyLedger
from meshsim.metrics import (LinkMeasure, MetricKind, Mode, best_path, elb, eld, eli, etx,
                             ibetx_link, link_cost, link_interference, path_cost)
from meshsim.probing import node_interference
from meshsim.topology import Topology, place_random

from conftest import ACCEPTANCE_LINES
from helpers import (D, PATH1, PATH2, PATH3, S, IdealNet, adjacency, brute_force_cost, costs_for,
                     mean_forward_ratio, random_connected_graph, random_measures, simple_paths,
                     three_path_topology)
from test_mac import DATA_640_AT_1M, line3

# pinned tolerances
EQ_TOL = 1e-9            # criterion 1
ESTIMATOR_TOL = 0.05     # criterion 2
TICK_S = 1e-6            # criterion 3: one clock tick
ROUTE_REL_TOL = 1e-9     # criterion 5
FUZZ_CASES = 10_000      # criterion 4
ORACLE_GRAPHS = 200      # criterion 5
LOOP_TOPOLOGIES = 50     # criterion 8
PAPER_THROUGHPUT_GAIN = 0.19
PAPER_DELAY_CUT = 0.24


def report(n: int, ok: bool, detail: str) -> None:
    line = f"[{'PASS' if ok else 'FAIL'}] C{n}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)


def check(n: int, ok: bool, detail: str) -> None:
    report(n, ok, detail)
    assert ok, detail


# ------------------------------------------------------------------------ 1

def test_c1_equation_examples():
    m = LinkMeasure(0.9, 0.8, 2e6, 0.5, 0.2)
    cases = [
        (eld(1, 1), 1.0), (eld(0.5, 0.5), 0.25), (eld(0.9, 0.8), 0.72),
        (etx(1, 1), 1.0), (etx(0.5, 0.5), 4.0), (etx(0, 0.9), math.inf),
        (elb([2e6, 2e6]), 1e6), (elb([11e6]), 11e6), (elb([11e6, 1e6]), 11e6 / 12),
        (link_interference(0.3, 0.6), 0.6), (link_interference(0, 0), 0.0),
        (link_interference(0.7, 0.7), 0.7),
        (eli(0), 0.0), (eli(1), 0.5), (eli(0.5), 1 / 3),
        (ibetx_link(m, Mode.LITERAL, 2e6).value, 0.24),
        (ibetx_link(m, Mode.CONSISTENT, 2e6).value, 0.72 ** -1 / 3),
    ]
    bad = [(got, want) for got, want in cases
           if not (got == want or abs(got - want) <= EQ_TOL * max(1.0, abs(want)))]
    check(1, not bad, f"{len(cases) - len(bad)}/{len(cases)} equation examples within {EQ_TOL:g}")


# ------------------------------------------------------------------------ 2

def test_c2_estimator_convergence():
    got = {p: mean_forward_ratio(p) for p in (0.1, 0.3, 0.5)}
    ok = all(abs(got[p] - (1 - p)) <= ESTIMATOR_TOL for p in got)
    detail = ", ".join(f"p={p}: mean d_f={v:.3f}" for p, v in got.items())
    check(2, ok, f"{detail} (target 1-p +/- {ESTIMATOR_TOL})")


# ------------------------------------------------------------------------ 3

def test_c3_interference_ledger():
    tau = 1.0
    h = line3()
    h.mac.unicast(0, 1, 640)
    h.run(tau)
    snd, rcv = h.mac.close_window(0), h.mac.close_window(1)
    want_rcv = (DATA_640_AT_1M + RTS_AIRTIME + CTS_AIRTIME) * 1e-6 / tau
    want_snd = (ACK_AIRTIME + DATA_640_AT_1M + RTS_AIRTIME + CTS_AIRTIME) * 1e-6 / tau
    got_rcv = node_interference(rcv, "receiver", tau)
    got_snd = node_interference(snd, "sender", tau)
    ok = abs(got_rcv - want_rcv) <= TICK_S / tau and abs(got_snd - want_snd) <= TICK_S / tau
    check(3, ok, f"receiver i={got_rcv:.6f} (want {want_rcv:.6f}), "
                 f"sender i={got_snd:.6f} (want {want_snd:.6f}), tolerance one tick")


# ------------------------------------------------------------------------ 4

def test_c4_interference_range_and_elb_fuzz():
    rng = random.Random(4)
    range_bad = elb_bad = 0
    for _ in range(FUZZ_CASES):
        tau = rng.uniform(0.1, 20)
        parts = [rng.uniform(0, tau) * rng.random() for _ in range(4)]
        ledger = BusyLedger(*parts, 0, to_us(tau))
        i_m = node_interference(ledger, "sender", tau)
        i_n = node_interference(ledger, rng.choice(["sender", "receiver"]), tau)
        if not 0 <= eli(link_interference(i_m, i_n)) <= 0.5:
            range_bad += 1
        rates = [rng.choice([1e6, 2e6, 5.5e6, 11e6]) * rng.uniform(0.5, 1) for _ in range(rng.randint(1, 30))]
        if not elb(rates + [rng.uniform(1e5, 1e8)]) < elb(rates):
            elb_bad += 1
    check(4, range_bad == 0 and elb_bad == 0,
          f"{FUZZ_CASES} cases: I_exp out of [0, 0.5] {range_bad} times, ELB not decreasing {elb_bad} times")


# ------------------------------------------------------------------------ 5

def test_c5_route_oracle():
    mismatches = 0
    checked = 0
    for g in range(ORACLE_GRAPHS):
        rng = random.Random(5000 + g)
        n = rng.randint(2, 8)
        edges = random_connected_graph(rng, n)
        adj = adjacency(n, edges)
        measures = random_measures(rng, edges)
        for kind in (MetricKind.HOP, MetricKind.ETX, MetricKind.IBETX_CONSISTENT):
            costs = costs_for(kind, measures)
            net = IdealNet(n, costs, seed=g)
            net.converge()
            for s in range(n):
                for d in range(n):
                    if s == d:
                        continue
                    checked += 1
                    want = brute_force_cost(adj, costs, s, d)
                    got = net.agents[s].route(d).cost
                    if not math.isclose(got, want, rel_tol=ROUTE_REL_TOL):
                        mismatches += 1
    check(5, mismatches == 0,
          f"{ORACLE_GRAPHS} graphs x 3 metrics, {checked} routes, {mismatches} mismatches vs exhaustive search")


# ------------------------------------------------------------------------ 6

def _three_path_measures(topo):
    cluster = set(range(7, topo.size))
    busy = {n: 0.6 if n in cluster or any(topo.distance(n, c) <= topo.cs_range for c in cluster) else 0.05
            for n in range(topo.size)}
    return {(a, b): LinkMeasure(1.0, 1.0, elb(topo.contention_domain((a, b)).rates()), busy[a], busy[b])
            for l in topo.links() for a, b in ((l.m, l.n), (l.n, l.m))}


def test_c6_three_path_regression():
    topo = three_path_topology()
    measures = _three_path_measures(topo)
    adj = {n: topo.neighbors[n] for n in range(topo.size)}
    chosen, routed = {}, {}
    for kind in (MetricKind.ETX, MetricKind.IBETX_CONSISTENT):
        costs = {k: link_cost(kind, m, topo.max_rate()).value for k, m in measures.items()}
        cands = [(p, path_cost([link_cost(kind, measures[(a, b)], topo.max_rate()) for a, b in zip(p, p[1:])]))
                 for p in simple_paths(adj, S, D)]
        chosen[kind] = best_path(cands)
        net = IdealNet(topo.size, costs)
        net.converge()
        routed[kind] = net.next_hop_chain(S, D)
    ok = (chosen[MetricKind.IBETX_CONSISTENT] == PATH2 and routed[MetricKind.IBETX_CONSISTENT] == PATH2
          and chosen[MetricKind.ETX] in (PATH1, PATH3) and routed[MetricKind.ETX] in (PATH1, PATH3))
    check(6, ok, f"brute force: ibetx {chosen[MetricKind.IBETX_CONSISTENT]}, etx {chosen[MetricKind.ETX]}; "
                 f"DSDV: ibetx {routed[MetricKind.IBETX_CONSISTENT]}, etx {routed[MetricKind.ETX]} "
                 f"(Path2 = {PATH2})")


# ------------------------------------------------------------------------ 7

def test_c7_determinism(tmp_path):
    cfg = ScenarioConfig(nodes=25, area=(707.1, 707.1), flows=10, rates=[6], seeds=[11], duration=60.0,
                         traffic_start=20.0)
    for name in ("a", "b"):
        emit_results(run_matrix(cfg, metrics=["ibetx"], trace=True), tmp_path / name)
    files = ["raw.csv", "trace_ibetx_r6_s11.log"]
    same = all((tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes() for f in files)
    size = (tmp_path / "a" / files[1]).stat().st_size
    check(7, same and size > 0, f"raw CSV and {size}-byte event trace identical across two runs: {same}")


# ------------------------------------------------------------------------ 8

def _connected_topology(seed: int) -> Topology:
    for attempt in range(1000):
        rng = RngStream(seed * 1000 + attempt, "placement")
        n = rng.randint(6, 16)
        topo = Topology(place_random(n, (700.0, 700.0), rng), area=(700.0, 700.0))
        if None not in topo.hop_distances(0):
            return topo
    raise RuntimeError("no connected placement found")


def test_c8_loop_freedom():
    violations = unreachable = chains = 0
    for t in range(LOOP_TOPOLOGIES):
        topo = _connected_topology(t)
        rng = random.Random(t)
        busy = [rng.uniform(0, 0.8) for _ in range(topo.size)]
        costs = {}
        for l in topo.links():
            b = elb(topo.contention_domain(l).rates())
            for a, c in ((l.m, l.n), (l.n, l.m)):
                costs[(a, c)] = link_cost(MetricKind.IBETX_CONSISTENT,
                                          LinkMeasure(1.0, 1.0, b, busy[a], busy[c]), topo.max_rate()).value
        net = IdealNet(topo.size, costs, seed=t)
        net.start()
        net.run(3 * net.agents[0].params.full_dump_period + 5.0)
        for s in range(topo.size):
            for d in range(topo.size):
                if s == d:
                    continue
                chain = net.next_hop_chain(s, d)
                chains += 1
                if chain is None:
                    unreachable += 1
                elif len(chain) != len(set(chain)):
                    violations += 1
    check(8, violations == 0 and unreachable == 0,
          f"{LOOP_TOPOLOGIES} topologies, {chains} next-hop chains: {violations} loops, {unreachable} unreachable")


# -------------------------------------------------------------------- 9, 10

GRID = ScenarioConfig(nodes=25, area=(707.1, 707.1), flows=10, rates=[2, 6, 10], seeds=[1, 2, 3, 4, 5],
                      duration=300.0, metric=["etx", "ibetx"])


@pytest.fixture(scope="module")
def grid_results(tmp_path_factory):
    workers = int(os.environ.get("MESHSIM_WORKERS", "1"))
    results = run_matrix(GRID, workers=workers)
    emit_results(results, tmp_path_factory.mktemp("grid"))
    return results


def _mean(results, metric, rate, field):
    vals = [r.row[field] for r in results if r.ok and r.metric == metric and r.rate == rate
            and r.row[field] is not None]
    return sum(vals) / len(vals) if vals else math.nan


def test_c9_reduced_grid_direction(grid_results):
    assert all(r.ok for r in grid_results), [r.error for r in grid_results if not r.ok]
    parts, ok = [], True
    for rate in (2.0, 6.0, 10.0):
        te, ti = _mean(grid_results, "etx", rate, "throughput_bps"), _mean(grid_results, "ibetx", rate, "throughput_bps")
        de, di = _mean(grid_results, "etx", rate, "avg_delay_s"), _mean(grid_results, "ibetx", rate, "avg_delay_s")
        gain, cut = (ti - te) / te, (de - di) / de
        parts.append(f"rate {rate:g}: throughput {gain:+.1%}, delay {-cut:+.1%}")
        if rate >= 6.0 and not ti >= te:
            ok = False
        if rate == 10.0 and not di <= de:
            ok = False
    check(9, ok, "ibetx vs etx " + "; ".join(parts)
          + f" (reference: +{PAPER_THROUGHPUT_GAIN:.0%} throughput, -{PAPER_DELAY_CUT:.0%} delay)")


def test_c10_conservation(grid_results):
    bad = [r.key for r in grid_results
           if not r.ok or r.row["sent"] != r.row["delivered"] + sum(r.row[f"drop_{c}"] for c in DROP_CAUSES)]
    check(10, not bad, f"{len(grid_results)} runs, {len(bad)} violate sent = delivered + drops")
