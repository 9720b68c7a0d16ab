"""Shared fixtures: an ideal-transport DSDV network and exhaustive path search."""

from __future__ import annotations

import math
import random
import statistics

from meshsim.dsdv import DsdvAgent, DsdvParams, UpdateMessage
from meshsim.engine import Simulator, to_us
from meshsim.mac import Mac
from meshsim.metrics import LinkMeasure, MetricKind, link_cost
from meshsim.probing import ProbeParams, Prober
from meshsim.topology import Topology

INF = math.inf


class IdealNet:
    """DSDV agents exchanging updates over a lossless 1 ms broadcast channel."""

    def __init__(self, n: int, costs: dict, seed: int = 0, params: DsdvParams | None = None,
                 delay_us: int = 1000):
        self.n = n
        self.costs = costs
        self.sim = Simulator(seed)
        self.delay = delay_us
        self.nbrs = {i: sorted(b for (a, b) in costs if a == i) for i in range(n)}
        rng = self.sim.rng("routing")
        self.sent = []
        self.agents = [DsdvAgent(i, self.sim, link_cost=self._cost(i), send=self._send(i),
                                 params=params or DsdvParams(), rng=rng) for i in range(n)]

    def _cost(self, i):
        return lambda nbr: self.costs.get((i, nbr), INF)

    def _send(self, i):
        def send(msg):
            self.sent.append((self.sim.now, i, msg))
            for nbr in self.nbrs[i]:
                self.sim.schedule_in(self.delay, self.agents[nbr].on_update, msg, i)
        return send

    def start(self):
        for a in self.agents:
            a.start()

    def run(self, seconds: float):
        self.sim.run_until(self.sim.now + to_us(seconds))

    def quiesce(self, rounds: int | None = None):
        """Stop the dump timers, then re-advertise tables with frozen sequence numbers."""
        for a in self.agents:
            self.sim.cancel(a._dump_ev)
        self.run(10.0)
        for _ in range(rounds or 2 * self.n):
            for a in self.agents:
                entries = [(d, e.seq, e.cost, e.hops) for d, e in sorted(a.table.items())]
                self._send(a.node)(UpdateMessage("full_dump", a.node, entries))
                self.run(0.01)
        self.run(10.0)

    def converge(self, periods: int = 3):
        self.start()
        self.run(periods * self.agents[0].params.full_dump_period + 1.0)
        self.quiesce()

    def next_hop_chain(self, src: int, dest: int) -> list[int] | None:
        chain = [src]
        node = src
        while node != dest:
            nh = self.agents[node].next_hop(dest)
            if nh is None:
                return None
            if nh in chain:
                return chain + [nh]  # loop
            chain.append(nh)
            node = nh
        return chain


def simple_paths(adj: dict, src: int, dst: int):
    stack = [(src, [src])]
    while stack:
        node, path = stack.pop()
        if node == dst:
            yield path
            continue
        for nbr in adj[node]:
            if nbr not in path:
                stack.append((nbr, path + [nbr]))


def brute_force_cost(adj: dict, costs: dict, src: int, dst: int) -> float:
    best = INF
    for p in simple_paths(adj, src, dst):
        best = min(best, math.fsum(costs[(a, b)] for a, b in zip(p, p[1:])))
    return best


def random_connected_graph(rng: random.Random, n: int, extra: float = 0.35) -> list[tuple[int, int]]:
    """Random spanning tree plus each remaining pair with probability ``extra``."""
    order = list(range(n))
    rng.shuffle(order)
    edges = set()
    for k in range(1, n):
        a, b = order[k], order[rng.randrange(k)]
        edges.add((min(a, b), max(a, b)))
    for a in range(n):
        for b in range(a + 1, n):
            if (a, b) not in edges and rng.random() < extra:
                edges.add((a, b))
    return sorted(edges)


def random_measures(rng: random.Random, edges) -> dict:
    out = {}
    for a, b in edges:
        d_ab, d_ba = rng.uniform(0.3, 1.0), rng.uniform(0.3, 1.0)
        b_exp = rng.uniform(1e5, 2e6)
        i_a, i_b = rng.uniform(0, 0.9), rng.uniform(0, 0.9)
        out[(a, b)] = LinkMeasure(d_ab, d_ba, b_exp, i_a, i_b)
        out[(b, a)] = LinkMeasure(d_ba, d_ab, b_exp, i_b, i_a)
    return out


def costs_for(kind: MetricKind, measures: dict, rate_norm: float = 2e6) -> dict:
    return {k: link_cost(kind, m, rate_norm).value for k, m in measures.items()}


def adjacency(n: int, edges) -> dict:
    adj = {i: [] for i in range(n)}
    for a, b in edges:
        adj[a].append(b)
        adj[b].append(a)
    return adj


# Three S->D paths: two 2-hop paths whose relays sit within carrier sense of a
# busy six-node cluster, and a 4-hop detour out of the cluster's reach.
S, M1, M3, D, A, B, C = range(7)
THREE_PATH_POSITIONS = [(100, 700), (300, 600), (300, 560), (500, 700), (160, 940), (300, 1030),
                        (440, 940)] + [(300 + dx, 80 + dy) for dx in (-40, 0, 40) for dy in (-30, 30)]
PATH1 = [S, M1, D]
PATH2 = [S, A, B, C, D]
PATH3 = [S, M3, D]


def three_path_topology() -> Topology:
    return Topology(THREE_PATH_POSITIONS, tx_range=250, cs_range=550, area=(700, 1100))


def mean_forward_ratio(p: float, windows: int = 100, seed: int = 1) -> float:
    """Mean per-window d_f of a two-node link with Bernoulli loss ``p`` each way."""
    topo = Topology([(0, 0), (100, 0)], area=(200, 10), losses={(0, 1): (p, p)})
    sim = Simulator(seed)
    box = {}
    mac = Mac(sim, topo, deliver=lambda n, f: box["p"].on_probe_received(n, f))
    prober = box["p"] = Prober(sim, mac, ProbeParams())
    samples = []
    prober.on_window_close = lambda: samples.append(prober.ratio_to(0, 1))
    prober.start()
    sim.run_until(to_us(10.0 * (windows + 1) + 0.5))
    return statistics.fmean(samples[1:])  # the first window has no piggyback yet
