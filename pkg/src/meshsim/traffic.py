"""CBR flows and the two figures of merit: aggregate throughput and mean delay."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

from .engine import Simulator, to_s, to_us

DROP_CAUSES = ("mac_queue", "no_route", "settle_buffer", "retries", "ttl", "in_flight_at_end")


@dataclass(frozen=True)
class Flow:
    fid: int
    src: int
    dst: int
    rate: float                 # packets per second
    start: float
    stop: float
    packet_size: int = 640

    def __post_init__(self):
        if self.src == self.dst:
            raise ValueError("flow source and destination must differ")
        if self.rate <= 0:
            raise ValueError("flow rate must be positive")


class Packet:
    __slots__ = ("pid", "flow", "src", "dst", "size", "created", "hops", "custody")

    def __init__(self, pid, flow, created):
        self.pid = pid
        self.flow = flow
        self.src = flow.src
        self.dst = flow.dst
        self.size = flow.packet_size
        self.created = created
        self.hops = 0
        self.custody = flow.src

    def __repr__(self):
        return f"Packet({self.pid} {self.src}->{self.dst} custody={self.custody})"


@dataclass
class FlowStats:
    flow: Flow
    sent: int = 0
    delivered: int = 0
    delivered_bytes: int = 0
    delay_sum: float = 0.0
    duplicates: int = 0
    delays: list = field(default_factory=list)


@dataclass(frozen=True)
class RunSummary:
    throughput_bps: float
    avg_delay_s: float | None
    pdr: float
    sent: int
    delivered: int
    drops: dict


def packet_times(flow: Flow) -> list[int]:
    """Creation times (us) of every packet of a flow: start, start + 1/rate, ... < stop."""
    if flow.stop <= flow.start:
        return []
    start, stop = to_us(flow.start), to_us(flow.stop)
    out = []
    k = 0
    while True:
        t = start + to_us(k / flow.rate)
        if t >= stop:
            return out
        out.append(t)
        k += 1


class TrafficManager:
    """Generates packets for each flow and tracks their fate.

    Every packet ends in exactly one of: delivered, a drop cause, or still in
    the network when the run ends.
    """

    def __init__(self, sim: Simulator, flows: list[Flow], inject):
        self.sim = sim
        self.flows = flows
        self.inject = inject
        self.stats = {f.fid: FlowStats(f) for f in flows}
        self.drops = {c: 0 for c in DROP_CAUSES}
        self._ids = itertools.count()
        self._live: dict[int, Packet] = {}
        self._done: set[int] = set()

    def generate(self, flow: Flow) -> int:
        times = packet_times(flow)
        if times:
            self._schedule_next(flow, times, 0)
        return len(times)

    def start(self) -> None:
        for flow in self.flows:
            self.generate(flow)

    def _schedule_next(self, flow, times, k):
        self.sim.schedule(times[k], self._emit, flow, times, k, target=f"cbr{flow.fid}", kind="packet")

    def _emit(self, flow, times, k):
        pkt = Packet(next(self._ids), flow, self.sim.now)
        self.stats[flow.fid].sent += 1
        self._live[pkt.pid] = pkt
        if k + 1 < len(times):
            self._schedule_next(flow, times, k + 1)
        self.inject(pkt)

    def on_delivery(self, pkt: Packet, now: int | None = None) -> bool:
        now = self.sim.now if now is None else now
        st = self.stats[pkt.flow.fid]
        if pkt.pid in self._done:
            st.duplicates += 1
            return False
        self._done.add(pkt.pid)
        self._live.pop(pkt.pid, None)
        delay = to_s(now - pkt.created)
        st.delivered += 1
        st.delivered_bytes += pkt.size
        st.delay_sum += delay
        st.delays.append(delay)
        return True

    def on_drop(self, pkt: Packet, cause: str) -> None:
        if cause not in self.drops:
            raise ValueError(f"unknown drop cause {cause!r}")
        if pkt.pid in self._done:
            return
        self._done.add(pkt.pid)
        self._live.pop(pkt.pid, None)
        self.drops[cause] += 1

    def finish(self) -> None:
        for pid in sorted(self._live):
            self.on_drop(self._live[pid], "in_flight_at_end")

    def summarize(self, duration: float) -> RunSummary:
        return summarize(list(self.stats.values()), duration, dict(self.drops))


def summarize(stats: list[FlowStats], duration: float, drops: dict | None = None) -> RunSummary:
    if duration <= 0:
        raise ValueError("duration must be positive")
    sent = sum(s.sent for s in stats)
    delivered = sum(s.delivered for s in stats)
    bits = 8 * sum(s.delivered_bytes for s in stats)
    delay = sum(s.delay_sum for s in stats) / delivered if delivered else None
    return RunSummary(throughput_bps=bits / duration, avg_delay_s=delay,
                      pdr=delivered / sent if sent else 0.0, sent=sent, delivered=delivered,
                      drops=dict(drops or {}))


def choose_pairs(topology, count: int, rng, min_hops: int = 2) -> list[tuple[int, int]]:
    """Distinct (src, dst) pairs at least ``min_hops`` apart in the link graph."""
    candidates = []
    for s in range(topology.size):
        dist = topology.hop_distances(s)
        candidates += [(s, d) for d in range(topology.size)
                       if d != s and dist[d] is not None and dist[d] >= min_hops]
    if len(candidates) < count:
        raise ValueError(f"only {len(candidates)} eligible pairs for {count} flows")
    return rng.sample(candidates, count)
