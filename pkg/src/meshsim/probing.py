"""Broadcast probes, sliding-window delivery ratios and node interference.

Every node broadcasts a fixed-size probe about once per ``probe_interval``.
A probe carries, for each neighbour, how many of that neighbour's probes the
sender heard during the last ``window`` seconds, plus the sender's most
recent receiver-side interference value. From these a node knows the
delivery ratio of each link in both directions.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field

from .engine import Simulator, to_us
from .mac import BusyLedger, Mac

PROBE_SIZE = 134


@dataclass(frozen=True)
class ProbePayload:
    origin: int
    counts: dict
    interference: float


@dataclass
class ProbeParams:
    interval: float = 1.0
    window: float = 10.0
    jitter: float = 0.1
    size: int = PROBE_SIZE

    @property
    def expected(self) -> int:
        return math.ceil(self.window / self.interval - 1e-9)


@dataclass(frozen=True)
class InterferenceSample:
    node: int
    i: float
    window_end: int


def node_interference(ledger: BusyLedger, role: str, tau_t: float) -> float:
    """Fraction of the window the node found the medium busy.

    A receiver counts reception plus RTS/CTS time; a sender additionally
    counts its own transmit time. Clamped to [0, 1].
    """
    if tau_t <= 0:
        raise ValueError("window length must be positive")
    if role == "receiver":
        busy = ledger.rx_time + ledger.rts_time + ledger.cts_time
    elif role == "sender":
        busy = ledger.rx_time + ledger.tx_time + ledger.rts_time + ledger.cts_time
    else:
        raise ValueError(f"role must be 'receiver' or 'sender', not {role!r}")
    return min(1.0, max(0.0, busy / tau_t))


def delivery_ratio(count: int, expected: int) -> float:
    if expected <= 0:
        raise ValueError("expected probe count must be positive")
    return min(1.0, max(0.0, count / expected))


@dataclass
class NodeProbeState:
    heard: dict = field(default_factory=dict)       # nbr -> deque of receive times (us)
    reported: dict = field(default_factory=dict)    # nbr -> nbr's count of our probes
    nbr_interference: dict = field(default_factory=dict)
    i_receiver: float = 0.0
    i_sender: float = 0.0
    sent: int = 0
    malformed: int = 0


class Prober:
    """Probe plane for every node of one simulation."""

    def __init__(self, sim: Simulator, mac: Mac, params: ProbeParams | None = None,
                 on_window_close=None):
        self.sim = sim
        self.mac = mac
        self.params = params or ProbeParams()
        self.nodes = [NodeProbeState() for _ in range(len(mac.nodes))]
        self._w = to_us(self.params.window)
        self._rng = sim.rng("probe-jitter")
        self.on_window_close = on_window_close
        self.history: list[InterferenceSample] = []
        self.keep_history = False

    def start(self) -> None:
        interval = to_us(self.params.interval)
        for n in range(len(self.nodes)):
            self.sim.schedule(self.sim.now + self._rng.randrange(interval), self._probe_timer, n,
                              target=f"probe{n}", kind="probe")
        self.sim.schedule(self.sim.now + self._w, self._close_windows,
                          target="probe", kind="window")

    def _probe_timer(self, node: int) -> None:
        self.mac.broadcast(node, self.emit_probe(node))
        j = self.params.jitter
        nxt = self.params.interval * (1.0 + self._rng.uniform(-j, j))
        self.sim.schedule(self.sim.now + to_us(nxt), self._probe_timer, node,
                          target=f"probe{node}", kind="probe")

    def _close_windows(self) -> None:
        tau = self.params.window
        now = self.sim.now
        for n, st in enumerate(self.nodes):
            ledger = self.mac.close_window(n)
            st.i_receiver = node_interference(ledger, "receiver", tau)
            st.i_sender = node_interference(ledger, "sender", tau)
            if self.keep_history:
                self.history.append(InterferenceSample(n, st.i_receiver, now))
        if self.on_window_close is not None:
            self.on_window_close()
        self.sim.schedule(now + self._w, self._close_windows, target="probe", kind="window")

    # --------------------------------------------------------------- per node

    def emit_probe(self, node: int):
        st = self.nodes[node]
        now = self.sim.now
        counts = {nbr: self._count(st, nbr, now) for nbr in sorted(st.heard)}
        counts = {k: v for k, v in counts.items() if v > 0}
        st.sent += 1
        payload = ProbePayload(node, counts, st.i_receiver)
        return self.mac.broadcast_frame(node, self.params.size, payload)

    def on_probe_received(self, node: int, frame, now: int | None = None) -> bool:
        now = self.sim.now if now is None else now
        st = self.nodes[node]
        payload = frame.payload
        if not isinstance(payload, ProbePayload) or not isinstance(payload.counts, dict) \
                or not 0.0 <= payload.interference <= 1.0:
            st.malformed += 1
            return False
        src = frame.src
        times = st.heard.get(src)
        if times is None:
            times = st.heard[src] = deque()
        times.append(now)
        st.reported[src] = payload.counts.get(node, 0)
        st.nbr_interference[src] = payload.interference
        return True

    def _count(self, st: NodeProbeState, nbr: int, now: int) -> int:
        times = st.heard.get(nbr)
        if not times:
            return 0
        cutoff = now - self._w
        while times and times[0] <= cutoff:
            times.popleft()
        # jitter can squeeze one extra probe into a window
        return min(len(times), self.params.expected)

    def ratio_from(self, node: int, nbr: int) -> float:
        """Delivery ratio nbr -> node, from probes node heard itself."""
        return delivery_ratio(self._count(self.nodes[node], nbr, self.sim.now), self.params.expected)

    def ratio_to(self, node: int, nbr: int) -> float:
        """Delivery ratio node -> nbr, as last reported in nbr's probes."""
        if self._count(self.nodes[node], nbr, self.sim.now) == 0:
            return 0.0
        count = self.nodes[node].reported.get(nbr, 0)
        return delivery_ratio(min(count, self.params.expected), self.params.expected)

    def neighbor_interference(self, node: int, nbr: int) -> float:
        return self.nodes[node].nbr_interference.get(nbr, 0.0)

    def own_interference(self, node: int, role: str = "sender") -> float:
        st = self.nodes[node]
        return st.i_sender if role == "sender" else st.i_receiver


class BusySampler:
    """Polls ``Mac.sample_busy`` at a fixed rate and counts busy samples."""

    def __init__(self, sim: Simulator, mac: Mac, node: int, rate_hz: float = 100.0):
        self.sim = sim
        self.mac = mac
        self.node = node
        self.period = to_us(1.0 / rate_hz)
        self.samples = 0
        self.busy = 0

    def start(self, at: int | None = None) -> None:
        self.sim.schedule(self.sim.now if at is None else at, self._tick,
                          target=f"sampler{self.node}", kind="sample")

    def _tick(self) -> None:
        busy, _ = self.mac.sample_busy(self.node)
        self.samples += 1
        self.busy += busy
        self.sim.schedule(self.sim.now + self.period, self._tick,
                          target=f"sampler{self.node}", kind="sample")

    def busy_seconds(self) -> float:
        return self.busy * self.period / 1_000_000
