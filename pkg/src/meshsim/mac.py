"""Simplified 802.11 DCF over the unit-disk channel.

Unicast frames always use RTS/CTS/DATA/ACK; broadcasts are sent once with no
handshake. Every node in carrier-sense range of a transmitter senses the
medium busy for the frame's airtime and two overlapping frames destroy each
other at any node that senses both (no capture). Frames that survive the
channel are then dropped independently with the link's directional loss
probability.

Each node integrates a busy-time ledger with four buckets. At any instant
the node charges exactly one bucket, chosen by priority tx > rx > rts > cts:
its own RTS/CTS go to rts/cts, any other own frame to tx; sensed RTS/CTS go
to rts/cts, any other sensed frame to rx.
"""

from __future__ import annotations

import enum
from collections import deque
from dataclasses import dataclass
from typing import Any, Callable

from .engine import Simulator, to_s

BROADCAST = -1

# 802.11b-style timing, microseconds
SLOT = 20
SIFS = 10
DIFS = 50
CW_MIN = 32
CW_MAX = 1024
# control frames at the 1 Mb/s basic rate incl. 192 us long PLCP preamble
RTS_AIRTIME = 352   # 20 bytes
CTS_AIRTIME = 304   # 14 bytes
ACK_AIRTIME = 304   # 14 bytes

TX, RX, RTS_B, CTS_B, IDLE = range(5)


class FrameKind(enum.Enum):
    RTS = "RTS"
    CTS = "CTS"
    DATA = "DATA"
    ACK = "ACK"
    BCAST = "BCAST"


class Outcome(enum.Enum):
    DELIVERED = "delivered"
    RTS_FAILED = "rts_failed"
    DATA_FAILED = "data_failed"


def airtime_us(size_bytes: int, rate_bps: float) -> int:
    return max(1, int(round(size_bytes * 8 * 1_000_000 / rate_bps)))


class Frame:
    __slots__ = ("kind", "src", "dst", "size", "payload", "airtime", "nav", "seq", "data")

    def __init__(self, kind, src, dst, size=0, payload=None, airtime=0, nav=0, seq=0, data=None):
        self.kind = kind
        self.src = src
        self.dst = dst
        self.size = size
        self.payload = payload
        self.airtime = airtime
        self.nav = nav          # reservation after the frame ends, us
        self.seq = seq
        self.data = data        # the DATA frame an RTS/CTS/ACK belongs to

    def __repr__(self):
        return f"Frame({self.kind.value} {self.src}->{self.dst} {self.size}B {self.airtime}us)"


@dataclass
class MacParams:
    queue_cap: int = 50
    rts_retry_limit: int = 4
    data_retry_limit: int = 7
    broadcast_rate: float | None = None   # defaults to the topology default rate


@dataclass(frozen=True)
class BusyLedger:
    """Busy seconds per bucket over [window_start, window_end]."""

    rx_time: float
    tx_time: float
    rts_time: float
    cts_time: float
    window_start: int
    window_end: int

    @property
    def total(self) -> float:
        return self.rx_time + self.tx_time + self.rts_time + self.cts_time


@dataclass
class MacCounters:
    tx: int = 0
    rx: int = 0
    drops: int = 0
    collisions: int = 0
    retries: int = 0


class _Tx:
    __slots__ = ("node", "frame", "start", "end")

    def __init__(self, node, frame, start, end):
        self.node = node
        self.frame = frame
        self.start = start
        self.end = end


class MacNode:
    def __init__(self, nid: int):
        self.id = nid
        self.queue: deque[Frame] = deque()
        self.state = "idle"          # idle | contend | tx | wait_cts | wait_ack
        self.cw = CW_MIN
        self.backoff_slots: int | None = None
        self.count_start = 0
        self.attempt_ev = None
        self.nav_until = 0
        self.nav_ev = None
        self.timeout_ev = None
        self.short_retries = 0
        self.long_retries = 0
        self.mac_seq = 0
        self.last_seq: dict[int, int] = {}
        # channel view
        self.sensed: dict[_Tx, bool] = {}
        self.transmitting: _Tx | None = None
        self.cat_count = [0, 0, 0, 0]
        self.cat = IDLE
        self.cat_since = 0
        self.buckets = [0, 0, 0, 0]
        self.window_start = 0
        self.counters = MacCounters()


def _own_cat(kind: FrameKind) -> int:
    if kind is FrameKind.RTS:
        return RTS_B
    if kind is FrameKind.CTS:
        return CTS_B
    return TX


def _sensed_cat(kind: FrameKind) -> int:
    if kind is FrameKind.RTS:
        return RTS_B
    if kind is FrameKind.CTS:
        return CTS_B
    return RX


class Mac:
    """All nodes' MAC state over a shared topology.

    ``deliver(node, frame)`` is called for every decoded BCAST and every
    non-duplicate DATA addressed to ``node``. ``tx_result(node, frame,
    outcome)`` reports how each unicast DATA frame ended.
    """

    def __init__(self, sim: Simulator, topology, params: MacParams | None = None,
                 deliver: Callable[[int, Frame], Any] | None = None,
                 tx_result: Callable[[int, Frame, Outcome], Any] | None = None,
                 on_queue_drop: Callable[[int, Frame], Any] | None = None):
        self.sim = sim
        self.topo = topology
        self.params = params or MacParams()
        self.nodes = [MacNode(i) for i in range(topology.size)]
        self.deliver = deliver or (lambda node, frame: None)
        self.tx_result = tx_result or (lambda node, frame, outcome: None)
        self.on_queue_drop = on_queue_drop or (lambda node, frame: None)
        self._backoff_rng = sim.rng("mac-backoff")
        self._loss_rng = sim.rng("loss")
        self._bcast_rate = self.params.broadcast_rate or topology.default_rate
        self._cs = [[self.nodes[j] for j in topology.cs_neighbors[i]] for i in range(topology.size)]
        self._in_range = [set(topology.neighbors[i]) for i in range(topology.size)]
        self.check_nav = True

    # ------------------------------------------------------------------ frames

    def data_frame(self, src: int, dst: int, size: int, payload=None) -> Frame:
        rate = self.topo.link(src, dst).nominal_rate
        return Frame(FrameKind.DATA, src, dst, size, payload, airtime_us(size, rate))

    def broadcast_frame(self, src: int, size: int, payload=None) -> Frame:
        return Frame(FrameKind.BCAST, src, BROADCAST, size, payload,
                     airtime_us(size, self._bcast_rate))

    # ------------------------------------------------------------- public API

    def enqueue_frame(self, node: int, frame: Frame) -> bool:
        """Queue a DATA or BCAST frame. Returns False if the queue was full."""
        if frame.src != node:
            raise ValueError("frame.src must be the enqueuing node")
        if frame.kind not in (FrameKind.DATA, FrameKind.BCAST):
            raise ValueError(f"cannot enqueue a {frame.kind.value} frame")
        mn = self.nodes[node]
        if len(mn.queue) >= self.params.queue_cap:
            mn.counters.drops += 1
            self.on_queue_drop(node, frame)
            return False
        if frame.kind is FrameKind.DATA:
            mn.mac_seq += 1
            frame.seq = mn.mac_seq
        if frame.kind is FrameKind.BCAST and mn.queue:
            # control traffic jumps ahead of queued data, behind the frame in service
            pos = 1
            while pos < len(mn.queue) and mn.queue[pos].kind is FrameKind.BCAST:
                pos += 1
            mn.queue.insert(pos, frame)
        else:
            mn.queue.append(frame)
        if mn.state == "idle":
            self._begin_contention(mn)
        return True

    def broadcast(self, node: int, frame: Frame) -> bool:
        if frame.kind is not FrameKind.BCAST:
            raise ValueError("broadcast() needs a BCAST frame")
        return self.enqueue_frame(node, frame)

    def unicast(self, node: int, dst: int, size: int, payload=None) -> bool:
        return self.enqueue_frame(node, self.data_frame(node, dst, size, payload))

    def transmit_now(self, node: int, frame: Frame) -> None:
        """Put a frame on the air immediately, bypassing queue and contention.

        Intended for scripted scenarios (e.g. deliberately colliding frames).
        """
        self._start_tx(self.nodes[node], frame)

    def medium_busy(self, node: int) -> bool:
        mn = self.nodes[node]
        return bool(mn.sensed) or mn.transmitting is not None

    def sample_busy(self, node: int) -> tuple[bool, BusyLedger]:
        mn = self.nodes[node]
        now = self.sim.now
        busy = mn.cat != IDLE or now < mn.nav_until
        return busy, self._snapshot(mn, now)

    def close_window(self, node: int) -> BusyLedger:
        """Return the ledger accumulated since the last close and reset it."""
        mn = self.nodes[node]
        now = self.sim.now
        ledger = self._snapshot(mn, now)
        mn.buckets = [0, 0, 0, 0]
        mn.cat_since = now
        mn.window_start = now
        return ledger

    def counters(self, node: int) -> MacCounters:
        return self.nodes[node].counters

    def queue_len(self, node: int) -> int:
        return len(self.nodes[node].queue)

    # ----------------------------------------------------------------- ledger

    def _snapshot(self, mn: MacNode, now: int) -> BusyLedger:
        b = list(mn.buckets)
        if mn.cat != IDLE:
            b[mn.cat] += now - mn.cat_since
        return BusyLedger(rx_time=to_s(b[RX]), tx_time=to_s(b[TX]), rts_time=to_s(b[RTS_B]),
                          cts_time=to_s(b[CTS_B]), window_start=mn.window_start, window_end=now)

    def _cat_change(self, mn: MacNode, cat: int, delta: int) -> None:
        mn.cat_count[cat] += delta
        new = IDLE
        for c in range(4):
            if mn.cat_count[c]:
                new = c
                break
        if new != mn.cat:
            now = self.sim.now
            if mn.cat != IDLE:
                mn.buckets[mn.cat] += now - mn.cat_since
            mn.cat = new
            mn.cat_since = now

    # ------------------------------------------------------------- contention

    def _begin_contention(self, mn: MacNode) -> None:
        if not mn.queue:
            mn.state = "idle"
            return
        mn.state = "contend"
        if mn.backoff_slots is None:
            mn.backoff_slots = self._backoff_rng.randrange(mn.cw)
        self._try_schedule(mn)

    def _try_schedule(self, mn: MacNode) -> None:
        if mn.attempt_ev is not None or mn.state != "contend":
            return
        if mn.sensed or mn.transmitting is not None:
            return  # resumed when the medium goes idle
        now = self.sim.now
        if now < mn.nav_until:
            if mn.nav_ev is None or not mn.nav_ev.pending:
                mn.nav_ev = self.sim.schedule(mn.nav_until, self._nav_expired, mn,
                                              target=f"mac{mn.id}", kind="nav")
            return
        mn.count_start = now + DIFS
        mn.attempt_ev = self.sim.schedule(mn.count_start + mn.backoff_slots * SLOT,
                                          self._attempt, mn, target=f"mac{mn.id}", kind="attempt")

    def _freeze(self, mn: MacNode) -> None:
        if mn.attempt_ev is None:
            return
        self.sim.cancel(mn.attempt_ev)
        mn.attempt_ev = None
        elapsed = (self.sim.now - mn.count_start) // SLOT
        if elapsed > 0:
            mn.backoff_slots = max(0, mn.backoff_slots - elapsed)

    def _nav_expired(self, mn: MacNode) -> None:
        mn.nav_ev = None
        if mn.state == "contend":
            self._try_schedule(mn)

    def _set_nav(self, mn: MacNode, until: int) -> None:
        if until <= mn.nav_until:
            return
        mn.nav_until = until
        if mn.state == "contend":
            self._freeze(mn)
            self._try_schedule(mn)

    def _attempt(self, mn: MacNode) -> None:
        mn.attempt_ev = None
        if self.check_nav:
            assert self.sim.now >= mn.nav_until, "initiating a frame while NAV pending"
        frame = mn.queue[0]
        mn.backoff_slots = None
        if frame.kind is FrameKind.BCAST:
            mn.state = "tx"
            self._start_tx(mn, frame)
            return
        data_air = frame.airtime
        nav = SIFS + CTS_AIRTIME + SIFS + data_air + SIFS + ACK_AIRTIME
        rts = Frame(FrameKind.RTS, mn.id, frame.dst, 20, airtime=RTS_AIRTIME, nav=nav, data=frame)
        mn.state = "tx"
        self._start_tx(mn, rts)

    # ----------------------------------------------------------------- channel

    def _start_tx(self, mn: MacNode, frame: Frame) -> None:
        now = self.sim.now
        tx = _Tx(mn, frame, now, now + frame.airtime)
        mn.counters.tx += 1
        if mn.transmitting is not None:
            raise RuntimeError(f"node {mn.id} is already transmitting")
        # half duplex: anything we were receiving is lost
        for other in mn.sensed:
            mn.sensed[other] = False
        if mn.state == "contend":
            self._freeze(mn)
        mn.transmitting = tx
        self._cat_change(mn, _own_cat(frame.kind), +1)
        sensed_cat = _sensed_cat(frame.kind)
        for r in self._cs[mn.id]:
            ok = True
            if r.sensed or r.transmitting is not None:
                ok = False
                for other in r.sensed:
                    if r.sensed[other]:
                        r.sensed[other] = False
                        r.counters.collisions += 1
            r.sensed[tx] = ok
            if not ok:
                r.counters.collisions += 1
            self._cat_change(r, sensed_cat, +1)
            if r.state == "contend":
                self._freeze(r)
        self.sim.schedule(tx.end, self._end_tx, tx, target=f"mac{mn.id}", kind=f"end-{frame.kind.value}")

    def _end_tx(self, tx: _Tx) -> None:
        mn = tx.node
        frame = tx.frame
        mn.transmitting = None
        self._cat_change(mn, _own_cat(frame.kind), -1)
        sensed_cat = _sensed_cat(frame.kind)
        in_range = self._in_range[mn.id]
        receivers = []
        for r in self._cs[mn.id]:
            ok = r.sensed.pop(tx)
            self._cat_change(r, sensed_cat, -1)
            if ok:
                receivers.append(r)
        self._after_own_tx(mn, frame)
        kind = frame.kind
        loss_rng = self._loss_rng
        for r in receivers:
            rid = r.id
            if kind is FrameKind.BCAST:
                if rid in in_range and loss_rng.random() >= self.topo.loss(mn.id, rid):
                    r.counters.rx += 1
                    self.deliver(rid, frame)
            elif rid == frame.dst:
                if rid in in_range and loss_rng.random() >= self.topo.loss(mn.id, rid):
                    r.counters.rx += 1
                    self._on_addressed(r, frame)
            elif frame.nav and kind in (FrameKind.RTS, FrameKind.CTS):
                self._set_nav(r, self.sim.now + frame.nav)
        for r in self._cs[mn.id]:
            if not r.sensed and r.transmitting is None and r.state == "contend":
                self._try_schedule(r)

    def _after_own_tx(self, mn: MacNode, frame: Frame) -> None:
        now = self.sim.now
        kind = frame.kind
        if kind is FrameKind.BCAST:
            if mn.queue and mn.queue[0] is frame:
                mn.queue.popleft()
                mn.cw = CW_MIN
                self._begin_contention(mn)
            elif mn.state == "contend":
                self._try_schedule(mn)  # scripted frame sent via transmit_now
        elif kind is FrameKind.RTS:
            mn.state = "wait_cts"
            mn.timeout_ev = self.sim.schedule(now + SIFS + CTS_AIRTIME + SLOT, self._timeout, mn,
                                              target=f"mac{mn.id}", kind="cts-timeout")
        elif kind is FrameKind.DATA:
            mn.state = "wait_ack"
            mn.timeout_ev = self.sim.schedule(now + SIFS + ACK_AIRTIME + SLOT, self._timeout, mn,
                                              target=f"mac{mn.id}", kind="ack-timeout")
        elif mn.state == "contend":
            # finished a CTS/ACK response; resume our own backoff
            self._try_schedule(mn)

    def _respond(self, mn: MacNode, frame: Frame) -> None:
        if mn.transmitting is not None:
            if frame.kind is FrameKind.DATA:
                # could not follow up our own CTS; treat as a failed handshake
                mn.state = "wait_cts"
                self._timeout(mn)
            return
        self._start_tx(mn, frame)

    def _on_addressed(self, r: MacNode, frame: Frame) -> None:
        kind = frame.kind
        now = self.sim.now
        if kind is FrameKind.RTS:
            if r.state in ("idle", "contend") and r.transmitting is None and now >= r.nav_until:
                nav = frame.nav - SIFS - CTS_AIRTIME
                cts = Frame(FrameKind.CTS, r.id, frame.src, 14, airtime=CTS_AIRTIME, nav=nav,
                            data=frame.data)
                self.sim.schedule(now + SIFS, self._respond, r, cts, target=f"mac{r.id}", kind="cts")
        elif kind is FrameKind.CTS:
            if r.state == "wait_cts" and r.queue and r.queue[0] is frame.data:
                self.sim.cancel(r.timeout_ev)
                r.timeout_ev = None
                r.state = "tx"
                self.sim.schedule(now + SIFS, self._respond, r, frame.data,
                                  target=f"mac{r.id}", kind="data")
        elif kind is FrameKind.DATA:
            ack = Frame(FrameKind.ACK, r.id, frame.src, 14, airtime=ACK_AIRTIME, data=frame)
            self.sim.schedule(now + SIFS, self._respond, r, ack, target=f"mac{r.id}", kind="ack")
            if r.last_seq.get(frame.src) != frame.seq:
                r.last_seq[frame.src] = frame.seq
                self.deliver(r.id, frame)
        elif kind is FrameKind.ACK:
            if r.state == "wait_ack" and r.queue and r.queue[0] is frame.data:
                self.sim.cancel(r.timeout_ev)
                r.timeout_ev = None
                self._finish_unicast(r, Outcome.DELIVERED)

    def _timeout(self, mn: MacNode) -> None:
        mn.timeout_ev = None
        waiting_cts = mn.state == "wait_cts"
        mn.counters.retries += 1
        if waiting_cts:
            mn.short_retries += 1
            failed = mn.short_retries > self.params.rts_retry_limit
            outcome = Outcome.RTS_FAILED
        else:
            mn.long_retries += 1
            failed = mn.long_retries > self.params.data_retry_limit
            outcome = Outcome.DATA_FAILED
        if failed:
            self._finish_unicast(mn, outcome)
            return
        mn.cw = min(mn.cw * 2, CW_MAX)
        mn.backoff_slots = None
        self._begin_contention(mn)

    def _finish_unicast(self, mn: MacNode, outcome: Outcome) -> None:
        frame = mn.queue.popleft()
        mn.cw = CW_MIN
        mn.short_retries = mn.long_retries = 0
        mn.backoff_slots = None
        mn.state = "idle"
        if outcome is not Outcome.DELIVERED:
            mn.counters.drops += 1
        self.tx_result(mn.id, frame, outcome)
        if mn.state == "idle":
            self._begin_contention(mn)
