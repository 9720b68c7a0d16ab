"""Destination-sequenced distance-vector routing, parameterised by link metric.

Variant details:

* full dumps go out only on the periodic timer; triggered updates are always
  incremental ("no-dumps"), capped at one NPDU worth of entries, with any
  excess deferred to the next opportunity;
* a route whose next hop changes under a newer sequence number enters a
  settling period of ``settle_factor * WST``, where WST is a per-destination
  weighted average of how long the best route for a sequence number took to
  arrive after the first one. Data for a settling route is held until it
  settles or a better route shows up, and the change is advertised only once
  settled.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from typing import Callable

from .engine import Simulator, to_s, to_us

INF = math.inf


@dataclass
class DsdvParams:
    full_dump_period: float = 15.0
    dump_jitter: float = 0.05       # fraction of the period
    wst_initial: float = 1.0
    wst_alpha: float = 0.875
    settle_factor: float = 2.0
    incremental_cap: int = 100
    trigger_delay: float = 0.1
    min_trigger_gap: float = 1.0
    hold_cap: int = 20
    header_bytes: int = 20
    entry_bytes: int = 12
    break_after_empty_windows: int = 3


@dataclass
class RouteEntry:
    dest: int
    next_hop: int
    seq: int
    cost: float
    hops: int
    install_time: int = 0
    settle_until: int = 0
    advertise_at: int = 0

    @property
    def reachable(self) -> bool:
        return self.cost < INF

    def settling(self, now: int) -> bool:
        return now < self.settle_until


@dataclass
class UpdateMessage:
    kind: str                 # "full_dump" | "incremental"
    origin: int
    entries: list = field(default_factory=list)   # (dest, seq, cost, hops)

    def size(self, params: DsdvParams) -> int:
        return params.header_bytes + params.entry_bytes * len(self.entries)


class DsdvAgent:
    """Routing state and timers of one node.

    ``link_cost(nbr)`` is the current cost of the link to ``nbr`` under the
    active metric, ``send(msg)`` broadcasts an update, ``transmit(packet,
    next_hop)`` hands a released packet to the MAC and ``drop(packet,
    cause)`` records a loss.
    """

    def __init__(self, node: int, sim: Simulator, link_cost: Callable[[int], float],
                 send: Callable[[UpdateMessage], object],
                 transmit: Callable[[object, int], object] | None = None,
                 drop: Callable[[object, str], object] | None = None,
                 params: DsdvParams | None = None, rng=None):
        self.node = node
        self.sim = sim
        self.link_cost = link_cost
        self.send = send
        self.transmit = transmit or (lambda packet, nh: None)
        self.drop = drop or (lambda packet, cause: None)
        self.params = params or DsdvParams()
        self.rng = rng
        self.seq = 0
        self.table: dict[int, RouteEntry] = {node: RouteEntry(node, node, 0, 0.0, 0)}
        self.pending: set[int] = set()
        self.urgent: set[int] = set()       # lost or regained routes skip the trigger gap
        self.wst: dict[int, float] = {}
        self._seq_first_heard: dict[int, int] = {}
        self._seq_last_better: dict[int, int] = {}
        self.held: dict[int, deque] = {}
        self._release_ev: dict[int, object] = {}
        self._trigger_ev = None
        self._last_trigger: int | None = None
        self._dump_ev = None
        self.sent_full = 0
        self.sent_incremental = 0
        self.no_route_drops = 0
        self.hold_drops = 0
        self.empty_windows: dict[int, int] = {}

    # ----------------------------------------------------------------- timers

    def start(self, first_dump_at: int | None = None) -> None:
        period = to_us(self.params.full_dump_period)
        if first_dump_at is None:
            first_dump_at = self.sim.now + (self.rng.randrange(period) if self.rng else 0)
        self._dump_ev = self.sim.schedule(first_dump_at, self._dump_timer,
                                          target=f"dsdv{self.node}", kind="full_dump")

    def _dump_timer(self) -> None:
        self.send(self.periodic_full_dump())
        period = self.params.full_dump_period
        if self.rng is not None and self.params.dump_jitter:
            j = self.params.dump_jitter
            period *= 1.0 + self.rng.uniform(-j, j)
        self._dump_ev = self.sim.schedule(self.sim.now + to_us(period), self._dump_timer,
                                          target=f"dsdv{self.node}", kind="full_dump")

    # ----------------------------------------------------------- advertising

    def periodic_full_dump(self) -> UpdateMessage:
        self.seq += 2
        own = self.table[self.node]
        own.seq = self.seq
        entries = [(e.dest, e.seq, e.cost, e.hops) for _, e in sorted(self.table.items())]
        self.pending.clear()
        self.urgent.clear()
        self.sent_full += 1
        return UpdateMessage("full_dump", self.node, entries)

    def trigger_incremental(self) -> UpdateMessage | None:
        """Changed entries whose settling time has passed, at most one NPDU."""
        now = self.sim.now
        ready = sorted(d for d in self.pending if self.table[d].advertise_at <= now)
        if not ready:
            return None
        ready = ready[:self.params.incremental_cap]
        for d in ready:
            self.pending.discard(d)
            self.urgent.discard(d)
        self.sent_incremental += 1
        self._last_trigger = now
        entries = [(d, self.table[d].seq, self.table[d].cost, self.table[d].hops) for d in ready]
        return UpdateMessage("incremental", self.node, entries)

    def _schedule_trigger(self) -> None:
        if not self.pending:
            return
        now = self.sim.now
        earliest = min(max(self.table[d].advertise_at, now) for d in self.pending)
        at = max(earliest, now + to_us(self.params.trigger_delay))
        if self._last_trigger is not None and not self.urgent:
            at = max(at, self._last_trigger + to_us(self.params.min_trigger_gap))
        ev = self._trigger_ev
        if ev is not None and ev.pending:
            if ev.fire_at <= at:
                return
            self.sim.cancel(ev)
        self._trigger_ev = self.sim.schedule(at, self._trigger_timer,
                                             target=f"dsdv{self.node}", kind="trigger")

    def _trigger_timer(self) -> None:
        self._trigger_ev = None
        msg = self.trigger_incremental()
        if msg is not None:
            assert msg.kind == "incremental"
            self.send(msg)
        self._schedule_trigger()

    # -------------------------------------------------------------- receiving

    def _wst_of(self, dest: int) -> float:
        return self.wst.get(dest, self.params.wst_initial)

    def _new_seq(self, dest: int, now: int) -> None:
        first = self._seq_first_heard.get(dest)
        if first is not None:
            sample = to_s(self._seq_last_better.get(dest, first) - first)
            a = self.params.wst_alpha
            self.wst[dest] = a * self._wst_of(dest) + (1.0 - a) * sample
        self._seq_first_heard[dest] = now
        self._seq_last_better[dest] = now

    def _advertise(self, dest: int, at: int, urgent: bool = False) -> None:
        e = self.table[dest]
        e.advertise_at = min(e.advertise_at, at) if dest in self.pending else at
        self.pending.add(dest)
        if urgent:
            self.urgent.add(dest)

    def _damping(self, dest: int) -> int:
        return to_us(self.params.settle_factor * self._wst_of(dest))

    def on_update(self, msg: UpdateMessage, frm: int) -> list[int]:
        """Merge a neighbour's advertisement; return destinations that changed.

        Newer sequence numbers always win; for an equal sequence number the
        cheaper route wins. Switching between two live routes settles before
        data uses it, and cost improvements are advertised only after the
        damping delay. Losing or regaining a destination is advertised at once.
        """
        now = self.sim.now
        lc = self.link_cost(frm)
        if not lc < INF:
            return []
        changed = []
        for dest, seq, adv_cost, adv_hops in msg.entries:
            if dest == self.node:
                if adv_cost == INF and seq > self.seq:
                    # someone lost its route to us: answer with a fresher sequence number
                    self.seq = seq + 1 if seq % 2 else seq + 2
                    self.table[self.node].seq = self.seq
                    self._advertise(self.node, now, urgent=True)
                continue
            cand = adv_cost + lc
            hops = adv_hops + 1
            cur = self.table.get(dest)
            if cur is None:
                if cand < INF:
                    self._seq_first_heard[dest] = now
                    self.table[dest] = RouteEntry(dest, frm, seq, cand, hops, install_time=now)
                    self._advertise(dest, now, urgent=True)
                    changed.append(dest)
                continue
            if seq > cur.seq:
                self._new_seq(dest, now)
                if cand < INF and not cur.reachable:
                    self._set(cur, frm, seq, cand, hops, now)
                    self._advertise(dest, now, urgent=True)
                    self._release(dest)
                elif cand < INF and frm != cur.next_hop:
                    self._set(cur, frm, seq, cand, hops, now)
                    cur.settle_until = now + self._damping(dest)
                    self._advertise(dest, cur.settle_until)
                elif cand < INF:
                    cur.seq, cur.cost, cur.hops = seq, cand, hops
                    if not cur.settling(now):
                        self._advertise(dest, now)
                elif cur.reachable:
                    self._set(cur, frm, seq, INF, hops, now)
                    self._advertise(dest, now, urgent=True)
                    self._release(dest)
                else:
                    cur.seq = seq
                changed.append(dest)
            elif seq == cur.seq and cand < cur.cost:
                self._seq_last_better[dest] = now
                self._set(cur, frm, seq, cand, hops, now)
                self._advertise(dest, now + self._damping(dest))
                self._release(dest)
                changed.append(dest)
        self._schedule_trigger()
        return changed

    @staticmethod
    def _set(e: RouteEntry, next_hop, seq, cost, hops, now) -> None:
        e.next_hop, e.seq, e.cost, e.hops = next_hop, seq, cost, hops
        e.install_time = now
        e.settle_until = min(e.settle_until, now)

    def on_link_break(self, nbr: int) -> list[int]:
        now = self.sim.now
        broken = []
        for dest, e in sorted(self.table.items()):
            if dest != self.node and e.next_hop == nbr and e.reachable:
                if e.seq % 2 == 0:
                    e.seq += 1
                e.cost = INF
                e.settle_until = now
                self._advertise(dest, now, urgent=True)
                broken.append(dest)
        if broken:
            self._schedule_trigger()
            for dest in broken:
                self._release(dest)
        return broken

    def on_probe_window(self, heard_from: Callable[[int], bool]) -> list[int]:
        """Count empty probe windows per next hop; break links that stay silent."""
        broken = []
        for nbr in sorted({e.next_hop for e in self.table.values() if e.reachable} - {self.node}):
            if heard_from(nbr):
                self.empty_windows[nbr] = 0
                continue
            self.empty_windows[nbr] = self.empty_windows.get(nbr, 0) + 1
            if self.empty_windows[nbr] >= self.params.break_after_empty_windows:
                broken += self.on_link_break(nbr)
        return broken

    # ------------------------------------------------------------- forwarding

    def route(self, dest: int) -> RouteEntry | None:
        return self.table.get(dest)

    def next_hop(self, dest: int) -> int | None:
        e = self.table.get(dest)
        if e is None or not e.reachable or dest == self.node:
            return None
        return e.next_hop

    def forward(self, packet, dest: int) -> int | None:
        """Next hop for ``packet``, or None if it was held or dropped."""
        now = self.sim.now
        e = self.table.get(dest)
        if e is None or not e.reachable:
            self.no_route_drops += 1
            self.drop(packet, "no_route")
            return None
        if e.settling(now):
            buf = self.held.setdefault(dest, deque())
            if len(buf) >= self.params.hold_cap:
                self.hold_drops += 1
                self.drop(buf.popleft(), "settle_buffer")
            buf.append(packet)
            ev = self._release_ev.get(dest)
            if ev is None or not ev.pending:
                self._release_ev[dest] = self.sim.schedule(
                    e.settle_until, self._release, dest, target=f"dsdv{self.node}", kind="release")
            return None
        return e.next_hop

    def _release(self, dest: int) -> None:
        ev = self._release_ev.pop(dest, None)
        if ev is not None:
            self.sim.cancel(ev)
        buf = self.held.pop(dest, None)
        if not buf:
            return
        e = self.table.get(dest)
        if e is not None and e.settling(self.sim.now) and e.reachable:
            # still settling (e.g. moved again); keep waiting
            self.held[dest] = buf
            self._release_ev[dest] = self.sim.schedule(
                e.settle_until, self._release, dest, target=f"dsdv{self.node}", kind="release")
            return
        for packet in buf:
            nh = self.forward(packet, dest)
            if nh is not None:
                self.transmit(packet, nh)

    def held_count(self) -> int:
        return sum(len(b) for b in self.held.values())
