"""Discrete-event core: integer microsecond clock, event heap, named RNG streams."""

from __future__ import annotations

import hashlib
import heapq
import random
from typing import Any, Callable, TextIO

US_PER_S = 1_000_000


def to_us(seconds: float) -> int:
    """Convert seconds to the integer microsecond clock, rounding to nearest."""
    return int(round(seconds * US_PER_S))


def to_s(us: int) -> float:
    return us / US_PER_S


class SchedulingError(ValueError):
    pass


class Event:
    __slots__ = ("fire_at", "seq", "target", "kind", "callback", "args", "pending")

    def __init__(self, fire_at, seq, target, kind, callback, args):
        self.fire_at = fire_at
        self.seq = seq
        self.target = target
        self.kind = kind
        self.callback = callback
        self.args = args
        self.pending = True

    def __repr__(self):
        return f"Event(t={self.fire_at}us, seq={self.seq}, {self.target}:{self.kind})"


class RngStream(random.Random):
    """A `random.Random` whose state depends only on (seed, stream_id).

    Separate streams keep, e.g., node placement independent of traffic draws.
    """

    def __new__(cls, seed: int, stream_id: str):
        return super().__new__(cls)

    def __init__(self, seed: int, stream_id: str):
        self.stream_seed = seed
        self.stream_id = stream_id
        digest = hashlib.sha256(f"{seed}/{stream_id}".encode()).digest()
        super().__init__(int.from_bytes(digest[:8], "big"))


class Simulator:
    """Single-threaded event loop.

    Events at equal time fire in insertion order. Callbacks receive the
    positional args given to :meth:`schedule`.
    """

    def __init__(self, seed: int = 0, trace: TextIO | None = None):
        self.seed = seed
        self.now = 0
        self._heap: list[tuple[int, int, Event]] = []
        self._seq = 0
        self._streams: dict[str, RngStream] = {}
        self.trace = trace
        self.dispatched = 0
        self.cancelled = 0

    def rng(self, stream_id: str) -> RngStream:
        stream = self._streams.get(stream_id)
        if stream is None:
            stream = self._streams[stream_id] = RngStream(self.seed, stream_id)
        return stream

    def schedule(self, fire_at: int, callback: Callable[..., Any], *args,
                 target: str = "", kind: str = "") -> Event:
        if fire_at < self.now:
            raise SchedulingError(
                f"cannot schedule at {fire_at}us, clock is already {self.now}us")
        ev = Event(fire_at, self._seq, target, kind, callback, args)
        self._seq += 1
        heapq.heappush(self._heap, (fire_at, ev.seq, ev))
        return ev

    def schedule_in(self, delay: int, callback: Callable[..., Any], *args,
                    target: str = "", kind: str = "") -> Event:
        return self.schedule(self.now + delay, callback, *args, target=target, kind=kind)

    def cancel(self, ev: Event | None) -> bool:
        """Cancel a pending event. Lazy: the heap entry is skipped on pop."""
        if ev is None or not ev.pending:
            return False
        ev.pending = False
        self.cancelled += 1
        return True

    def pending(self) -> int:
        return sum(1 for _, _, ev in self._heap if ev.pending)

    def run_until(self, t_end: int) -> int:
        """Dispatch every event with fire_at <= t_end; return how many fired."""
        if t_end < self.now:
            raise SchedulingError(f"run_until({t_end}) is before clock {self.now}")
        heap = self._heap
        trace = self.trace
        count = 0
        while heap and heap[0][0] <= t_end:
            t, seq, ev = heapq.heappop(heap)
            if not ev.pending:
                continue
            ev.pending = False
            self.now = t
            if trace is not None:
                trace.write(f"{t} {seq} {ev.target} {ev.kind}\n")
            ev.callback(*ev.args)
            count += 1
        self.now = t_end
        self.dispatched += count
        return count
