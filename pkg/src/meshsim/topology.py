"""Unit-disk radio model: placement, links, loss and contention domains."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import combinations
from typing import Mapping

# slack on the closed range boundary so that d == range survives float noise
_RANGE_EPS = 1e-9


@dataclass(frozen=True)
class Link:
    """Undirected link with m < n. ``loss_f`` applies m->n, ``loss_r`` n->m."""

    m: int
    n: int
    nominal_rate: float
    loss_f: float = 0.0
    loss_r: float = 0.0

    def __post_init__(self):
        if self.m >= self.n:
            raise ValueError(f"link endpoints must satisfy m < n, got ({self.m}, {self.n})")
        if self.nominal_rate <= 0:
            raise ValueError("nominal_rate must be positive")
        for p in (self.loss_f, self.loss_r):
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"loss probability {p} outside [0, 1]")

    @property
    def key(self) -> tuple[int, int]:
        return (self.m, self.n)

    def loss(self, src: int, dst: int) -> float:
        if (src, dst) == (self.m, self.n):
            return self.loss_f
        if (src, dst) == (self.n, self.m):
            return self.loss_r
        raise KeyError(f"({src}, {dst}) is not a direction of link {self.key}")


@dataclass(frozen=True)
class ContentionDomain:
    focal: Link
    members: frozenset

    def rates(self) -> list[float]:
        return [l.nominal_rate for l in sorted(self.members, key=lambda l: l.key)]


def link_key(a: int, b: int) -> tuple[int, int]:
    return (a, b) if a < b else (b, a)


def ramp_loss(distance: float, tx_range: float, max_loss: float) -> float:
    """Zero loss up to tx_range/2, then linear up to ``max_loss`` at tx_range."""
    half = tx_range / 2.0
    if distance <= half:
        return 0.0
    frac = min(1.0, (distance - half) / half)
    return max_loss * frac


@dataclass
class Topology:
    positions: list[tuple[float, float]]
    tx_range: float = 250.0
    cs_range: float = 550.0
    area: tuple[float, float] = (1000.0, 1000.0)
    default_rate: float = 2e6
    rates: Mapping[tuple[int, int], float] = field(default_factory=dict)
    losses: Mapping[tuple[int, int], tuple[float, float]] = field(default_factory=dict)
    ramp_max_loss: float = 0.0

    def __post_init__(self):
        if self.cs_range < self.tx_range:
            raise ValueError("cs_range must be >= tx_range")
        w, h = self.area
        if w <= 0 or h <= 0:
            raise ValueError("area must be positive")
        for i, (x, y) in enumerate(self.positions):
            if not (0.0 <= x <= w and 0.0 <= y <= h):
                raise ValueError(f"node {i} at {(x, y)} lies outside area {self.area}")
        n = len(self.positions)
        self.positions = [tuple(map(float, p)) for p in self.positions]
        self._dist = [[math.dist(self.positions[a], self.positions[b]) for b in range(n)]
                      for a in range(n)]
        self._links: dict[tuple[int, int], Link] = {}
        for a, b in combinations(range(n), 2):
            d = self._dist[a][b]
            if d > self.tx_range + _RANGE_EPS:
                continue
            if (a, b) in self.losses:
                lf, lr = self.losses[(a, b)]
            elif (b, a) in self.losses:
                lr, lf = self.losses[(b, a)]
            else:
                lf = lr = ramp_loss(d, self.tx_range, self.ramp_max_loss)
            rate = self.rates.get((a, b), self.rates.get((b, a), self.default_rate))
            self._links[(a, b)] = Link(a, b, rate, lf, lr)
        self.neighbors = [[] for _ in range(n)]
        for a, b in self._links:
            self.neighbors[a].append(b)
            self.neighbors[b].append(a)
        self.cs_neighbors = [
            [b for b in range(n) if b != a and self._dist[a][b] <= self.cs_range + _RANGE_EPS]
            for a in range(n)
        ]
        self._domains: dict[tuple[int, int], ContentionDomain] = {}

    @property
    def size(self) -> int:
        return len(self.positions)

    def distance(self, a: int, b: int) -> float:
        return self._dist[a][b]

    def links(self) -> list[Link]:
        return [self._links[k] for k in sorted(self._links)]

    def link(self, a: int, b: int) -> Link | None:
        return self._links.get(link_key(a, b))

    def loss(self, src: int, dst: int) -> float:
        return self._links[link_key(src, dst)].loss(src, dst)

    def max_rate(self) -> float:
        return max((l.nominal_rate for l in self._links.values()), default=self.default_rate)

    def interferes(self, l1: Link, l2: Link) -> bool:
        limit = self.cs_range + _RANGE_EPS
        return any(self._dist[a][b] <= limit for a in (l1.m, l1.n) for b in (l2.m, l2.n))

    def contention_domain(self, link: Link | tuple[int, int]) -> ContentionDomain:
        key = link.key if isinstance(link, Link) else link_key(*link)
        cached = self._domains.get(key)
        if cached is not None:
            return cached
        focal = self._links.get(key)
        if focal is None:
            raise KeyError(f"no link between {key}")
        members = frozenset(l for l in self._links.values() if self.interferes(focal, l))
        dom = self._domains[key] = ContentionDomain(focal, members)
        return dom

    def hop_distances(self, src: int) -> list[int | None]:
        dist: list[int | None] = [None] * self.size
        dist[src] = 0
        frontier = [src]
        while frontier:
            nxt = []
            for u in frontier:
                for v in self.neighbors[u]:
                    if dist[v] is None:
                        dist[v] = dist[u] + 1
                        nxt.append(v)
            frontier = nxt
        return dist


def place_random(count: int, area: tuple[float, float], rng) -> list[tuple[float, float]]:
    """Uniform i.i.d. positions; ``rng`` is any object with ``uniform``."""
    if count < 2:
        raise ValueError("need at least two nodes")
    w, h = area
    if w <= 0 or h <= 0:
        raise ValueError("area must be positive")
    return [(rng.uniform(0.0, w), rng.uniform(0.0, h)) for _ in range(count)]


def chain_positions(hops: int, spacing: float, origin=(0.0, 0.0)) -> list[tuple[float, float]]:
    x0, y0 = origin
    return [(x0 + i * spacing, y0) for i in range(hops + 1)]

