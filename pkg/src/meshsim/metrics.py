"""Link metrics (hop count, ETX, IBETX) and path-cost aggregation.

IBETX combines three link measurements:

* expected link delivery ``d_exp = d_f * d_r``
* expected link bandwidth ``b_exp``, the harmonic combination of the nominal
  rates of every link sharing the medium with it
* expected link interference ``I_exp = i_mn / (1 + i_mn)`` with
  ``i_mn = max(i_m, i_n)`` taken from MAC busy time.

The product ``(d_exp / b_exp) * I_exp`` grows with delivery probability, so
minimising it rewards lossy links. ``Mode.CONSISTENT`` (the default) inverts
the delivery and bandwidth terms so that a smaller cost is always a better
link; ``Mode.LITERAL`` keeps the product as printed.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Hashable, Sequence

INF = math.inf
INTERFERENCE_FLOOR = 1e-6


class MetricKind(str, enum.Enum):
    HOP = "hop"
    ETX = "etx"
    IBETX_LITERAL = "ibetx-literal"
    IBETX_CONSISTENT = "ibetx"

    @classmethod
    def parse(cls, value: "str | MetricKind") -> "MetricKind":
        if isinstance(value, cls):
            return value
        aliases = {"ibetx-consistent": cls.IBETX_CONSISTENT, "ibetx_consistent": cls.IBETX_CONSISTENT,
                   "ibetx_literal": cls.IBETX_LITERAL}
        key = str(value).lower()
        if key in aliases:
            return aliases[key]
        return cls(key)


class Mode(str, enum.Enum):
    LITERAL = "literal"
    CONSISTENT = "consistent"


class MetricError(ValueError):
    pass


def _check_unit(name: str, x: float) -> None:
    if not 0.0 <= x <= 1.0:
        raise MetricError(f"{name}={x} outside [0, 1]")


def eld(d_f: float, d_r: float) -> float:
    _check_unit("d_f", d_f)
    _check_unit("d_r", d_r)
    return d_f * d_r


def etx(d_f: float, d_r: float) -> float:
    d = eld(d_f, d_r)
    return INF if d == 0.0 else 1.0 / d


def elb(rates: Sequence[float]) -> float:
    """Bandwidth left to a link whose contention domain has these nominal rates.

    Under DCF every contender gets an equal share of transmission
    opportunities, so the slow links dominate: 1 / sum(1 / r_i).
    """
    if len(rates) == 0:
        raise MetricError("contention domain must contain at least the link itself")
    total = 0.0
    for r in rates:
        if r <= 0:
            raise MetricError(f"nominal rate {r} must be positive")
        total += 1.0 / r
    return 1.0 / total


def link_interference(i_m: float, i_n: float) -> float:
    _check_unit("i_m", i_m)
    _check_unit("i_n", i_n)
    return max(i_m, i_n)


def eli(i_mn: float) -> float:
    _check_unit("i_mn", i_mn)
    return i_mn / (1.0 + i_mn)


@dataclass(frozen=True)
class LinkMeasure:
    d_f: float
    d_r: float
    b_exp: float
    i_m: float = 0.0
    i_n: float = 0.0
    updated_at: int = 0

    @property
    def d_exp(self) -> float:
        return eld(self.d_f, self.d_r)

    @property
    def i_mn(self) -> float:
        return link_interference(self.i_m, self.i_n)

    @property
    def I_exp(self) -> float:
        return eli(self.i_mn)


@dataclass(frozen=True)
class LinkCost:
    value: float
    kind: MetricKind

    def __post_init__(self):
        if math.isnan(self.value) or self.value < 0:
            raise MetricError(f"link cost must be non-negative, got {self.value}")


@dataclass(frozen=True)
class PathCost:
    total: float
    hops: int


def ibetx_value(d_exp: float, b_norm: float, i_exp: float,
                mode: Mode = Mode.CONSISTENT, floor: float = INTERFERENCE_FLOOR) -> float:
    if mode is Mode.LITERAL:
        return (d_exp / b_norm) * i_exp
    if d_exp == 0.0:
        return INF
    return max(i_exp, floor) / (d_exp * b_norm)


def ibetx_link(measure: LinkMeasure, mode: Mode = Mode.CONSISTENT, rate_norm: float = 1.0) -> LinkCost:
    if rate_norm <= 0:
        raise MetricError("rate_norm must be positive")
    if measure.b_exp <= 0:
        raise MetricError("b_exp must be positive")
    mode = Mode(mode)
    kind = MetricKind.IBETX_LITERAL if mode is Mode.LITERAL else MetricKind.IBETX_CONSISTENT
    value = ibetx_value(measure.d_exp, measure.b_exp / rate_norm, measure.I_exp, mode)
    return LinkCost(value, kind)


def link_cost(kind: MetricKind, measure: LinkMeasure, rate_norm: float = 1.0) -> LinkCost:
    """Cost of one link under ``kind``; dead links (d_exp == 0) cost infinity."""
    kind = MetricKind.parse(kind)
    if kind is MetricKind.HOP:
        return LinkCost(1.0 if measure.d_exp > 0 else INF, kind)
    if kind is MetricKind.ETX:
        return LinkCost(etx(measure.d_f, measure.d_r), kind)
    if kind is MetricKind.IBETX_LITERAL:
        if measure.d_exp == 0.0:
            return LinkCost(INF, kind)
        return ibetx_link(measure, Mode.LITERAL, rate_norm)
    return ibetx_link(measure, Mode.CONSISTENT, rate_norm)


def path_cost(costs: Sequence[LinkCost]) -> PathCost:
    kinds = {c.kind for c in costs}
    if len(kinds) > 1:
        raise MetricError(f"cannot sum link costs of mixed kinds {sorted(k.value for k in kinds)}")
    # math.fsum keeps the total independent of summation order
    return PathCost(math.fsum(c.value for c in costs), len(costs))


def best_path(paths: Sequence[tuple[Sequence[Hashable], PathCost]]):
    """Minimum total cost; ties go to fewer hops, then lexicographic node order."""
    if not paths:
        raise MetricError("no candidate paths")
    return min(paths, key=lambda pc: (pc[1].total, pc[1].hops, tuple(pc[0])))[0]
