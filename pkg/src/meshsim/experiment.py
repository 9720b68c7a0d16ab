"""Experiment matrix (metric x rate x seed) and result files.

Each cell is an independent simulation, so cells may run in worker
processes; results are always merged in (metric, rate, seed) order so the
output files do not depend on scheduling.
"""

from __future__ import annotations

import csv
import io
import json
import math
import statistics
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from .config import ScenarioConfig
from .metrics import MetricKind
from .network import NetworkSim
from .traffic import DROP_CAUSES

SCHEMA = "meshsim.raw.v1"
AGG_SCHEMA = "meshsim.agg.v1"
MAC_FIELDS = ("tx", "rx", "drops", "collisions", "retries")
RAW_COLUMNS = (("schema", "metric", "seed", "rate", "nodes", "throughput_bps", "avg_delay_s", "pdr",
                "sent", "delivered")
               + tuple(f"drop_{c}" for c in DROP_CAUSES)
               + tuple(f"mac_{f}" for f in MAC_FIELDS)
               + ("full_dumps", "incrementals", "status"))
AGG_COLUMNS = ("schema", "metric", "rate", "runs", "throughput_mean", "throughput_stderr",
               "delay_runs", "delay_mean", "delay_stderr", "pdr_mean", "pdr_stderr")
LINK_COLUMNS = ("t", "node", "nbr", "d_f", "d_r", "b_exp", "i_m", "i_n", "cost")
ROUTE_COLUMNS = ("t", "node", "dest", "next_hop", "seq", "cost")


@dataclass
class CellResult:
    metric: str
    rate: float
    seed: int
    row: dict | None = None
    error: str = ""
    trace: str = ""
    link_rows: list = field(default_factory=list)
    route_rows: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.row is not None

    @property
    def key(self) -> tuple:
        return (self.metric, self.rate, self.seed)


def run_one(cfg: ScenarioConfig, metric: str, rate: float, seed: int, trace: bool = False,
            dump_links: bool = False, route_times: tuple = ()) -> CellResult:
    """Run a single cell; any exception is captured in the result, not raised."""
    buf = io.StringIO() if trace else None
    try:
        ns = NetworkSim(cfg, metric, rate, seed, trace=buf, record_links=dump_links,
                        route_times=route_times)
        res = ns.run()
    except Exception as exc:  # noqa: BLE001 -- one bad cell must not sink the matrix
        msg = f"{type(exc).__name__}: {exc}"
        return CellResult(metric, rate, seed, error=msg + "\n" + traceback.format_exc())
    s = res.summary
    row = {
        "schema": SCHEMA, "metric": metric, "seed": seed, "rate": rate, "nodes": res.nodes,
        "throughput_bps": s.throughput_bps, "avg_delay_s": s.avg_delay_s, "pdr": s.pdr,
        "sent": s.sent, "delivered": s.delivered,
        **{f"drop_{c}": s.drops.get(c, 0) for c in DROP_CAUSES},
        **{f"mac_{f}": res.mac_totals[f] for f in MAC_FIELDS},
        "full_dumps": ns.update_msgs["full_dump"], "incrementals": ns.update_msgs["incremental"],
        "status": "ok",
    }
    return CellResult(metric, rate, seed, row=row, trace=buf.getvalue() if buf else "",
                      link_rows=ns.link_rows, route_rows=ns.route_rows)


def cells(cfg: ScenarioConfig, metrics=None, seeds=None) -> list[tuple[str, float, int]]:
    kinds = [MetricKind.parse(m) for m in metrics] if metrics else cfg.metric_kinds()
    seeds = list(seeds) if seeds else list(cfg.seeds)
    return sorted((k.value, float(r), int(s)) for k in kinds for r in cfg.rates for s in seeds)


def _run_packed(args):
    return run_one(*args)


def run_matrix(cfg: ScenarioConfig, metrics=None, seeds=None, workers: int = 1,
               trace: bool = False, dump_links: bool = False, route_times: tuple = (),
               progress=None) -> list[CellResult]:
    """Run every (metric, rate, seed) cell; failures are recorded, never skipped."""
    jobs = [(cfg, m, r, s, trace, dump_links, tuple(route_times)) for m, r, s in cells(cfg, metrics, seeds)]
    results = []
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for res in pool.map(_run_packed, jobs):
                results.append(res)
                if progress:
                    progress(res)
    else:
        for job in jobs:
            res = _run_packed(job)
            results.append(res)
            if progress:
                progress(res)
    return sorted(results, key=lambda r: r.key)


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _mean_stderr(xs: list[float]) -> tuple[float | None, float | None]:
    if not xs:
        return None, None
    m = statistics.fmean(xs)
    se = statistics.stdev(xs) / math.sqrt(len(xs)) if len(xs) > 1 else 0.0
    return m, se


def aggregate(results: list[CellResult]) -> list[dict]:
    """Per (metric, rate): mean and standard error across successful seeds."""
    groups: dict[tuple, list[dict]] = {}
    for r in results:
        if r.ok:
            groups.setdefault((r.metric, r.rate), []).append(r.row)
    out = []
    for (metric, rate), rows in sorted(groups.items()):
        thr = _mean_stderr([row["throughput_bps"] for row in rows])
        delays = [row["avg_delay_s"] for row in rows if row["avg_delay_s"] is not None]
        dly = _mean_stderr(delays)
        pdr = _mean_stderr([row["pdr"] for row in rows])
        out.append({"schema": AGG_SCHEMA, "metric": metric, "rate": rate, "runs": len(rows),
                    "throughput_mean": thr[0], "throughput_stderr": thr[1],
                    "delay_runs": len(delays), "delay_mean": dly[0], "delay_stderr": dly[1],
                    "pdr_mean": pdr[0], "pdr_stderr": pdr[1]})
    return out


def plot_series(agg: list[dict]) -> dict:
    """Throughput and delay versus packet rate, one series per metric."""
    series = {"x": "packet rate (packets/s)", "throughput_bps": {}, "avg_delay_s": {}}
    for row in agg:
        m = row["metric"]
        series["throughput_bps"].setdefault(m, []).append(
            [row["rate"], row["throughput_mean"], row["throughput_stderr"]])
        series["avg_delay_s"].setdefault(m, []).append(
            [row["rate"], row["delay_mean"], row["delay_stderr"]])
    return series


def _write_csv(path: Path, columns, rows) -> None:
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([_fmt(row[c]) for c in columns] if isinstance(row, dict) else [_fmt(v) for v in row])


def _cell_name(r: CellResult) -> str:
    return f"{r.metric}_r{r.rate:g}_s{r.seed}"


def emit_results(results: list[CellResult], out_dir: str | Path) -> list[Path]:
    """Write raw.csv, aggregate.csv, series.json and any per-cell dumps.

    Failed cells appear in raw.csv with their error in ``status`` and blank
    measurements, so a reader can always tell the matrix is incomplete.
    """
    if not results:
        raise ValueError("no results to write")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    results = sorted(results, key=lambda r: r.key)
    raw_rows = []
    for r in results:
        if r.ok:
            raw_rows.append(r.row)
        else:
            blank = {c: None for c in RAW_COLUMNS}
            blank.update(schema=SCHEMA, metric=r.metric, seed=r.seed, rate=r.rate,
                         status="error: " + r.error.splitlines()[0])
            raw_rows.append(blank)
    written = [out / "raw.csv", out / "aggregate.csv", out / "series.json"]
    _write_csv(written[0], RAW_COLUMNS, raw_rows)
    agg = aggregate(results)
    _write_csv(written[1], AGG_COLUMNS, agg)
    written[2].write_text(json.dumps(plot_series(agg), indent=2, sort_keys=True) + "\n")
    failures = [r for r in results if not r.ok]
    if failures:
        p = out / "errors.txt"
        p.write_text("".join(f"== {_cell_name(r)}\n{r.error}\n" for r in failures))
        written.append(p)
    for r in results:
        name = _cell_name(r)
        if r.trace:
            p = out / f"trace_{name}.log"
            p.write_text(r.trace)
            written.append(p)
        if r.link_rows:
            p = out / f"links_{name}.csv"
            _write_csv(p, LINK_COLUMNS, r.link_rows)
            written.append(p)
        if r.route_rows:
            p = out / f"routes_{name}.csv"
            _write_csv(p, ROUTE_COLUMNS, r.route_rows)
            written.append(p)
    return written
