"""Command line entry point: ``meshsim run --config scenario.yaml --out results/``."""

from __future__ import annotations

import argparse
import logging
import os
import sys

from .config import ConfigError, load_config
from .experiment import cells, emit_results, run_matrix
from .metrics import MetricKind

OUT_ENV = "MESHSIM_OUT_DIR"
log = logging.getLogger("meshsim")


def _csv_list(kind):
    def parse(text: str):
        try:
            return [kind(x) for x in text.split(",") if x.strip()]
        except ValueError as exc:
            raise argparse.ArgumentTypeError(str(exc)) from None
    return parse


def _metric_list(text: str):
    try:
        return [MetricKind.parse(m.strip()).value for m in text.split(",") if m.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="meshsim", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run the metric x rate x seed matrix of a scenario")
    run.add_argument("--config", required=True, help="YAML scenario file (empty file = defaults)")
    run.add_argument("--metric", type=_metric_list,
                     help="hop, etx, ibetx or ibetx-literal; comma-separate several (default: from config)")
    run.add_argument("--out", help=f"output directory (default: ${OUT_ENV} or ./results)")
    run.add_argument("--seeds", type=_csv_list(int), help="comma-separated seeds (default: from config)")
    run.add_argument("--trace-events", action="store_true", help="write one event trace per cell")
    run.add_argument("--dump-links", action="store_true", help="write per-window link measures per cell")
    run.add_argument("--dump-routes", type=_csv_list(float), default=[],
                     help="comma-separated simulation times (s) at which to snapshot routing tables")
    run.add_argument("--workers", type=int, default=1, help="worker processes (default 1)")
    run.add_argument("-v", "--verbose", action="store_true")
    return parser


def cmd_run(args) -> int:
    try:
        cfg = load_config(args.config)
    except (OSError, ConfigError) as exc:
        log.error("bad config: %s", exc)
        return 2
    out = args.out or os.environ.get(OUT_ENV) or "results"
    todo = cells(cfg, args.metric, args.seeds)
    log.info("%d cells -> %s", len(todo), out)

    def progress(res):
        if res.ok:
            row = res.row
            log.info("%s rate=%g seed=%d thr=%.0f bps pdr=%.3f", res.metric, res.rate, res.seed,
                     row["throughput_bps"], row["pdr"])
        else:
            log.error("%s rate=%g seed=%d FAILED: %s", res.metric, res.rate, res.seed,
                      res.error.splitlines()[0])

    results = run_matrix(cfg, args.metric, args.seeds, workers=args.workers,
                         trace=args.trace_events, dump_links=args.dump_links,
                         route_times=tuple(args.dump_routes), progress=progress)
    try:
        emit_results(results, out)
    except (OSError, ValueError) as exc:
        log.error("could not write results: %s", exc)
        return 1
    failed = sum(not r.ok for r in results)
    if failed:
        log.error("%d of %d cells failed; see %s/errors.txt", failed, len(results), out)
        return 1
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    return cmd_run(args)


if __name__ == "__main__":
    sys.exit(main())
