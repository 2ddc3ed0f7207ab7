"""Command-line entry point: ``wfcharge run|sweep|price``.

Every command builds all of its outputs in memory first and only then writes
them, together with ``manifest.json``, so a failed command leaves no partial
result set behind.
"""

from __future__ import annotations

import argparse
import csv
import datetime as dt
import hashlib
import io
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .metrics import compare, sweep_csv, variance_sweep
from .model import InfeasibleScenarioError, SolverError, WfChargeError
from .pricing import (
    OFFLINE,
    ONLINE,
    PriceTable,
    PricingError,
    normalize_tables,
    offline_cup,
    online_prices,
    price_csv,
)
from .scenario import ConfigError, PVDataError, Scenario, file_sha256, load_scenario

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_IO = 3
EXIT_SOLVER = 4
EXIT_INFEASIBLE = 5


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        _emit_error("usage", message, EXIT_CONFIG)
        raise SystemExit(EXIT_CONFIG)


def _emit_error(kind: str, message: str, code: int) -> None:
    print(json.dumps({"error": kind, "message": message, "exit_code": code}), file=sys.stderr)


def _csv(rows, header) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(header)
    writer.writerows(rows)
    return buf.getvalue()


def _num(x) -> str:
    return repr(float(x))


def _schedule_csv(scenario: Scenario, columns: dict[str, np.ndarray]) -> str:
    grid = scenario.grid
    rows = [[t, grid.label(t)] + [_num(p[t - 1]) for p in columns.values()] for t in grid.slots]
    return _csv(rows, ["slot", "label", *columns])


def _load_csv(scenario: Scenario, ev_power: np.ndarray) -> str:
    grid = scenario.grid
    base = scenario.baseline.power
    rows = [[t, grid.label(t), _num(base[t - 1]), _num(ev_power[t - 1]), _num(base[t - 1] + ev_power[t - 1])]
            for t in grid.slots]
    return _csv(rows, ["slot", "label", "baseline_kw", "ev_kw", "total_kw"])


def _timestamp(inputs: list[Path]) -> str:
    # reproducible: SOURCE_DATE_EPOCH if set, else the newest input's mtime
    epoch = os.environ.get("SOURCE_DATE_EPOCH")
    if epoch is not None:
        seconds = int(epoch)
    else:
        seconds = int(max((p.stat().st_mtime for p in inputs), default=0))
    return dt.datetime.fromtimestamp(seconds, dt.timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


def _write_outputs(out: Path, files: dict[str, str], command: dict, scenario: Scenario,
                   metrics: dict) -> None:
    encoded = {name: text.encode("utf-8") for name, text in files.items()}
    manifest = {
        "command": command,
        "scenario": scenario.name,
        "inputs": {str(p): file_sha256(p) for p in scenario.sources},
        "tool_version": __version__,
        "timestamp": _timestamp(list(scenario.sources)),
        "metrics": metrics,
        "outputs": {name: hashlib.sha256(data).hexdigest() for name, data in sorted(encoded.items())},
    }
    out.mkdir(parents=True, exist_ok=True)
    for name, data in encoded.items():
        (out / name).write_bytes(data)
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n",
                                       encoding="utf-8")


def _command_record(args) -> dict:
    return {k: v for k, v in sorted(vars(args).items()) if k not in ("func", "out")}


def cmd_run(args) -> int:
    scenario = load_scenario(args.config, args.pv, args.variance_pct)
    cmp = compare(scenario)
    if args.regime == ONLINE:
        groups = cmp.trace.realized_by_group()
        columns = {f"d{d}": p for d, p in groups.items()}
        ev_power = cmp.trace.realized
        cost_doc = {
            "regime": ONLINE,
            "cost": cmp.trace.cost,
            "event_costs": {str(ev.arrival): g for ev, g in zip(cmp.trace.events, cmp.trace.event_costs)},
        }
    else:
        sched = cmp.offline.schedule
        columns = {f"a{a}_d{d}": sched.profiles[(a, d)] for a, d in sched.keys()}
        ev_power = sched.aggregate()
        cost_doc = {
            "regime": OFFLINE,
            "cost": cmp.offline.optimal_cost,
            "iterations": cmp.offline.iterations,
            "kkt_residual": cmp.offline.kkt_residual,
        }
    files = {
        "schedule.csv": _schedule_csv(scenario, columns),
        "total_load.csv": _load_csv(scenario, ev_power),
        "cost.json": json.dumps(cost_doc, indent=2, sort_keys=True) + "\n",
    }
    metrics = {
        "online_cost": cmp.trace.cost,
        "offline_cost": cmp.offline.optimal_cost,
        "cost_gap_pct": cmp.stats.cost_gap_pct,
        "overload_slots": cmp.stats.overload_slots,
        "avg_overload_kw": cmp.stats.avg_overload_kw,
    }
    _write_outputs(Path(args.out), files, _command_record(args), scenario, metrics)
    return EXIT_OK


def _parse_sweep(text: str) -> tuple[float, float, float]:
    parts = [float(x) for x in text.split(":")]
    if len(parts) != 3:
        raise ConfigError(f"--sweep expects START:STOP:STEP, got {text!r}")
    return parts[0], parts[1], parts[2]


def cmd_sweep(args) -> int:
    start, stop, step = _parse_sweep(args.sweep)
    scenario = load_scenario(args.config, args.pv)
    try:
        points = variance_sweep(scenario, start, stop, step, args.fd_step_kwh, args.jobs)
    except ValueError as exc:
        if isinstance(exc, WfChargeError):
            raise
        raise ConfigError(str(exc)) from exc
    tables = [t for p in points for t in (p.online_prices, p.offline_prices)]
    files = {
        "sweep.csv": sweep_csv(points),
        "prices.csv": price_csv(tables),
        "prices_normalized.csv": price_csv(normalize_tables(tables)),
    }
    metrics = {
        "cost_gap_pct": {_num(p.variance_pct): p.stats.cost_gap_pct for p in points},
        "price_scale": max(t.max() for t in tables),
    }
    _write_outputs(Path(args.out), files, _command_record(args), scenario, metrics)
    return EXIT_OK


def cmd_price(args) -> int:
    scenario = load_scenario(args.config, args.pv, args.variance_pct)
    s = scenario
    if args.regime == ONLINE:
        cmp = compare(s)
        table = online_prices(cmp.trace, s.cost, args.fd_step_kwh)
    else:
        table = offline_cup(s.demand, s.baseline, s.grid, s.cost, args.fd_step_kwh)
    pct = s.commute.variance_pct if s.commute is not None else None
    table = PriceTable(table.entries, table.regime, variance_pct=pct)
    files = {
        "prices.csv": price_csv([table]),
        "prices_normalized.csv": price_csv([table.normalized()]),
    }
    _write_outputs(Path(args.out), files, _command_record(args), scenario,
                   {"max_price": table.max(), "classes": len(table)})
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="wfcharge", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p, regime=True, variance=True):
        p.add_argument("--config", required=True,
                       help="scenario TOML/JSON file, or builtin:workday / builtin:commuter")
        p.add_argument("--pv", help="PV CSV overriding the config's baseline")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--fd-step-kwh", type=float, default=None,
                       help="finite-difference step for prices (default: max(1e-3, 1e-4 * need))")
        p.add_argument("--seedless", action="store_true",
                       help="accepted for scripts; no command uses randomness")
        if regime:
            p.add_argument("--regime", choices=(ONLINE, OFFLINE), default=ONLINE)
        if variance:
            p.add_argument("--variance-pct", type=float, default=None,
                           help="spread scale of the commute distributions, in percent")

    run = sub.add_parser("run", help="schedule one scenario")
    common(run)
    run.set_defaults(func=cmd_run)

    sweep = sub.add_parser("sweep", help="online/offline comparison over spread scales")
    common(sweep, regime=False, variance=False)
    sweep.add_argument("--sweep", default="100:300:25", help="START:STOP:STEP in percent")
    sweep.add_argument("--jobs", type=int, default=1)
    sweep.set_defaults(func=cmd_sweep)

    price = sub.add_parser("price", help="charging unit prices for one scenario")
    common(price)
    price.set_defaults(func=cmd_price)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except (ConfigError, KeyError) as exc:
        _emit_error("config", str(exc), EXIT_CONFIG)
        return EXIT_CONFIG
    except (OSError, PVDataError) as exc:
        _emit_error("io", str(exc), EXIT_IO)
        return EXIT_IO
    except (SolverError, PricingError) as exc:
        _emit_error("solver", str(exc), EXIT_SOLVER)
        return EXIT_SOLVER
    except InfeasibleScenarioError as exc:
        _emit_error("infeasible", str(exc), EXIT_INFEASIBLE)
        return EXIT_INFEASIBLE
    except (WfChargeError, ValueError) as exc:
        _emit_error("config", str(exc), EXIT_CONFIG)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
