"""Batch command-line runner.

Runs the verification suites, bound calculators, and shattering experiments
and writes three artifacts into the output directory:

* ``report.json``    — full structured results (deterministic for a seed)
* ``summary.csv``    — one row per check, plot/grep friendly
* ``metadata.json``  — timestamps and environment (everything that may
  legitimately differ between identical runs lives here)

The ``bounds`` command additionally writes ``bounds_sweep.csv`` (columns
``T, d, m, adl_bits, gen_gap``) and the ``shatter`` command writes the full
instance bundle to ``shatter_instance.json`` for later re-verification via
``--bundle``.

Configuration may come from a flat ``key=value`` file through ``--config``;
explicit flags override file values.  ``--seed`` is mandatory — there is no
wall-clock default, so identical invocations produce identical reports.
``ADL_THREADS`` caps internal worker threads (default 1).
"""

from __future__ import annotations

import argparse
import csv
import datetime
import io
import json
import os
import platform
import sys
import time

import numpy as np

from .harness import run_suite, thread_count
from .jsonio import atomic_write_text, dumps

SUITES = ("sketch-verify", "neuron-verify", "network-verify", "bounds",
          "shatter", "concentration")

CSV_COLUMNS = ("suite", "check", "kind", "passed", "n_trials", "mean",
               "truth", "variance", "var_bound", "se", "z", "mean_len",
               "len_bound", "n_outcomes", "expected_length", "epsilon",
               "bound", "frequency", "slack", "fail_reason")

SCENARIO_KEYS = ("trials", "unit_trials", "d", "h", "m", "T", "L", "B", "R",
                 "r", "delta", "activation", "n_pairs", "max_retries")


def parse_config_file(path: str) -> dict:
    """Flat ``key=value`` lines; ``#`` starts a comment; values stay strings."""
    out: dict = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected key=value, got {raw!r}")
            key, value = line.split("=", 1)
            out[key.strip()] = value.strip()
    return out


def _add_common(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--seed", type=int, default=None,
                     help="base random seed (required; no wall-clock default)")
    sub.add_argument("--out", default="run",
                     help="output directory (default: run)")
    sub.add_argument("--config", default=None,
                     help="flat key=value config file; flags override it")
    sub.add_argument("--trials", type=int, default=None)
    sub.add_argument("--activation", default=None,
                     help="activation name (relu, tanh, identity, "
                          "scaled_identity:c)")
    for name in ("d", "h", "m", "T", "unit-trials", "n-pairs", "max-retries"):
        sub.add_argument(f"--{name}", type=int, default=None,
                         dest=name.replace("-", "_"))
    for name in ("L", "B", "R", "r", "delta"):
        sub.add_argument(f"--{name}", type=float, default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="adlkit",
        description="Verification suites and bound calculators for "
                    "randomized two-layer-network compression estimators.",
        epilog="Precedence: built-in defaults < --config file < explicit flags.")
    subs = parser.add_subparsers(dest="command", required=True)
    for name in SUITES + ("all",):
        sub = subs.add_parser(name, help=f"run the {name} suite"
                              if name != "all" else "run every suite")
        _add_common(sub)
        if name == "shatter":
            sub.add_argument("--bundle", default=None,
                             help="re-verify a saved instance bundle instead "
                                  "of building a new one")
    return parser


def _merge_config(args: argparse.Namespace, parser: argparse.ArgumentParser) -> dict:
    merged: dict = {}
    if args.config:
        try:
            merged.update(parse_config_file(args.config))
        except OSError as exc:
            parser.error(f"cannot read config file: {exc}")
        except ValueError as exc:
            parser.error(str(exc))
    for key in SCENARIO_KEYS + ("seed", "out", "bundle"):
        val = getattr(args, key, None)
        if val is not None:
            merged[key] = val
    return merged


def _csv_text(rows: list[dict]) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=CSV_COLUMNS, extrasaction="ignore",
                            lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({k: row.get(k, "") for k in CSV_COLUMNS})
    return buf.getvalue()


def _sweep_csv_text(sweep: list[dict]) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=("T", "d", "m", "adl_bits",
                                             "gen_gap"), lineterminator="\n")
    writer.writeheader()
    for row in sweep:
        writer.writerow(row)
    return buf.getvalue()


def run(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    config = _merge_config(args, parser)
    if "seed" not in config:
        parser.error("--seed is required (no wall-clock default)")
    seed = int(config["seed"])
    out_dir = str(config.get("out", "run"))
    if config.get("bundle"):
        try:
            with open(str(config["bundle"]), "r", encoding="utf-8") as fh:
                config["bundle_obj"] = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            parser.error(f"cannot load bundle: {exc}")

    started = time.time()
    names = list(SUITES) if args.command == "all" else [args.command]
    suites = []
    failing: list[str] = []
    for name in names:
        result = run_suite(name, seed, config)
        suites.append(result)
        failing.extend(f"{row['suite']}:{row['check']}"
                       for row in result["rows"] if not row["passed"])
    passed = not failing

    os.makedirs(out_dir, exist_ok=True)
    report = {
        "command": args.command,
        "seed": seed,
        "config": {k: v for k, v in sorted(config.items())
                   if k not in ("bundle_obj", "out", "bundle")},
        "suites": [{k: v for k, v in s.items() if k != "instance_bundle"}
                   for s in suites],
        "passed": passed,
        "failing_checks": failing,
    }
    atomic_write_text(os.path.join(out_dir, "report.json"), dumps(report))
    all_rows = [row for s in suites for row in s["rows"]]
    atomic_write_text(os.path.join(out_dir, "summary.csv"), _csv_text(all_rows))
    for s in suites:
        if "sweep" in s:
            atomic_write_text(os.path.join(out_dir, "bounds_sweep.csv"),
                              _sweep_csv_text(s["sweep"]))
        if "instance_bundle" in s:
            atomic_write_text(os.path.join(out_dir, "shatter_instance.json"),
                              dumps(s["instance_bundle"]))
    finished = time.time()
    metadata = {
        "started_at": datetime.datetime.fromtimestamp(
            started, datetime.timezone.utc).isoformat(),
        "finished_at": datetime.datetime.fromtimestamp(
            finished, datetime.timezone.utc).isoformat(),
        "duration_seconds": finished - started,
        "argv": list(sys.argv[1:]) if argv is None else list(argv),
        "python": platform.python_version(),
        "numpy": np.__version__,
        "threads": thread_count(),
    }
    atomic_write_text(os.path.join(out_dir, "metadata.json"), dumps(metadata))

    if failing:
        print("FAILED checks:", file=sys.stderr)
        for tag in failing:
            print(f"  {tag}", file=sys.stderr)
        return 1
    print(f"all checks passed ({len(all_rows)} rows) -> {out_dir}")
    return 0


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
