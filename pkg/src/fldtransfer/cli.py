"""Command-line interface.

Subcommands: ``simulate``, ``eval`` and ``aggregate-sources``. Every option
can also be given in a JSON config file (``--config``); command-line flags
override the file and unknown keys are rejected. Exit status is 0 on
success, 1 on a runtime failure and 2 on a usage or configuration error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from . import dataset, simlab
from .dataset import CLASSIFIERS, SplitSpec, fmt
from .errors import FldTransferError, ZeroResultant
from .transfer import AlphaGrid, summarize_sources

log = logging.getLogger("fldtransfer")

SIM_COLUMNS = [
    "experiment", "d", "n", "J", "kappa", "classifier",
    "analytical_acc", "empirical_acc", "mean_alpha", "replicates", "seed",
]
RECORD_COLUMNS = ["session_id", "p", "split_index", "classifier", "balanced_accuracy", "alpha", "skipped"]
AGGREGATE_COLUMNS = [
    "session_id", "p", "splits",
    "target_acc", "source_acc", "optimal_acc", "oracle_acc",
    "optimal_alpha", "oracle_alpha",
    "p_optimal_vs_target", "p_optimal_vs_source", "skipped",
]


class ConfigError(Exception):
    pass


def _int_list(v):
    return [int(x) for x in _split(v)]


def _float_list(v):
    return [float(x) for x in _split(v)]


def _split(v):
    if isinstance(v, str):
        return [x for x in v.split(",") if x.strip()]
    if isinstance(v, (list, tuple)):
        return list(v)
    return [v]


def _bool(v):
    if isinstance(v, bool):
        return v
    raise ValueError(f"expected true/false, got {v!r}")


COMMON = {"seed": int, "threads": int, "out": str, "stdout": _bool}
SCHEMAS = {
    "simulate": {
        **COMMON,
        "experiment": str, "replicates": int, "b_samples": int, "test_size": int, "grid_step": float,
        "plug_in": _bool, "ns": _int_list, "js": _int_list, "kappas": _float_list, "ds": _int_list,
        "d": int, "n": int, "j_count": int, "kappa": float,
    },
    "eval": {
        **COMMON,
        "sessions": str, "source_vectors": str, "privacy_aggregate": str, "leave_one_out": _bool,
        "proportions": _float_list, "splits": int, "b_samples": int, "grid_step": float,
    },
    "aggregate-sources": {**COMMON, "source_vectors": str},
}
DEFAULTS = {
    "simulate": {"replicates": 200, "b_samples": 100, "test_size": 10_000, "grid_step": 0.1},
    "eval": {"proportions": [0.05, 0.1, 0.2, 0.5], "splits": 100, "b_samples": 100, "grid_step": 0.1,
             "leave_one_out": False},
    "aggregate-sources": {},
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False, argument_default=argparse.SUPPRESS)
    common.add_argument("--seed", type=int, help="master seed (default 0)")
    common.add_argument("--threads", type=int, help="worker threads (default: logical cores)")
    common.add_argument("--out", help="output directory (default: results)")
    common.add_argument("--config", help="JSON config file; flags override it")
    common.add_argument("--stdout", action="store_true", help="write the main result to standard output")
    common.add_argument("-v", "--verbose", action="store_true", help="progress messages on stderr")

    p = argparse.ArgumentParser(prog="fldtransfer", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", parents=[common], argument_default=argparse.SUPPRESS,
                       help="simulation sweeps on the vMF task model")
    s.add_argument("--experiment", choices=sorted(simlab.EXPERIMENTS))
    s.add_argument("--replicates", type=int)
    s.add_argument("--b-samples", dest="b_samples", type=int)
    s.add_argument("--test-size", dest="test_size", type=int)
    s.add_argument("--grid-step", dest="grid_step", type=float)
    mode = s.add_mutually_exclusive_group()
    mode.add_argument("--plug-in", dest="plug_in", action="store_true", help="estimate nu, Sigma from data")
    mode.add_argument("--known", dest="plug_in", action="store_false", help="use population nu, Sigma")
    s.add_argument("--ns", help="comma-separated n values (validation)")
    s.add_argument("--js", help="comma-separated J values (validation)")
    s.add_argument("--kappas", help="comma-separated kappa values (kappa sweep)")
    s.add_argument("--ds", help="comma-separated d values (dimension sweep)")
    s.add_argument("--d", type=int)
    s.add_argument("--n", type=int)
    s.add_argument("--j", dest="j_count", type=int)
    s.add_argument("--kappa", type=float)

    e = sub.add_parser("eval", parents=[common], argument_default=argparse.SUPPRESS,
                       help="evaluate transfer on session CSV files")
    e.add_argument("--sessions", help="directory of session CSVs or a manifest JSON")
    src = e.add_mutually_exclusive_group()
    src.add_argument("--source-vectors", dest="source_vectors", help="CSV of unit source vectors")
    src.add_argument("--privacy-aggregate", dest="privacy_aggregate", help="aggregate JSON")
    src.add_argument("--leave-one-out", dest="leave_one_out", action="store_true",
                     help="use the other sessions' projection vectors as sources")
    e.add_argument("--proportions", help="comma-separated training proportions")
    e.add_argument("--splits", type=int)
    e.add_argument("--b-samples", dest="b_samples", type=int)
    e.add_argument("--grid-step", dest="grid_step", type=float)

    a = sub.add_parser("aggregate-sources", parents=[common], argument_default=argparse.SUPPRESS,
                       help="write the privacy aggregate of a source-vector file")
    a.add_argument("--source-vectors", dest="source_vectors")
    return p


def resolve_config(command: str, args: argparse.Namespace) -> dict:
    schema = SCHEMAS[command]
    cfg = dict(DEFAULTS[command])
    cfg.update(seed=0, threads=os.cpu_count() or 1, out="results", stdout=False)
    flags = {k: v for k, v in vars(args).items() if k not in ("command", "config", "verbose")}
    path = getattr(args, "config", None)
    if path:
        try:
            obj = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        if not isinstance(obj, dict):
            raise ConfigError("config file must hold a JSON object")
        unknown = sorted(set(obj) - set(schema))
        if unknown:
            raise ConfigError(f"unknown config keys for {command}: {', '.join(unknown)}")
        cfg.update(obj)
    cfg.update(flags)
    out = {}
    for k, v in cfg.items():
        try:
            out[k] = schema[k](v)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad value for {k}: {exc}") from None
    if out["threads"] < 1:
        raise ConfigError("threads must be >= 1")
    return out


def _grid(cfg) -> AlphaGrid:
    try:
        return AlphaGrid.with_step(cfg["grid_step"])
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def _emit(cfg, name: str, text: str, primary: bool) -> None:
    if cfg["stdout"] and primary:
        sys.stdout.write(text)
        sys.stdout.flush()
    if not cfg["stdout"] or "out" in cfg.get("_explicit", ()):
        out = Path(cfg["out"])
        out.mkdir(parents=True, exist_ok=True)
        (out / name).write_text(text)


def _csv_text(columns, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    w.writerows(rows)
    return buf.getvalue()


def _json17(obj, indent=0) -> str:
    # json.dumps cannot fix float precision; floats are written as %.17g
    pad = "  " * (indent + 1)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(str(k))}: {_json17(v, indent + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + "  " * indent + "}"
    if isinstance(obj, (list, tuple)):
        return "[" + ", ".join(_json17(v, indent + 1) for v in obj) + "]"
    if isinstance(obj, bool) or obj is None:
        return json.dumps(obj)
    if isinstance(obj, float):
        return fmt(obj) if math.isfinite(obj) else "null"
    if isinstance(obj, int):
        return str(obj)
    return json.dumps(str(obj))


# -- simulate ---------------------------------------------------------------------

def cmd_simulate(cfg: dict) -> int:
    if "experiment" not in cfg:
        raise ConfigError("simulate requires --experiment (validation, kappa or dimension)")
    exp = cfg["experiment"]
    if exp not in simlab.EXPERIMENTS:
        raise ConfigError(f"unknown experiment {exp!r}")
    kw = {
        "replicates": cfg["replicates"], "b_samples": cfg["b_samples"], "test_size": cfg["test_size"],
        "grid": _grid(cfg), "seed": cfg["seed"],
    }
    for key in ("d", "n", "j_count", "kappa", "plug_in"):
        if key in cfg:
            kw[key] = cfg[key]
    axis = {"validation": ("ns", "js"), "kappa": ("kappas",), "dimension": ("ds",)}[exp]
    for key in ("ns", "js", "kappas", "ds"):
        if key in cfg and key not in axis:
            raise ConfigError(f"{key} does not apply to the {exp} experiment")
        if key in cfg:
            kw[key] = tuple(cfg[key])
    fixed_by_axis = {"validation": ("n", "j_count"), "kappa": ("kappa",), "dimension": ("d",)}[exp]
    for key in fixed_by_axis:
        if key in kw:
            raise ConfigError(f"--{key.replace('_count', '')} is swept by the {exp} experiment; use the list option")
    try:
        configs = simlab.EXPERIMENTS[exp](**kw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None
    cells = [simlab.run_cell(c, cfg["threads"]) for c in configs]

    rows, summary_cells = [], []
    for cell in cells:
        c = cell.config
        s = cell.summary()
        for name in simlab.CLASSIFIERS:
            v = s[name]
            rows.append([exp, c.d, c.n, c.j_count, fmt(c.kappa), name, fmt(v["analytical_acc"]),
                         fmt(v["empirical_acc"]), fmt(v["mean_alpha"]), c.replicates, c.seed])
        summary_cells.append({
            "d": c.d, "n": c.n, "J": c.j_count, "kappa": float(c.kappa), "plug_in": c.plug_in,
            "replicates": c.replicates,
            "classifiers": {
                name: {**s[name], "gap": cell.gap(name)} for name in simlab.CLASSIFIERS
            },
        })
    summary = {
        "experiment": exp, "seed": cfg["seed"], "b_samples": cfg["b_samples"], "test_size": cfg["test_size"],
        "grid": list(kw["grid"].values), "cells": summary_cells,
    }
    _emit(cfg, f"simulate_{exp}.csv", _csv_text(SIM_COLUMNS, rows), primary=True)
    _emit(cfg, f"simulate_{exp}.json", _json17(summary) + "\n", primary=False)
    return 0


# -- eval -------------------------------------------------------------------------

def _load_sources(cfg):
    chosen = [k for k in ("source_vectors", "privacy_aggregate") if k in cfg]
    if cfg.get("leave_one_out"):
        chosen.append("leave_one_out")
    if len(chosen) != 1:
        raise ConfigError("eval needs exactly one of --source-vectors, --privacy-aggregate, --leave-one-out")
    try:
        if "source_vectors" in cfg:
            return dataset.read_source_vectors(cfg["source_vectors"])
        if "privacy_aggregate" in cfg:
            return dataset.read_aggregate(cfg["privacy_aggregate"])
    except (OSError, FldTransferError) as exc:
        raise ConfigError(f"cannot read sources: {exc}") from None
    return None


def _leave_one_out(sessions):
    vecs = {}
    for ds in sessions:
        try:
            vecs[ds.session_id] = dataset.session_projection(ds)
        except FldTransferError as exc:
            log.warning("session %s gives no projection vector: %s", ds.session_id, exc)
    return vecs


def cmd_eval(cfg: dict) -> int:
    if "sessions" not in cfg:
        raise ConfigError("eval requires --sessions")
    sources = _load_sources(cfg)
    try:
        sessions = dataset.load_sessions(cfg["sessions"])
    except (OSError, FldTransferError) as exc:
        raise ConfigError(f"cannot read sessions: {exc}") from None
    if not sessions:
        raise ConfigError(f"no sessions found in {cfg['sessions']}")
    sessions.sort(key=lambda s: s.session_id)
    grid = _grid(cfg)
    try:
        specs = [SplitSpec(p, cfg["splits"], cfg["seed"]) for p in cfg["proportions"]]
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    if cfg["b_samples"] < 1:
        raise ConfigError("b_samples must be >= 1")
    loo = _leave_one_out(sessions) if sources is None else None

    def job(ds, spec):
        try:
            if loo is not None:
                others = [v for k, v in loo.items() if k != ds.session_id]
                if not others:
                    raise FldTransferError("no other sessions to use as sources")
                src = summarize_sources(others)
            else:
                src = sources
            return dataset.evaluate_transfer(ds, src, spec, grid, cfg["b_samples"])
        except FldTransferError as exc:
            return [], [dataset.SkippedSplit(ds.session_id, spec.proportion, -1, str(exc))]

    tasks = [(ds, spec) for ds in sessions for spec in specs]
    with ThreadPoolExecutor(max_workers=cfg["threads"]) as pool:
        results = list(pool.map(lambda t: job(*t), tasks))

    rec_rows, agg_rows = [], []
    ok_sessions = set()
    per_p_means = {}
    for (ds, spec), (records, skipped) in zip(tasks, results):
        log.info("session %s p=%g: %d records, %d skipped", ds.session_id, spec.proportion, len(records), len(skipped))
        for r in records:
            rec_rows.append([r.session_id, fmt(r.p), r.split_index, r.classifier,
                             fmt(r.balanced_accuracy), fmt(r.alpha), ""])
        for s in skipped:
            rec_rows.append([s.session_id, fmt(s.p), s.split_index, "", "", "", s.reason])
        if records:
            ok_sessions.add(ds.session_id)
        means = dataset.session_summary(records)
        n_splits = len({r.split_index for r in records})
        p_t = dataset.safe_p_value(dataset.paired_differences(records, "optimal", "target"))
        p_s = dataset.safe_p_value(dataset.paired_differences(records, "optimal", "source"))
        agg_rows.append([ds.session_id, fmt(spec.proportion), n_splits]
                        + [fmt(means[c][0]) for c in CLASSIFIERS]
                        + [fmt(means["optimal"][1]), fmt(means["oracle"][1]), fmt(p_t), fmt(p_s), len(skipped)])
        if records:
            per_p_means.setdefault(spec.proportion, []).append({c: means[c][0] for c in CLASSIFIERS})

    # across sessions: paired differences of per-session means
    for spec in specs:
        ms = per_p_means.get(spec.proportion, [])
        if not ms:
            continue
        avg = {c: math.fsum(m[c] for m in ms) / len(ms) for c in CLASSIFIERS}
        p_t = dataset.safe_p_value([m["optimal"] - m["target"] for m in ms])
        p_s = dataset.safe_p_value([m["optimal"] - m["source"] for m in ms])
        agg_rows.append(["*", fmt(spec.proportion), len(ms)] + [fmt(avg[c]) for c in CLASSIFIERS]
                        + ["", "", fmt(p_t), fmt(p_s), ""])

    _emit(cfg, "records.csv", _csv_text(RECORD_COLUMNS, rec_rows), primary=True)
    _emit(cfg, "aggregate.csv", _csv_text(AGGREGATE_COLUMNS, agg_rows), primary=False)
    if not ok_sessions:
        log.error("no session produced any result")
        return 1
    return 0


# -- aggregate-sources --------------------------------------------------------------

def cmd_aggregate_sources(cfg: dict) -> int:
    if "source_vectors" not in cfg:
        raise ConfigError("aggregate-sources requires --source-vectors")
    try:
        vecs = dataset.read_source_vectors(cfg["source_vectors"])
    except (OSError, FldTransferError) as exc:
        raise ConfigError(f"cannot read sources: {exc}") from None
    try:
        summary = summarize_sources(vecs)
    except ZeroResultant as exc:
        print(f"error: zero resultant: {exc}", file=sys.stderr)
        return 1
    _emit(cfg, "aggregate.json", dataset.aggregate_to_json(summary), primary=True)
    return 0


COMMANDS = {"simulate": cmd_simulate, "eval": cmd_eval, "aggregate-sources": cmd_aggregate_sources}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(
        level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        cfg = resolve_config(args.command, args)
        cfg["_explicit"] = tuple(k for k in vars(args) if k == "out")
        return COMMANDS[args.command](cfg)
    except ConfigError as exc:
        parser.print_usage(sys.stderr)
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except FldTransferError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
