"""Command-line entry point.

Every command reads a flat ``key = value`` config, writes its outputs and a
``run_manifest.json`` under ``--out``, and exits with 0 on success, 1 on a
usage or configuration error and 2 when the computation itself fails.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import subprocess
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .config import ModelConfig
from .data import load_panel, read_panel_csv, standardize, transform_panel, write_panel_csv
from .exceptions import ConfigError, GPDFMError
from .store import DrawStore, fmt

log = logging.getLogger("gpdfm")

COMMANDS = ("ingest", "estimate", "forecast", "evaluate", "girf", "simulate", "geweke")
RUN_MANIFEST = "run_manifest.json"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser():
    p = _Parser(prog="gpdfm", description="Gaussian-process dynamic factor models")
    p.add_argument("--version", action="version", version=f"gpdfm {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name in COMMANDS:
        s = sub.add_parser(name)
        s.add_argument("--config", action="append", default=[],
                       help="config file (repeatable for evaluate)")
        s.add_argument("--data", help="panel CSV")
        s.add_argument("--tcodes", help="transform codes CSV when the panel has none")
        s.add_argument("--draws", help="draw store directory written by estimate")
        s.add_argument("--out", required=True, help="output directory")
        s.add_argument("--seed", type=int, help="overrides the config seed")
        s.add_argument("--threads", type=int, help="cap on worker threads")
        s.add_argument("--override", action="append", default=[], metavar="KEY=VALUE",
                       help="config override (repeatable)")
        s.add_argument("-v", "--verbose", action="store_true")
    return p


# ---------------------------------------------------------------------------
# helpers


def _version_string():
    try:
        out = subprocess.run(["git", "describe", "--always", "--dirty", "--tags"],
                             capture_output=True, text=True, timeout=5,
                             cwd=Path(__file__).resolve().parent)
        if out.returncode == 0 and out.stdout.strip():
            return f"{__version__}+{out.stdout.strip()}"
    except (OSError, subprocess.SubprocessError):
        pass
    return __version__


def _load_config(path, args):
    overrides = list(args.override)
    if args.seed is not None:
        overrides.append(f"seed={args.seed}")
    if path is None:
        return ModelConfig().with_overrides(overrides)
    return ModelConfig.from_file(path, overrides)


def _configs(args, need=True):
    if not args.config:
        if need:
            raise UsageError("--config is required")
        return [_load_config(None, args)]
    return [_load_config(c, args) for c in args.config]


def _require(args, *names):
    for n in names:
        if getattr(args, n) is None:
            raise UsageError(f"--{n} is required for {args.command}")
        if n in ("data", "tcodes", "draws") and not Path(getattr(args, n)).exists():
            raise ConfigError(f"--{n} path not found: {getattr(args, n)}")


def _panel(args, cfg=None):
    targets = cfg.targets if cfg is not None else ()
    return load_panel(args.data, args.tcodes, targets=targets)


def _write_csv(path, header, rows):
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)


def _load_states(args, cfg):
    from .sampler import spec_from_meta, states_from_store
    store = DrawStore.load(args.draws)
    spec = spec_from_meta(store.meta)
    return store, states_from_store(store, spec)


# ---------------------------------------------------------------------------
# commands


def cmd_ingest(args, out):
    _require(args, "data")
    raw = read_panel_csv(args.data, args.tcodes)
    X, dates = transform_panel(raw)
    panel = standardize(X, raw.series_ids)
    write_panel_csv(out / "panel.csv", X, raw.series_ids, dates, tcodes=[1] * X.shape[1])
    _write_csv(out / "standardization.csv", ["series", "tcode", "mean", "sd"],
               [[s, c, fmt(m), fmt(d)] for s, c, m, d in
                zip(raw.series_ids, raw.tcodes, panel.means, panel.sds)])
    return {"T": int(X.shape[0]), "N": int(X.shape[1])}


def cmd_estimate(args, out):
    from .sampler import run_chain
    _require(args, "data")
    cfg = _configs(args)[0]
    panel = _panel(args, cfg)
    store = run_chain(panel, cfg, out=out / "draws")
    return {"draws": len(store), "mh_acceptance": store.meta["mh_acceptance"],
            "pgas_update_rate": store.meta["pgas_update_rate"],
            "degenerate_steps": store.meta["degenerate_steps"]}, cfg


def cmd_forecast(args, out):
    from .forecast import forecast
    _require(args, "data", "draws")
    cfg = _configs(args)[0]
    panel = _panel(args, cfg)
    store, states = _load_states(args, cfg)
    fd = forecast(states, panel.Y, cfg.horizons, seed=cfg.seed, means=panel.means,
                  sds=panel.sds, clip_factor=cfg.clip_factor)
    ids = panel.series_ids
    rows = []
    for k, h in enumerate(fd.horizons):
        for s in range(fd.n_draws):
            rows.append([h, s, *[fmt(v) for v in fd.draws[k, s]]])
    _write_csv(out / "forecast_draws.csv", ["horizon", "draw", *ids], rows)
    summary = []
    for k, h in enumerate(fd.horizons):
        qs = np.quantile(fd.draws[k], [0.05, 0.16, 0.5, 0.84, 0.95], axis=0)
        mean = fd.draws[k].mean(axis=0)
        for j, name in enumerate(ids):
            summary.append([h, name, fmt(mean[j]), *[fmt(v) for v in qs[:, j]]])
    _write_csv(out / "forecast_summary.csv",
               ["horizon", "series", "mean", "q05", "q16", "q50", "q84", "q95"], summary)
    return {"draws": fd.n_draws, "excluded": fd.n_excluded}, cfg


def cmd_evaluate(args, out):
    from .forecast import expanding_window_run
    _require(args, "data")
    cfgs = _configs(args)
    lead = cfgs[0]
    panel = _panel(args, lead)
    X = panel.raw()
    start = lead.eval_start or max(X.shape[0] - 4, 2)
    end = lead.eval_end or X.shape[0] - 1
    table = expanding_window_run(X, cfgs, start, end, lead.horizons, lead.targets,
                                 lead.benchmark, panel.series_ids, harvey=lead.harvey)
    table.to_csv(out / "scores.csv")
    if table.skipped:
        _write_csv(out / "skipped.csv", ["model", "origin", "reason"], table.skipped)
    return {"rows": len(table), "skipped": len(table.skipped), "origins": [start, end]}, lead


def cmd_girf(args, out):
    from .structural import GirfSpec, size_sign_sweep
    _require(args, "draws")
    cfg = _configs(args)[0]
    store, states = _load_states(args, cfg)
    if len(states) > cfg.girf_max_draws:
        idx = np.unique(np.linspace(0, len(states) - 1, cfg.girf_max_draws).round().astype(int))
        states = [states[k] for k in idx]
    spec = GirfSpec.from_config(cfg)
    names = store.meta.get("series_ids")
    sweep = size_sign_sweep(states, spec, seed=cfg.seed, variable_names=names)
    sweep.to_csv(out / "girf_gfevd.csv")
    return {"draws": len(states), "clipped": sweep.n_clipped}, cfg


def cmd_simulate(args, out):
    from .simulate import simulate_gpdfm
    cfg = _configs(args, need=False)[0]
    Y, truth = simulate_gpdfm(cfg)
    ids = [f"y{i}" for i in range(Y.shape[1])]
    write_panel_csv(out / "panel.csv", Y, ids, tcodes=[1] * Y.shape[1])
    _write_csv(out / "factors.csv", ["t", *[f"f{d}" for d in range(truth.F.shape[1])]],
               [[t, *[fmt(v) for v in row]] for t, row in enumerate(truth.F)])
    _write_csv(out / "common_component.csv", ["t", *ids],
               [[t, *[fmt(v) for v in row]] for t, row in enumerate(truth.G)])
    return {"T": int(Y.shape[0]), "N": int(Y.shape[1]), "family": truth.family}, cfg


def cmd_geweke(args, out):
    from .geweke import geweke_test
    cfg = _configs(args)[0]
    report = geweke_test(cfg, T=cfg.sim_T, N=cfg.sim_N)
    report.write(out / "geweke_report.txt")
    return {"pass_fraction": report.pass_fraction, "passed": report.passed}, cfg


HANDLERS = {"ingest": cmd_ingest, "estimate": cmd_estimate, "forecast": cmd_forecast,
            "evaluate": cmd_evaluate, "girf": cmd_girf, "simulate": cmd_simulate,
            "geweke": cmd_geweke}


def dispatch(argv=None):
    """Run one command; returns the process exit code."""
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(f"gpdfm: usage error: {exc}", file=sys.stderr)
        return 1
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.threads is not None:
        if args.threads < 1:
            print("gpdfm: usage error: --threads must be positive", file=sys.stderr)
            return 1
        import numba
        numba.set_num_threads(min(args.threads, numba.config.NUMBA_NUM_THREADS))
    out = Path(args.out)
    t0 = time.perf_counter()
    try:
        out.mkdir(parents=True, exist_ok=True)
        result = HANDLERS[args.command](args, out)
    except (UsageError, ConfigError) as exc:
        print(f"gpdfm: {exc}", file=sys.stderr)
        return 1
    except (GPDFMError, np.linalg.LinAlgError, FloatingPointError, OSError) as exc:
        print(f"gpdfm: {args.command} failed: {exc}", file=sys.stderr)
        return 2
    info, cfg = result if isinstance(result, tuple) else (result, None)
    manifest = {
        "command": args.command,
        "version": _version_string(),
        "seed": cfg.seed if cfg is not None else args.seed,
        "config": cfg.to_text() if cfg is not None else None,
        "configs": list(args.config),
        "inputs": {k: getattr(args, k) for k in ("data", "tcodes", "draws")
                   if getattr(args, k) is not None},
        "result": info,
        "wall_time": time.perf_counter() - t0,
    }
    (out / RUN_MANIFEST).write_text(json.dumps(manifest, indent=2, sort_keys=True, default=str))
    return 0


def main():
    sys.exit(dispatch())


if __name__ == "__main__":
    main()
