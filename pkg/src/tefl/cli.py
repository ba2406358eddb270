"""Command-line front end.

Subcommands: ``train``, ``evaluate``, ``synth``, ``theory``, ``ablate``.
Exit codes: 0 ok, 1 usage or config error, 2 data error, 3 numeric failure.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import platform
import sys
from dataclasses import replace
from importlib import metadata
from pathlib import Path

import numpy as np
import scipy

from . import checkpoint, experiments, theory
from .config import load_config
from .datasets import (SplitSpec, SsmSpec, inject_drift, inject_shocks, load_csv,
                       make_ssm_panel, split_and_normalize, write_csv)
from .errors import (ConfigError, DegenerateVariance, InvalidInput, IoError, MissingHistory,
                     NotEnoughData, NumericFailure, ParseError)
from .evaluation import dump_predictions, rolling_evaluate
from .training import run_training

log = logging.getLogger("tefl")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _versions():
    try:
        own = metadata.version("artifact")
    except metadata.PackageNotFoundError:
        own = "unknown"
    return {"artifact": own, "numpy": np.__version__, "scipy": scipy.__version__,
            "python": platform.python_version()}


def _sha256(path):
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _write_json(path, obj):
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _write_rows(path, rows):
    if not rows:
        Path(path).write_text("", encoding="utf-8")
        return
    cols = list(rows[0])
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols)
        for r in rows:
            w.writerow([repr(r[c]) if isinstance(r[c], float) else r[c] for c in cols])


def _split_spec(cfg):
    return SplitSpec(cfg.train_frac, cfg.val_frac, cfg.test_frac)


def cmd_train(args):
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg = cfg.replace(seed=args.seed)
    table = load_csv(args.data)
    train, val, test, _ = split_and_normalize(table, _split_spec(cfg))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    cfg_text = cfg.to_text()
    data_hash = _sha256(args.data)
    run_id = hashlib.sha256((cfg_text + data_hash).encode()).hexdigest()[:12]

    result = run_training(cfg.base_kind, (train, val), cfg)
    meta = {"selection": cfg.selection, "window_norm": "on" if cfg.window_norm else "off",
            "train_frac": cfg.train_frac, "val_frac": cfg.val_frac, "test_frac": cfg.test_frac,
            "seed": cfg.seed}
    checkpoint.save(out / "model.ckpt", result.model, result.adapter, meta)
    result.report.checkpoint = "model.ckpt"

    context = np.concatenate([train, val])
    test_m = rolling_evaluate(result.model, result.adapter, test, context, cfg.L, cfg.H,
                              cfg.selection, cfg.window_norm, keep_log=False).metrics
    with (out / "metrics.jsonl").open("w", encoding="utf-8") as fh:
        for r in result.report.rows:
            fh.write(json.dumps({"run_id": run_id, "phase": r["phase"], "epoch": r["epoch"],
                                 "split": "train", "loss": r["train_loss"], "mse": None,
                                 "mae": None, "sf_term": r["sf_term"]}) + "\n")
            if r["val_mse"] is not None:
                fh.write(json.dumps({"run_id": run_id, "phase": r["phase"], "epoch": r["epoch"],
                                     "split": "val", "loss": None, "mse": r["val_mse"],
                                     "mae": r["val_mae"], "sf_term": None}) + "\n")
        fh.write(json.dumps({"run_id": run_id, "phase": "final", "epoch": None, "split": "test",
                             "loss": None, "mse": test_m.mse, "mae": test_m.mae,
                             "sf_term": None}) + "\n")
    (out / "config.txt").write_text(cfg_text, encoding="utf-8")
    _write_json(out / "manifest.json", {
        "command": "train", "run_id": run_id, "seed": cfg.seed, "config": cfg_text,
        "data": {"path": str(args.data), "sha256": data_hash, "rows": table.T,
                 "channels": list(table.channel_names)},
        "versions": _versions()})
    summary = {"run_id": run_id, "strategy": cfg.strategy, "epochs": len(result.report.rows),
               "test_mse": test_m.mse, "test_mae": test_m.mae,
               "checkpoint": result.report.checkpoint}
    _write_json(out / "report.json", summary)
    print(json.dumps(summary, sort_keys=True))
    return EXIT_OK


def cmd_evaluate(args):
    model, adapter, meta = checkpoint.load(args.ckpt)
    try:
        split = SplitSpec(float(meta.get("train_frac", 0.7)), float(meta.get("val_frac", 0.1)),
                          float(meta.get("test_frac", 0.2)))
    except ValueError as exc:
        raise ConfigError(f"bad split fractions in checkpoint: {exc}") from None
    norm = meta.get("window_norm", "off") == "on"
    selection = args.strategy or meta.get("selection", "delayed")
    table = load_csv(args.data)
    train, val, test, _ = split_and_normalize(table, split)
    context = np.concatenate([train, val])
    res = rolling_evaluate(model, None if args.no_adapter else adapter, test, context,
                           model.L, model.H, selection, norm, stride=args.stride,
                           keep_log=False, keep_predictions=args.dump is not None)
    if args.dump:
        dump_predictions(res, args.dump, list(table.channel_names))
    print(json.dumps(res.metrics.as_dict(), sort_keys=True))
    return EXIT_OK


def cmd_synth(args):
    if args.kind == "ssm":
        table = make_ssm_panel(args.channels, args.T, args.a, args.sigma_eta, args.sigma_eps,
                               args.seed)
    else:
        if not args.input:
            raise UsageError(f"synth --kind {args.kind} needs --in")
        table = load_csv(args.input)
        if args.kind == "shocks":
            table = inject_shocks(table, args.n_shocks, args.amplitude, args.duration)
        else:
            table = inject_drift(table)
    write_csv(table, args.out)
    print(json.dumps({"kind": args.kind, "rows": table.T, "channels": table.d,
                      "out": str(args.out)}, sort_keys=True))
    return EXIT_OK


def cmd_theory(args):
    spec = SsmSpec(a=args.a, sigma_eta=args.sigma_eta, seed=args.seed)
    if args.check == "prop1":
        sigmas = args.sigma_eps or [0.05, 0.1, 0.2]
        T = args.T or 500_000
        rows = theory.verify_prop1(spec, sigmas, T, args.seeds, args.M, args.thin)
    else:
        sigmas = args.sigma_eps or [0.2]
        if len(sigmas) != 1:
            raise UsageError("theory --check thm1 takes a single --sigma-eps")
        T = args.T or 100_000
        rows = theory.verify_thm1(replace(spec, sigma_eps=sigmas[0]), T, args.seeds, args.M,
                                  args.thin)
    _write_rows(args.out, rows)
    _write_json(Path(str(args.out) + ".manifest.json"), {
        "command": "theory", "check": args.check, "seed": args.seed, "T": T,
        "seeds": args.seeds, "M": args.M, "thin": args.thin, "sigma_eps": sigmas,
        "a": args.a, "sigma_eta": args.sigma_eta, "versions": _versions()})
    print(json.dumps({"check": args.check, "rows": len(rows), "out": str(args.out)}))
    return EXIT_OK


def cmd_ablate(args):
    cfg = load_config(args.config) if args.config else experiments.SUITE_CONFIG
    rows = experiments.run_suite(args.suite, cfg, range(args.seeds), not args.no_drift, args.T)
    print(experiments.format_table(rows))
    if args.out:
        _write_rows(args.out, rows)
    return EXIT_OK


def build_parser():
    p = _Parser(prog="tefl", description="Temporal error feedback forecasting toolkit")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    t = sub.add_parser("train", help="train a model from a config and CSV")
    t.add_argument("--config", required=True)
    t.add_argument("--data", required=True)
    t.add_argument("--out", required=True)
    t.add_argument("--seed", type=int)
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("evaluate", help="rolling evaluation of a checkpoint")
    e.add_argument("--ckpt", required=True)
    e.add_argument("--data", required=True)
    e.add_argument("--strategy", choices=["delayed", "onestep", "fixedtarget"])
    e.add_argument("--no-adapter", action="store_true")
    e.add_argument("--dump", help="write per-anchor predictions CSV")
    e.add_argument("--stride", type=int, default=1)
    e.set_defaults(func=cmd_evaluate)

    s = sub.add_parser("synth", help="generate or perturb datasets")
    s.add_argument("--kind", required=True, choices=["shocks", "drift", "ssm"])
    s.add_argument("--in", dest="input")
    s.add_argument("--out", required=True)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--T", type=int, default=4000)
    s.add_argument("--channels", type=int, default=3)
    s.add_argument("--a", type=float, default=0.8)
    s.add_argument("--sigma-eta", type=float, default=0.5)
    s.add_argument("--sigma-eps", type=float, default=0.5)
    s.add_argument("--n-shocks", type=int, default=30)
    s.add_argument("--amplitude", type=float, default=3.0)
    s.add_argument("--duration", type=int, default=192)
    s.set_defaults(func=cmd_synth)

    th = sub.add_parser("theory", help="simulation checks of residual autocorrelation")
    th.add_argument("--check", required=True, choices=["prop1", "thm1"])
    th.add_argument("--sigma-eps", type=float, nargs="+")
    th.add_argument("--T", type=int)
    th.add_argument("--seeds", type=int, default=10)
    th.add_argument("--M", type=int, default=100_000)
    th.add_argument("--thin", type=int, default=5)
    th.add_argument("--seed", type=int, default=0)
    th.add_argument("--a", type=float, default=0.8)
    th.add_argument("--sigma-eta", type=float, default=0.5)
    th.add_argument("--out", required=True)
    th.set_defaults(func=cmd_theory)

    ab = sub.add_parser("ablate", help="run a variant grid on the synthetic suite")
    ab.add_argument("--suite", required=True, choices=sorted(experiments.SUITES))
    ab.add_argument("--config")
    ab.add_argument("--seeds", type=int, default=5)
    ab.add_argument("--T", type=int, default=4000)
    ab.add_argument("--no-drift", action="store_true")
    ab.add_argument("--out")
    ab.set_defaults(func=cmd_ablate)
    return p


def run_cli(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    if args.verbose:
        logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (UsageError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (NumericFailure, DegenerateVariance) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ParseError, IoError, NotEnoughData, MissingHistory, InvalidInput, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


def main():
    sys.exit(run_cli())
