"""Synthetic experiment grids: strategy, selection and adapter comparisons.

Every run uses a 3-channel SSM panel split 70/10/20 and z-scored with train
statistics. The drifted variant adds the ramp in normalised units to the
whole table before re-splitting, so the drift magnitude is the same for
every channel.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .config import TrainConfig
from .datasets import SplitSpec, drift_profile, make_ssm_panel, split_and_normalize
from .evaluation import rolling_evaluate
from .training import run_training

log = logging.getLogger(__name__)

SUITE_CONFIG = TrainConfig(L=48, H=48, adapter_rank=16, warmup_epochs=3, joint_epochs=12)


@dataclass(frozen=True)
class Splits:
    train: np.ndarray
    val: np.ndarray
    test: np.ndarray


def synthetic_splits(seed: int, drift: bool, T: int = 4000, n_channels: int = 3,
                     split: SplitSpec = SplitSpec()) -> Splits:
    table = make_ssm_panel(n_channels, T, seed=seed)
    train, val, test, _ = split_and_normalize(table, split)
    if drift:
        z = np.concatenate([train, val, test]) + drift_profile(T)[:, None]
        n1, n2 = train.shape[0], train.shape[0] + val.shape[0]
        train, val, test = z[:n1], z[n1:n2], z[n2:]
    return Splits(train, val, test)


def test_metrics(result, splits: Splits, adapter=True):
    """Rolling test metrics, using train+val as context."""
    cfg = result.config
    context = np.concatenate([splits.train, splits.val])
    res = rolling_evaluate(result.model, result.adapter if adapter else None, splits.test,
                           context, cfg.L, cfg.H, cfg.selection, cfg.window_norm,
                           keep_log=False)
    return res.metrics


def run_one(cfg: TrainConfig, splits: Splits) -> dict:
    result = run_training(cfg.base_kind, (splits.train, splits.val), cfg)
    m = test_metrics(result, splits)
    return {"strategy": cfg.strategy, "selection": cfg.selection, "adapter": cfg.adapter_kind,
            "seed": cfg.seed, "test_mse": m.mse, "test_mae": m.mae}


def compare(variants, seeds=range(5), drift=True, base: TrainConfig = SUITE_CONFIG, T=4000):
    """Run every ``(label, overrides)`` variant on every seed.

    Returns rows ``{variant, seed, drift, test_mse, test_mae, ...}`` in
    (seed, variant) order.
    """
    rows = []
    for seed in seeds:
        splits = synthetic_splits(seed, drift, T)
        for label, overrides in variants:
            cfg = base.replace(seed=seed, **overrides)
            row = run_one(cfg, splits)
            row.update(variant=label, drift=drift)
            log.info("%s seed=%d drift=%s mae=%.5f", label, seed, drift, row["test_mae"])
            rows.append(row)
    return rows


SUITES = {
    "strategy": [(s, {"strategy": s}) for s in ("TEFL", "NoSF", "Type1", "Type2", "Baseline")],
    "selection": [(s, {"selection": s}) for s in ("delayed", "onestep", "fixedtarget")],
    "adapter": [(k, {"adapter_kind": k}) for k in ("lowrank", "gate", "fuse")],
}


def run_suite(name, base: TrainConfig = SUITE_CONFIG, seeds=range(5), drift=True, T=4000):
    return compare(SUITES[name], seeds, drift, base, T)


def summarize(rows, key="test_mae"):
    """Median and mean of ``key`` per variant, in first-seen order."""
    out = {}
    for r in rows:
        out.setdefault(r["variant"], []).append(r[key])
    return {v: {"median": float(np.median(x)), "mean": float(np.mean(x)), "n": len(x)}
            for v, x in out.items()}


def format_table(rows, key="test_mae") -> str:
    summ = summarize(rows, key)
    width = max(len(v) for v in summ) + 2
    lines = [f"{'variant':<{width}}{'median_' + key:>18}{'mean_' + key:>18}{'n':>4}"]
    for v, s in summ.items():
        lines.append(f"{v:<{width}}{s['median']:>18.6f}{s['mean']:>18.6f}{s['n']:>4}")
    return "\n".join(lines)


def tefl_vs_baseline(seeds=range(5), drift=True, base: TrainConfig = SUITE_CONFIG, T=4000):
    """Per-seed relative MAE improvement of TEFL over the baseline."""
    rows = compare([("TEFL", {"strategy": "TEFL"}), ("Baseline", {"strategy": "Baseline"})],
                   seeds, drift, base, T)
    by_seed = {}
    for r in rows:
        by_seed.setdefault(r["seed"], {})[r["variant"]] = r["test_mae"]
    return [{"seed": s, "tefl_mae": v["TEFL"], "baseline_mae": v["Baseline"],
             "improvement": (v["Baseline"] - v["TEFL"]) / v["Baseline"]}
            for s, v in by_seed.items()]
