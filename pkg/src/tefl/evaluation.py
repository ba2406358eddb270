"""Rolling evaluation, metrics and the causality audit."""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .datasets import windows
from .errors import InvalidInput, NotEnoughData
from .feedback import PredictionLog
from .system import TeflSystem


@dataclass(frozen=True)
class Metrics:
    mse: float
    mae: float
    n_samples: int

    def as_dict(self):
        return {"mse": self.mse, "mae": self.mae, "n_samples": self.n_samples}


def compute_metrics(pred, truth) -> Metrics:
    pred = np.asarray(pred, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.float64)
    if pred.shape != truth.shape:
        raise InvalidInput(f"shape mismatch {pred.shape} vs {truth.shape}")
    if not (np.all(np.isfinite(pred)) and np.all(np.isfinite(truth))):
        raise InvalidInput("non-finite values in metrics input")
    diff = pred - truth
    return Metrics(float(np.mean(diff * diff)), float(np.mean(np.abs(diff))),
                   int(pred.shape[0]) if pred.ndim else 1)


@dataclass
class RollingResult:
    metrics: Metrics
    log: PredictionLog | None
    anchors: np.ndarray
    offset: int
    truth: np.ndarray | None = None
    base: np.ndarray | None = None
    corrected: np.ndarray | None = None


def _stack(series):
    s = np.asarray(series, dtype=np.float64)
    return s[:, None] if s.ndim == 1 else s


def rolling_evaluate(model, adapter, test_series, context_series, L, H, strategy="delayed",
                     norm=False, stride=1, keep_log=True, keep_predictions=False,
                     chunk=2048) -> RollingResult:
    """Issue an H-step forecast at every test anchor, as a deployed system would.

    ``context_series`` holds the rows preceding the test split. Anchors are
    test-split rows ``t`` with ``t+H`` inside the split; the prediction at
    ``t`` reads only rows ``< t`` of the concatenated series. Metrics are
    accumulated in anchor order.
    """
    context = _stack(context_series)
    test = _stack(test_series)
    system = TeflSystem(model, adapter, L, H, strategy, norm)
    if context.shape[0] < system.min_anchor():
        raise NotEnoughData(f"context has {context.shape[0]} rows, need {system.min_anchor()}")
    series = np.concatenate([context, test], axis=0)
    offset = context.shape[0]
    anchors = np.arange(offset, series.shape[0] - H + 1, stride)
    if anchors.size == 0:
        raise NotEnoughData("test split shorter than the horizon")
    log = PredictionLog(H) if keep_log else None
    sq = ab = 0.0
    count = 0
    preds, bases = [], []
    for i in range(0, anchors.size, chunk):
        a = anchors[i:i + chunk]
        out, cache = system.predict(series, a)
        truth = windows(series, a, H)
        diff = out - truth
        sq += float(np.sum(diff * diff))
        ab += float(np.sum(np.abs(diff)))
        count += diff.size
        if log is not None:
            for s, f in zip(cache["times"], cache["F"]):
                if s not in log:
                    log.add(int(s), f)
        if keep_predictions:
            preds.append(out)
            bases.append(cache["F"][cache["pos_a"]])
    if not (np.isfinite(sq) and np.isfinite(ab)):
        raise InvalidInput("non-finite predictions")
    metrics = Metrics(sq / count, ab / count, int(anchors.size))
    res = RollingResult(metrics, log, anchors, offset)
    if keep_predictions:
        res.corrected = np.concatenate(preds)
        res.base = np.concatenate(bases)
        res.truth = windows(series, anchors, H)
    return res


def dump_predictions(result: RollingResult, path, channel_names=None) -> None:
    """Per-anchor CSV: t, channel, step, truth, base_pred, corrected_pred."""
    if result.corrected is None:
        raise InvalidInput("rolling result was computed without keep_predictions")
    n, H, d = result.corrected.shape
    names = channel_names or [str(c) for c in range(d)]
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "channel", "step", "truth", "base_pred", "corrected_pred"])
        for i, t in enumerate(result.anchors - result.offset):
            for c in range(d):
                for h in range(H):
                    w.writerow([int(t), names[c], h, repr(float(result.truth[i, h, c])),
                                repr(float(result.base[i, h, c])),
                                repr(float(result.corrected[i, h, c]))])


@dataclass(frozen=True)
class AuditResult:
    passed: bool
    first_index: int | None = None

    def __bool__(self):
        return self.passed


def causality_audit(model, adapter, series, L, H, t_probe, strategy="delayed", norm=False,
                    sentinel=1e9) -> AuditResult:
    """Poison rows ``>= t_probe`` and require a bit-identical prediction at ``t_probe``.

    On failure the first single row whose poisoning alone changes the output
    is reported.
    """
    series = _stack(series).copy()
    system = TeflSystem(model, adapter, L, H, strategy, norm)
    t_probe = int(t_probe)
    clean, _ = system.predict(series, [t_probe])
    poisoned = series.copy()
    poisoned[t_probe:] = sentinel
    out, _ = system.predict(poisoned, [t_probe])
    if np.array_equal(out, clean):
        return AuditResult(True)
    for k in range(t_probe, series.shape[0]):
        probe = series.copy()
        probe[k] = sentinel
        out, _ = system.predict(probe, [t_probe])
        if not np.array_equal(out, clean):
            return AuditResult(False, k)
    return AuditResult(False, t_probe)
