"""Warm-up, joint training and the ablation strategies.

Strategies:

* ``TEFL``: spectral-flatness warm-up of the base model, then joint training
  of base model and adapter on causally simulated residuals.
* ``NoSF``: same schedule with the flatness weight forced to zero.
* ``Type1``: base model trained alone until validation MSE stops improving,
  then frozen while the adapter is trained.
* ``Type2``: joint training from random initialisation, no warm-up.
* ``Baseline``: the base model alone with the same epoch budget.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .config import TrainConfig
from .datasets import make_phase1_batches, phase1_anchors, phase2_anchors, windows
from .errors import NumericFailure
from .evaluation import rolling_evaluate
from .feedback import make_adapter
from .forecasters import base_backward, base_forward, make_forecaster
from .numerics import AdamWState, adamw_step, make_rng, spectral_flatness_grad
from .system import TeflSystem

log = logging.getLogger(__name__)


@dataclass
class TrainReport:
    rows: list = field(default_factory=list)
    checkpoint: str | None = None

    def phase_rows(self, phase):
        return [r for r in self.rows if r["phase"] == phase]


@dataclass
class TrainResult:
    model: object
    adapter: object
    report: TrainReport
    config: TrainConfig


def point_loss(pred, truth, kind):
    """Mean loss over all entries and its gradient with respect to ``pred``."""
    diff = pred - truth
    n = diff.size
    if kind == "mae":
        return float(np.mean(np.abs(diff))), np.sign(diff) / n
    return float(np.mean(diff * diff)), 2.0 * diff / n


def sf_penalty(resid, min_batch=8):
    """Mean flatness over (horizon, channel) columns of a (B, H, d) residual block.

    The flatness of each column is taken along the batch (time) axis.
    Returns ``(value, d value / d resid)``; zero for batches shorter than
    ``min_batch``.
    """
    B = resid.shape[0]
    if B < min_batch:
        return 0.0, np.zeros_like(resid)
    cols = resid.reshape(B, -1)
    sf, grad = spectral_flatness_grad(cols)
    m = cols.shape[1]
    return float(np.mean(sf)), (grad / m).reshape(resid.shape)


def _opt(cfg):
    return AdamWState(lr=cfg.lr, weight_decay=cfg.weight_decay)


def _check_finite(value, where):
    if not np.isfinite(value):
        raise NumericFailure(f"non-finite loss during {where}")


def _val_row(system, train, val, cfg):
    if val is None or len(val) < cfg.H:
        return None, None
    context = train[-(system.min_anchor() + cfg.H):]
    res = rolling_evaluate(system.model, system.adapter, val, context, cfg.L, cfg.H,
                           system.plan, system.norm, keep_log=False)
    return res.metrics.mse, res.metrics.mae


def warmup_epoch(model, opt, train, cfg, alpha):
    losses, sfs = [], []
    for X, Y, _ in make_phase1_batches(train, cfg.L, cfg.H, cfg.batch_size):
        pred, cache = base_forward(model, X, cfg.window_norm)
        loss, g = point_loss(pred, Y, cfg.warmup_loss)
        sf_val = 0.0
        if alpha > 0:
            sf_val, g_sf = sf_penalty(Y - pred, cfg.sf_min_batch)
            loss += alpha * sf_val
            g = g - alpha * g_sf
        _check_finite(loss, "warm-up")
        grads = base_backward(model, cache, g)
        model.params, opt = adamw_step(model.params, grads, opt)
        losses.append(loss)
        sfs.append(sf_val)
    return opt, float(np.mean(losses)), float(np.mean(sfs))


def warmup_phase(model, train, cfg: TrainConfig, val=None, report=None, epochs=None):
    """Ordered-batch warm-up with loss ``warmup_loss + alpha * SF(residuals)``."""
    report = TrainReport() if report is None else report
    alpha = 0.0 if cfg.strategy == "NoSF" else cfg.alpha
    opt = _opt(cfg)
    epochs = cfg.warmup_epochs if epochs is None else epochs
    system = TeflSystem(model, None, cfg.L, cfg.H, cfg.selection, cfg.window_norm)
    for ep in range(1, epochs + 1):
        opt, loss, sf_val = warmup_epoch(model, opt, train, cfg, alpha)
        vm, va = _val_row(system, train, val, cfg)
        report.rows.append({"phase": "warmup", "epoch": ep, "train_loss": loss,
                            "val_mse": vm, "val_mae": va, "sf_term": sf_val})
        log.info("warmup epoch %d loss=%.6f sf=%.4f val_mse=%s", ep, loss, sf_val, vm)
    return model, report


def base_epoch(model, opt, train, cfg, rng):
    anchors = phase1_anchors(len(train), cfg.L, cfg.H)
    anchors = anchors[rng.permutation(anchors.size)]
    losses = []
    for i in range(0, anchors.size, cfg.batch_size):
        a = anchors[i:i + cfg.batch_size]
        pred, cache = base_forward(model, windows(train, a - cfg.L, cfg.L), cfg.window_norm)
        loss, g = point_loss(pred, windows(train, a, cfg.H), cfg.joint_loss)
        _check_finite(loss, "base training")
        model.params, opt = adamw_step(model.params, base_backward(model, cache, g), opt)
        losses.append(loss)
    return opt, float(np.mean(losses))


def joint_epoch(system, opts, train, cfg, rng, train_model=True, train_adapter=True):
    anchors = phase2_anchors(len(train), cfg.L, cfg.H, cfg.stride)
    anchors = anchors[rng.permutation(anchors.size)]
    m_opt, a_opt = opts
    losses = []
    for i in range(0, anchors.size, cfg.batch_size):
        a = anchors[i:i + cfg.batch_size]
        pred, cache = system.predict(train, a)
        loss, g = point_loss(pred, windows(train, a, cfg.H), cfg.joint_loss)
        _check_finite(loss, "joint training")
        m_grads, a_grads = system.backward(cache, g, train_model, train_adapter)
        if train_model:
            system.model.params, m_opt = adamw_step(system.model.params, m_grads, m_opt)
        if train_adapter:
            system.adapter.params, a_opt = adamw_step(system.adapter.params, a_grads, a_opt)
        losses.append(loss)
    return (m_opt, a_opt), float(np.mean(losses))


def joint_phase(model, adapter, train, cfg: TrainConfig, val=None, report=None, epochs=None,
                train_model=True, train_adapter=True, phase="joint", rng=None):
    """Joint training on shuffled Phase-2 segments (corrected forecast, MSE by default)."""
    report = TrainReport() if report is None else report
    rng = make_rng([cfg.seed, 2]) if rng is None else rng
    system = TeflSystem(model, adapter, cfg.L, cfg.H, cfg.selection, cfg.window_norm)
    opts = (_opt(cfg), _opt(cfg))
    epochs = cfg.joint_epochs if epochs is None else epochs
    for ep in range(1, epochs + 1):
        opts, loss = joint_epoch(system, opts, train, cfg, rng, train_model, train_adapter)
        vm, va = _val_row(system, train, val, cfg)
        report.rows.append({"phase": phase, "epoch": ep, "train_loss": loss,
                            "val_mse": vm, "val_mae": va, "sf_term": None})
        log.info("%s epoch %d loss=%.6f val_mse=%s", phase, ep, loss, vm)
    return (model, adapter), report


def train_base(model, train, cfg, val=None, report=None, epochs=None, early_stop=False, rng=None):
    """Plain shuffled training of the base model; optional early stopping on val MSE."""
    report = TrainReport() if report is None else report
    rng = make_rng([cfg.seed, 2]) if rng is None else rng
    system = TeflSystem(model, None, cfg.L, cfg.H, cfg.selection, cfg.window_norm)
    opt = _opt(cfg)
    epochs = (cfg.max_epochs if early_stop else cfg.warmup_epochs + cfg.joint_epochs) \
        if epochs is None else epochs
    best, best_params, stale = np.inf, None, 0
    for ep in range(1, epochs + 1):
        opt, loss = base_epoch(model, opt, train, cfg, rng)
        vm, va = _val_row(system, train, val, cfg)
        report.rows.append({"phase": "base", "epoch": ep, "train_loss": loss,
                            "val_mse": vm, "val_mae": va, "sf_term": None})
        if early_stop and vm is not None:
            if vm < best:
                best, best_params, stale = vm, {k: v.copy() for k, v in model.params.items()}, 0
            else:
                stale += 1
                if stale >= cfg.patience:
                    break
    if early_stop and best_params is not None:
        model.params = best_params
    return model, report


def run_training(base_kind, data, cfg: TrainConfig) -> TrainResult:
    """Train according to ``cfg.strategy``.

    ``data`` is ``(train, val)`` in normalised units; ``val`` may be None
    (validation rows are then left empty and Type1 runs ``max_epochs``).
    """
    train, val = data
    train = np.asarray(train, dtype=np.float64)
    if train.ndim == 1:
        train = train[:, None]
    if base_kind != cfg.base_kind:
        cfg = cfg.replace(base_kind=base_kind)
    model = make_forecaster(cfg.base_kind, cfg.L, cfg.H, cfg.hidden, make_rng([cfg.seed, 0]))
    adapter = None
    if cfg.strategy != "Baseline":
        adapter = make_adapter(cfg.adapter_kind, cfg.H, cfg.adapter_rank, make_rng([cfg.seed, 1]))
    report = TrainReport()
    rng = make_rng([cfg.seed, 2])
    phase2_anchors(len(train), cfg.L, cfg.H)  # fail early on short series
    if cfg.strategy in ("TEFL", "NoSF"):
        warmup_phase(model, train, cfg, val, report)
        joint_phase(model, adapter, train, cfg, val, report, rng=rng)
    elif cfg.strategy == "Type2":
        joint_phase(model, adapter, train, cfg, val, report,
                    epochs=cfg.warmup_epochs + cfg.joint_epochs, rng=rng)
    elif cfg.strategy == "Type1":
        train_base(model, train, cfg, val, report, early_stop=True, rng=rng)
        joint_phase(model, adapter, train, cfg, val, report, train_model=False,
                    phase="adapter", rng=rng)
    else:
        train_base(model, train, cfg, val, report, rng=rng)
    return TrainResult(model, adapter, report, cfg)
