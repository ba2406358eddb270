"""Residual-feedback adapters and causal residual selection.

Adapters act on the horizon axis: residuals and base forecasts are passed as
``(..., d, H)`` arrays (one H-vector per channel, weights shared across
channels), so ``eps @ W1`` is ``(d x H)(H x r)``.

Selection rules are expressed as a :class:`ResidualPlan`: output position
``h`` of the residual vector at anchor ``t`` is the error of the forecast
issued at ``t + issue_offset[h]`` at horizon index ``horizon[h]``, i.e. the
error on series row ``t + issue_offset[h] + horizon[h]``. A forecast issued at
``s`` covers rows ``s .. s+H-1``.
"""
from __future__ import annotations

import enum
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import CausalityViolation, InvalidInput, MissingHistory
from .numerics import make_rng


def _relu(x):
    return np.maximum(x, 0.0)


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def _check(E, Y, H):
    E = np.asarray(E, dtype=np.float64)
    Y = np.asarray(Y, dtype=np.float64)
    if E.shape != Y.shape or E.shape[-1] != H:
        raise InvalidInput(f"adapter expects matching (..., d, {H}) inputs, got {E.shape} and {Y.shape}")
    return E, Y


def _flat(x):
    return x.reshape(-1, x.shape[-1])


@dataclass
class LowRankAdapter:
    """``y' = relu(eps @ W1) @ W2 + y``."""
    H: int
    r: int
    params: dict = field(default_factory=dict)
    kind = "lowrank"
    output_keys = ("W2",)

    @classmethod
    def init(cls, H, r=64, rng=None):
        if r < 1:
            raise InvalidInput("rank must be >= 1")
        if r >= H:
            warnings.warn(f"adapter rank {r} is not below horizon {H}", stacklevel=2)
        rng = make_rng(0) if rng is None else rng
        bound = 1.0 / np.sqrt(H)
        # W2 starts at zero so the corrected forecaster starts as the base one
        return cls(H, r, {"W1": rng.uniform(-bound, bound, (H, r)), "W2": np.zeros((r, H))})

    @property
    def dims(self):
        return {"H": self.H, "r": self.r}

    def n_params(self):
        return sum(p.size for p in self.params.values())

    def forward(self, E, Y):
        E, Y = _check(E, Y, self.H)
        shape = E.shape
        e = _flat(E)
        z = e @ self.params["W1"]
        a = _relu(z)
        out = (a @ self.params["W2"]).reshape(shape) + Y
        return out, (e, z, a, shape)

    def backward(self, cache, G):
        e, z, a, shape = cache
        g = _flat(np.asarray(G, dtype=np.float64))
        dz = (g @ self.params["W2"].T) * (z > 0.0)
        grads = {"W1": e.T @ dz, "W2": a.T @ g}
        dE = (dz @ self.params["W1"].T).reshape(shape)
        return grads, dE, g.reshape(shape).copy()


@dataclass
class GateAdapter:
    """``y' = y + sigmoid(gate(eps)) * corr(eps)`` with two small ReLU nets."""
    H: int
    r: int
    params: dict = field(default_factory=dict)
    kind = "gate"
    output_keys = ("Wc2", "bc2")

    @classmethod
    def init(cls, H, r=64, rng=None):
        rng = make_rng(0) if rng is None else rng
        bh, br = 1.0 / np.sqrt(H), 1.0 / np.sqrt(r)
        return cls(H, r, {
            "Wc1": rng.uniform(-bh, bh, (H, r)), "bc1": np.zeros(r),
            "Wc2": np.zeros((r, H)), "bc2": np.zeros(H),
            "Wg1": rng.uniform(-bh, bh, (H, r)), "bg1": np.zeros(r),
            "wg2": rng.uniform(-br, br, r), "bg2": np.zeros(1),
        })

    @property
    def dims(self):
        return {"H": self.H, "r": self.r}

    def n_params(self):
        return sum(p.size for p in self.params.values())

    def forward(self, E, Y):
        E, Y = _check(E, Y, self.H)
        p = self.params
        shape = E.shape
        e = _flat(E)
        zc = e @ p["Wc1"] + p["bc1"]
        ac = _relu(zc)
        corr = ac @ p["Wc2"] + p["bc2"]
        zg = e @ p["Wg1"] + p["bg1"]
        ag = _relu(zg)
        gate = _sigmoid(ag @ p["wg2"] + p["bg2"][0])
        out = (gate[:, None] * corr).reshape(shape) + Y
        return out, (e, zc, ac, corr, zg, ag, gate, shape)

    def backward(self, cache, G):
        e, zc, ac, corr, zg, ag, gate, shape = cache
        p = self.params
        g = _flat(np.asarray(G, dtype=np.float64))
        dcorr = g * gate[:, None]
        dgate = np.sum(g * corr, axis=1)
        dsg = dgate * gate * (1.0 - gate)
        dzc = (dcorr @ p["Wc2"].T) * (zc > 0.0)
        dzg = np.outer(dsg, p["wg2"]) * (zg > 0.0)
        grads = {
            "Wc1": e.T @ dzc, "bc1": dzc.sum(axis=0),
            "Wc2": ac.T @ dcorr, "bc2": dcorr.sum(axis=0),
            "Wg1": e.T @ dzg, "bg1": dzg.sum(axis=0),
            "wg2": ag.T @ dsg, "bg2": np.array([dsg.sum()]),
        }
        dE = (dzc @ p["Wc1"].T + dzg @ p["Wg1"].T).reshape(shape)
        return grads, dE, g.reshape(shape).copy()


@dataclass
class FuseAdapter:
    """``y' = relu(eps @ Pe + y @ Py + bm) @ Wo + bo``.

    Residuals and base forecast are projected to a shared width-``r`` space,
    merged by addition and mapped back to the horizon. There is no skip path,
    so the Jacobian with respect to the base forecast is dense.
    """
    H: int
    r: int
    params: dict = field(default_factory=dict)
    kind = "fuse"
    output_keys = ()

    @classmethod
    def init(cls, H, r=64, rng=None):
        rng = make_rng(0) if rng is None else rng
        bh, br = 1.0 / np.sqrt(H), 1.0 / np.sqrt(r)
        return cls(H, r, {
            "Pe": rng.uniform(-bh, bh, (H, r)), "Py": rng.uniform(-bh, bh, (H, r)),
            "bm": np.zeros(r), "Wo": rng.uniform(-br, br, (r, H)), "bo": np.zeros(H),
        })

    @property
    def dims(self):
        return {"H": self.H, "r": self.r}

    def n_params(self):
        return sum(p.size for p in self.params.values())

    def forward(self, E, Y):
        E, Y = _check(E, Y, self.H)
        p = self.params
        shape = E.shape
        e, y = _flat(E), _flat(Y)
        z = e @ p["Pe"] + y @ p["Py"] + p["bm"]
        a = _relu(z)
        out = (a @ p["Wo"] + p["bo"]).reshape(shape)
        return out, (e, y, z, a, shape)

    def backward(self, cache, G):
        e, y, z, a, shape = cache
        p = self.params
        g = _flat(np.asarray(G, dtype=np.float64))
        dz = (g @ p["Wo"].T) * (z > 0.0)
        grads = {"Pe": e.T @ dz, "Py": y.T @ dz, "bm": dz.sum(axis=0),
                 "Wo": a.T @ g, "bo": g.sum(axis=0)}
        return grads, (dz @ p["Pe"].T).reshape(shape), (dz @ p["Py"].T).reshape(shape)


ADAPTERS = {"lowrank": LowRankAdapter, "gate": GateAdapter, "fuse": FuseAdapter}


def make_adapter(kind, H, r=64, rng=None):
    try:
        cls = ADAPTERS[kind]
    except KeyError:
        raise InvalidInput(f"unknown adapter kind {kind!r}") from None
    return cls.init(H, r, rng)


def adapter_forward(adapter, E, Y):
    return adapter.forward(E, Y)[0]


def adapter_backprop(adapter, E, Y, grad_out):
    """Return ``(param_grads, d_eps, d_yhat)`` for ``sum(grad_out * forward)``."""
    _, cache = adapter.forward(E, Y)
    return adapter.backward(cache, grad_out)


def zero_output(adapter):
    """Copy of an additive adapter whose correction is identically zero."""
    if not adapter.output_keys:
        raise InvalidInput(f"{adapter.kind} adapter has no additive output projection")
    params = {k: (np.zeros_like(v) if k in adapter.output_keys else v.copy())
              for k, v in adapter.params.items()}
    return type(adapter)(adapter.H, adapter.r, params)


class Selection(str, enum.Enum):
    DELAYED = "delayed"          # full residual of the forecast issued at t-H
    ONESTEP = "onestep"          # one-step errors of forecasts issued at t-H .. t-1
    FIXEDTARGET = "fixedtarget"  # errors on row t-1 made at issue times t-H .. t-1

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        aliases = {"delayedfullhorizon": "delayed", "type1": "delayed",
                   "onestephistory": "onestep", "type2": "onestep",
                   "fixedtargethistory": "fixedtarget", "type3": "fixedtarget"}
        key = str(value).strip().lower()
        try:
            return cls(aliases.get(key, key))
        except ValueError:
            raise InvalidInput(f"unknown selection strategy {value!r}") from None


@dataclass(frozen=True)
class ResidualPlan:
    issue_offset: np.ndarray
    horizon: np.ndarray

    @property
    def target_offset(self):
        return self.issue_offset + self.horizon

    @property
    def issue_offsets(self):
        return np.unique(self.issue_offset)


def residual_plan(strategy, H: int) -> ResidualPlan:
    """Plan for a named strategy; a ResidualPlan passes through unchanged."""
    if isinstance(strategy, ResidualPlan):
        return strategy
    s = Selection.parse(strategy)
    h = np.arange(H)
    if s is Selection.DELAYED:
        return ResidualPlan(np.full(H, -H), h)
    if s is Selection.ONESTEP:
        return ResidualPlan(h - H, np.zeros(H, dtype=int))
    return ResidualPlan(h - H, H - 1 - h)


class PredictionLog:
    """Forecasts keyed by issue time; residuals become usable at ``s + H``."""

    def __init__(self, H: int):
        self.H = H
        self._fc: dict[int, np.ndarray] = {}

    def add(self, s: int, forecast) -> None:
        forecast = np.asarray(forecast, dtype=np.float64)
        if forecast.shape[0] != self.H:
            raise InvalidInput(f"forecast must have {self.H} rows")
        self._fc[int(s)] = forecast

    def get(self, s: int) -> np.ndarray:
        try:
            return self._fc[int(s)]
        except KeyError:
            raise MissingHistory(int(s)) from None

    def __contains__(self, s):
        return int(s) in self._fc

    def __len__(self):
        return len(self._fc)

    def issue_times(self):
        return sorted(self._fc)

    def observable(self, s: int, t: int) -> bool:
        return t >= s + self.H

    def residual(self, s: int, series) -> np.ndarray:
        """Full ``H x d`` residual of the forecast issued at ``s``."""
        s = int(s)
        return np.asarray(series)[s:s + self.H] - self.get(s)


def select_residuals(log: PredictionLog, series, t: int, H: int, strategy=Selection.DELAYED):
    """Residual matrix (d x H) available when forecasting at anchor ``t``.

    Every ground-truth read goes through a bound check against ``t``.
    """
    plan = residual_plan(strategy, H)
    series = np.asarray(series, dtype=np.float64)
    if series.ndim == 1:
        series = series[:, None]
    out = np.empty((series.shape[1], H))
    for h in range(H):
        s = t + int(plan.issue_offset[h])
        k = int(plan.horizon[h])
        if s < 0:
            raise MissingHistory(s)
        fc = log.get(s)
        idx = s + k
        if idx >= t:
            raise CausalityViolation(idx, t)
        out[:, h] = series[idx] - fc[k]
    return out
