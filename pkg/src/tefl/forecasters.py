"""Channel-independent base forecasters with hand-written gradients.

Inputs are ``(N, L, d)`` windows (a single ``(L, d)`` window is also accepted)
and outputs ``(N, H, d)`` forecasts. Every channel goes through the same map.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidInput
from .numerics import make_rng

STD_FLOOR = 1e-8


def _batched(X, L):
    X = np.asarray(X, dtype=np.float64)
    single = X.ndim == 2
    if single:
        X = X[None]
    if X.ndim != 3 or X.shape[1] != L:
        raise InvalidInput(f"expected windows of shape (N, {L}, d), got {np.shape(X)}")
    return X, single


def _rows(X):
    """(N, L, d) -> (N*d, L) with channel-major rows."""
    n, length, d = X.shape
    return X.transpose(0, 2, 1).reshape(n * d, length)


def _unrows(Z, n, d):
    """(N*d, H) -> (N, H, d)."""
    return Z.reshape(n, d, -1).transpose(0, 2, 1)


@dataclass
class LinearForecaster:
    """``y_c = W^T x_c + b`` for every channel ``c``."""
    L: int
    H: int
    params: dict = field(default_factory=dict)
    kind = "linear"

    @classmethod
    def init(cls, L, H, rng=None):
        rng = make_rng(0) if rng is None else rng
        bound = 1.0 / np.sqrt(L)
        return cls(L, H, {"W": rng.uniform(-bound, bound, (L, H)),
                          "b": rng.uniform(-bound, bound, H)})

    @property
    def dims(self):
        return {"L": self.L, "H": self.H}

    def forward(self, X):
        X, single = _batched(X, self.L)
        n, _, d = X.shape
        Y = _unrows(_rows(X) @ self.params["W"] + self.params["b"], n, d)
        return (Y[0] if single else Y), (X, single)

    def backward(self, cache, G):
        X, single = cache
        G = np.asarray(G, dtype=np.float64)
        if single:
            G = G[None]
        if G.shape != (X.shape[0], self.H, X.shape[2]):
            raise InvalidInput(f"grad_out shape {G.shape} does not match forecast shape")
        g_rows = _rows(G)
        return {"W": _rows(X).T @ g_rows, "b": g_rows.sum(axis=0)}


@dataclass
class MlpForecaster:
    """One hidden ReLU layer applied per channel: ``L -> hidden -> H``."""
    L: int
    H: int
    hidden: int = 128
    params: dict = field(default_factory=dict)
    kind = "mlp"

    @classmethod
    def init(cls, L, H, hidden=128, rng=None):
        if hidden < 1:
            raise InvalidInput("hidden width must be >= 1")
        rng = make_rng(0) if rng is None else rng
        b_in, b_out = 1.0 / np.sqrt(L), 1.0 / np.sqrt(hidden)
        return cls(L, H, hidden, {
            "W_in": rng.uniform(-b_in, b_in, (L, hidden)),
            "b_in": rng.uniform(-b_in, b_in, hidden),
            "W_out": rng.uniform(-b_out, b_out, (hidden, H)),
            "b_out": rng.uniform(-b_out, b_out, H),
        })

    @property
    def dims(self):
        return {"L": self.L, "H": self.H, "hidden": self.hidden}

    def forward(self, X):
        X, single = _batched(X, self.L)
        n, _, d = X.shape
        xr = _rows(X)
        z = xr @ self.params["W_in"] + self.params["b_in"]
        a = np.maximum(z, 0.0)
        Y = _unrows(a @ self.params["W_out"] + self.params["b_out"], n, d)
        return (Y[0] if single else Y), (xr, z, a, n, d, single)

    def backward(self, cache, G):
        xr, z, a, n, d, single = cache
        G = np.asarray(G, dtype=np.float64)
        if single:
            G = G[None]
        if G.shape != (n, self.H, d):
            raise InvalidInput(f"grad_out shape {G.shape} does not match forecast shape")
        g = _rows(G)
        dz = (g @ self.params["W_out"].T) * (z > 0.0)
        return {"W_in": xr.T @ dz, "b_in": dz.sum(axis=0),
                "W_out": a.T @ g, "b_out": g.sum(axis=0)}


FORECASTERS = {"linear": LinearForecaster, "mlp": MlpForecaster}


def make_forecaster(kind, L, H, hidden=128, rng=None):
    if kind == "linear":
        return LinearForecaster.init(L, H, rng)
    if kind == "mlp":
        return MlpForecaster.init(L, H, hidden, rng)
    raise InvalidInput(f"unknown forecaster kind {kind!r}")


def forecast(model, X):
    return model.forward(X)[0]


def backprop(model, X, grad_out):
    """Parameter gradients of ``sum(grad_out * forecast(model, X))``."""
    _, cache = model.forward(X)
    return model.backward(cache, grad_out)


@dataclass(frozen=True)
class WindowNormState:
    mean: np.ndarray
    std: np.ndarray


def window_norm(X, mode="apply", state=None):
    """Per-window, per-channel standardisation over the time axis (axis -2).

    ``apply`` returns ``(X_norm, state)``; ``invert`` maps values (input or
    forecast windows) back with a stored state and returns the array.
    """
    X = np.asarray(X, dtype=np.float64)
    if mode == "apply":
        mean = X.mean(axis=-2, keepdims=True)
        std = np.maximum(X.std(axis=-2, keepdims=True), STD_FLOOR)
        return (X - mean) / std, WindowNormState(mean, std)
    if mode == "invert":
        if state is None:
            raise InvalidInput("invert requires the state of a prior apply")
        return X * state.std + state.mean
    raise InvalidInput(f"unknown window_norm mode {mode!r}")


def base_forward(model, X, norm: bool):
    """Forecast with optional instance normalisation wrapped around the model.

    Returns ``(Y, cache)``; ``cache`` carries the norm state (or None).
    """
    if not norm:
        Y, c = model.forward(X)
        return Y, (c, None)
    Xn, st = window_norm(X, "apply")
    Yn, c = model.forward(Xn)
    return window_norm(Yn, "invert", st), (c, st)


def base_backward(model, cache, G):
    c, st = cache
    if st is not None:
        G = G * st.std
    return model.backward(c, G)
