"""Base forecaster + residual adapter evaluated on a stored series.

``TeflSystem.predict(series, anchors)`` produces the corrected forecast for
each anchor ``t`` (rows ``t .. t+H-1``) using only rows ``< t``: the base
forecast from ``series[t-L:t]`` and the residual vector picked by the
selection plan, where every referenced forecast is recomputed from its own
input window with the current parameters. All forecasts needed by a call
(anchors and residual issue times) are computed in a single deduplicated
model pass, so the same code path serves training batches and rolling
evaluation.

With window normalisation on, each window is standardised by its own stats;
forecasts used for residuals are de-normalised, while the adapter sees the
anchor's normalised base forecast and residuals divided by the anchor's std,
and the corrected output is de-normalised afterwards.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .datasets import windows
from .errors import InvalidInput
from .feedback import ResidualPlan, residual_plan
from .forecasters import window_norm


@dataclass
class TeflSystem:
    model: object
    adapter: object = None
    L: int = 96
    H: int = 96
    selection: object = "delayed"
    norm: bool = False

    def __post_init__(self):
        if self.model.L != self.L or self.model.H != self.H:
            raise InvalidInput("model dims do not match system L/H")
        if self.adapter is not None and self.adapter.H != self.H:
            raise InvalidInput("adapter horizon does not match system H")
        self.plan: ResidualPlan = residual_plan(self.selection, self.H)

    def without_adapter(self) -> "TeflSystem":
        return TeflSystem(self.model, None, self.L, self.H, self.plan, self.norm)

    def min_anchor(self) -> int:
        """Smallest anchor with every referenced window inside the series."""
        if self.adapter is None:
            return self.L
        return self.L - int(self.plan.issue_offset.min())

    def predict(self, series, anchors):
        """Corrected forecasts ``(N, H, d)`` and a cache for :meth:`backward`."""
        series = np.asarray(series, dtype=np.float64)
        if series.ndim == 1:
            series = series[:, None]
        anchors = np.asarray(anchors, dtype=np.int64).reshape(-1)
        if anchors.size == 0:
            raise InvalidInput("no anchors")
        if anchors.min() < self.min_anchor():
            raise InvalidInput(f"anchor {anchors.min()} lacks history (minimum {self.min_anchor()})")
        if anchors.max() > series.shape[0]:
            raise InvalidInput("anchor beyond series end")
        H = self.H
        if self.adapter is None:
            times = anchors
            issue = None
        else:
            issue = anchors[:, None] + self.plan.issue_offset[None, :]
            times = np.concatenate([anchors, issue.ravel()])
        times, inverse = np.unique(times, return_inverse=True)
        X = windows(series, times - self.L, self.L)
        if self.norm:
            Xn, st = window_norm(X, "apply")
            raw, mcache = self.model.forward(Xn)
            F = window_norm(raw, "invert", st)
        else:
            raw, mcache = self.model.forward(X)
            F, st = raw, None
        pos_a = inverse[:anchors.size]
        cache = {"times": times, "pos_a": pos_a, "mcache": mcache, "st": st, "F": F}
        if self.adapter is None:
            return F[pos_a], cache

        pos_i = inverse[anchors.size:].reshape(anchors.size, H)
        k = self.plan.horizon
        truth = series[issue + k[None, :]]                  # (N, H, d)
        eps = truth - F[pos_i, k[None, :]]                  # (N, H, d)
        base = raw[pos_a]
        if st is not None:
            std_a, mean_a = st.std[pos_a], st.mean[pos_a]
            eps_in = eps / std_a
        else:
            eps_in = eps
        out_n, acache = self.adapter.forward(eps_in.transpose(0, 2, 1), base.transpose(0, 2, 1))
        out = out_n.transpose(0, 2, 1)
        if st is not None:
            out = out * std_a + mean_a
        cache.update(pos_i=pos_i, acache=acache, eps=eps)
        return out, cache

    def backward(self, cache, G, train_model=True, train_adapter=True):
        """Gradients of ``sum(G * predict(...))`` as ``(model_grads, adapter_grads)``.

        Model gradients include both paths: through the base forecast and
        through the residuals fed to the adapter.
        """
        G = np.asarray(G, dtype=np.float64)
        st, pos_a = cache["st"], cache["pos_a"]
        draw = np.zeros_like(cache["F"])
        a_grads = None
        if self.adapter is None:
            np.add.at(draw, pos_a, G if st is None else G * st.std[pos_a])
        else:
            if st is not None:
                G = G * st.std[pos_a]
            a_grads, dE, dY = self.adapter.backward(cache["acache"], G.transpose(0, 2, 1))
            if train_model:
                np.add.at(draw, pos_a, dY.transpose(0, 2, 1))
                deps = dE.transpose(0, 2, 1)
                if st is not None:
                    deps = deps / st.std[pos_a]
                dF = np.zeros_like(draw)
                k = self.plan.horizon
                np.add.at(dF, (cache["pos_i"], k[None, :]), -deps)
                draw += dF if st is None else dF * st.std
            if not train_adapter:
                a_grads = None
        m_grads = self.model.backward(cache["mcache"], draw) if train_model else None
        return m_grads, a_grads
