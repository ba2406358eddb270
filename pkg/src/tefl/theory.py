"""Simulation checks for residual autocorrelation of the oracle predictor.

Model: ``x_t = a*tanh(x_{t-1}) + eta``, ``y_t = x_t + eps``. The oracle
one-step predictor ``E[y_t | y_{t-1}] = E[f(x) | y]`` is evaluated exactly
under the empirical stationary law of a long simulated chain: a Gaussian
likelihood-weighted mean of ``f(x_i)`` with bandwidth ``sigma_eps``.
"""
from __future__ import annotations

import math
import os
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

import numpy as np
from scipy.interpolate import CubicSpline

from .datasets import SsmSpec, run_chain, simulate_ssm
from .errors import DegenerateVariance, InvalidInput
from .numerics import make_rng


@dataclass(frozen=True)
class OracleModel:
    samples: np.ndarray
    sigma_eps: float
    spec: SsmSpec
    f: object = None  # overrides spec.f when given

    def func(self, x):
        return self.spec.f(x) if self.f is None else self.f(x)

    def mu_fprime(self) -> float:
        return float(np.mean(self.spec.fprime(self.samples)))


def build_oracle(spec: SsmSpec, M: int = 100_000, seed=0, thin: int = 5) -> OracleModel:
    """Keep every ``thin``-th state of a chain run for ``burn_in + M*thin`` steps."""
    if M < 1 or thin < 1:
        raise InvalidInput("M and thin must be >= 1")
    rng = make_rng(seed)
    eta = spec.sigma_eta * rng.standard_normal(spec.burn_in + M * thin)
    chain = run_chain(spec.a, spec.x0, eta)[spec.burn_in:]
    return OracleModel(chain[thin - 1::thin].copy(), spec.sigma_eps, spec)


def oracle_predict(oracle: OracleModel, y, chunk_elems: int = 4_000_000):
    """Posterior mean of ``f(x)`` given ``y = x + eps`` under the sample law.

    Log weights are shifted by their per-query maximum before exponentiation.
    """
    y = np.asarray(y, dtype=np.float64)
    scalar = y.ndim == 0
    yq = y.reshape(-1)
    x = oracle.samples
    fx = oracle.func(x)
    s = oracle.sigma_eps
    if s == 0:
        out = oracle.func(yq)
        return float(out[0]) if scalar else out.reshape(y.shape)
    out = np.empty_like(yq)
    step = max(1, chunk_elems // x.size)
    for i in range(0, yq.size, step):
        q = yq[i:i + step]
        with np.errstate(over="ignore", invalid="ignore"):
            logw = -0.5 * ((q[:, None] - x[None, :]) / s) ** 2
            logw -= logw.max(axis=1, keepdims=True)
            w = np.exp(logw)
            den = w.sum(axis=1)
            num = w @ fx
        bad = ~(np.isfinite(den) & (den > 0))
        if np.any(bad):
            warnings.warn("oracle weights underflowed; using nearest sample", RuntimeWarning,
                          stacklevel=2)
            nearest = np.abs(q[bad, None] - x[None, :]).argmin(axis=1)
            num[bad], den[bad] = fx[nearest], 1.0
        out[i:i + step] = num / den
    return float(out[0]) if scalar else out.reshape(y.shape)


def oracle_predict_grid(oracle: OracleModel, y, nodes_per_sigma: float = 10.0):
    """Exact oracle on a uniform grid covering ``y``, cubic-spline interpolated.

    For long trajectories; the oracle is smooth on the scale of ``sigma_eps``
    so a grid of ``nodes_per_sigma`` nodes per ``sigma_eps`` is far below the
    Monte-Carlo error of the sample law.
    """
    y = np.asarray(y, dtype=np.float64)
    if oracle.sigma_eps == 0:
        return oracle.func(y)
    s = oracle.sigma_eps
    lo, hi = float(y.min()) - s, float(y.max()) + s
    n = int(math.ceil((hi - lo) * nodes_per_sigma / s)) + 1
    grid = np.linspace(lo, hi, max(n, 4))
    return CubicSpline(grid, oracle_predict(oracle, grid))(y)


@dataclass(frozen=True)
class ResidualStats:
    gamma: float
    variance: float
    rho1: float
    beta: float | None
    mu_fprime: float | None
    T: int
    stderr: float


def residual_stats(r, mu_fprime=None) -> ResidualStats:
    """Lag-1 autocovariance, variance, lag-1 correlation and the OLS lag coefficient.

    ``gamma`` and ``variance`` are mean-centred sample moments; ``beta`` is
    ``sum r_t r_{t-1} / sum r_{t-1}^2`` over ``t >= 2``. ``stderr`` is the
    standard error of ``gamma`` from the spread of the lag products.
    """
    r = np.asarray(r, dtype=np.float64).reshape(-1)
    if r.size < 3:
        raise InvalidInput("need at least 3 residuals")
    c = r - r.mean()
    var = float(np.mean(c * c))
    if var <= 0:
        raise DegenerateVariance("residual sequence is constant")
    prod = c[1:] * c[:-1]
    gamma = float(np.mean(prod))
    den = float(np.dot(r[:-1], r[:-1]))
    beta = float(np.dot(r[1:], r[:-1]) / den) if den > 0 else None
    stderr = float(np.std(prod) / math.sqrt(prod.size))
    return ResidualStats(gamma, var, gamma / var, beta, mu_fprime, int(r.size), stderr)


def oracle_residuals(run_y, oracle: OracleModel):
    """``r_t = y_t - g*(y_{t-1})`` for ``t = 1 .. T-1``."""
    return run_y[1:] - oracle_predict_grid(oracle, run_y[:-1])


def _cell_seeds(base_seed, seed_index):
    return [int(base_seed), int(seed_index), 0], [int(base_seed), int(seed_index), 1]


def prop1_cell(args):
    spec, sigma, seed_index, M, thin = args
    sim_seed, oracle_seed = _cell_seeds(spec.seed, seed_index)
    cell = replace(spec, sigma_eps=float(sigma), seed=sim_seed)
    run = simulate_ssm(cell)
    oracle = build_oracle(cell, M, oracle_seed, thin)
    mu = oracle.mu_fprime()
    st = residual_stats(oracle_residuals(run.y, oracle), mu)
    predicted = -mu * sigma * sigma
    ratio = st.gamma / predicted if predicted != 0 else float("nan")
    return {"sigma_eps": float(sigma), "seed": int(seed_index), "gamma_hat": st.gamma,
            "predicted": predicted, "ratio": ratio, "stderr": st.stderr,
            "mu_fprime": mu, "variance": st.variance}


def thm1_cell(args):
    spec, seed_index, M, thin, beta_override = args
    sim_seed, oracle_seed = _cell_seeds(spec.seed, seed_index)
    cell = replace(spec, seed=sim_seed)
    run = simulate_ssm(cell)
    oracle = build_oracle(cell, M, oracle_seed, thin)
    r = oracle_residuals(run.y, oracle)
    half = r.size // 2
    fit, ev = r[:half], r[half:]
    beta = residual_stats(fit).beta if beta_override is None else float(beta_override)
    cur, prev = ev[1:], ev[:-1]
    mse_base = float(np.mean(cur * cur))
    mse_tefl = float(np.mean((cur - beta * prev) ** 2))
    gamma = float(np.mean(cur * prev))
    V = float(np.mean(prev * prev))
    bound = gamma * gamma / V
    return {"seed": int(seed_index), "sigma_eps": float(spec.sigma_eps), "beta_hat": beta,
            "mse_base": mse_base, "mse_tefl": mse_tefl, "gain": mse_base - mse_tefl,
            "gamma2_over_v": bound, "slack": (mse_base - mse_tefl) - bound}


def _map(fn, cells, workers):
    if workers is None:
        workers = int(os.environ.get("TEFL_THREADS", "0")) or os.cpu_count() or 1
    if workers <= 1 or len(cells) <= 1:
        return [fn(c) for c in cells]
    with ProcessPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, cells))


def verify_prop1(spec: SsmSpec = SsmSpec(), sigmas=(0.05, 0.1, 0.2), T: int = 500_000,
                 seeds: int = 10, M: int = 100_000, thin: int = 5, workers=None):
    """Lag-1 residual autocovariance of the oracle against ``-mu_f' sigma_eps^2``.

    One row per (sigma_eps, seed); seed ``k`` uses the same random streams
    for every sigma_eps.
    """
    spec = replace(spec, T=T)
    cells = [(spec, s, k, M, thin) for s in sigmas for k in range(seeds)]
    return _map(prop1_cell, cells, workers)


def verify_thm1(spec: SsmSpec = SsmSpec(sigma_eps=0.2), T: int = 100_000, seeds: int = 10,
                M: int = 100_000, thin: int = 5, beta=None, workers=None):
    """Out-of-sample linear residual correction versus the oracle alone.

    The lag coefficient is fitted on the first half of the residuals and
    evaluated on the second; ``gamma2_over_v`` is computed on the evaluation
    half, so ``slack = -V (beta_fit - beta_eval)^2``.
    """
    if spec.sigma_eps <= 0:
        raise InvalidInput("sigma_eps must be > 0")
    spec = replace(spec, T=T)
    cells = [(spec, k, M, thin, beta) for k in range(seeds)]
    return _map(thm1_cell, cells, workers)
