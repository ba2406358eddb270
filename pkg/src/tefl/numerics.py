"""Numerical kernels: seeded RNG, direct DFT, spectral flatness and AdamW.

All arithmetic is float64. Arrays are plain numpy ndarrays; the time axis of
spectral routines is always axis 0 so a (b, ...) block of residuals yields one
flatness value per trailing index.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .errors import InvalidInput

DEFAULT_FLOOR = 1e-12


def make_rng(seed) -> np.random.Generator:
    """Return a PCG64 generator seeded through numpy's SeedSequence.

    ``seed`` may be an int or a sequence of ints (e.g. ``[run_seed, cell]``),
    which gives independent, reproducible streams per cell. PCG64 output and
    numpy's Gaussian sampler are platform independent for a given seed.
    """
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))


@lru_cache(maxsize=32)
def _dft_basis(b: int) -> tuple[np.ndarray, np.ndarray]:
    k = np.arange(b)
    # reduce k*n mod b before scaling so large products keep full precision
    phase = 2.0 * np.pi * (np.outer(k, k) % b) / b
    cos, sin = np.cos(phase), np.sin(phase)
    cos.flags.writeable = False
    sin.flags.writeable = False
    return cos, sin


def _as_block(seq) -> np.ndarray:
    x = np.asarray(seq, dtype=np.float64)
    if x.ndim == 0 or x.shape[0] == 0:
        raise InvalidInput("empty sequence")
    if not np.all(np.isfinite(x)):
        raise InvalidInput("non-finite entries")
    return x


def _dft_parts(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    b = x.shape[0]
    cos, sin = _dft_basis(b)
    flat = x.reshape(b, -1)
    re = cos @ flat
    im = sin @ flat  # imaginary part up to sign; only squares are used
    return re.reshape(x.shape), im.reshape(x.shape)


def dft_power(seq) -> np.ndarray:
    """Power spectrum ``|sum_n x_n exp(-2 pi i k n / b)|**2`` along axis 0.

    Direct O(b^2) transform; inputs here never exceed a few hundred samples.
    """
    x = _as_block(seq)
    re, im = _dft_parts(x)
    return re * re + im * im


def _flatness_from_power(p: np.ndarray, floor: float):
    pc = np.maximum(p, floor)
    b = p.shape[0]
    log_gm = np.mean(np.log(pc), axis=0)
    am = np.mean(pc, axis=0)
    sf = np.exp(log_gm - np.log(am))
    return sf, pc, am, b


def spectral_flatness(seq, floor: float = DEFAULT_FLOOR):
    """Geometric-to-arithmetic mean ratio of the floored power spectrum.

    Works column-wise for a (b, ...) block and returns a float for 1-D input.
    The geometric mean is taken in the log domain.
    """
    x = _as_block(seq)
    if x.shape[0] < 2:
        raise InvalidInput("spectral flatness needs at least 2 samples")
    sf, *_ = _flatness_from_power(dft_power(x), floor)
    return float(sf) if np.ndim(sf) == 0 else sf


def spectral_flatness_grad(seq, floor: float = DEFAULT_FLOOR):
    """Return ``(sf, dsf/dseq)``; the gradient has the shape of ``seq``.

    Bins clamped at ``floor`` are constant in the clamped branch and pass no
    gradient.
    """
    x = _as_block(seq)
    if x.shape[0] < 2:
        raise InvalidInput("spectral flatness needs at least 2 samples")
    re, im = _dft_parts(x)
    p = re * re + im * im
    sf, pc, am, b = _flatness_from_power(p, floor)
    # d log(sf) / d P_k = 1/(b P_k) - 1/(b * am) on unclamped bins
    dlog = (1.0 / (b * pc) - 1.0 / (b * am)) * (p > floor)
    w = sf * dlog
    cos, sin = _dft_basis(b)
    shape = x.shape
    grad = 2.0 * (cos.T @ (w * re).reshape(b, -1) + sin.T @ (w * im).reshape(b, -1))
    grad = grad.reshape(shape)
    if np.ndim(sf) == 0:
        return float(sf), grad
    return sf, grad


@dataclass
class AdamWState:
    lr: float = 1e-3
    weight_decay: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step_count: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adamw_step(params: dict, grads: dict, state: AdamWState) -> tuple[dict, AdamWState]:
    """One AdamW update with decoupled weight decay and bias correction.

    Returns new parameter and state records; inputs are left untouched.
    Parameters absent from ``grads`` are carried over unchanged.
    """
    if state.step_count < 0:
        raise InvalidInput("negative step count")
    for name, g in grads.items():
        if name not in params:
            raise InvalidInput(f"gradient for unknown parameter {name!r}")
        if np.shape(g) != np.shape(params[name]):
            raise InvalidInput(f"shape mismatch for {name!r}: {np.shape(g)} vs {np.shape(params[name])}")
    t = state.step_count + 1
    b1, b2 = state.beta1, state.beta2
    corr1 = 1.0 - b1 ** t
    corr2 = 1.0 - b2 ** t
    new_params, new_m, new_v = dict(params), dict(state.m), dict(state.v)
    for name, g in grads.items():
        p = np.asarray(params[name], dtype=np.float64)
        m = new_m.get(name)
        v = new_v.get(name)
        if m is None:
            m = np.zeros_like(p)
            v = np.zeros_like(p)
        m = b1 * m + (1.0 - b1) * g
        v = b2 * v + (1.0 - b2) * (g * g)
        p = p * (1.0 - state.lr * state.weight_decay)
        p = p - state.lr * (m / corr1) / (np.sqrt(v / corr2) + state.eps)
        new_params[name], new_m[name], new_v[name] = p, m, v
    new_state = AdamWState(state.lr, state.weight_decay, b1, b2, state.eps, t, new_m, new_v)
    return new_params, new_state
