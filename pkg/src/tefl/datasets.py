"""Series ingestion, splitting, windowing, perturbation and SSM simulation.

Series are ``(T, d)`` float64 arrays with rows in temporal order. Windowed
samples follow the anchor convention used throughout the package: the sample
anchored at ``t`` forecasts rows ``t .. t+H-1`` from rows ``t-L .. t-1``.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import InvalidInput, IoError, NotEnoughData, ParseError

STD_FLOOR = 1e-8


@dataclass(frozen=True)
class TimeSeriesTable:
    values: np.ndarray
    channel_names: tuple = ()
    origin: str = ""

    def __post_init__(self):
        v = np.array(self.values, dtype=np.float64)
        if v.ndim == 1:
            v = v[:, None]
        if v.ndim != 2 or v.shape[0] < 1 or v.shape[1] < 1:
            raise InvalidInput(f"table must be T x d with T, d >= 1, got shape {v.shape}")
        if not np.all(np.isfinite(v)):
            raise InvalidInput("table contains non-finite values")
        v.flags.writeable = False
        object.__setattr__(self, "values", v)
        names = tuple(self.channel_names) or tuple(f"c{i}" for i in range(v.shape[1]))
        if len(names) != v.shape[1]:
            raise InvalidInput("channel_names length does not match column count")
        object.__setattr__(self, "channel_names", names)

    @property
    def T(self) -> int:
        return self.values.shape[0]

    @property
    def d(self) -> int:
        return self.values.shape[1]

    def with_values(self, values, origin=None) -> "TimeSeriesTable":
        return TimeSeriesTable(values, self.channel_names, self.origin if origin is None else origin)


@dataclass(frozen=True)
class NormStats:
    mean: np.ndarray
    std: np.ndarray

    def apply(self, values):
        return (np.asarray(values, dtype=np.float64) - self.mean) / self.std


@dataclass(frozen=True)
class SplitSpec:
    train_frac: float = 0.7
    val_frac: float = 0.1
    test_frac: float = 0.2

    def __post_init__(self):
        fr = (self.train_frac, self.val_frac, self.test_frac)
        if any(not (0.0 < f < 1.0) for f in fr):
            raise InvalidInput(f"split fractions must lie in (0, 1): {fr}")
        if abs(sum(fr) - 1.0) > 1e-9:
            raise InvalidInput(f"split fractions must sum to 1: {fr}")


def load_csv(path) -> TimeSeriesTable:
    """Read a header + decimal-real CSV; a ``date`` column is dropped."""
    path = Path(path)
    if not path.is_file():
        raise IoError(f"no such file: {path}")
    try:
        with path.open(newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
    except (OSError, UnicodeDecodeError) as exc:
        raise IoError(f"cannot read {path}: {exc}") from exc
    rows = [r for r in rows if r and any(c.strip() for c in r)]
    if not rows:
        raise IoError("empty file")
    header = [h.strip() for h in rows[0]]
    keep = [i for i, h in enumerate(header) if h.lower() != "date"]
    if not keep:
        raise IoError("no data columns")
    data = rows[1:]
    if not data:
        raise IoError("no rows")
    values = np.empty((len(data), len(keep)))
    for r, row in enumerate(data, start=1):
        if len(row) != len(header):
            raise ParseError(r, len(row), f"expected {len(header)} cells, got {len(row)}")
        for j, c in enumerate(keep):
            try:
                x = float(row[c])
            except ValueError:
                raise ParseError(r, c, f"not a number: {row[c]!r}") from None
            if not math.isfinite(x):
                raise ParseError(r, c, f"non-finite value: {row[c]!r}")
            values[r - 1, j] = x
    return TimeSeriesTable(values, tuple(header[i] for i in keep), str(path))


def write_csv(table: TimeSeriesTable, path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(table.channel_names)
        for row in table.values:
            w.writerow([repr(float(x)) for x in row])


def split_sizes(T: int, spec: SplitSpec) -> tuple[int, int, int]:
    n_train = int(round(T * spec.train_frac))
    n_val = int(round(T * spec.val_frac))
    n_test = T - n_train - n_val
    return n_train, n_val, n_test


def split_and_normalize(table: TimeSeriesTable, spec: SplitSpec = SplitSpec()):
    """Contiguous train/val/test split with train-only z-scoring.

    Returns ``(train, val, test, stats)`` as arrays plus NormStats.
    """
    if table.T < 10:
        raise InvalidInput("need at least 10 rows to split")
    n_train, n_val, n_test = split_sizes(table.T, spec)
    if min(n_train, n_val, n_test) < 1:
        raise InvalidInput(f"degenerate split sizes {(n_train, n_val, n_test)}")
    train = table.values[:n_train]
    stats = NormStats(train.mean(axis=0), np.maximum(train.std(axis=0), STD_FLOOR))
    z = stats.apply(table.values)
    return z[:n_train], z[n_train:n_train + n_val], z[n_train + n_val:], stats


def _as_series(series) -> np.ndarray:
    s = np.asarray(series, dtype=np.float64)
    return s[:, None] if s.ndim == 1 else s


def phase1_anchors(T: int, L: int, H: int) -> np.ndarray:
    if T < L + H:
        raise NotEnoughData(f"need T >= L+H = {L + H}, got {T}")
    return np.arange(L, T - H + 1)


def windows(series, starts, length) -> np.ndarray:
    """Stack ``series[s:s+length]`` for each start into an (N, length, d) array."""
    s = _as_series(series)
    idx = np.asarray(starts)[:, None] + np.arange(length)[None, :]
    return s[idx]


def make_phase1_batches(series, L: int, H: int, batch_size: int):
    """Ordered, unshuffled ``(X, Y, anchors)`` batches for the warm-up phase."""
    s = _as_series(series)
    anchors = phase1_anchors(s.shape[0], L, H)
    out = []
    for i in range(0, len(anchors), batch_size):
        a = anchors[i:i + batch_size]
        out.append((windows(s, a - L, L), windows(s, a, H), a))
    return out


@dataclass(frozen=True)
class Phase2Segment:
    x_ctx: np.ndarray
    y_hist: np.ndarray
    x_in: np.ndarray
    y_tgt: np.ndarray
    t: int


def phase2_anchors(T: int, L: int, H: int, stride: int = 1) -> np.ndarray:
    if T < L + 2 * H:
        raise NotEnoughData(f"need T >= L+2H = {L + 2 * H}, got {T}")
    return np.arange(L + H, T - H + 1, stride)


def make_phase2_segments(series, L: int, H: int, stride: int = 1) -> list[Phase2Segment]:
    """Segments spanning ``t-H-L .. t+H-1`` split into ctx / hist / input / target."""
    s = _as_series(series)
    segs = []
    for t in phase2_anchors(s.shape[0], L, H, stride):
        t = int(t)
        segs.append(Phase2Segment(
            x_ctx=s[t - H - L:t - H], y_hist=s[t - H:t],
            x_in=s[t - L:t], y_tgt=s[t:t + H], t=t))
    return segs


def phase2_blocks(series, L: int, H: int, stride: int = 1):
    """Whole Phase-2 segments as one (N, L+2H, d) array plus anchors.

    The anchor sits at local index ``L+H`` of every block.
    """
    s = _as_series(series)
    anchors = phase2_anchors(s.shape[0], L, H, stride)
    return windows(s, anchors - H - L, L + 2 * H), anchors


def shock_profile(T: int, n_shocks: int = 30, amplitude: float = 3.0, duration: int = 192):
    """Additive shock perturbation of length T (same for every channel)."""
    if duration < 1:
        raise InvalidInput("duration must be >= 1")
    if n_shocks < 0 or n_shocks > T:
        raise InvalidInput(f"cannot place {n_shocks} shocks in {T} rows")
    prof = np.zeros(T)
    ramp = amplitude * (1.0 - np.arange(duration) / duration)
    for i in range(n_shocks):
        onset = (i * T) // n_shocks
        end = min(T, onset + duration)
        prof[onset:end] += ramp[:end - onset]
    return prof


def inject_shocks(table: TimeSeriesTable, n_shocks: int = 30, amplitude: float = 3.0,
                  duration: int = 192) -> TimeSeriesTable:
    prof = shock_profile(table.T, n_shocks, amplitude, duration)
    return table.with_values(table.values + prof[:, None], origin=f"{table.origin}+shocks")


def drift_profile(T: int) -> np.ndarray:
    t = np.arange(T, dtype=np.float64)
    return np.where(t > 0.5 * T, 4.0 * (t - 0.5 * T) / T, 0.0)


def inject_drift(table: TimeSeriesTable) -> TimeSeriesTable:
    return table.with_values(table.values + drift_profile(table.T)[:, None],
                             origin=f"{table.origin}+drift")


@dataclass(frozen=True)
class SsmSpec:
    """Scalar model ``x_t = a*tanh(x_{t-1}) + eta``, ``y_t = x_t + eps``."""
    a: float = 0.8
    sigma_eta: float = 0.5
    sigma_eps: float = 0.1
    T: int = 10_000
    burn_in: int = 1_000
    seed: object = 0
    x0: float = 0.0

    def __post_init__(self):
        if not abs(self.a) < 1:
            raise InvalidInput("|a| must be < 1")
        if self.sigma_eta < 0 or self.sigma_eps < 0:
            raise InvalidInput("noise scales must be non-negative")
        if self.T < 1 or self.burn_in < 0:
            raise InvalidInput("T must be >= 1 and burn_in >= 0")

    def f(self, x):
        return self.a * np.tanh(x)

    def fprime(self, x):
        c = np.cosh(x)
        return self.a / (c * c)


@dataclass(frozen=True)
class SsmRun:
    x: np.ndarray
    y: np.ndarray
    spec: SsmSpec = field(repr=False)


def run_chain(a: float, x0: float, shocks: np.ndarray) -> np.ndarray:
    """Iterate ``x <- a*tanh(x) + shock`` and return every visited state."""
    out = np.empty(len(shocks))
    x = float(x0)
    tanh = math.tanh
    for i, e in enumerate(shocks.tolist()):
        x = a * tanh(x) + e
        out[i] = x
    return out


def simulate_ssm(spec: SsmSpec) -> SsmRun:
    """Simulate the latent chain and its noisy observations.

    The chain starts at ``spec.x0``, runs ``burn_in`` discarded steps and then
    ``T`` kept steps. Transition and observation noises come from separate
    child streams of the seed.
    """
    ss = np.random.SeedSequence(spec.seed)
    rng_eta, rng_eps = (np.random.Generator(np.random.PCG64(s)) for s in ss.spawn(2))
    eta = spec.sigma_eta * rng_eta.standard_normal(spec.burn_in + spec.T)
    x = run_chain(spec.a, spec.x0, eta)[spec.burn_in:]
    y = x + spec.sigma_eps * rng_eps.standard_normal(spec.T)
    return SsmRun(x, y, spec)


def make_ssm_panel(n_channels: int = 3, T: int = 4000, a: float = 0.8, sigma_eta: float = 0.5,
                   sigma_eps: float = 0.5, seed: int = 0, burn_in: int = 500) -> TimeSeriesTable:
    """Independent SSM channels stacked into a table (one child seed per channel)."""
    cols = [simulate_ssm(SsmSpec(a, sigma_eta, sigma_eps, T, burn_in, seed=[seed, c])).y
            for c in range(n_channels)]
    return TimeSeriesTable(np.column_stack(cols), tuple(f"ssm{c}" for c in range(n_channels)),
                           f"ssm(a={a},sigma_eta={sigma_eta},sigma_eps={sigma_eps},seed={seed})")
