"""TEFL-CKPT v1 text checkpoints.

Layout (one record per line)::

    TEFL-CKPT v1
    model <kind> L=<L> H=<H> [hidden=<h>]
    adapter <kind> H=<H> r=<r>        | adapter none
    meta <key>=<value> ...            (selection, window_norm, split fractions)
    param <owner>.<name> <shape> <v1> <v2> ...

``<shape>`` is comma-separated (``-`` for a scalar); values are written with
``repr`` (shortest round-trip decimal), row-major, so loading is bit-exact.
Parameter lines come in the owning class's key order.
"""
from __future__ import annotations

from pathlib import Path

import numpy as np

from .errors import IoError, ParseError
from .feedback import ADAPTERS
from .forecasters import LinearForecaster, MlpForecaster

MAGIC = "TEFL-CKPT v1"


def _kv(tokens):
    out = {}
    for tok in tokens:
        k, _, v = tok.partition("=")
        out[k] = v
    return out


def _param_line(name, arr):
    arr = np.asarray(arr, dtype=np.float64)
    shape = ",".join(str(s) for s in arr.shape) or "-"
    return " ".join(["param", name, shape] + [repr(float(x)) for x in arr.ravel()])


def dumps(model, adapter=None, meta=None) -> str:
    lines = [MAGIC]
    lines.append(" ".join([f"model {model.kind}"] + [f"{k}={v}" for k, v in model.dims.items()]))
    if adapter is None:
        lines.append("adapter none")
    else:
        lines.append(" ".join([f"adapter {adapter.kind}"] + [f"{k}={v}" for k, v in adapter.dims.items()]))
    lines.append(" ".join(["meta"] + [f"{k}={v}" for k, v in (meta or {}).items()]))
    for name, arr in model.params.items():
        lines.append(_param_line(f"model.{name}", arr))
    if adapter is not None:
        for name, arr in adapter.params.items():
            lines.append(_param_line(f"adapter.{name}", arr))
    return "\n".join(lines) + "\n"


def save(path, model, adapter=None, meta=None) -> None:
    Path(path).write_text(dumps(model, adapter, meta), encoding="utf-8")


def loads(text: str):
    """Return ``(model, adapter_or_None, meta_dict)``."""
    lines = text.splitlines()
    if not lines or lines[0].strip() != MAGIC:
        raise ParseError(1, 0, "missing TEFL-CKPT v1 magic")
    try:
        mtok = lines[1].split()
        atok = lines[2].split()
        meta = _kv(lines[3].split()[1:])
        if mtok[0] != "model" or atok[0] != "adapter" or not lines[3].startswith("meta"):
            raise ValueError("bad header")
        params = {}
        for i, line in enumerate(lines[4:], start=5):
            tok = line.split()
            if not tok:
                continue
            if tok[0] != "param":
                raise ParseError(i, 0, "expected a param line")
            shape = () if tok[2] == "-" else tuple(int(s) for s in tok[2].split(","))
            vals = np.array([float(x) for x in tok[3:]], dtype=np.float64)
            if vals.size != int(np.prod(shape)):
                raise ParseError(i, 2, "value count does not match shape")
            params[tok[1]] = vals.reshape(shape)
        mkind, mdims = mtok[1], {k: int(v) for k, v in _kv(mtok[2:]).items()}
        mparams = {k[6:]: v for k, v in params.items() if k.startswith("model.")}
        if mkind == "linear":
            model = LinearForecaster(mdims["L"], mdims["H"], mparams)
        elif mkind == "mlp":
            model = MlpForecaster(mdims["L"], mdims["H"], mdims["hidden"], mparams)
        else:
            raise ValueError(f"unknown model kind {mkind!r}")
        adapter = None
        if atok[1] != "none":
            adims = {k: int(v) for k, v in _kv(atok[2:]).items()}
            aparams = {k[8:]: v for k, v in params.items() if k.startswith("adapter.")}
            adapter = ADAPTERS[atok[1]](adims["H"], adims["r"], aparams)
    except ParseError:
        raise
    except (IndexError, KeyError, ValueError) as exc:
        raise ParseError(0, 0, f"malformed checkpoint: {exc}") from None
    return model, adapter, meta


def load(path):
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise IoError(f"cannot read checkpoint {path}: {exc}") from None
    return loads(text)
