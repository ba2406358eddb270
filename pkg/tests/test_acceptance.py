"""Acceptance criteria, each run at its stated tolerance.

Every test records a one-line status (see the "acceptance criteria" section
of the pytest terminal summary). Criterion 7 is soft: its orderings are
reported but do not fail the build. Criterion 8 runs only when the ETTm1 CSV
is supplied through the ``TEFL_ETTM1_CSV`` environment variable.
"""
import os
import time
import warnings

import numpy as np
import pytest

from acceptance_report import record
from oracles import fft_power
from tefl.cli import run_cli
from tefl.config import TrainConfig
from tefl.datasets import load_csv
from tefl.evaluation import causality_audit, rolling_evaluate
from tefl.experiments import run_suite, summarize, tefl_vs_baseline
from tefl.feedback import ResidualPlan, make_adapter
from tefl.forecasters import make_forecaster
from tefl.numerics import dft_power, make_rng, spectral_flatness, spectral_flatness_grad
from tefl.theory import verify_prop1, verify_thm1
from tefl.training import run_training

TOL = 1e-5
INSTANCES = 50


def _fd_full(fn, arrays, h=1e-6):
    """Central-difference gradient of scalar ``fn`` w.r.t. every entry of each array."""
    out = []
    for arr in arrays:
        flat = arr.reshape(-1)
        g = np.empty_like(flat)
        for i in range(flat.size):
            old = flat[i]
            flat[i] = old + h
            fp = fn()
            flat[i] = old - h
            fm = fn()
            flat[i] = old
            g[i] = (fp - fm) / (2 * h)
        out.append(g.reshape(arr.shape))
    return out


def _rel(num, ana):
    num = np.concatenate([np.ravel(x) for x in num])
    ana = np.concatenate([np.ravel(x) for x in ana])
    return float(np.linalg.norm(num - ana) / max(np.linalg.norm(num), np.linalg.norm(ana), 1e-12))


def _model_instance(kind, seed):
    rng = make_rng([100, seed])
    m = make_forecaster(kind, 6, 4, 5, rng)
    X, G = rng.standard_normal((3, 6, 2)), rng.standard_normal((3, 4, 2))
    _, cache = m.forward(X)
    grads = m.backward(cache, G)
    names = list(m.params)
    num = _fd_full(lambda: float(np.sum(G * m.forward(X)[0])), [m.params[k] for k in names])
    return _rel(num, [grads[k] for k in names])


def _adapter_instance(kind, seed):
    rng = make_rng([200, seed])
    a = make_adapter(kind, 6, 3, rng)
    for k in a.params:
        a.params[k] = a.params[k] + 0.5 * rng.standard_normal(a.params[k].shape)
    E, Y, G = (rng.standard_normal((2, 6)) for _ in range(3))
    _, cache = a.forward(E, Y)
    grads, dE, dY = a.backward(cache, G)
    names = list(a.params)
    num = _fd_full(lambda: float(np.sum(G * a.forward(E, Y)[0])), [a.params[k] for k in names] + [E, Y])
    return _rel(num, [grads[k] for k in names] + [dE, dY])


def _sf_instance(seed):
    # log-power terms have curvature ~1/P_k, so a nearly empty bin makes the
    # h^2 truncation error of the difference quotient large; h=1e-7 keeps the
    # reference accurate (rounding error stays near 1e-9)
    x = make_rng([300, seed]).standard_normal(16)
    _, g = spectral_flatness_grad(x)
    return _rel(_fd_full(lambda: spectral_flatness(x), [x], h=1e-7), [g])


def test_criterion_1_gradient_suite():
    start = time.perf_counter()
    worst = {}
    for kind in ("linear", "mlp"):
        worst[kind] = max(_model_instance(kind, s) for s in range(INSTANCES))
    for kind in ("lowrank", "gate", "fuse"):
        worst[kind] = max(_adapter_instance(kind, s) for s in range(INSTANCES))
    worst["sf"] = max(_sf_instance(s) for s in range(INSTANCES))
    elapsed = time.perf_counter() - start
    ok = all(v < TOL for v in worst.values()) and elapsed < 60
    detail = ", ".join(f"{k} {v:.1e}" for k, v in worst.items()) + f"; {elapsed:.1f}s"
    assert record(1, "gradients vs central differences", ok, detail)


def test_criterion_2_flatness_properties():
    rng = make_rng(400)
    scale = euler = parseval = 0.0
    for _ in range(200):
        x = rng.standard_normal(int(rng.integers(8, 129)))
        sf = spectral_flatness(x)
        scale = max(scale, *(abs(spectral_flatness(c * x) - sf) for c in (-3.0, 0.5, 10.0)))
        _, g = spectral_flatness_grad(x)
        euler = max(euler, abs(float(np.dot(g, x))))
        p = dft_power(x)
        parseval = max(parseval, abs(p.sum() - x.size * np.dot(x, x)) / (x.size * np.dot(x, x)))
        assert np.allclose(p, fft_power(x), rtol=1e-9, atol=1e-9)
    wins = 0
    n = np.arange(256)
    for trial in range(100):
        r = make_rng([401, trial])
        k, phase = int(r.integers(1, 128)), r.uniform(0, 2 * np.pi)
        wins += spectral_flatness(np.sin(2 * np.pi * k * n / 256 + phase)) < \
            spectral_flatness(r.standard_normal(256))
    ok = scale < 1e-10 and euler < 1e-10 and parseval < 1e-10 and wins >= 99
    detail = f"scale {scale:.1e}, euler {euler:.1e}, parseval {parseval:.1e}, sinusoid<noise {wins}/100"
    assert record(2, "spectral flatness properties", ok, detail)


def test_criterion_3_causality():
    L, H = 12, 6
    rng = make_rng(500)
    series = rng.standard_normal((160, 2))
    failures, combos = [], 0
    for kind in ("linear", "mlp"):
        for akind in ("lowrank", "gate", "fuse", None):
            for sel in ("delayed", "onestep", "fixedtarget"):
                for norm in (False, True):
                    m = make_forecaster(kind, L, H, 8, rng)
                    a = make_adapter(akind, H, 3, rng) if akind else None
                    if a is not None:
                        for k in a.params:
                            a.params[k] = a.params[k] + 0.3 * rng.standard_normal(a.params[k].shape)
                    lo = L + H if a is not None else L
                    probes = np.concatenate([[lo], rng.integers(lo, 160 - H + 1, 99)])
                    combos += 1
                    for t in probes:
                        if not causality_audit(m, a, series, L, H, int(t), sel, norm):
                            failures.append((kind, akind, sel, norm, int(t)))
    h = np.arange(H)
    leaky = ResidualPlan(h - H + 1, H - 1 - h)  # reads the anchor row itself
    m = make_forecaster("linear", L, H, rng=rng)
    a = make_adapter("lowrank", H, 3, rng)
    a.params["W2"] = rng.standard_normal(a.params["W2"].shape)
    neg = causality_audit(m, a, series, L, H, 80, leaky)
    ok = not failures and not neg.passed and neg.first_index == 80
    detail = (f"{combos} combinations x 100 probes, {len(failures)} failures; "
              f"broken selector caught at index {neg.first_index}")
    assert record(3, "causality audit", ok, detail)


def test_criterion_4_oracle_residual_autocovariance():
    start = time.perf_counter()
    rows = verify_prop1(sigmas=(0.05, 0.1, 0.2), T=500_000, seeds=10, M=100_000)
    elapsed = time.perf_counter() - start
    by = {s: [r for r in rows if r["sigma_eps"] == s] for s in (0.05, 0.1, 0.2)}
    all_neg = all(r["gamma_hat"] < 0 for r in rows)
    n_neg = sum(r["gamma_hat"] < 0 for r in rows)
    mean05 = float(np.mean([r["ratio"] for r in by[0.05]]))
    med = {s: float(np.median([r["ratio"] for r in v])) for s, v in by.items()}
    band = 0.7 <= mean05 <= 1.3
    closer = abs(med[0.05] - 1) < abs(med[0.2] - 1)
    ok = all_neg and band and closer and elapsed <= 600
    detail = (f"gamma<0 in {n_neg}/{len(rows)} cells; mean ratio at 0.05 = {mean05:.3f}; "
              f"median ratios " + ", ".join(f"{s}: {v:.3f}" for s, v in med.items())
              + f"; {elapsed:.0f}s")
    assert record(4, "oracle residual lag-1 autocovariance", ok, detail)


def test_criterion_5_linear_correction_gain():
    rows = verify_thm1(T=100_000, seeds=10, M=100_000)
    improved = sum(r["mse_tefl"] < r["mse_base"] for r in rows)
    close = sum(abs(r["gain"] - r["gamma2_over_v"]) < 0.2 * r["gamma2_over_v"] for r in rows)
    ok = improved == 10 and close >= 8
    worst = max(abs(r["slack"]) / r["gamma2_over_v"] for r in rows)
    detail = (f"improved in {improved}/10 seeds; gain within 20% of gamma^2/V in {close}/10 "
              f"(worst relative slack {worst:.3f})")
    assert record(5, "out-of-sample residual correction gain", ok, detail)


def test_criterion_6_mechanism_efficacy():
    drift = tefl_vs_baseline(seeds=range(5), drift=True)
    flat = tefl_vs_baseline(seeds=range(5), drift=False)
    wins = sum(r["tefl_mae"] < r["baseline_mae"] for r in drift)
    med_d = float(np.median([r["improvement"] for r in drift]))
    med_f = float(np.median([r["improvement"] for r in flat]))
    ok = wins >= 4 and med_d > med_f
    detail = (f"TEFL wins {wins}/5 on drift; median MAE improvement drift {100 * med_d:.2f}% "
              f"vs no drift {100 * med_f:.2f}%")
    assert record(6, "TEFL vs baseline on drifting SSM panel", ok, detail)


def test_criterion_7_ablation_orderings():
    strat = summarize(run_suite("strategy"))
    sel = summarize(run_suite("selection"))
    checks = {f"TEFL<={v}": strat["TEFL"]["median"] <= strat[v]["median"]
              for v in ("Type1", "Type2", "NoSF")}
    checks.update({f"delayed<={v}": sel["delayed"]["median"] <= sel[v]["median"]
                   for v in ("onestep", "fixedtarget")})
    ok = all(checks.values())
    medians = ", ".join(f"{k} {v['median']:.4f}" for k, v in {**strat, **sel}.items())
    failed = [k for k, v in checks.items() if not v]
    detail = f"median test MAE: {medians}; violated: {failed or 'none'}"
    record(7, "ablation orderings (soft)", ok, detail, soft=True)
    if not ok:
        warnings.warn(f"soft criterion 7 orderings violated: {failed}", stacklevel=1)


ETT = os.environ.get("TEFL_ETTM1_CSV")


@pytest.mark.skipif(not ETT, reason="set TEFL_ETTM1_CSV to the ETTm1 CSV to run this check")
def test_criterion_8_ettm1_optional():
    table = load_csv(ETT)
    # standard ETT borders: 12/4/4 months of 15-minute rows
    n_tr, n_va = 12 * 30 * 24 * 4, 4 * 30 * 24 * 4
    n_te = n_va
    v = table.values
    mean, std = v[:n_tr].mean(0), v[:n_tr].std(0)
    z = (v - mean) / std
    train, val = z[:n_tr], z[n_tr - 96:n_tr + n_va]
    test, context = z[n_tr + n_va:n_tr + n_va + n_te], z[:n_tr + n_va]
    cfg = TrainConfig(L=96, H=96)
    maes = {}
    for strategy in ("Baseline", "TEFL"):
        res = run_training("linear", (train, val), cfg.replace(strategy=strategy))
        maes[strategy] = rolling_evaluate(res.model, res.adapter, test, context, 96, 96,
                                          keep_log=False).metrics.mae
    base_ok = abs(maes["Baseline"] / 0.372 - 1) <= 0.15
    gain = (maes["Baseline"] - maes["TEFL"]) / maes["Baseline"]
    ok = base_ok and gain >= 0.01
    detail = f"baseline MAE {maes['Baseline']:.4f} (target 0.372 +-15%), TEFL gain {100 * gain:.2f}%"
    assert record(8, "ETTm1 linear baseline and TEFL gain", ok, detail)


def test_criterion_9_determinism(tmp_path):
    data = tmp_path / "d.csv"
    assert run_cli(["synth", "--kind", "ssm", "--T", "800", "--seed", "3", "--out", str(data)]) == 0
    cfg = tmp_path / "c.txt"
    cfg.write_text("L = 16\nH = 8\nadapter_rank = 4\nwarmup_epochs = 2\njoint_epochs = 3\n"
                   "base_kind = mlp\nhidden = 16\nwindow_norm = on\n")
    outs = []
    for i in range(2):
        out = tmp_path / f"run{i}"
        assert run_cli(["train", "--config", str(cfg), "--data", str(data), "--out", str(out)]) == 0
        th = tmp_path / f"theory{i}.csv"
        assert run_cli(["theory", "--check", "thm1", "--T", "20000", "--seeds", "3", "--M",
                        "10000", "--out", str(th)]) == 0
        files = {p.name: p.read_bytes() for p in sorted(out.iterdir())}
        files["theory"] = th.read_bytes()
        files["theory_manifest"] = (tmp_path / f"theory{i}.csv.manifest.json").read_bytes()
        outs.append(files)
    same = outs[0] == outs[1]
    detail = f"{len(outs[0])} output files compared byte-for-byte across two invocations"
    assert record(9, "determinism of train/theory outputs", same, detail)
