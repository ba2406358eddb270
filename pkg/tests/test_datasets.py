import numpy as np
import pytest
from hypothesis import given, strategies as st

from tefl.datasets import (SplitSpec, SsmSpec, TimeSeriesTable, drift_profile, inject_drift,
                           inject_shocks, load_csv, make_phase1_batches, make_phase2_segments,
                           make_ssm_panel, phase2_blocks, shock_profile, simulate_ssm,
                           split_and_normalize, split_sizes, write_csv)
from tefl.errors import InvalidInput, IoError, NotEnoughData, ParseError


def _write(tmp_path, text):
    p = tmp_path / "d.csv"
    p.write_text(text)
    return p


def test_load_csv_drops_date(tmp_path):
    t = load_csv(_write(tmp_path, "date,a,b\n1,1.0,2.0\n2,3.0,4.0\n"))
    assert t.channel_names == ("a", "b")
    np.testing.assert_array_equal(t.values, [[1.0, 2.0], [3.0, 4.0]])


def test_load_csv_parse_error_position(tmp_path):
    with pytest.raises(ParseError) as exc:
        load_csv(_write(tmp_path, "a\nx\n"))
    assert (exc.value.row, exc.value.col) == (1, 0)


def test_load_csv_empty_and_missing(tmp_path):
    with pytest.raises(IoError, match="no rows"):
        load_csv(_write(tmp_path, "a,b\n"))
    with pytest.raises(IoError):
        load_csv(tmp_path / "missing.csv")


def test_csv_round_trip(tmp_path):
    vals = np.random.default_rng(0).standard_normal((20, 3))
    t = TimeSeriesTable(vals, ("x", "y", "z"))
    write_csv(t, tmp_path / "o.csv")
    back = load_csv(tmp_path / "o.csv")
    assert np.array_equal(back.values, vals) and back.channel_names == t.channel_names


def test_table_rejects_non_finite():
    with pytest.raises(InvalidInput):
        TimeSeriesTable(np.array([[1.0], [np.inf]]), ("a",))


def test_split_examples():
    assert split_sizes(100, SplitSpec()) == (70, 10, 20)
    v = np.array([0.0, 2.0] + [5.0] * 8)[:, None]
    spec = SplitSpec(0.2, 0.4, 0.4)
    tr, _, _, stats = split_and_normalize(TimeSeriesTable(v, ("a",)), spec)
    assert stats.mean[0] == 1.0 and stats.std[0] == 1.0
    np.testing.assert_array_equal(tr[:, 0], [-1.0, 1.0])
    const = TimeSeriesTable(np.full((10, 1), 3.0), ("c",))
    tr, va, te, stats = split_and_normalize(const)
    assert stats.std[0] == 1e-8 and np.all(np.concatenate([tr, va, te]) == 0)


@given(st.integers(20, 200), st.integers(1, 4), st.integers(0, 1000))
def test_split_properties(T, d, seed):
    vals = np.random.default_rng(seed).standard_normal((T, d)) * 3 + 1
    table = TimeSeriesTable(vals, tuple(f"c{i}" for i in range(d)))
    tr, va, te, stats = split_and_normalize(table)
    np.testing.assert_allclose(np.concatenate([tr, va, te]), stats.apply(vals), rtol=0, atol=0)
    assert np.all(np.abs(tr.mean(axis=0)) < 1e-10)
    assert np.all(np.abs(tr.std(axis=0) - 1) < 1e-10)


def test_phase1_batches_order_and_sizes():
    s = np.arange(10.0)[:, None]
    batches = make_phase1_batches(s, 2, 2, 3)
    assert [len(b[2]) for b in batches] == [3, 3, 1]
    anchors = np.concatenate([b[2] for b in batches])
    np.testing.assert_array_equal(anchors, np.arange(2, 9))
    for X, Y, a in batches:
        np.testing.assert_array_equal(X[:, :, 0], np.stack([s[t - 2:t, 0] for t in a]))
        np.testing.assert_array_equal(Y[:, :, 0], np.stack([s[t:t + 2, 0] for t in a]))
    with pytest.raises(NotEnoughData):
        make_phase1_batches(np.arange(3.0), 2, 2, 3)


def test_phase2_segment_layout():
    s = np.arange(8.0)
    segs = make_phase2_segments(s, 2, 2)
    seg = next(g for g in segs if g.t == 4)
    np.testing.assert_array_equal(seg.x_ctx[:, 0], [0, 1])
    np.testing.assert_array_equal(seg.y_hist[:, 0], [2, 3])
    np.testing.assert_array_equal(seg.x_in[:, 0], [2, 3])
    np.testing.assert_array_equal(seg.y_tgt[:, 0], [4, 5])
    blocks, anchors = phase2_blocks(np.arange(400.0), 96, 96)
    assert blocks.shape[1] == 288
    with pytest.raises(NotEnoughData):
        make_phase2_segments(np.arange(7.0), 4, 2)


@given(st.integers(1, 6), st.integers(1, 6), st.integers(0, 20))
def test_phase2_never_peeks(L, H, extra):
    T = L + 2 * H + extra
    s = np.arange(float(T))
    for seg in make_phase2_segments(s, L, H):
        idx = np.concatenate([seg.x_ctx, seg.y_hist, seg.x_in, seg.y_tgt]).ravel()
        assert idx.max() <= seg.t + H - 1 and idx.min() >= seg.t - H - L


def test_shock_examples():
    p = shock_profile(1000, n_shocks=1, duration=192)
    assert p[0] == 3.0 and p[96] == 1.5 and p[192] == 0.0
    with pytest.raises(InvalidInput):
        shock_profile(5, n_shocks=6)


@given(st.integers(50, 3000), st.integers(1, 30), st.integers(1, 200))
def test_shock_properties(T, n, dur):
    if n > T:
        return
    p = shock_profile(T, n, 3.0, dur)
    assert np.all(p >= 0)
    onsets = [(i * T) // n for i in range(n)]
    assert len(set(onsets)) == n
    for o in onsets:
        end = min(T, o + dur, *[x for x in onsets if x > o])
        assert np.all(np.diff(p[o:end]) <= 0)


def test_inject_shocks_all_channels():
    t = TimeSeriesTable(np.zeros((500, 2)), ("a", "b"))
    out = inject_shocks(t, n_shocks=2)
    np.testing.assert_array_equal(out.values[:, 0], out.values[:, 1])


def test_drift_examples():
    d = drift_profile(100)
    assert d[50] == 0.0 and d[75] == pytest.approx(1.0) and d[99] == pytest.approx(2 - 4 / 100)
    assert np.all(d[:51] == 0) and np.all(np.diff(d[50:]) > 0)
    t = inject_drift(TimeSeriesTable(np.zeros((100, 2)), ("a", "b")))
    np.testing.assert_array_equal(t.values[:, 1], d)


def test_ssm_examples():
    z = simulate_ssm(SsmSpec(sigma_eta=0, sigma_eps=0, T=100, seed=1))
    assert np.all(z.x == 0) and np.all(z.y == 0)
    a = simulate_ssm(SsmSpec(T=500, seed=4))
    b = simulate_ssm(SsmSpec(T=500, seed=4))
    assert np.array_equal(a.y, b.y) and np.array_equal(a.x, b.x)


def test_ssm_stationary_halves():
    run = simulate_ssm(SsmSpec(T=200_000, seed=3))
    v1, v2 = run.x[:100_000].var(), run.x[100_000:].var()
    assert abs(v1 / v2 - 1) < 0.05


def test_ssm_bounded_long_run():
    spec = SsmSpec(T=1_000_000, seed=8, sigma_eps=0)
    run = simulate_ssm(spec)
    # |x_t| <= a + |eta_t|, and a Gaussian draw beyond 7 sigma is vanishingly rare
    assert np.max(np.abs(run.x)) <= spec.a + 7 * spec.sigma_eta


def test_ssm_panel_channels_independent():
    t = make_ssm_panel(3, 300, seed=2)
    assert t.values.shape == (300, 3)
    assert not np.array_equal(t.values[:, 0], t.values[:, 1])
    assert np.array_equal(t.values, make_ssm_panel(3, 300, seed=2).values)
