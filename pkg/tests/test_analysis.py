import csv
import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ahvortex import analysis
from ahvortex.analysis import (
    BounceSummary,
    PairSetup,
    SeparationSeries,
    count_bounces,
    decay_fit,
    measured_period,
    mode_amplitude_series,
    pinned_pair_series,
    run_scan,
    separation_series,
    velocity_rescale_check,
)
from ahvortex.evolution import RunRecord


def _series(t, d, collision=None):
    t = np.asarray(t, float)
    d = np.asarray(d, float)
    col = np.zeros(t.size, bool) if collision is None else np.asarray(collision, bool)
    return SeparationSeries(t, d, col, np.zeros(t.size, bool))


def _bounce_curve(n_bounces, escape=True, v=0.1, d0=20.0, dmin=0.5, gap=30.0):
    """Piecewise-linear d(t): approach at 2v, n close minima, then escape at 2v or stay bound."""
    pts_t, pts_d = [0.0], [d0]
    t = (d0 - dmin) / (2 * v)
    for k in range(n_bounces):
        pts_t.append(t)
        pts_d.append(dmin)
        if k < n_bounces - 1:
            pts_t.append(t + gap / 2)
            pts_d.append(6.0)
            t += gap
    if escape:
        pts_t.append(t + (d0 + 5.0 - dmin) / (2 * v))
        pts_d.append(d0 + 5.0)
    else:
        pts_t += [t + gap / 2, t + gap]
        pts_d += [6.0, 3.0]
    tt = np.arange(0.0, pts_t[-1], 0.5)
    return _series(tt, np.interp(tt, pts_t, pts_d))


def _record(t, tracked):
    rec = RunRecord()
    for ti, tr in zip(t, tracked):
        rec.times.append(ti)
        rec.tracked.append(tr)
        rec.collision.append(False)
    return rec


def test_separation_series_interpolates():
    t = np.arange(10.0)
    tr = [np.array([[-x, 0.0], [x, 0.0]]) for x in 10 - t]
    tr[4] = None
    s = separation_series(_record(t, tr))
    assert s.interpolated[4] and s.interpolated.sum() == 1
    np.testing.assert_allclose(s.d, 2 * (10 - t))


def test_separation_series_rejects_untracked():
    t = np.arange(10.0)
    tr = [None] * 5 + [np.zeros((2, 2))] * 5
    with pytest.raises(ValueError):
        separation_series(_record(t, tr))


@pytest.mark.parametrize("n", [1, 2, 4])
def test_count_bounces_synthetic(n):
    s = count_bounces(_bounce_curve(n))
    assert s.n_bounces == n and s.escape and not s.truncated
    assert s.v_out == pytest.approx(0.1, rel=1e-6)
    assert s.escape_label == "true"


def test_count_bounces_bound_state():
    s = count_bounces(_bounce_curve(3, escape=False))
    assert s.n_bounces == 3 and not s.escape and s.v_out is None


def test_count_bounces_zero_without_approach():
    t = np.linspace(0, 100, 201)
    s = count_bounces(_series(t, 20 + 0.05 * t))
    assert s.n_bounces == 0 and s.escape


def test_count_bounces_truncated():
    t = np.linspace(0, 100, 201)
    d = 20 - 0.195 * t
    s = count_bounces(_series(t, d))
    assert s.truncated and s.n_bounces == 1 and s.escape_label == "truncated"


def test_count_bounces_collision_group():
    t = np.linspace(0, 200, 401)
    d = np.abs(20 - 0.2 * t) + 1e-3
    col = d < 0.05
    d[col] = 0.0
    s = count_bounces(_series(t, d, col))
    assert s.n_bounces == 1 and s.escape


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 5), st.floats(0.5, 1.5), st.floats(1.6, 5.5))
def test_bounces_monotone_in_d_close(n, lo, hi):
    s = _bounce_curve(n, dmin=0.3)
    assert count_bounces(s, d_close=lo).n_bounces <= count_bounces(s, d_close=hi).n_bounces


def test_measured_period_and_envelope():
    w = 0.88
    t = np.arange(0.0, 100.0, 0.05)
    A = 0.1 * np.exp(-0.01 * t)
    V = np.pi + A * np.sin(w * t) ** 2
    assert measured_period(t, V, 0.8) == pytest.approx(2 * np.pi / w, rel=1e-2)
    c, env = mode_amplitude_series((t, V), w)
    # first window: peak of sin^2 at pi / 2w, minimum 0 at t = 0
    np.testing.assert_allclose(env[0], 0.1 * np.exp(-0.01 * np.pi / (2 * w)), rtol=1e-3)
    fit = decay_fit(c, env)
    assert fit.slope == pytest.approx(-0.01, rel=5e-2) and fit.r2 > 0.99
    _, env2 = mode_amplitude_series((t, 2 * V), w, n_vortices=2)
    np.testing.assert_allclose(env2, env)


def test_envelope_errors():
    t = np.arange(0.0, 3.0, 0.05)
    with pytest.raises(ValueError):
        mode_amplitude_series((t, np.sin(t)), 0.88)
    t = np.arange(0.0, 100.0, 5.0)
    with pytest.raises(ValueError):
        mode_amplitude_series((t, np.sin(t)), 0.88)


def test_decay_fit_exact_exponential():
    t = np.linspace(0, 200, 300)
    f = decay_fit(t, 0.3 * np.exp(-0.004 * t), (20, 200))
    assert abs(f.slope + 0.004) < 1e-6 and abs(f.intercept - np.log(0.3)) < 1e-6
    assert f.r2 > 1 - 1e-9
    with pytest.raises(ValueError):
        decay_fit(t, -np.ones_like(t))


def test_velocity_rescale_check():
    t = np.linspace(0, 100, 501)
    runs = [(v, _series(t, 20 - 2 * v * t)) for v in (0.1, 0.2, 0.3)]
    assert velocity_rescale_check(runs) < 1e-12
    assert velocity_rescale_check(runs[:1]) == 0.0
    with pytest.raises(ValueError):
        velocity_rescale_check([(0.01, _series(t, 20 - 0.02 * t)), runs[0]])


def _fake_run_pair(setup, v, sigma0=0.0, delta_sigma=0.0):
    if sigma0 > 3.0:
        raise RuntimeError("boom")
    return None, None, BounceSummary(1 + int(v > 0.05), True, 1.5 * v, np.array([50.0]))


def test_scan_writes_rows_and_records_errors(tmp_path, monkeypatch):
    monkeypatch.setattr(analysis, "run_pair", _fake_run_pair)
    out = tmp_path / "scan.csv"
    res = run_scan([0.04, 0.08], [0.0, np.pi], PairSetup(), out, workers=1)
    assert res.table().tolist() == [[1, -1], [2, -1]]
    rows = list(csv.DictReader(open(out)))
    assert [r["status"] for r in rows] == ["ok", "error: RuntimeError: boom"] * 2
    assert rows[1]["escape"] == "error"
    meta = json.loads(out.with_suffix(".json").read_text())
    assert meta["v_list"] == [0.04, 0.08] and "code_version" in meta


def test_scan_resume_skips_completed(tmp_path, monkeypatch):
    monkeypatch.setattr(analysis, "run_pair", _fake_run_pair)
    out = tmp_path / "scan.csv"
    run_scan([0.04], [0.0, 1.0], PairSetup(), out, workers=1)
    calls = []

    def counting(setup, v, sigma0=0.0, delta_sigma=0.0):
        calls.append((v, sigma0))
        return _fake_run_pair(setup, v, sigma0)

    monkeypatch.setattr(analysis, "run_pair", counting)
    res = run_scan([0.04, 0.08], [0.0, 1.0], PairSetup(), out, workers=1)
    assert sorted(calls) == [(0.08, 0.0), (0.08, 1.0)]
    assert all(p.status == "ok" for p in res.points)
    rows = list(csv.DictReader(open(out)))
    assert [float(r["v_in"]) for r in rows] == [0.04, 0.04, 0.08, 0.08]


def test_scan_rejects_empty_lists():
    with pytest.raises(ValueError):
        run_scan([], [0.0], PairSetup())


def test_pair_setup_properties():
    s = PairSetup()
    assert s.escape_radius == pytest.approx(2 * s.half_separation)
    assert s.excitation_value == s.epsilon
    assert PairSetup(method="derrick", mu=0.93).excitation_value == 0.93


def test_pinned_pair_derrick_series(profile1):
    t, e = pinned_pair_series(profile1, d=8.0, mu=0.93, periods=1.0)
    assert t[-1] == pytest.approx(2 * np.pi / 0.8817, abs=0.05)
    assert e.max() > 0 > e.min()
    assert np.mean(e) < 0


@pytest.mark.acceptance
def test_slow_excited_pair_recollides():
    # excited pair released almost at rest: attraction should bring the cores
    # together and back at least twice before t = 450
    st = PairSetup(n=181, h=0.2, epsilon=0.9, t_max=450.0)
    _, series, s = analysis.run_pair(st, 0.01, 2.2612)
    print(f"close approaches {s.n_bounces} at t = {s.times_of_closest_approach}, min separation {series.d.min():.2f}")
    assert s.n_bounces >= 2
