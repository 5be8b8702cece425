import math

import numpy as np
import pytest

from paest.matcore import DimensionError
from paest.sigproc import (FilterError, HeldNoise, NoiseSpec, RangeError, RationalFilter, SignalTrace,
                           TimeGrid, band_limited_noise, correlation_decay, cross_correlation,
                           empirical_autocovariance, filter_apply, pe_bounds, rk4_lti_matrices, rk4_step,
                           sliding_window_means)
from oracles import first_order_lowpass_sine, first_order_lowpass_step


def test_rk4_is_fourth_order():
    # x' = -x, x(0) = 1 over [0, 1]
    errs = []
    for h in (0.1, 0.05):
        x = 1.0
        for k in range(int(round(1 / h))):
            x = rk4_step(lambda t, v: -v, k * h, x, h)
        errs.append(abs(x - math.exp(-1)))
    assert 14 < errs[0] / errs[1] < 18


def test_rk4_lti_matrices_match_generic_step():
    rng = np.random.default_rng(1)
    A = rng.standard_normal((3, 3))
    B = rng.standard_normal((3, 2))
    h = 0.07
    P, Q0, Qm, Q1 = rk4_lti_matrices(A, B, h)
    x = rng.standard_normal(3)
    u = lambda t: np.array([math.sin(3 * t), math.cos(t)])
    ref = rk4_step(lambda t, v: A @ v + B @ u(t), 0.2, x, h)
    got = P @ x + Q0 @ u(0.2) + Qm @ u(0.2 + h / 2) + Q1 @ u(0.2 + h)
    assert np.allclose(got, ref, atol=1e-14)


def test_time_grid():
    g = TimeGrid.from_horizon(0.0, 0.01, 1.0)
    assert g.n_steps == 101
    assert g.t_end == pytest.approx(1.0)
    assert g.index(0.5) == 50
    with pytest.raises(RangeError):
        g.index(0.505)
    with pytest.raises(RangeError):
        g.index(2.0)
    with pytest.raises(ValueError):
        TimeGrid(0.0, 0.0, 10)


def test_signal_trace_csv_roundtrip(tmp_path):
    g = TimeGrid(0.0, 0.1, 5)
    tr = SignalTrace(g, np.column_stack([np.arange(5) / 3.0, np.ones(5)]))
    tr.to_csv(tmp_path / "a.csv")
    back = SignalTrace.from_csv(tmp_path / "a.csv")
    assert np.array_equal(back.samples, tr.samples)
    assert back.grid.n_steps == 5
    assert not tr.samples.flags.writeable
    with pytest.raises(DimensionError):
        SignalTrace(g, np.ones(4))
    with pytest.raises(ValueError):
        SignalTrace(g, np.full(5, np.inf))


def test_filter_rejects_unstable_and_nonminimum_phase():
    with pytest.raises(FilterError):
        RationalFilter([1], [1, -1])
    with pytest.raises(FilterError):
        RationalFilter([1, -2], [1, 3])
    with pytest.raises(FilterError):
        RationalFilter([1, 0, 0], [1, 1])
    f = RationalFilter([1, 0], [1, 1])
    assert f.axis_zeros.size == 1


def test_filter_step_and_sine_response():
    k = 0.5
    g = TimeGrid.from_horizon(0.0, 1e-3, 10.0)
    f = RationalFilter([1], [k, 1])
    y = filter_apply(f, SignalTrace(g, np.ones(g.n_steps))).samples[:, 0]
    assert np.abs(y - first_order_lowpass_step(k, g.times)).max() < 1e-12
    # midpoint input is the grid average, so a sine carries an O(h^2) input error
    y = filter_apply(f, SignalTrace.from_function(g, lambda t: np.sin(2 * t))).samples[:, 0]
    assert np.abs(y - first_order_lowpass_sine(k, 2.0, g.times)).max() < 1e-6


def test_filter_step_method_matches_apply():
    f = RationalFilter([1, 2], [1, 3, 2])
    g = TimeGrid(0.0, 0.01, 200)
    u = np.sin(g.times)
    ref = filter_apply(f, SignalTrace(g, u)).samples[:, 0]
    ys = [f.output(u[0])]
    for k in range(g.n_steps - 1):
        ys.append(f.step(u[k], u[k + 1], g.h))
    assert np.allclose(ys, ref, atol=1e-14)
    assert f.response(0.0) == pytest.approx(1.0)


def test_held_noise_is_seeded_and_held():
    spec = NoiseSpec(0.1, 0.01, 23341)
    a = HeldNoise.generate(spec, 0.0, 5.0)
    b = HeldNoise.generate(spec, 0.0, 5.0)
    assert np.array_equal(a.values, b.values)
    assert a(0.0) == a(0.0099) == a.values[0]
    assert a(0.01) == a.values[1]
    assert np.array_equal(a(np.array([0.0, 0.01])), a.values[:2])
    g = TimeGrid.from_horizon(0.0, 0.01, 1000.0)
    v = band_limited_noise(spec, g).samples[:, 0]
    assert np.var(v) == pytest.approx(spec.power / spec.sample_time, rel=0.05)
    c = HeldNoise.generate(NoiseSpec(0.1, 0.01, 1), 0.0, 5.0)
    assert not np.array_equal(a.values, c.values)
    with pytest.raises(ValueError):
        NoiseSpec(-1.0, 0.01, 0)


def test_autocovariance_and_cross_correlation_of_harmonics():
    g = TimeGrid.from_horizon(0.0, 1e-3, 200.0)
    x = SignalTrace.from_function(g, lambda t: np.vstack([np.cos(t), np.sin(t)]))
    lam = empirical_autocovariance(x, 200.0, 100.0)
    assert np.allclose(lam, 0.5 * np.eye(2), atol=5e-3)
    s = SignalTrace.from_function(g, lambda t: np.sin(3 * t))
    c = cross_correlation(s, s, 200.0, 100.0)
    assert c[0, 0] == pytest.approx(0.5, rel=5e-3)
    with pytest.raises(DimensionError):
        cross_correlation(s, SignalTrace(TimeGrid(0.0, 0.1, 3), np.zeros(3)), 0.1, 0.1)


def test_correlation_decay_separates_dependent_from_independent():
    g = TimeGrid.from_horizon(0.0, 0.01, 400.0)
    a = SignalTrace.from_function(g, lambda t: np.sin(t))
    b = SignalTrace.from_function(g, lambda t: np.sin(5 * t))
    c1, c4 = correlation_decay(a, b, 20.0, 4)
    assert c4 < 0.3 * c1
    d1, d4 = correlation_decay(a, a, 20.0, 4)
    assert d4 == pytest.approx(d1, rel=0.05)


def test_pe_bounds():
    g = TimeGrid.from_horizon(0.0, 0.01, 100.0)
    x = SignalTrace.from_function(g, lambda t: np.vstack([np.cos(t), np.sin(t)]))
    lo, hi = pe_bounds(x, 2 * np.pi)
    # 628 steps of 0.01 fall just short of a full period
    assert lo == pytest.approx(0.5, rel=2e-3) and hi == pytest.approx(0.5, rel=2e-3)
    y = SignalTrace.from_function(g, lambda t: np.vstack([np.cos(t), 2 * np.cos(t)]))
    assert pe_bounds(y, 10.0)[0] < 1e-12
    with pytest.raises(RangeError):
        pe_bounds(x, 60.0)


def test_sliding_window_means_match_direct():
    g = TimeGrid.from_horizon(0.0, 0.05, 20.0)
    x = SignalTrace.from_function(g, lambda t: np.vstack([np.cos(t), t / 20]))
    m = sliding_window_means(x, 5.0)
    direct = empirical_autocovariance(x, 15.0, 5.0)
    assert np.allclose(m[200], direct, atol=1e-13)
