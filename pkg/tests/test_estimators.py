import numpy as np
import pytest

from paest.estimators import (AnnihilatorSet, AssumptionError, DivergenceError, EstimatorState,
                              build_he, check_scheme1_rank, law_a_step, law_b_step, law_c_step,
                              run_estimator, scheme1_transform, scheme2_transform)
from paest.harness.scenarios import Harmonic, first_order_plant
from paest.matcore import DimensionError, adjugate, determinant, numeric_rank
from paest.regext import ConfigurationError, LreStream, extend_regressor, extension_matrix, perturbation_split, window_extension
from paest.sigproc import RationalFilter, SignalTrace, TimeGrid
from oracles import exact_adjugate, exact_det


def example2_stream(horizon=200.0, h=0.01):
    g = TimeGrid.from_horizon(0.0, h, horizon)
    sc = first_order_plant(-1.0, 1.0, 1.0, Harmonic((1, 1), (1, 2)), Harmonic((0.5,), (3,)),
                           Harmonic((0.3,), (5,)))
    return sc.simulate(g)


def test_annihilator_invariant_and_validation():
    ann = AnnihilatorSet.from_selection(2, [1], H=[1, 1])
    assert np.array_equal(ann.L1, [[0.0], [1.0]]) and np.array_equal(ann.L2, [[1.0], [0.0]])
    assert np.allclose(ann.L1 @ ann.L1.T + ann.L2 @ ann.L2.T, np.eye(2))
    assert ann.L1e.shape == (4, 2) and ann.L2e.shape == (4, 2)
    with pytest.raises(ValueError):
        AnnihilatorSet(np.array([[1.0], [1.0]]), np.array([[1.0], [0.0]]))
    with pytest.raises(DimensionError):
        AnnihilatorSet.from_selection(2, [1], H=[1, 1, 1])
    with pytest.raises(ValueError):
        AnnihilatorSet.from_selection(2, [1], He=np.vstack([np.eye(2), np.zeros((2, 2))]))


def test_build_he():
    He = build_he(2, 1)
    assert np.array_equal(He, np.vstack([np.eye(2), np.eye(2)]))
    assert np.array_equal(He.T @ extension_matrix(2), np.zeros((2, 2)))
    He4 = build_he(4, 2)
    assert He4.shape == (8, 4) and numeric_rank(He4) == 4
    assert np.abs(He4.T @ extension_matrix(4)).max() == 0.0
    assert build_he(3, 3).shape == (6, 0)
    with pytest.raises(ConfigurationError):
        build_he(3, 1)


def test_scheme1_identity_phi_hand_case():
    ann = AnnihilatorSet.from_selection(2, [1], H=[1, 1])
    Y = np.array([0.3, -0.7])
    ups, M2, N, M1 = scheme1_transform(Y, np.eye(2), ann)
    assert M2 == 1.0
    assert np.allclose(N, ann.L2 @ ann.H.T @ Y)
    assert np.allclose(ups, Y - N)
    with pytest.raises(ConfigurationError):
        scheme1_transform(Y, np.eye(2), AnnihilatorSet.from_selection(2, [1]))


def test_scheme1_perturbation_free_identity():
    rng = np.random.default_rng(3)
    ann = AnnihilatorSet.from_selection(3, [2], H=np.array([[1.0, 0.0], [1.0, 2.0], [0.0, 1.0]]))
    theta = np.array([1.0, -1.0, 2.0])
    assert np.allclose(ann.H.T @ theta, 0.0)
    B = rng.standard_normal((3, 3))
    Phi = B @ B.T
    ups, M2, _, _ = scheme1_transform(Phi @ theta, Phi, ann)
    assert np.allclose(ups, M2 * Phi @ theta, atol=1e-12)


def test_scheme1_mixing_oracle_on_example2():
    lre = example2_stream(120.0)
    ann = AnnihilatorSet.from_selection(2, [1], H=[1, 1])
    T = 40.0
    Y, Phi = window_extension(lre, T)
    for t in (60.0, 90.0, 120.0):
        k = lre.grid.index(t)
        ups, M2, N, M1 = scheme1_transform(Y[k], Phi[k], ann)
        W1, _ = perturbation_split(lre, ann, t, T)
        lhs = ups - M2 * Phi[k] @ lre.theta
        rhs = (M2 * np.eye(2) - M1) @ W1
        assert np.abs(lhs - rhs).max() <= 1e-6 * max(1.0, abs(M2))


def test_m2_rules_differ_for_single_dependent_direction():
    ann = AnnihilatorSet.from_selection(2, [1], H=[1, 1])
    Phi = np.array([[2.0, 0.5], [0.5, 1.0]])
    _, m_det, _, _ = scheme1_transform(np.zeros(2), Phi, ann, "det")
    _, m_adj, _, _ = scheme1_transform(np.zeros(2), Phi, ann, "det_adj")
    S = ann.H.T @ exact_adjugate(Phi) @ ann.L2
    assert m_det == pytest.approx(exact_det(S))
    assert m_adj == 1.0


def test_scheme2_degenerate_and_oracle():
    ann = AnnihilatorSet.from_selection(2, [0, 1], He=build_he(2, 2))
    Y = np.arange(4.0)
    ups, M2 = scheme2_transform(Y, np.eye(4), ann)
    assert M2 == 1.0 and np.array_equal(ups, Y)
    rng = np.random.default_rng(5)
    B = rng.standard_normal((4, 4))
    Phi = B @ B.T
    ann = AnnihilatorSet.from_selection(2, [1], He=build_he(2, 1))
    ups, M2 = scheme2_transform(Y, Phi, ann)
    S = ann.He.T @ exact_adjugate(Phi) @ ann.L2e
    assert M2 == pytest.approx(exact_det(S), rel=1e-9)
    assert M2 != 0.0
    Dth = extension_matrix(2) @ np.array([0.4, -1.3])
    ups, M2 = scheme2_transform(Phi @ Dth, Phi, ann)
    assert np.allclose(ups, M2 * Phi @ Dth, atol=1e-12 * abs(M2) + 1e-15)


def test_fixed_points():
    theta = np.array([0.5, -1.5])
    Phi = np.array([[1.0, 0.2], [0.2, 0.5]])
    est = EstimatorState(theta, 10.0)
    law_a_step(est, Phi @ theta, Phi, 0.01)
    assert np.array_equal(est.theta, theta)
    ann = AnnihilatorSet.from_selection(2, [1], H=[1, 1])
    est = EstimatorState(theta, 10.0, "B", ann)
    law_b_step(est, 0.7 * Phi @ theta, 0.7, Phi, 0.01)
    assert np.allclose(est.theta, theta, atol=1e-15)
    annc = AnnihilatorSet.from_selection(2, [1], He=build_he(2, 1))
    rng = np.random.default_rng(2)
    B = rng.standard_normal((4, 4))
    P4 = B @ B.T
    Dth = extension_matrix(2) @ theta
    est = EstimatorState(theta, 10.0, "C", annc)
    law_c_step(est, 0.3 * P4 @ Dth, 0.3, P4, 0.01)
    assert np.allclose(est.theta, theta, atol=1e-14)
    est = EstimatorState(theta, 10.0, "C", annc, unconstrained=True)
    law_c_step(est, 0.3 * P4 @ Dth, 0.3, P4, 0.01)
    assert np.allclose(est.theta_ext, Dth, atol=1e-14)


def test_law_a_scaling_and_decoupling():
    theta = np.array([1.0, 2.0, -1.0])
    Phi = np.array([[2.0, 0.3, 0.1], [0.3, 1.0, 0.2], [0.1, 0.2, 0.5]])
    Y = Phi @ theta
    th0 = np.zeros(3)
    a = EstimatorState(th0, 1.0)
    law_a_step(a, Y, Phi, 1e-7)
    c = 3.0
    b = EstimatorState(th0, 1.0)
    law_a_step(b, c * Y, c * Phi, 1e-7)
    # small step: update scales like c^n at leading order
    assert np.allclose(b.theta - th0, c ** 3 * (a.theta - th0), rtol=1e-5)
    # each error component decays monotonically since adj(Phi) Phi = det(Phi) I
    est = EstimatorState(th0, 1.0)
    prev = np.abs(est.theta - theta)
    for _ in range(50):
        law_a_step(est, Y, Phi, 0.05)
        cur = np.abs(est.theta - theta)
        assert np.all(cur <= prev + 1e-15)
        prev = cur
    assert determinant(Phi) > 0


def test_divergence_guard():
    est = EstimatorState([1e7, 0.0], 1.0)
    with pytest.raises(DivergenceError):
        est.guard()
    est = EstimatorState([np.nan, 0.0], 1.0)
    with pytest.raises(DivergenceError):
        est.guard()


def test_estimator_state_validation():
    with pytest.raises(ValueError):
        EstimatorState([0.0], 0.0)
    with pytest.raises(ValueError):
        EstimatorState([0.0], 1.0, law="Z")
    with pytest.raises(ConfigurationError):
        EstimatorState([0.0, 0.0], 1.0, law="B")
    with pytest.raises(DimensionError):
        law_a_step(EstimatorState([0.0, 0.0], 1.0), np.zeros(3), np.eye(3), 0.1)


def test_noise_free_law_a_converges():
    g = TimeGrid.from_horizon(0.0, 0.01, 60.0)
    sc = first_order_plant(-1.0, 2.0, 1.0, Harmonic((1, 1), (1, 2)), Harmonic(), Harmonic())
    run = run_estimator(sc.simulate(g), "A", 1000.0, 10.0)
    assert np.abs(run.theta_err[-1]).max() < 1e-4
    assert run.theta_hat.shape == (g.n_steps, 2)


def test_rank_failure_rejects_scenario():
    g = TimeGrid.from_horizon(0.0, 0.01, 50.0)
    # constant regressor: the window autocovariance is rank one
    phi = SignalTrace(g, np.ones((g.n_steps, 2)))
    lre = LreStream(phi, SignalTrace(g, phi.samples @ np.array([1.0, -1.0])), np.array([1.0, -1.0]))
    ann = AnnihilatorSet.from_selection(2, [1], H=[1, 1])
    ok, r = check_scheme1_rank(np.ones((2, 2)), ann)
    assert not ok and r == 0
    with pytest.raises(AssumptionError):
        run_estimator(lre, "B", 10.0, 10.0, ann)


def test_divergence_recorded_with_partial_trace():
    g = TimeGrid.from_horizon(0.0, 0.1, 50.0)
    lre = example2_stream(50.0, 0.1)
    # far beyond the RK4 stability limit
    run = run_estimator(lre, "A", 1e9, 5.0)
    assert run.diverged and any("diverged" in w for w in run.warnings)
    assert 0 < len(run.times) < g.n_steps


def test_telemetry_csv(tmp_path):
    lre = example2_stream(20.0)
    run = run_estimator(lre, "A", 100.0, 5.0, decimation=100)
    run.to_csv(tmp_path / "est.csv")
    head = (tmp_path / "est.csv").read_text().splitlines()[0]
    assert head == "t,theta_hat_1,theta_hat_2,theta_err_1,theta_err_2,residual_norm,M2"
    assert run.times[-1] == pytest.approx(20.0)


def test_law_c_runs_on_extended_stream():
    lre = example2_stream(60.0)
    ext = extend_regressor(lre, RationalFilter([1], [0.5, 1]))
    ann = AnnihilatorSet.from_selection(2, [1], He=build_he(2, 1))
    run = run_estimator(ext, "C", 1e15, 20.0, ann, decimation=50)
    assert run.theta_hat.shape[1] == 2
    assert np.all(np.isfinite(run.theta_hat))
    assert run.M2[-1] != 0.0
