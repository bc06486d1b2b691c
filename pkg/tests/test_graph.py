import math

import numpy as np
import pytest

from georef.geometry import Pose2, compose, transform_points
from georef.graph import (
    LandmarkBlock,
    LandmarkEdge,
    OdometryEdge,
    PoseGraph,
    PriorEdge,
    SolverConfig,
    SolverError,
    dcs_scale,
    landmark_residual,
    odometry_residual,
    odometry_residuals,
    solve,
)


def _fd(fun, x, h=1e-6):
    cols = []
    for k in range(len(x)):
        e = np.zeros(len(x))
        e[k] = h
        cols.append((fun(x + e) - fun(x - e)) / (2 * h))
    return np.column_stack(cols)


def test_landmark_jacobian_finite_difference():
    rng = np.random.default_rng(0)
    for _ in range(100):
        x = rng.uniform(-10, 10, 3)
        edge = LandmarkEdge(0, rng.normal(size=2) * 10, rng.normal(size=2), np.eye(2))
        _, J = landmark_residual(Pose2.from_array(x), edge)
        num = _fd(lambda v: landmark_residual(Pose2.from_array(v), edge)[0], x)
        assert np.allclose(J, num, atol=1e-6)


def test_odometry_jacobians_finite_difference():
    rng = np.random.default_rng(1)
    pi = rng.uniform(-10, 10, (50, 3))
    pj = pi + rng.normal(size=(50, 3))
    meas = rng.normal(size=(50, 3))
    _, ji, jj = odometry_residuals(pi, pj, meas)
    for k in range(50):
        num_i = _fd(lambda v: odometry_residuals(v[None], pj[k:k + 1], meas[k:k + 1])[0][0], pi[k])
        num_j = _fd(lambda v: odometry_residuals(pi[k:k + 1], v[None], meas[k:k + 1])[0][0], pj[k])
        assert np.allclose(ji[k], num_i, atol=1e-6)
        assert np.allclose(jj[k], num_j, atol=1e-6)


def test_odometry_residual_zero_on_measurement():
    a, b = Pose2(1, 2, 0.3), Pose2(4, -1, 2.0)
    edge = OdometryEdge.from_prior(a, b, 0, 1, np.eye(3))
    r, _, _ = odometry_residual(a, b, edge)
    assert np.allclose(r, 0.0)


def test_dcs_scale():
    assert np.allclose(dcs_scale([0.0, 1.0, 3.0], 1.0), [1.0, 1.0, 0.5])


def _chain(truth, start_offset, landmarks=True):
    g = PoseGraph()
    rng = np.random.default_rng(5)
    for k, p in enumerate(truth):
        g.add_node(compose(p, start_offset))
        if k:
            g.add_odometry(OdometryEdge.from_prior(truth[k - 1], p, k - 1, k, np.eye(3) * 100))
        if landmarks:
            d = rng.uniform(-15, 15, (6, 2))
            g.add_landmarks(LandmarkBlock(k, d, transform_points(p, d), np.tile(np.eye(2), (6, 1, 1))))
    return g


def test_solver_recovers_chain():
    truth = [Pose2(2.0 * k, 0.1 * k, 0.05 * k) for k in range(20)]
    g = _chain(truth, Pose2(1.0, -2.0, 0.1))
    res = solve(g)
    assert res.status == "converged"
    assert np.allclose(res.poses, [p.as_array() for p in truth], atol=1e-8)
    assert res.cost_log[-1] < 1e-12
    assert all(b <= a for a, b in zip(res.cost_log, res.cost_log[1:]))


def test_solver_window_freezes_outside():
    truth = [Pose2(2.0 * k, 0.0, 0.0) for k in range(10)]
    g = _chain(truth, Pose2(0.5, 0.5, 0.0))
    before = g.poses().copy()
    res = solve(g, active=(5, 10))
    assert np.array_equal(res.poses[:5], before[:5])
    assert not np.allclose(res.poses[5:], before[5:])


def test_solver_gauge_error():
    g = PoseGraph()
    g.add_node(Pose2(0, 0, 0))
    g.add_node(Pose2(1, 0, 0))
    g.add_odometry(OdometryEdge(0, 1, Pose2(1, 0, 0), np.eye(3)))
    with pytest.raises(SolverError):
        solve(g)
    g.add_prior(PriorEdge(0, Pose2(0, 0, 0), np.eye(3)))
    assert solve(g).status == "converged"


def test_dcs_downweights_outlier():
    truth = [Pose2(2.0 * k, 0.0, 0.0) for k in range(12)]
    g = _chain(truth, Pose2(0.0, 0.0, 0.0))
    # one frame snapped to a marking 6 m ahead
    d = np.array([[1.0, 3.0], [5.0, -3.0], [8.0, 3.0]])
    bad = transform_points(compose(truth[6], Pose2(6.0, 0.0, 0.0)), d)
    g.add_landmarks(LandmarkBlock(6, d, bad, np.tile(np.eye(2) * 25, (3, 1, 1))))
    plain = solve(g)
    robust = solve(g, SolverConfig(robustifier="covariance_scaling"))
    err = lambda r: abs(r.poses[6, 0] - truth[6].x)
    assert err(robust) < err(plain)


def test_consecutive_edges_only():
    g = PoseGraph()
    with pytest.raises(ValueError):
        g.add_odometry(OdometryEdge(0, 2, Pose2(0, 0, 0), np.eye(3)))
    with pytest.raises(ValueError):
        SolverConfig(robustifier="huber")
    assert math.isfinite(SolverConfig().phi)
