import math

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from safebench.dynamics import Arm4Dof, Ball2D, IntegratorConfig, Scara, Unicycle, step
from safebench.safety_index import (
    CoincidentPointsError,
    CriticalPair,
    GradientIllConditionedError,
    ObstacleState,
    SafetyIndexParams,
    analytic_gradient,
    ball_gradient,
    critical_pair,
    grad_phi,
    lie_derivatives,
    phi,
)

from oracles import worked_ball_state

PARAMS = SafetyIndexParams(1.5, 1.0)
MODELS = [Ball2D(), Unicycle(), Scara(), Arm4Dof()]


def _pair(d, d_dot):
    z = np.zeros(2)
    return CriticalPair(z, z, np.float64(d), np.float64(d_dot), None, None, z, z)


def test_params_validation():
    with pytest.raises(ValueError):
        SafetyIndexParams(0.0, 1.0)
    with pytest.raises(ValueError):
        SafetyIndexParams(1.0, -0.1)
    with pytest.raises(ValueError):
        ObstacleState(np.array([np.nan, 0.0]))


def test_head_on_approach_rate():
    pair = critical_pair(Ball2D(), [0, 0, 1, 0], ObstacleState(np.array([2.0, 0.0])))
    assert pair.d == 2.0 and pair.d_dot == -1.0


def test_tangential_motion_has_zero_rate():
    pair = critical_pair(Ball2D(), [0, 0, 0, 1], ObstacleState(np.array([2.0, 0.0])))
    assert pair.d == 2.0 and pair.d_dot == 0.0


def test_scara_rate_matches_rollout():
    m = Scara()
    x = np.array([0.0, 0.0, 0.0, 1.0])
    obs = ObstacleState(np.array([1.5, 1.0]))
    pair = critical_pair(m, x, obs)
    assert np.allclose(pair.c_r, [1.5, 0.0])
    dt = 1e-5
    d1 = critical_pair(m, step(m, x, np.zeros(2), IntegratorConfig(dt, 1)), obs).d
    assert abs((d1 - pair.d) / dt - pair.d_dot) <= 1e-3


def test_coincident_points_rejected():
    with pytest.raises(CoincidentPointsError):
        critical_pair(Ball2D(), [0, 0, 0, 0], ObstacleState(np.zeros(2)))


@pytest.mark.parametrize("d_min,k,d,d_dot,expected", [
    (1.0, 1.0, 2.0, -1.0, -2.0),
    (1.5, 1.0, 1.0, -1.0, 2.25),
    (1.3, 0.7, 1.3, 0.0, 0.0),
])
def test_phi_substitution(d_min, k, d, d_dot, expected):
    assert phi(SafetyIndexParams(d_min, k), _pair(d, d_dot)) == pytest.approx(expected, abs=1e-12)


def test_worked_state_gradient():
    x, p_o = worked_ball_state()
    obs = ObstacleState(p_o)
    g = grad_phi(Ball2D(), x, obs, PARAMS)
    assert np.allclose(g, [-2, 0, -1, 0], rtol=1e-5, atol=1e-8)
    assert np.allclose(ball_gradient(x, obs, PARAMS), [-2, 0, -1, 0])


def test_worked_state_lie_derivatives():
    x, p_o = worked_ball_state()
    ev = lie_derivatives(Ball2D(), x, ObstacleState(p_o), PARAMS)
    assert abs(ev.phi - 2.25) <= 1e-9
    assert abs(ev.lf_phi - 2.0) <= 1e-9
    assert np.allclose(ev.lg_phi, [-1.0, 0.0], atol=1e-9)


def test_zero_k_removes_velocity_dependence():
    rng = np.random.default_rng(0)
    params = SafetyIndexParams(1.0, 0.0)
    for _ in range(20):
        x = rng.uniform(-2, 2, size=4)
        ev = lie_derivatives(Ball2D(), x, ObstacleState(np.array([3.0, 3.0])), params)
        assert np.all(ev.grad_phi[2:] == 0)
        assert np.all(ev.lg_phi == 0)


def test_static_ball_has_zero_drift_term():
    ev = lie_derivatives(Ball2D(), [0.5, 0.3, 0, 0], ObstacleState(np.array([2.0, -1.0])), PARAMS)
    assert ev.lf_phi == 0.0


def test_ill_conditioned_gradient():
    with pytest.raises(GradientIllConditionedError):
        grad_phi(Ball2D(), [1e-7, 0, 0, 0], ObstacleState(np.zeros(2)), PARAMS)


def test_unknown_gradient_method():
    with pytest.raises(ValueError):
        grad_phi(Ball2D(), [1, 0, 0, 0], ObstacleState(np.zeros(2)), PARAMS, method="spline")


def test_ball_analytic_matches_numeric_on_1000_states():
    rng = np.random.default_rng(1)
    worst = 0.0
    count = 0
    while count < 1000:
        x = rng.uniform(-3, 3, size=4)
        p_o, v_o = rng.uniform(-3, 3, size=2), rng.uniform(-1, 1, size=2)
        if np.linalg.norm(x[:2] - p_o) <= 0.1:
            continue
        obs = ObstacleState(p_o, v_o)
        params = SafetyIndexParams(rng.uniform(0.2, 3), rng.uniform(0, 3))
        a = ball_gradient(x, obs, params)
        n = grad_phi(Ball2D(), x, obs, params)
        worst = max(worst, np.linalg.norm(a - n) / max(np.linalg.norm(a), 1e-12))
        count += 1
    assert worst <= 1e-5


@pytest.mark.parametrize("model", MODELS, ids=lambda m: m.kind.value)
def test_analytic_gradient_matches_numeric(model):
    rng = np.random.default_rng(2)
    for _ in range(200):
        x = rng.uniform(-math.pi, math.pi, size=model.n_x)
        obs = ObstacleState(rng.uniform(-3, 3, size=2), rng.uniform(-1, 1, size=2))
        if critical_pair(model, x, obs).d < 0.1:
            continue
        a = analytic_gradient(model, x, obs, PARAMS)
        n = grad_phi(model, x, obs, PARAMS)
        assert np.linalg.norm(a - n) <= 1e-5 * max(1.0, np.linalg.norm(n))


@pytest.mark.parametrize("model", MODELS, ids=lambda m: m.kind.value)
def test_phi_dot_matches_rollout(model):
    rng = np.random.default_rng(3)
    delta = 1e-4
    cfg = IntegratorConfig(delta, 1)
    checked = 0
    while checked < 50:
        # rates at the scale the benchmark reaches; forward differences carry
        # an O(delta * phi'') error that grows with the square of speed
        x = rng.uniform(-math.pi, math.pi, size=model.n_x)
        x[model.actuated] = rng.uniform(-1, 1, size=model.n_u)
        if model.kind.value == "unicycle":
            x[3] = rng.uniform(-math.pi, math.pi)
        u = rng.normal(size=model.n_u)
        obs = ObstacleState(rng.uniform(-3, 3, size=2))
        pair = critical_pair(model, x, obs)
        if pair.d < 0.2:
            continue
        ev = lie_derivatives(model, x, obs, PARAMS)
        after = phi(PARAMS, critical_pair(model, step(model, x, u, cfg), obs))
        assert abs((after - ev.phi) / delta - (ev.lf_phi + ev.lg_phi @ u)) <= 1e-2
        checked += 1


def test_farther_obstacle_never_raises_phi_when_k_zero():
    params = SafetyIndexParams(1.5, 0.0)
    x = np.array([0.0, 0.0, 0.3, -0.2])
    values = [phi(params, critical_pair(Ball2D(), x, ObstacleState(np.array([r, 0.0])))) for r in np.linspace(0.2, 5, 50)]
    assert np.all(np.diff(values) <= 0)


finite = st.floats(-3, 3, allow_nan=False)


@settings(max_examples=200, deadline=None)
@given(st.tuples(finite, finite), st.tuples(finite, finite), st.tuples(finite, finite))
def test_ball_gradient_is_odd(rel, v, v_o):
    rel, v, v_o = np.array(rel), np.array(v), np.array(v_o)
    assume(np.linalg.norm(rel) > 1e-3)
    obs = ObstacleState(np.zeros(2), v_o)
    g = ball_gradient(np.r_[rel, v], obs, PARAMS)
    g_flip = ball_gradient(np.r_[-rel, -v], ObstacleState(np.zeros(2), -v_o), PARAMS)
    assert np.allclose(g_flip[:2], -g[:2], atol=1e-9)
    assert np.allclose(g_flip[2:], -g[2:], atol=1e-9)


@settings(max_examples=200, deadline=None)
@given(st.tuples(finite, finite), st.tuples(finite, finite), st.tuples(finite, finite))
def test_swapping_velocities_negates_rate(p, v_r, v_o):
    p, v_r, v_o = np.array(p), np.array(v_r), np.array(v_o)
    obstacle_at = np.array([3.5, 0.0])
    assume(np.linalg.norm(p - obstacle_at) > 1e-3)
    a = critical_pair(Ball2D(), np.r_[p, v_r], ObstacleState(obstacle_at, v_o)).d_dot
    b = critical_pair(Ball2D(), np.r_[p, v_o], ObstacleState(obstacle_at, v_r)).d_dot
    assert a == pytest.approx(-b, abs=1e-9)
