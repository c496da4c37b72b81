import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from safebench.dynamics import Ball2D, Unicycle, make_model, step
from safebench.estimation import (
    BatchEstimator,
    EstimationConfig,
    EstimationError,
    GaussianBelief,
    KalmanConfig,
    double_integrator,
    kf_predict,
    kf_update,
)


def belief(mean, cov):
    return GaussianBelief(np.asarray(mean, dtype=float), np.asarray(cov, dtype=float))


def test_identity_propagation_is_noop():
    cfg = KalmanConfig(np.eye(2), np.zeros((2, 1)), np.eye(2), np.zeros((2, 2)), np.eye(2))
    b = belief([1.0, -2.0], np.diag([0.3, 0.4]))
    out = kf_predict(cfg, b, np.array([5.0]))
    assert np.array_equal(out.mean, b.mean) and np.array_equal(out.covariance, b.covariance)


def test_process_noise_adds_to_covariance():
    cfg = KalmanConfig(np.eye(2), np.zeros((2, 1)), np.eye(2), 0.25 * np.eye(2), np.eye(2))
    out = kf_predict(cfg, belief([0, 0], np.eye(2)), None)
    assert np.allclose(out.covariance, 1.25 * np.eye(2))


def test_constant_velocity_prediction():
    cfg = double_integrator(2, 0.05, 0.01, 0.0)
    out = kf_predict(cfg, belief([1.0, 2.0, 0.4, -0.2], np.eye(4) * 1e-3), np.zeros(2))
    assert np.allclose(out.mean[:2], [1.0 + 0.4 * 0.05, 2.0 - 0.2 * 0.05])


def test_precise_measurement_pins_mean():
    cfg = KalmanConfig(np.eye(2), np.zeros((2, 1)), np.eye(2), np.zeros((2, 2)), 1e-14 * np.eye(2))
    out = kf_update(cfg, belief([0, 0], np.eye(2)), np.array([3.0, -1.0]))
    assert np.allclose(out.mean, [3, -1], atol=1e-9)


def test_uninformative_measurement_keeps_prior():
    cfg = KalmanConfig(np.eye(2), np.zeros((2, 1)), np.eye(2), np.zeros((2, 2)), 1e12 * np.eye(2))
    prior = belief([0.5, 0.5], np.eye(2))
    z = np.array([10.0, -4.0])
    out = kf_update(cfg, prior, z)
    assert np.linalg.norm(out.mean - prior.mean) <= 1e-6 * np.linalg.norm(z - prior.mean)


def test_static_truth_converges():
    cfg = KalmanConfig(np.eye(2), np.zeros((2, 1)), np.eye(2), np.zeros((2, 2)), 0.01 * np.eye(2))
    truth = np.array([0.7, -1.3])
    inside = 0
    for trial in range(100):
        rng = np.random.default_rng(trial)
        b = belief([0, 0], 10 * np.eye(2))
        for _ in range(200):
            b = kf_update(cfg, b, truth + rng.normal(0, 0.1, 2))
        sigma = np.sqrt(np.diag(b.covariance))
        inside += np.all(np.abs(b.mean - truth) <= 3 * sigma)
    assert inside >= 95


def test_config_validation():
    with pytest.raises(ValueError):
        KalmanConfig(np.eye(2), np.zeros((2, 1)), np.eye(2), -np.eye(2), np.eye(2))
    with pytest.raises(ValueError):
        KalmanConfig(np.eye(2), np.zeros((2, 1)), np.eye(2), np.eye(2), np.zeros((2, 2)))
    with pytest.raises(ValueError):
        KalmanConfig(np.eye(3), np.zeros((2, 1)), np.eye(2), np.eye(2), np.eye(2))


def test_singular_innovation_raises():
    # R passes validation but the batch prior makes S singular
    cfg = KalmanConfig(np.eye(1), np.zeros((1, 1)), np.eye(1), np.zeros((1, 1)), np.eye(1))
    bad = GaussianBelief(np.zeros(1), -np.eye(1))
    with pytest.raises(EstimationError):
        kf_update(cfg, bad, np.zeros(1))


def test_joseph_form_stays_psd():
    rng = np.random.default_rng(0)
    lowest = np.inf
    for _ in range(10_000 // 50):
        n = 4
        A = np.eye(n) + 0.1 * rng.normal(size=(n, n))
        C = rng.normal(size=(2, n))
        L = rng.normal(size=(n, n)) * 0.1
        R = np.diag(rng.uniform(1e-6, 1, 2))
        cfg = KalmanConfig(A, np.zeros((n, 1)), C, L @ L.T, R)
        b = belief(np.zeros(n), np.eye(n))
        for _ in range(50):
            b = kf_predict(cfg, b) if rng.random() < 0.5 else kf_update(cfg, b, rng.normal(size=2))
            lowest = min(lowest, np.linalg.eigvalsh(b.covariance).min())
    assert lowest >= -1e-10


def test_zero_noise_fixpoint():
    dt = 0.05
    cfg = double_integrator(2, dt, 1e-6, 0.0)
    cfg = KalmanConfig(cfg.A, cfg.B, cfg.C, np.zeros((4, 4)), 1e-16 * np.eye(2))
    truth = np.array([0.0, 0.0, 1.0, 0.5])
    b = belief(truth, 1e-12 * np.eye(4))
    for _ in range(100):
        u = np.array([0.3, -0.1])
        truth = cfg.A @ truth + cfg.B @ u
        b = kf_update(cfg, kf_predict(cfg, b, u), truth[:2])
        assert np.allclose(b.mean, truth, atol=1e-9)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_batch_estimator_is_seed_deterministic(seed):
    m = Ball2D()
    x0 = np.array([[0.0, 0.0, 0.0, 0.0]])
    h0 = np.array([[3.0, 0.0, 0.0, 0.0]])

    def run():
        est = BatchEstimator(m, 0.05, EstimationConfig(), x0, h0, [np.random.default_rng(seed)], 10)
        out = []
        for f in range(10):
            r, h = est.observe(f, x0, h0)
            out.append((r.copy(), h.copy()))
            est.advance(r, np.zeros((1, 2)))
        return out

    a, b = run(), run()
    assert all(np.array_equal(p[0], q[0]) and np.array_equal(p[1], q[1]) for p, q in zip(a, b))


def test_perfect_sensing_returns_truth():
    m = make_model("arm")
    x0 = np.zeros((2, 8))
    h0 = np.ones((2, 4))
    est = BatchEstimator(m, 0.05, EstimationConfig(perfect_sensing=True), x0, h0, [None, None], 5)
    r, h = est.observe(0, x0, h0)
    assert r is x0 and h is h0


def test_unicycle_filter_tracks_motion():
    m = Unicycle()
    x = np.array([[0.0, 0.0, 1.0, 0.3]])
    h = np.array([[5.0, 0.0, 0.0, 0.0]])
    est = BatchEstimator(m, 0.05, EstimationConfig(), x, h, [np.random.default_rng(1)], 100)
    u = np.zeros((1, 2))
    for f in range(100):
        r, _ = est.observe(f, x, h)
        assert np.linalg.norm(r[0, :2] - x[0, :2]) < 0.1
        est.advance(r, u)
        x = step(m, x, u)
