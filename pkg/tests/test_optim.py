"""Optimizer updates: hand values, convergence, and gradient validation."""

import numpy as np
import pytest

from mfglab.optim import Adam, NonFiniteGradient, Sgd, make_optimizer, sgd_step


def test_sgd_step_hand_value():
    out = sgd_step(np.array([1.0, 2.0]), np.array([10.0, -4.0]), rate=0.1)
    assert np.array_equal(out, [0.0, 2.4])
    up = sgd_step(np.array([1.0]), np.array([2.0]), rate=0.25, ascent=True)
    assert np.array_equal(up, [1.5])


def test_sgd_step_returns_new_array():
    p = np.array([1.0])
    out = sgd_step(p, np.array([1.0]), rate=0.5)
    assert out is not p
    assert p[0] == 1.0


def test_adam_first_step_is_rate_sized():
    # bias correction makes the first step rate * g / (|g| + eps)
    opt = Adam(rate=0.1)
    p = opt.step(np.zeros(3), np.array([5.0, -3.0, 1e-4]))
    assert np.allclose(p, [-0.1, 0.1, -0.1], rtol=1e-3)


def test_adam_moment_recursion_matches_manual():
    opt = Adam(rate=0.05, beta1=0.8, beta2=0.9)
    g1 = np.array([1.0, -2.0])
    g2 = np.array([0.5, 0.5])
    p = opt.step(np.zeros(2), g1)
    p = opt.step(p, g2)

    m = 0.2 * g1
    v = 0.1 * g1 * g1
    q = -0.05 * (m / 0.2) / (np.sqrt(v / 0.1) + 1e-8)
    m = 0.8 * m + 0.2 * g2
    v = 0.9 * v + 0.1 * g2 * g2
    q = q - 0.05 * (m / (1 - 0.8 ** 2)) / (np.sqrt(v / (1 - 0.9 ** 2)) + 1e-8)
    assert np.allclose(p, q, atol=1e-14)


@pytest.mark.parametrize("name", ["plain", "adam"])
def test_optimizers_minimize_quadratic(name):
    opt = make_optimizer(name, rate=0.05)
    p = np.array([3.0, -2.0])
    for _ in range(400):
        p = opt.step(p, 2.0 * p)
    assert np.abs(p).max() < 1e-2


def test_ascent_maximizes():
    opt = make_optimizer("plain", rate=0.1, ascent=True)
    p = np.array([0.1])
    for _ in range(200):
        p = opt.step(p, -2.0 * (p - 1.0))  # gradient of -(p-1)^2
    assert abs(p[0] - 1.0) < 1e-6


@pytest.mark.parametrize("bad", [np.nan, np.inf, -np.inf])
def test_non_finite_gradient_raises(bad):
    opt = Adam(rate=0.1)
    with pytest.raises(NonFiniteGradient, match="non-finite"):
        opt.step(np.zeros(2), np.array([1.0, bad]))
    with pytest.raises(NonFiniteGradient):
        sgd_step(np.zeros(1), np.array([bad]), rate=0.1)


def test_make_optimizer_rejects_unknown_name():
    with pytest.raises(ValueError, match="unknown optimizer"):
        make_optimizer("momentum", rate=0.1)


def test_sgd_instance_is_stateless():
    opt = Sgd(rate=0.1)
    a = opt.step(np.array([1.0]), np.array([1.0]))
    b = opt.step(np.array([1.0]), np.array([1.0]))
    assert np.array_equal(a, b)
