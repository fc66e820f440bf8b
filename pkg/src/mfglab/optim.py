"""First-order parameter updates for the two players.

Plain gradient steps and the usual adaptive (moment-tracking) variant.
Both support descent and ascent, validate gradient finiteness, and keep
any internal state on the instance so a training loop can hand over just
(params, grad) each call.
"""

import numpy as np


class NonFiniteGradient(Exception):
    """Raised when an update receives a NaN or infinite gradient."""


def _check_finite(grad):
    grad = np.asarray(grad, dtype=np.float64)
    if not np.all(np.isfinite(grad)):
        bad = int(np.sum(~np.isfinite(grad)))
        raise NonFiniteGradient(f"{bad} non-finite gradient entries")
    return grad


def sgd_step(params, grad, rate, ascent=False):
    """One plain gradient step; returns a new parameter array."""
    params = np.asarray(params, dtype=np.float64)
    grad = _check_finite(grad)
    sign = 1.0 if ascent else -1.0
    return params + sign * rate * grad


class Sgd:
    """Stateless plain-gradient optimizer with a fixed step size."""

    def __init__(self, rate, ascent=False):
        self.rate = float(rate)
        self.ascent = ascent

    def step(self, params, grad):
        return sgd_step(params, grad, self.rate, ascent=self.ascent)


class Adam:
    """Adaptive optimizer with persisted first/second moment estimates.

    Update at step t (bias-corrected moments):

        m_t = b1 m_{t-1} + (1-b1) g
        v_t = b2 v_{t-1} + (1-b2) g^2
        params -= rate * (m_t / (1-b1^t)) / (sqrt(v_t / (1-b2^t)) + eps)

    with the sign flipped for ascent.
    """

    def __init__(self, rate, beta1=0.9, beta2=0.999, eps=1e-8, ascent=False):
        self.rate = float(rate)
        self.beta1 = float(beta1)
        self.beta2 = float(beta2)
        self.eps = float(eps)
        self.ascent = ascent
        self.m = None
        self.v = None
        self.t = 0

    def step(self, params, grad):
        params = np.asarray(params, dtype=np.float64)
        grad = _check_finite(grad)
        if self.m is None:
            self.m = np.zeros_like(params)
            self.v = np.zeros_like(params)
        self.t += 1
        self.m = self.beta1 * self.m + (1.0 - self.beta1) * grad
        self.v = self.beta2 * self.v + (1.0 - self.beta2) * grad * grad
        mhat = self.m / (1.0 - self.beta1**self.t)
        vhat = self.v / (1.0 - self.beta2**self.t)
        sign = 1.0 if self.ascent else -1.0
        return params + sign * self.rate * mhat / (np.sqrt(vhat) + self.eps)


def make_optimizer(name, rate, ascent=False):
    if name == "plain":
        return Sgd(rate, ascent=ascent)
    if name == "adam":
        return Adam(rate, ascent=ascent)
    raise ValueError(f"unknown optimizer {name!r}; use 'plain' or 'adam'")
