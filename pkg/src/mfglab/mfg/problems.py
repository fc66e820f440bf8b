"""Mean-field game problem definitions and the closed-form benchmark.

The stationary (ergodic) game on the unit torus T^d is

    eps lap(u) + H0(x, grad u) - f(x, m) - Hbar = 0
    eps lap(m) - div(m grad u)                  = 0,   integral m = 1

with eps = sigma^2/2 the generator constant of dX = alpha dt + sigma dW
and the control at the optimum given by alpha = grad u.  The benchmark
instance uses separable running cost L(x, a) = |a|^2/2 + f_tilde(x),
whose maximized Hamiltonian is H0(x, p) = |p|^2/2 - f_tilde(x), and
logarithmic coupling f(x, m) = log m.  With

    f_tilde(x) = 2 pi^2 [ -sum_i sin(2 pi x_i) + sum_i cos^2(2 pi x_i) ]
                 - 2 sum_i sin(2 pi x_i)

the solution is known in closed form:

    u*(x)  = sum_i sin(2 pi x_i)
    m*(x)  = exp(2 u*(x)) / Z,   Z = (integral_0^1 exp(2 sin 2 pi t) dt)^d
    Hbar*  = log Z

and both residuals vanish identically (direct substitution).
"""

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .. import tape

TWO_PI = 2.0 * np.pi


def log_coupling(x, m):
    """f(x, m) = log m; ignores x.  Works on arrays and tape Vars."""
    return tape.log(m)


def _test_f_tilde(x):
    x = np.asarray(x, dtype=np.float64)
    s = np.sin(TWO_PI * x)
    c = np.cos(TWO_PI * x)
    return 2.0 * np.pi**2 * (-s.sum(axis=-1) + (c * c).sum(axis=-1)) - 2.0 * s.sum(axis=-1)


@dataclass(frozen=True)
class ErgodicMfgProblem:
    """Stationary game: dimension, generator constant, costs.

    ``f_tilde`` maps (B, d) points to (B,) running-cost values; ``coupling``
    maps (points, density values) to (B,) and must be written with the
    dispatching tape helpers so it works in plain and tracked mode alike.
    """

    d: int
    f_tilde: Callable
    coupling: Callable = log_coupling
    epsilon: float = 0.5

    def __post_init__(self):
        if self.d < 1:
            raise ValueError(f"dimension must be positive, got {self.d}")
        if self.epsilon <= 0.0:
            raise ValueError(f"generator constant must be positive, got {self.epsilon}")


@dataclass(frozen=True)
class TdMfgProblem:
    """Time-dependent game on [0, T] x T^d.

    The drift of the controlled dynamics is the control itself (b = alpha
    = grad_x u), matching the benchmark class.  ``initial_density`` and
    ``terminal_cost`` supply the two boundary conditions.
    """

    d: int
    horizon: float
    f_tilde: Callable
    coupling: Callable = log_coupling
    epsilon: float = 0.5
    initial_density: Callable = None
    terminal_cost: Callable = None


def hamiltonian(problem, x, p):
    """Maximized Hamiltonian H0(x, p) = |p|^2/2 - f_tilde(x).

    x: (B, d) points; p: (B, d) momenta (array or Var); returns (B,).
    """
    return 0.5 * (p * p).sum(axis=-1) - problem.f_tilde(x)


def lagrangian(problem, x, a):
    """Running cost L(x, a) = |a|^2/2 + f_tilde(x)."""
    a = np.asarray(a, dtype=np.float64)
    return 0.5 * (a * a).sum(axis=-1) + problem.f_tilde(x)


@dataclass(frozen=True)
class ClosedFormSolution:
    """Exact solution of the benchmark ergodic game in d dimensions.

    The normalizer is the 1d integral of exp(2 sin 2 pi t) raised to the
    d-th power (the density factorizes); it is computed by the periodic
    trapezoid rule, which converges spectrally, so the stored value is
    accurate to machine precision.
    """

    d: int
    z_one: float = field(init=False)

    def __post_init__(self):
        if self.d < 1:
            raise ValueError(f"dimension must be positive, got {self.d}")
        t = np.arange(4096) / 4096.0
        object.__setattr__(self, "z_one", float(np.mean(np.exp(2.0 * np.sin(TWO_PI * t)))))

    @property
    def normalizer(self):
        return self.z_one**self.d

    @property
    def hbar(self):
        return self.d * float(np.log(self.z_one))

    def u(self, x):
        x = np.asarray(x, dtype=np.float64)
        return np.sin(TWO_PI * x).sum(axis=-1)

    def grad_u(self, x):
        x = np.asarray(x, dtype=np.float64)
        return TWO_PI * np.cos(TWO_PI * x)

    def diag2_u(self, x):
        x = np.asarray(x, dtype=np.float64)
        return -(TWO_PI**2) * np.sin(TWO_PI * x)

    def m(self, x):
        return np.exp(2.0 * self.u(x)) / self.normalizer

    def grad_m(self, x):
        return 2.0 * self.m(x)[..., None] * self.grad_u(x)

    def diag2_m(self, x):
        mv = self.m(x)[..., None]
        gu = self.grad_u(x)
        return mv * (4.0 * gu * gu + 2.0 * self.diag2_u(x))

    def alpha(self, x):
        return self.grad_u(x)

    def u_jet(self, x):
        return self.u(x), self.grad_u(x), self.diag2_u(x)

    def m_jet(self, x):
        return self.m(x), self.grad_m(x), self.diag2_m(x)


def make_test_problem(d):
    """Benchmark ergodic problem plus its closed-form solution.

    The closed form solves the system for eps = 1/2 specifically, so the
    problem is always built with that generator constant.
    """
    problem = ErgodicMfgProblem(d=d, f_tilde=_test_f_tilde, epsilon=0.5)
    return problem, ClosedFormSolution(d)


def oracle_eval(solution, x):
    """Closed-form (u*, m*, alpha*, Hbar*) at points x of shape (B, d)."""
    x = np.asarray(x, dtype=np.float64)
    return solution.u(x), solution.m(x), solution.alpha(x), solution.hbar
