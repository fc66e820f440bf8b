"""Analytically tractable two-player objectives.

Each toy fixes latent samples z_1..z_N and data samples x_1..x_M and a
per-pair loss J(i, j; theta, omega) whose average over all N*M pairs is
the objective Phi(theta, omega).  The toys carry closed-form per-pair
gradients and closed-form Jacobians of the full gradients, which the SDE
drift correction and the fluctuation-dissipation diagnostics need exactly
(networks are deliberately not used here: trajectories must be cheap and
derivatives sharp).

All methods broadcast over leading axes: theta of shape (..., d_theta)
and omega of shape (..., d_omega) give gradients with matching leading
shape, so one call serves a single state or a whole replica ensemble.
"""

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True, eq=False)
class ToyGanProblem:
    """Base: finite sample sets plus generic averaging machinery.

    Subclasses implement ``phi``, ``pair_grads`` and ``jacobians``;
    everything else (full gradients, minibatch gradients, population
    covariances) is derived from the per-pair gradients.
    """

    z: np.ndarray
    x: np.ndarray
    d_theta: int = 1
    d_omega: int = 1
    name: str = "toy"

    def __post_init__(self):
        z = np.atleast_1d(np.asarray(self.z, dtype=np.float64))
        x = np.atleast_1d(np.asarray(self.x, dtype=np.float64))
        if z.size < 1 or x.size < 1:
            raise ValueError("need at least one latent and one data sample")
        object.__setattr__(self, "z", z)
        object.__setattr__(self, "x", x)

    @property
    def n_latent(self):
        return self.z.shape[0]

    @property
    def n_data(self):
        return self.x.shape[0]

    @property
    def n_pairs(self):
        return self.n_latent * self.n_data

    @property
    def dim(self):
        return self.d_theta + self.d_omega

    def default_init(self):
        """A generic off-equilibrium starting state (theta, omega)."""
        return np.full(self.d_theta, 0.5), np.full(self.d_omega, 0.3)

    # subclasses: value of the averaged objective
    def phi(self, theta, omega):
        raise NotImplementedError

    # subclasses: per-pair gradients, shapes (..., N, M, d_theta/d_omega)
    def pair_grads(self, theta, omega):
        raise NotImplementedError

    # subclasses: Jacobians of the full gradients, as a dict with keys
    # dgt_dt (..., dt, dt), dgt_dw (..., dt, dw), dgw_dt (..., dw, dt),
    # dgw_dw (..., dw, dw)
    def jacobians(self, theta, omega):
        raise NotImplementedError

    def _pair_flat(self, theta, omega):
        gt, gw = self.pair_grads(theta, omega)
        p = self.n_pairs
        return (gt.reshape(gt.shape[:-3] + (p, self.d_theta)),
                gw.reshape(gw.shape[:-3] + (p, self.d_omega)))

    def full_grads(self, theta, omega):
        gt, gw = self._pair_flat(theta, omega)
        return gt.mean(axis=-2), gw.mean(axis=-2)

    def batch_pair_grads(self, theta, omega, batch):
        """Per-pair gradients at the index pairs in ``batch`` (..., B, 2).

        Returns arrays of shape (..., B, d_theta) and (..., B, d_omega),
        one gradient per drawn pair, not yet averaged.
        """
        batch = np.asarray(batch)
        if batch.shape[-2] < 1:
            raise ValueError("empty batch")
        ii, jj = batch[..., 0], batch[..., 1]
        if np.any(ii < 0) or np.any(ii >= self.n_latent) \
                or np.any(jj < 0) or np.any(jj >= self.n_data):
            raise IndexError("batch indices out of range")
        gt, gw = self._pair_flat(theta, omega)
        flat = ii * self.n_data + jj
        bt = np.take_along_axis(gt, flat[..., None], axis=-2)
        bw = np.take_along_axis(gw, flat[..., None], axis=-2)
        return bt, bw

    def minibatch_grads(self, theta, omega, batch):
        """Batch-averaged gradients; ``batch`` holds (i, j) index pairs (..., B, 2)."""
        bt, bw = self.batch_pair_grads(theta, omega, batch)
        return bt.mean(axis=-2), bw.mean(axis=-2)

    def covariances(self, theta, omega):
        """Population covariances of the per-pair gradients (divide by N*M)."""
        gt, gw = self._pair_flat(theta, omega)

        def _cov(g):
            c = g - g.mean(axis=-2, keepdims=True)
            return np.einsum("...pi,...pj->...ij", c, c) / self.n_pairs

        return _cov(gt), _cov(gw)


def _eye_like(theta, d1, d2, value=0.0):
    """Constant (d1, d2) matrix broadcast over theta's leading shape."""
    lead = np.asarray(theta).shape[:-1]
    out = np.zeros(lead + (d1, d2))
    if value != 0.0:
        idx = np.arange(min(d1, d2))
        out[..., idx, idx] = value
    return out


@dataclass(frozen=True, eq=False)
class BilinearToy(ToyGanProblem):
    """Phi = theta * omega; every pair identical, so gradients are noiseless."""

    def __init__(self):
        super().__init__(z=np.zeros(1), x=np.zeros(1), name="bilinear")

    def phi(self, theta, omega):
        return theta[..., 0] * omega[..., 0]

    def pair_grads(self, theta, omega):
        lead = np.broadcast_shapes(theta.shape[:-1], omega.shape[:-1])
        gt = np.broadcast_to(omega[..., None, None, :], lead + (1, 1, 1)).copy()
        gw = np.broadcast_to(theta[..., None, None, :], lead + (1, 1, 1)).copy()
        return gt, gw

    def jacobians(self, theta, omega):
        return {
            "dgt_dt": _eye_like(theta, 1, 1),
            "dgt_dw": _eye_like(theta, 1, 1, 1.0),
            "dgw_dt": _eye_like(theta, 1, 1, 1.0),
            "dgw_dw": _eye_like(theta, 1, 1),
        }


@dataclass(frozen=True, eq=False)
class LinearGeneratorToy(ToyGanProblem):
    """G(z) = theta z, D(x) = omega x, per-pair loss D(x_j) - D(G(z_i)).

    Full gradients g_theta = -omega zbar, g_omega = xbar - theta zbar: a
    rotation field around the equilibrium (xbar/zbar, 0).  No stationary
    measure exists once noise is added (the radius drifts outward), so
    this toy serves the weak-error and covariance studies, not the
    stationarity ones.
    """

    def __init__(self, z=(0.9, 1.1), x=(1.9, 2.1)):
        super().__init__(z=z, x=x, name="linear")

    def phi(self, theta, omega):
        zb, xb = self.z.mean(), self.x.mean()
        return omega[..., 0] * (xb - theta[..., 0] * zb)

    def pair_grads(self, theta, omega):
        th = theta[..., 0][..., None, None]
        om = omega[..., 0][..., None, None]
        zi = self.z[:, None]
        xj = self.x[None, :]
        gt = (-om * zi) * np.ones_like(xj)
        gw = xj - th * zi
        return gt[..., None], gw[..., None]

    def jacobians(self, theta, omega):
        zb = self.z.mean()
        return {
            "dgt_dt": _eye_like(theta, 1, 1),
            "dgt_dw": _eye_like(theta, 1, 1, -zb),
            "dgw_dt": _eye_like(theta, 1, 1, -zb),
            "dgw_dw": _eye_like(theta, 1, 1),
        }


@dataclass(frozen=True, eq=False)
class QuadraticToy(ToyGanProblem):
    """Per-pair loss theta^2/2 - omega^2/2 + theta z_i + omega x_j.

    With zero-mean samples Phi = theta^2/2 - omega^2/2, the minimax saddle
    sits at the origin, gradient noise is constant in the state, and both
    limiting SDEs are Ornstein-Uhlenbeck processes with known stationary
    moments: the workhorse for the fluctuation-dissipation checks.
    """

    def __init__(self, z=(-1.0, 1.0), x=(-2.0, 2.0)):
        z = np.atleast_1d(np.asarray(z, dtype=np.float64))
        x = np.atleast_1d(np.asarray(x, dtype=np.float64))
        super().__init__(z=z, x=x, name="quadratic")

    def phi(self, theta, omega):
        t, w = theta[..., 0], omega[..., 0]
        return 0.5 * t * t - 0.5 * w * w + t * self.z.mean() + w * self.x.mean()

    def pair_grads(self, theta, omega):
        th = theta[..., 0][..., None, None]
        om = omega[..., 0][..., None, None]
        zi = self.z[:, None]
        xj = self.x[None, :]
        gt = (th + zi) * np.ones_like(xj)
        gw = (-om + xj) * np.ones_like(zi)
        return gt[..., None], gw[..., None]

    def jacobians(self, theta, omega):
        return {
            "dgt_dt": _eye_like(theta, 1, 1, 1.0),
            "dgt_dw": _eye_like(theta, 1, 1),
            "dgw_dt": _eye_like(theta, 1, 1),
            "dgw_dw": _eye_like(theta, 1, 1, -1.0),
        }


@dataclass(frozen=True, eq=False)
class CoupledBilinearToy(ToyGanProblem):
    """Two-dimensional players: per-pair loss (1+z_i)(1+x_j) theta^T A omega.

    Exercises the genuinely matrix-valued paths (block Jacobians, rank-
    deficient covariances, matrix square roots) that the scalar toys
    cannot reach.
    """

    a_mat: np.ndarray = field(default=None)

    def __init__(self, a_mat=((1.0, 0.5), (-0.25, 2.0)), z=(-0.5, 0.5), x=(-0.3, 0.3)):
        super().__init__(z=z, x=x, d_theta=2, d_omega=2, name="coupled")
        object.__setattr__(self, "a_mat", np.asarray(a_mat, dtype=np.float64))

    def _c_pairs(self):
        return (1.0 + self.z)[:, None] * (1.0 + self.x)[None, :]

    def phi(self, theta, omega):
        cbar = self._c_pairs().mean()
        return cbar * np.einsum("...i,ij,...j->...", theta, self.a_mat, omega)

    def pair_grads(self, theta, omega):
        c = self._c_pairs()
        aw = np.einsum("ij,...j->...i", self.a_mat, omega)
        at = np.einsum("ji,...j->...i", self.a_mat, theta)
        gt = c[..., :, :, None] * aw[..., None, None, :]
        gw = c[..., :, :, None] * at[..., None, None, :]
        return gt, gw

    def jacobians(self, theta, omega):
        cbar = self._c_pairs().mean()
        lead = np.broadcast_shapes(theta.shape[:-1], omega.shape[:-1])
        zero = np.zeros(lead + (2, 2))
        return {
            "dgt_dt": zero,
            "dgt_dw": np.broadcast_to(cbar * self.a_mat, lead + (2, 2)).copy(),
            "dgw_dt": np.broadcast_to(cbar * self.a_mat.T, lead + (2, 2)).copy(),
            "dgw_dw": zero.copy(),
        }


_TOYS = {
    "bilinear": BilinearToy,
    "linear": LinearGeneratorToy,
    "quadratic": QuadraticToy,
    "coupled": CoupledBilinearToy,
}


def make_toy(name, **kwargs):
    if name not in _TOYS:
        raise ValueError(f"unknown toy {name!r}; choose from {sorted(_TOYS)}")
    return _TOYS[name](**kwargs)
