"""Continuous-time approximations of the discrete training updates.

The discrete schemes are modelled by Ito SDEs

    dX_t = drift(X_t) dt + sigma(X_t) dW_t,      X = (theta, omega),

with drift built from the population gradients.  Writing
b0 = (-g_theta, +g_omega), the simultaneous scheme is approximated at
leading order by drift = b0, while the alternating scheme carries an
O(eta) correction term b1 accounting for the half-step shear between
the two players:

    drift_alt = b0 + eta * b1.

The correction can be written in two equivalent ways (a block-matrix
product and a backward-error form); both are implemented and checked
against each other in the tests.  The noise has inverse temperature
beta = 2 * batch_size / eta and block-diagonal covariance built from
the per-pair gradient covariances:

    sigma = sqrt(2 / beta) * blockdiag(Sigma_theta^{1/2}, Sigma_omega^{1/2}).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .updates import MODES


def split_state(problem, x):
    """Split a joined state vector (..., d_theta + d_omega) into parts."""
    x = np.asarray(x, dtype=float)
    dt = problem.d_theta
    return x[..., :dt], x[..., dt:]


def join_state(theta, omega):
    """Concatenate theta and omega along the last axis."""
    return np.concatenate([np.asarray(theta, float), np.asarray(omega, float)],
                          axis=-1)


def psd_sqrt(mat, neg_tol=1e-10):
    """Symmetric square root of a positive semidefinite matrix.

    Eigenvalues are clipped at zero; if any eigenvalue is more negative
    than neg_tol relative to the spectral radius a warning is emitted,
    since that indicates the input was not PSD to working precision.
    Batched inputs (..., d, d) are handled by the underlying eigh.
    """
    mat = np.asarray(mat, dtype=float)
    w, v = np.linalg.eigh(mat)
    scale = np.maximum(np.max(np.abs(w), axis=-1, keepdims=True), 1.0)
    if np.any(w < -neg_tol * scale):
        warnings.warn("clipping negative eigenvalue(s) of a nominally PSD "
                      "matrix (most negative %.3e)" % float(np.min(w)))
    w = np.clip(w, 0.0, None)
    return np.einsum("...ik,...k,...jk->...ij", v, np.sqrt(w), v)


def _mv(mat, vec):
    """Batched matrix-vector product over the trailing axes."""
    return np.einsum("...ij,...j->...i", mat, vec)


def b1_matrix_form(problem, theta, omega):
    """O(eta) drift correction of the alternating scheme, block-matrix form.

    With J** the Jacobian blocks of the population gradients and
    b0 = (-g_theta, g_omega),

        b1 = 0.5 * [[ Jtt, -Jtw], [-Jwt, -Jww]] b0.
    """
    theta = np.asarray(theta, dtype=float)
    omega = np.asarray(omega, dtype=float)
    g_th, g_om = problem.full_grads(theta, omega)
    jac = problem.jacobians(theta, omega)
    b0_th, b0_om = -g_th, g_om
    top = _mv(jac["dgt_dt"], b0_th) - _mv(jac["dgt_dw"], b0_om)
    bot = -_mv(jac["dgw_dt"], b0_th) - _mv(jac["dgw_dw"], b0_om)
    return 0.5 * np.concatenate([top, bot], axis=-1)


def b1_correction_form(problem, theta, omega):
    """O(eta) drift correction of the alternating scheme, backward-error form.

    Equivalent to b1_matrix_form:

        b1 = -0.5 * (grad b0) b0 - (Jtw g_omega, 0),

    where grad b0 = [[-Jtt, -Jtw], [Jwt, Jww]] is the Jacobian of the
    leading drift.  The second term is the shear left over because the
    discriminator update is consumed by the generator within the same
    alternating step.
    """
    theta = np.asarray(theta, dtype=float)
    omega = np.asarray(omega, dtype=float)
    g_th, g_om = problem.full_grads(theta, omega)
    jac = problem.jacobians(theta, omega)
    b0_th, b0_om = -g_th, g_om
    nab_top = -_mv(jac["dgt_dt"], b0_th) - _mv(jac["dgt_dw"], b0_om)
    nab_bot = _mv(jac["dgw_dt"], b0_th) + _mv(jac["dgw_dw"], b0_om)
    shear_top = _mv(jac["dgt_dw"], g_om)
    top = -0.5 * nab_top - shear_top
    bot = -0.5 * nab_bot
    return np.concatenate([top, bot], axis=-1)


@dataclass(frozen=True)
class SdeCoefficients:
    """Drift and diffusion of the approximating SDE at one state."""

    mode: str
    eta: float
    beta: float
    b0: np.ndarray
    b1: np.ndarray
    drift: np.ndarray
    sigma: np.ndarray


def sde_coefficients(problem, theta, omega, eta, batch_size, mode):
    """Assemble the SDE coefficients at a given state.

    mode selects the drift: "sml" uses b0 alone, "alt" adds eta * b1.
    The diffusion is sqrt(2 / beta) blockdiag(Sigma_theta^{1/2},
    Sigma_omega^{1/2}) with beta = 2 * batch_size / eta in both modes.
    """
    if mode not in MODES:
        raise ValueError("mode must be one of %s, got %r" % (MODES, mode))
    theta = np.asarray(theta, dtype=float)
    omega = np.asarray(omega, dtype=float)
    g_th, g_om = problem.full_grads(theta, omega)
    b0 = np.concatenate([-g_th, g_om], axis=-1)
    if mode == "alt":
        b1 = b1_correction_form(problem, theta, omega)
    else:
        b1 = np.zeros_like(b0)
    beta = 2.0 * batch_size / eta
    sig_th, sig_om = problem.covariances(theta, omega)
    root_th = psd_sqrt(sig_th)
    root_om = psd_sqrt(sig_om)
    d_t, d_w = problem.d_theta, problem.d_omega
    lead = np.broadcast_shapes(root_th.shape[:-2], root_om.shape[:-2])
    sigma = np.zeros(lead + (d_t + d_w, d_t + d_w))
    sigma[..., :d_t, :d_t] = root_th
    sigma[..., d_t:, d_t:] = root_om
    sigma *= np.sqrt(2.0 / beta)
    return SdeCoefficients(mode=mode, eta=float(eta), beta=float(beta),
                           b0=b0, b1=b1, drift=b0 + eta * b1, sigma=sigma)


def sde_coefficient_fns(problem, eta, batch_size, mode, beta=None):
    """Vectorised (drift_fn, sigma_fn, beta) for euler_maruyama.

    Both returned callables act on joined states of shape (..., D) with
    D = d_theta + d_omega.  drift_fn returns (..., D).  sigma_fn returns
    the diagonal (..., D) when both players are one-dimensional (the
    blocks are scalars, so no eigendecomposition is needed) and a full
    matrix (..., D, D) otherwise.

    beta defaults to 2 * batch_size / eta.  Diagnostics that vary eta at
    a fixed noise temperature may pass beta explicitly to decouple the
    drift correction from the noise scale.
    """
    if mode not in MODES:
        raise ValueError("mode must be one of %s, got %r" % (MODES, mode))
    if beta is None:
        beta = 2.0 * batch_size / eta
    noise_scale = np.sqrt(2.0 / beta)
    d_t, d_w = problem.d_theta, problem.d_omega
    scalar_blocks = (d_t == 1 and d_w == 1)

    def drift_fn(x):
        theta, omega = split_state(problem, x)
        g_th, g_om = problem.full_grads(theta, omega)
        b0 = np.concatenate([-g_th, g_om], axis=-1)
        if mode == "alt":
            return b0 + eta * b1_correction_form(problem, theta, omega)
        return b0

    def sigma_fn(x):
        theta, omega = split_state(problem, x)
        sig_th, sig_om = problem.covariances(theta, omega)
        if scalar_blocks:
            diag = np.concatenate([sig_th[..., 0], sig_om[..., 0]], axis=-1)
            return noise_scale * np.sqrt(diag)
        root_th = psd_sqrt(sig_th)
        root_om = psd_sqrt(sig_om)
        lead = np.broadcast_shapes(root_th.shape[:-2], root_om.shape[:-2])
        sigma = np.zeros(lead + (d_t + d_w, d_t + d_w))
        sigma[..., :d_t, :d_t] = root_th
        sigma[..., d_t:, d_t:] = root_om
        return noise_scale * sigma

    return drift_fn, sigma_fn, beta


@dataclass(frozen=True)
class SdePath:
    """Recorded Euler-Maruyama output.

    times holds the recorded time points; states stacks the recorded
    states along axis 0, or is None when an observer consumed them.
    final is the state after the last step regardless of recording.
    """

    times: np.ndarray
    states: np.ndarray | None
    final: np.ndarray


def euler_maruyama(drift_fn, sigma_fn, init, dt, n_steps, rng,
                   record_every=1, observer=None):
    """Integrate dX = drift dt + sigma dW with the Euler-Maruyama scheme.

    init may carry leading replica axes; all replicas share the step
    loop and draw independent Gaussian increments.  sigma_fn may return
    either a diagonal (same shape as the state) or a full matrix with
    one extra trailing axis; see sde_coefficient_fns.

    Every record_every steps (and at steps 0 and n_steps) the state is
    either stored on the returned SdePath or, if observer is given,
    passed to observer(step_index, time, state) and discarded.  A
    non-finite state aborts with FloatingPointError naming the step.
    """
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    if record_every < 1:
        raise ValueError("record_every must be at least 1")
    state = np.array(init, dtype=float)
    times = []
    stored = [] if observer is None else None

    def emit(step):
        t = step * dt
        times.append(t)
        if observer is None:
            stored.append(state.copy())
        else:
            observer(step, t, state)

    emit(0)
    sqrt_dt = np.sqrt(dt)
    for step in range(1, int(n_steps) + 1):
        drift = drift_fn(state)
        sigma = sigma_fn(state)
        dw = sqrt_dt * rng.standard_normal(state.shape)
        if sigma.ndim == state.ndim:
            noise = sigma * dw
        else:
            noise = _mv(sigma, dw)
        state = state + dt * drift + noise
        if not np.all(np.isfinite(state)):
            raise FloatingPointError(
                "non-finite state at step %d (t = %.6g)" % (step, step * dt))
        if step % record_every == 0 or step == int(n_steps):
            emit(step)
    return SdePath(times=np.asarray(times),
                   states=None if observer is not None else np.asarray(stored),
                   final=state)
