"""Discrete two-player training updates for the toy problems.

Two stochastic schemes are implemented on top of a ToyGanProblem:

* alternating updates (``alt``): the discriminator ascends first using a
  minibatch B drawn at the current iterate, then the generator descends
  at the *updated* discriminator using an independent minibatch Bbar,
* simultaneous updates (``sml``): both players move from the current
  iterate using one shared minibatch.

Both schemes share the learning rate eta.  States are kept as plain
float arrays so that whole replica ensembles (leading axes) can be
stepped in a single vectorised call.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .toys import ToyGanProblem

MODES = ("alt", "sml")


def sample_batch(rng, n_latent, n_data, batch_size, lead_shape=()):
    """Draw a minibatch of (latent index, data index) pairs.

    Indices are drawn independently and uniformly.  The result has shape
    ``lead_shape + (batch_size, 2)`` with integer entries; column 0 holds
    latent indices in [0, n_latent) and column 1 data indices in
    [0, n_data).
    """
    if batch_size < 1:
        raise ValueError("batch_size must be at least 1")
    shape = tuple(lead_shape) + (int(batch_size),)
    zi = rng.integers(0, n_latent, size=shape)
    xj = rng.integers(0, n_data, size=shape)
    return np.stack([zi, xj], axis=-1)


def full_gradients(problem, theta, omega):
    """Population gradients (g_theta, g_omega) at the given state."""
    theta = np.asarray(theta, dtype=float)
    omega = np.asarray(omega, dtype=float)
    return problem.full_grads(theta, omega)


def minibatch_gradients(problem, theta, omega, batch):
    """Minibatch gradient estimates averaged over the index pairs in batch."""
    theta = np.asarray(theta, dtype=float)
    omega = np.asarray(omega, dtype=float)
    return problem.minibatch_grads(theta, omega, np.asarray(batch))


def gradient_covariances(problem, theta, omega):
    """Population covariances (Sigma_theta, Sigma_omega) of the pair gradients."""
    theta = np.asarray(theta, dtype=float)
    omega = np.asarray(omega, dtype=float)
    return problem.covariances(theta, omega)


@dataclass(frozen=True)
class TrainState:
    """Iterate of a two-player training run.

    theta and omega may carry leading replica axes; iteration counts the
    completed update steps.
    """

    theta: np.ndarray
    omega: np.ndarray
    iteration: int = 0

    def __post_init__(self):
        object.__setattr__(self, "theta", np.asarray(self.theta, dtype=float))
        object.__setattr__(self, "omega", np.asarray(self.omega, dtype=float))


def alt_step(problem, state, eta, batch_b, batch_bbar):
    """One alternating update.

    The discriminator moves first:

        omega' = omega + eta * g_omega(theta, omega; B)
        theta' = theta - eta * g_theta(theta, omega'; Bbar)

    batch_b and batch_bbar are independent index batches as produced by
    sample_batch.  Returns the new TrainState.
    """
    _, g_om = problem.minibatch_grads(state.theta, state.omega, batch_b)
    omega_new = state.omega + eta * g_om
    g_th, _ = problem.minibatch_grads(state.theta, omega_new, batch_bbar)
    theta_new = state.theta - eta * g_th
    return replace(state, theta=theta_new, omega=omega_new,
                   iteration=state.iteration + 1)


def sml_step(problem, state, eta, batch):
    """One simultaneous update: both players move from the current iterate.

    A single shared batch is used for both gradient estimates:

        theta' = theta - eta * g_theta(theta, omega; B)
        omega' = omega + eta * g_omega(theta, omega; B)
    """
    g_th, g_om = problem.minibatch_grads(state.theta, state.omega, batch)
    theta_new = state.theta - eta * g_th
    omega_new = state.omega + eta * g_om
    return replace(state, theta=theta_new, omega=omega_new,
                   iteration=state.iteration + 1)


def run_training(problem, mode, eta, n_steps, batch_size, rng,
                 init=None, record_every=0):
    """Run n_steps of alt or sml training and return the final state.

    init defaults to problem.default_init(); pass (theta0, omega0) arrays
    to override, including arrays with leading replica axes for ensemble
    runs.  If record_every > 0, states are also collected every that many
    steps (plus the initial and final one) and returned as a list of
    TrainState in a (state, trace) tuple.
    """
    if mode not in MODES:
        raise ValueError("mode must be one of %s, got %r" % (MODES, mode))
    if eta <= 0.0:
        raise ValueError("eta must be positive")
    theta0, omega0 = init if init is not None else problem.default_init()
    state = TrainState(theta=theta0, omega=omega0)
    lead = np.broadcast_shapes(state.theta.shape[:-1], state.omega.shape[:-1])
    trace = [state] if record_every else None
    for _ in range(int(n_steps)):
        if mode == "alt":
            batch_b = sample_batch(rng, problem.n_latent, problem.n_data,
                                   batch_size, lead_shape=lead)
            batch_bbar = sample_batch(rng, problem.n_latent, problem.n_data,
                                      batch_size, lead_shape=lead)
            state = alt_step(problem, state, eta, batch_b, batch_bbar)
        else:
            batch = sample_batch(rng, problem.n_latent, problem.n_data,
                                 batch_size, lead_shape=lead)
            state = sml_step(problem, state, eta, batch)
        if record_every and (state.iteration % record_every == 0):
            trace.append(state)
    if record_every:
        if trace[-1].iteration != state.iteration:
            trace.append(state)
        return state, trace
    return state
