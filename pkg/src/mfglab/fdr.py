"""Fluctuation-dissipation diagnostics and the learning-rate scheduler.

At stationarity of the approximating SDEs, gradient norms (dissipation)
balance the minibatch-noise covariances (fluctuation).  Two relations
are estimated from trajectory samples:

* the second-order relation, whose right-hand side carries an O(eta)
  correction term for the alternating dynamics,

      E[|g_t|^2 - |g_w|^2] = beta^{-1} E[Tr(S_t H_t + S_w H_w)]
                             - (eta/2) E[g_t' H_t g_t + g_w' H_w g_w],

* the first-order relation that only needs gradients and covariances,

      E[Theta' g_t - W' g_w] = beta^{-1} E[Tr(S_t + S_w)],

with g the population gradients of the objective Phi, H the Hessian
blocks of Phi and S the per-pair gradient covariances, all in closed
form for the toy problems.  Expectations are time averages over the
second half of the trajectory; standard errors come from block means
so that autocorrelation is accounted for, and a drift flag is raised
when first- and second-half means disagree beyond their error bars.

The first-order relation drives the learning-rate scheduler: when the
measured ratio of its two sides is within epsilon of 1, the iterates
are judged equilibrated at the current temperature and eta is decayed
by the factor (1 - delta).
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import NamedTuple

import numpy as np

from .dynamics.sde import euler_maruyama, join_state, sde_coefficient_fns

MIN_POST_BURN = 1000


class CovEstimate(NamedTuple):
    """Unbiased minibatch covariance estimates and the batch size used."""

    sigma_theta: np.ndarray
    sigma_omega: np.ndarray
    batch_size: int


def cov_estimators(problem, theta, omega, batch):
    """Sample covariances of the per-pair gradients over one minibatch.

    batch holds (i, j) index pairs of shape (..., B, 2) with B >= 2.
    The estimators center at the batch mean and divide by B - 1, which
    makes their average over all possible batches equal the population
    covariances of the problem.
    """
    theta = np.asarray(theta, dtype=float)
    omega = np.asarray(omega, dtype=float)
    batch = np.asarray(batch)
    n_batch = batch.shape[-2]
    if n_batch < 2:
        raise ValueError("covariance estimation needs a batch of size >= 2")
    g_th, g_om = problem.batch_pair_grads(theta, omega, batch)

    def _hat(g):
        c = g - g.mean(axis=-2, keepdims=True)
        return np.einsum("...ki,...kj->...ij", c, c) / (n_batch - 1)

    return CovEstimate(sigma_theta=_hat(g_th), sigma_omega=_hat(g_om),
                       batch_size=int(n_batch))


@dataclass(frozen=True)
class FdrEstimate:
    """Time-averaged sides of a fluctuation-dissipation relation.

    rhs_eta_term is zero (with zero error) for the first-order relation
    and for the simultaneous dynamics, where no O(eta) correction
    exists.  gap = lhs - (rhs_beta_term + rhs_eta_term); ratio is
    lhs / rhs for the trigger test.  drift_detected reports whether the
    first and second half of the averaging window disagree by more than
    two combined standard errors, which indicates the trajectory had
    not reached stationarity.
    """

    lhs: float
    lhs_se: float
    rhs_beta_term: float
    rhs_beta_se: float
    rhs_eta_term: float
    rhs_eta_se: float
    gap: float
    gap_se: float
    ratio: float
    n_samples: int
    drift_detected: bool


def _prepare(samples):
    """Coerce samples to (T, R, D) and drop the burn-in first half."""
    samples = np.asarray(samples, dtype=float)
    if samples.ndim == 2:
        samples = samples[:, None, :]
    if samples.ndim != 3:
        raise ValueError("samples must have shape (T, D) or (T, R, D)")
    t_total = samples.shape[0]
    post = samples[t_total // 2:]
    n = post.shape[0] * post.shape[1]
    if n < MIN_POST_BURN:
        raise ValueError("only %d post-burn-in samples; need at least %d"
                         % (n, MIN_POST_BURN))
    return post, n


def _series_stats(series, n_blocks=32):
    """Mean, block-mean standard error and drift flag of a (T, R) series.

    Contiguous time blocks (each pooling all chains) serve as nearly
    independent replicates, so the standard error absorbs the
    autocorrelation of the underlying dynamics.  Series that are
    constant up to float rounding (state-independent covariance terms
    produce these) are reported drift-free: comparing half-means whose
    only variation is arithmetic rounding would turn the test into a
    coin flip.
    """
    t_len = series.shape[0]
    blocks = np.array([b.mean() for b in
                       np.array_split(series, min(n_blocks, t_len), axis=0)])
    mean = float(series.mean())
    se = float(blocks.std(ddof=1) / np.sqrt(blocks.size))
    if blocks.std(ddof=1) <= 1e-12 * max(1.0, abs(mean)):
        return mean, se, False
    half = blocks.size // 2
    first, second = blocks[:half], blocks[half:]
    se_halves = np.sqrt(first.var(ddof=1) / first.size
                        + second.var(ddof=1) / second.size)
    drift = bool(abs(first.mean() - second.mean()) > 2.0 * se_halves)
    return mean, se, drift


def _trace_dot(a, b):
    """Tr(a @ b) over the trailing two axes."""
    return np.einsum("...ij,...ji->...", a, b)


def _quad(g, h):
    """g' h g over the trailing axes."""
    return np.einsum("...i,...ij,...j->...", g, h, g)


def fdr1_gap(samples, problem, eta, beta):
    """Estimate both sides of the second-order relation on a trajectory.

    samples holds joined states of shape (T, D) or (T, R, D) from a run
    of the alternating dynamics at learning rate eta and inverse
    temperature beta (pass eta = 0 for the simultaneous dynamics, whose
    relation has no O(eta) term).  The first half is discarded as
    burn-in; at least 1000 pooled samples must remain.
    """
    post, n = _prepare(samples)
    d_t = problem.d_theta
    theta, omega = post[..., :d_t], post[..., d_t:]
    g_th, g_om = problem.full_grads(theta, omega)
    jac = problem.jacobians(theta, omega)
    h_th, h_om = jac["dgt_dt"], jac["dgw_dw"]
    s_th, s_om = problem.covariances(theta, omega)
    lhs_series = np.sum(g_th * g_th, axis=-1) - np.sum(g_om * g_om, axis=-1)
    beta_series = (_trace_dot(s_th, h_th) + _trace_dot(s_om, h_om)) / beta
    eta_series = -0.5 * eta * (_quad(g_th, h_th) + _quad(g_om, h_om))
    lhs, lhs_se, drift_l = _series_stats(lhs_series)
    rhs_b, rhs_b_se, drift_b = _series_stats(beta_series)
    rhs_e, rhs_e_se, _ = _series_stats(eta_series)
    gap, gap_se, _ = _series_stats(lhs_series - beta_series - eta_series)
    rhs = rhs_b + rhs_e
    ratio = lhs / rhs if rhs != 0.0 else float("nan")
    return FdrEstimate(lhs=lhs, lhs_se=lhs_se,
                       rhs_beta_term=rhs_b, rhs_beta_se=rhs_b_se,
                       rhs_eta_term=rhs_e, rhs_eta_se=rhs_e_se,
                       gap=gap, gap_se=gap_se, ratio=ratio, n_samples=n,
                       drift_detected=drift_l or drift_b)


def fdr2_gap(samples, problem, beta):
    """Estimate both sides of the first-order relation on a trajectory.

    Only gradients and covariances enter, so this is the cheap
    diagnostic suitable for scheduling.  Burn-in and error bars as in
    fdr1_gap.
    """
    post, n = _prepare(samples)
    d_t = problem.d_theta
    theta, omega = post[..., :d_t], post[..., d_t:]
    g_th, g_om = problem.full_grads(theta, omega)
    s_th, s_om = problem.covariances(theta, omega)
    lhs_series = np.sum(theta * g_th, axis=-1) - np.sum(omega * g_om, axis=-1)
    tr = np.trace(s_th, axis1=-2, axis2=-1) + np.trace(s_om, axis1=-2, axis2=-1)
    rhs_series = tr / beta
    lhs, lhs_se, drift_l = _series_stats(lhs_series)
    rhs, rhs_se, drift_r = _series_stats(rhs_series)
    gap, gap_se, _ = _series_stats(lhs_series - rhs_series)
    ratio = lhs / rhs if rhs != 0.0 else float("nan")
    return FdrEstimate(lhs=lhs, lhs_se=lhs_se,
                       rhs_beta_term=rhs, rhs_beta_se=rhs_se,
                       rhs_eta_term=0.0, rhs_eta_se=0.0,
                       gap=gap, gap_se=gap_se, ratio=ratio, n_samples=n,
                       drift_detected=drift_l or drift_r)


def sample_sde_trajectory(problem, mode, eta, n_steps, dt, chains, rng,
                          batch_size=2, beta=None, init=None):
    """Simulate the approximating SDE and return states (T+1, chains, D).

    The chains start from a small Gaussian cloud around the problem's
    default initial state (or around init) so that they decorrelate
    quickly; beta defaults to 2 * batch_size / eta and may be fixed
    explicitly for temperature-controlled diagnostics.
    """
    if chains < 1:
        raise ValueError("need at least one chain")
    drift_fn, sigma_fn, beta = sde_coefficient_fns(problem, eta, batch_size,
                                                   mode, beta=beta)
    if init is None:
        theta0, omega0 = problem.default_init()
        init = join_state(theta0, omega0)
    init = np.asarray(init, dtype=float)
    cloud = init + 0.05 * rng.standard_normal((chains, init.size))
    path = euler_maruyama(drift_fn, sigma_fn, cloud, dt=dt, n_steps=n_steps,
                          rng=rng, record_every=1)
    return path.states


@dataclass(frozen=True)
class SchedulerState:
    """State of the fluctuation-dissipation learning-rate scheduler.

    The current learning rate is derived, never stored: after k triggers
    eta equals eta0 * (1 - delta) ** k exactly, and beta = 2 B / eta is
    recomputed from it, so repeated decays cannot accumulate float
    drift beyond that single expression.
    """

    eta0: float
    epsilon: float
    delta: float
    batch_size: int
    trigger_count: int = 0

    def __post_init__(self):
        if self.eta0 <= 0.0:
            raise ValueError("eta0 must be positive")
        if self.epsilon <= 0.0:
            raise ValueError("epsilon must be positive")
        if not 0.0 < self.delta < 1.0:
            raise ValueError("delta must lie in (0, 1)")
        if self.batch_size < 1:
            raise ValueError("batch_size must be at least 1")
        if self.trigger_count < 0:
            raise ValueError("trigger_count must be nonnegative")

    @property
    def eta(self):
        return self.eta0 * (1.0 - self.delta) ** self.trigger_count

    @property
    def beta(self):
        return 2.0 * self.batch_size / self.eta


def scheduler_step(state, theta, omega, g_theta, g_omega,
                   cov_theta, cov_omega):
    """Apply the scheduling rule once.

    The trigger ratio is (theta' g_theta - omega' g_omega) divided by
    beta^{-1} Tr(cov_theta + cov_omega), with the minibatch gradients
    and covariance estimates evaluated at the current iterate.  If the
    ratio is within epsilon of 1, the learning rate decays by (1 -
    delta).  Returns (new_state, event) where event records the ratio,
    whether it triggered, and the learning rate before and after; a
    zero denominator leaves the state unchanged and notes the undefined
    ratio in the event.
    """
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    omega = np.atleast_1d(np.asarray(omega, dtype=float))
    g_theta = np.atleast_1d(np.asarray(g_theta, dtype=float))
    g_omega = np.atleast_1d(np.asarray(g_omega, dtype=float))
    cov_theta = np.atleast_2d(np.asarray(cov_theta, dtype=float))
    cov_omega = np.atleast_2d(np.asarray(cov_omega, dtype=float))
    eta_before = state.eta
    denom = (np.trace(cov_theta) + np.trace(cov_omega)) / state.beta
    event = {"eta_before": eta_before, "triggered": False,
             "eta_after": eta_before, "note": ""}
    if denom == 0.0:
        event["ratio"] = float("nan")
        event["note"] = "undefined ratio"
        return state, event
    ratio = float((theta @ g_theta - omega @ g_omega) / denom)
    event["ratio"] = ratio
    if abs(ratio - 1.0) < state.epsilon:
        state = replace(state, trigger_count=state.trigger_count + 1)
        event["triggered"] = True
        event["eta_after"] = state.eta
    return state, event


def scripted_scheduler_run(state, ratios):
    """Replay the scheduler against a scripted sequence of trigger ratios.

    Each scripted ratio r is realised exactly through synthetic inputs
    (theta = (1,), g_theta = (r,), omega = 0, covariance trace equal to
    the current beta), so the rule sees precisely the given ratio at
    every step regardless of earlier decays.  Returns the final state
    and the per-step event list with step indices attached.
    """
    events = []
    for step, r in enumerate(ratios):
        state, event = scheduler_step(
            state, theta=[1.0], omega=[0.0],
            g_theta=[float(r)], g_omega=[0.0],
            cov_theta=[[state.beta]], cov_omega=[[0.0]])
        event["step"] = step
        events.append(event)
    return state, events
