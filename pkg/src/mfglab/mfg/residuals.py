"""Pointwise PDE residuals assembled from network jets.

Written against the dispatching tape helpers, so the same code path serves
plain evaluation (numpy arrays in, numpy arrays out, e.g. feeding the
closed-form jets to check the residuals vanish) and tracked evaluation
(tape Vars in, differentiable losses out) during training.

Jets are passed as (value, grad, diag2) triples with shapes (B,), (B, d),
(B, d); Laplacians are the row sums of diag2 and the divergence term of
the continuity equation is expanded by the product rule,

    div(m grad u) = grad m . grad u + m lap u.
"""

from typing import NamedTuple

import numpy as np

from .. import nets
from ..tape import Var
from .problems import hamiltonian


def ergodic_residuals(problem, x, u_jet, m_jet, hbar):
    """Stationary residuals at points x: returns (hjb, fp), each (B,).

    hjb = eps lap u + H0(x, grad u) - f(x, m) - Hbar
    fp  = eps lap m - grad m . grad u - m lap u
    """
    _, ug, us = u_jet
    mv, mg, ms = m_jet
    eps = problem.epsilon
    lap_u = us.sum(axis=-1)
    lap_m = ms.sum(axis=-1)
    hjb = eps * lap_u + hamiltonian(problem, x, ug) - problem.coupling(x, mv) - hbar
    fp = eps * lap_m - (mg * ug).sum(axis=-1) - mv * lap_u
    return hjb, fp


class TdLosses(NamedTuple):
    loss_d: object
    loss_g: object
    l_fp: object
    l_init: object
    l_hjb: object
    l_term: object


def _scalar_jet(net, params, points):
    """Jet of a scalar-output net, squeezed to (B,), (B, din), (B, din)."""
    if isinstance(params, Var):
        v, g, s = nets.jet_batch_var(net, params, points)
    else:
        v, g, s = nets.jet_batch(net, params, points)
    return v[:, 0], g[:, :, 0], s[:, :, 0]


def _scalar_value(net, params, points):
    if isinstance(params, Var):
        return nets.value_batch_var(net, params, points)[:, 0]
    return nets.value_batch(net, params, points)[:, 0]


def td_losses(problem, u_net, theta, m_net, omega, samples_d, samples_g,
              beta_d=1.0, beta_g=1.0):
    """Time-dependent training losses from interior and boundary samples.

    The networks take (s, x) with the time coordinate first.  ``samples_d``
    is a pair (interior points (B, 1+d), initial x (B0, d)) for the density
    player; ``samples_g`` is (interior points, terminal x) for the value
    player.  Either boundary batch may be None, dropping that penalty.
    ``theta``/``omega`` may be arrays (plain losses) or tape Vars (tracked).

        l_fp   = mean[ ds m + div(m b) - eps lap_x m ]^2,  b = grad_x u
        l_init = mean[ m(0, x) - m0(x) ]^2
        l_hjb  = mean[ ds u + eps lap_x u + H0(x, grad_x u) - f(x, m) ]^2
        l_term = mean[ u(T, x) - g(x) ]^2
        loss_d = l_fp + beta_d l_init,   loss_g = l_hjb + beta_g l_term
    """
    eps = problem.epsilon
    interior_d, init_x = samples_d
    interior_g, term_x = samples_g

    # continuity residual on the density player's batch
    interior_d = np.asarray(interior_d, dtype=np.float64)
    _, ugrad, udiag = _scalar_jet(u_net, theta, interior_d)
    mval, mgrad, mdiag = _scalar_jet(m_net, omega, interior_d)
    gu, lap_u = ugrad[:, 1:], udiag[:, 1:].sum(axis=-1)
    dm_dt, gm, lap_m = mgrad[:, 0], mgrad[:, 1:], mdiag[:, 1:].sum(axis=-1)
    # div(m b) with b = grad_x u, expanded by the product rule
    fp_res = dm_dt + (gm * gu).sum(axis=-1) + mval * lap_u - eps * lap_m
    l_fp = (fp_res * fp_res).mean()

    l_init = 0.0
    if init_x is not None:
        init_x = np.asarray(init_x, dtype=np.float64)
        points = np.concatenate([np.zeros((len(init_x), 1)), init_x], axis=1)
        r = _scalar_value(m_net, omega, points) - problem.initial_density(init_x)
        l_init = (r * r).mean()

    # Hamiltonian residual on the value player's batch
    interior_g = np.asarray(interior_g, dtype=np.float64)
    _, ugrad_g, udiag_g = _scalar_jet(u_net, theta, interior_g)
    du_dt = ugrad_g[:, 0]
    gu_g, lap_u_g = ugrad_g[:, 1:], udiag_g[:, 1:].sum(axis=-1)
    m_on_g = _scalar_value(m_net, omega, interior_g)
    x_g = interior_g[:, 1:]
    hjb_res = du_dt + eps * lap_u_g + hamiltonian(problem, x_g, gu_g) \
        - problem.coupling(x_g, m_on_g)
    l_hjb = (hjb_res * hjb_res).mean()

    l_term = 0.0
    if term_x is not None:
        term_x = np.asarray(term_x, dtype=np.float64)
        points = np.concatenate(
            [np.full((len(term_x), 1), problem.horizon), term_x], axis=1)
        r = _scalar_value(u_net, theta, points) - problem.terminal_cost(term_x)
        l_term = (r * r).mean()

    return TdLosses(
        loss_d=l_fp + beta_d * l_init,
        loss_g=l_hjb + beta_g * l_term,
        l_fp=l_fp, l_init=l_init, l_hjb=l_hjb, l_term=l_term,
    )
