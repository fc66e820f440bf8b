"""Adversarial training of the stationary mean-field game.

Two networks play against each other through shared PDE residuals: the
density player (network n_omega, density m = exp(n)/Z plus the trainable
free constant Hbar) descends

    L_D = mean fp^2 + beta_d * mean hjb^2 + lambda_u * (mean_batch n)^2

and the value player (network u_theta) descends

    L_G = mean hjb^2 + lambda_u * (mean_batch u)^2.

The coupling term keeps Hbar identified (it only enters the Hamiltonian
residual) and each mean penalty pins an additive constant the equations
leave free: the level of u (the stationary system only fixes u up to a
constant) and the level of the raw log-density n (m = exp(n)/Z is
invariant under n -> n + c, so the level is pure bookkeeping; pinning it
keeps the exponentials well scaled).  Z is a quadrature value refreshed
from the current density network once per outer iteration and treated as
a constant inside each step.  Inside the step the density's exponent is
centered at its batch mean (see tracked_m_jet), because a frozen Z
exposes the scale of m to the residual losses: every term of the fp
residual is proportional to m, so the uncentered loss rewards pushing
the free level of n downward, about rate-many units per step under the
adaptive optimizer, until exp under/overflows.  Exponentiating the
network makes m positive by construction and the per-iteration
renormalization keeps it a probability density on the torus.
"""

import time
from dataclasses import dataclass

import numpy as np

from .. import nets, tape
from ..optim import NonFiniteGradient, make_optimizer
from ..tape import Var
from .residuals import ergodic_residuals

TRACE_COLUMNS = (
    "outer_iter", "loss_fp", "loss_hjb", "penalty_u", "loss_d", "loss_g",
    "rel_l2_u", "rel_l2_m", "hbar", "norm_const",
)


class NumericalAbort(Exception):
    """Training hit a non-finite loss or gradient."""

    def __init__(self, step, message):
        super().__init__(f"outer iteration {step}: {message}")
        self.step = step


@dataclass(frozen=True)
class SolverConfig:
    """Everything tunable about a training run."""

    dim: int = 1
    outer_iters: int = 100_000
    n_theta: int = 1
    n_omega: int = 1
    batch_d: int = 128
    batch_g: int = 128
    beta_d: float = 1.0
    beta_g: float = 1.0
    lambda_u: float = 1.0
    rate_d: float = 1e-3
    rate_g: float = 1e-3
    optimizer: str = "adam"
    depth: int = 3
    width: int = 50
    seed: int = 0
    eval_grid: int = 256
    eval_points: int = 10_000
    eval_every: int = 100
    checkpoint_every: int = 0


@dataclass
class TrainResult:
    config: SolverConfig
    u_net: nets.Mlp
    m_net: nets.Mlp
    theta: np.ndarray
    omega: np.ndarray
    hbar: float
    norm_const: float
    trace: list
    seconds: float


def relative_l2_error(approx, exact):
    """||approx - exact||_2 / ||exact||_2 (plain l2 if exact is zero)."""
    approx = np.asarray(approx, dtype=np.float64)
    exact = np.asarray(exact, dtype=np.float64)
    denom = np.linalg.norm(exact)
    err = np.linalg.norm(approx - exact)
    return float(err if denom == 0.0 else err / denom)


def _build_nets(config):
    widths = (config.dim,) + (config.width,) * config.depth + (1,)
    u_net = nets.Mlp(widths, activation="tanh", periodic=True)
    m_net = nets.Mlp(widths, activation="tanh", periodic=True)
    return u_net, m_net


def _eval_points(config, rng):
    """Fixed evaluation/normalization point set: a grid in 1d, Monte Carlo else."""
    if config.dim == 1:
        return (np.arange(config.eval_grid) / config.eval_grid)[:, None]
    return rng.random((config.eval_points, config.dim))


def _density(n_vals, norm_const):
    return np.exp(n_vals) / norm_const


def _finite_or_abort(step, label, value):
    if not np.isfinite(value):
        raise NumericalAbort(step, f"{label} is {value!r}")
    return float(value)


def train_mfgan(problem, config, oracle=None, outdir=None):
    """Run the two-player scheme; returns a TrainResult with a metrics trace.

    With ``oracle`` given (a ClosedFormSolution) the trace includes
    relative l2 errors of u and m on the evaluation set.  With ``outdir``
    given, a non-finite loss dumps emergency checkpoints there before the
    NumericalAbort propagates.  ``outer_iters = 0`` returns the untouched
    initialization with an empty trace.
    """
    t0 = time.perf_counter()
    ss = np.random.SeedSequence(config.seed)
    seed_u, seed_m, seed_batch, seed_points = ss.spawn(4)
    batch_rng = np.random.default_rng(seed_batch)

    u_net, m_net = _build_nets(config)
    theta = u_net.init_params(seed_u)
    omega = np.concatenate([m_net.init_params(seed_m), [0.0]])  # trailing Hbar
    n_count = m_net.param_count

    opt_d = make_optimizer(config.optimizer, config.rate_d)
    opt_g = make_optimizer(config.optimizer, config.rate_g)

    points = _eval_points(config, np.random.default_rng(seed_points))
    oracle_u = oracle.u(points) if oracle is not None else None
    oracle_m = oracle.m(points) if oracle is not None else None

    def norm_constant(om):
        n_vals = nets.value_batch(m_net, om[:n_count], points)[:, 0]
        return float(np.mean(np.exp(n_vals)))

    def tracked_m_jet(om_var, x):
        """Raw value n and density jets m = exp(n)/Z, tracked in omega.

        The tracked exponent is centered at its batch mean and the mean is
        folded back into the constant factor, so the value of m is the
        plain exp(n)/Z while the within-step gradient is exactly invariant
        under n -> n + c.  Without the centering, the frozen normalizer
        exposes the scale of m to the residual losses and every term of
        the fp residual rewards shrinking it, which turns the free level
        of n into an unbounded descent direction.
        """
        nval, ngrad, ndiag = _scalar_jet_var(m_net, om_var[:n_count], x)
        nbar = nval.mean()
        scale = float(np.exp(nbar.value)) / norm_const
        mval = tape.exp(nval - nbar) * scale
        b = x.shape[0]
        m_col = mval.reshape(b, 1)
        return nval, (mval, m_col * ngrad, m_col * (ngrad * ngrad + ndiag))

    def plain_m_jet(om, x):
        nval, ngrad, ndiag = _scalar_jet(m_net, om[:n_count], x)
        mval = np.exp(nval) / norm_const
        m_col = mval[:, None]
        return mval, m_col * ngrad, m_col * (ngrad * ngrad + ndiag)

    trace = []

    def record(k):
        u_vals = nets.value_batch(u_net, theta, points)[:, 0]
        n_vals = nets.value_batch(m_net, omega[:n_count], points)[:, 0]
        m_vals = _density(n_vals, norm_const)
        u_jet = _scalar_jet(u_net, theta, points)
        m_jet = plain_m_jet(omega, points)
        hjb, fp = ergodic_residuals(problem, points, u_jet, m_jet, omega[-1])
        loss_fp = float(np.mean(fp * fp))
        loss_hjb = float(np.mean(hjb * hjb))
        penalty = float(np.mean(u_vals) ** 2)
        penalty_n = float(np.mean(n_vals) ** 2)
        row = {
            "outer_iter": k,
            "loss_fp": loss_fp,
            "loss_hjb": loss_hjb,
            "penalty_u": penalty,
            "loss_d": loss_fp + config.beta_d * loss_hjb
                      + config.lambda_u * penalty_n,
            "loss_g": loss_hjb + config.lambda_u * penalty,
            "hbar": float(omega[-1]),
            "norm_const": norm_const,
            "rel_l2_u": relative_l2_error(u_vals, oracle_u) if oracle is not None else np.nan,
            "rel_l2_m": relative_l2_error(m_vals, oracle_m) if oracle is not None else np.nan,
        }
        trace.append(row)

    step = -1
    try:
        norm_const = norm_constant(omega)
        for k in range(config.outer_iters):
            step = k
            norm_const = norm_constant(omega)
            if config.eval_every > 0 and k % config.eval_every == 0:
                record(k)
            if (outdir is not None and config.checkpoint_every > 0
                    and k % config.checkpoint_every == 0):
                nets.save_checkpoint(f"{outdir}/u_{k:06d}.ckpt", u_net, theta)
                nets.save_checkpoint(f"{outdir}/m_{k:06d}.ckpt", m_net, omega,
                                     extra_scalars=1)

            # density player: fp residual plus the Hbar-coupled hjb term,
            # plus a level pin on the raw log-density (m is invariant under
            # n -> n + c, and with Z frozen in-step the fp term alone would
            # ratchet the free level of n downward without bound)
            x_d = batch_rng.random((config.batch_d, config.dim))
            u_jet_const = _scalar_jet(u_net, theta, x_d)
            for _ in range(config.n_omega):
                om_var = Var(omega)
                nval, m_jet = tracked_m_jet(om_var, x_d)
                hjb, fp = ergodic_residuals(
                    problem, x_d, u_jet_const, m_jet, om_var[n_count])
                loss_d = ((fp * fp).mean() + config.beta_d * (hjb * hjb).mean()
                          + config.lambda_u * nval.mean() ** 2)
                _finite_or_abort(k, "discriminator loss", float(loss_d.value))
                tape.backward(loss_d)
                omega = opt_d.step(omega, om_var.grad)

            # value player: hjb residual plus the mean pin
            x_g = batch_rng.random((config.batch_g, config.dim))
            m_jet_const = plain_m_jet(omega, x_g)
            for _ in range(config.n_theta):
                th_var = Var(theta)
                uval, ugrad, udiag = _scalar_jet_var(u_net, th_var, x_g)
                hjb, _ = ergodic_residuals(
                    problem, x_g, (uval, ugrad, udiag), m_jet_const, omega[-1])
                loss_g = (hjb * hjb).mean() + config.lambda_u * uval.mean() ** 2
                _finite_or_abort(k, "generator loss", float(loss_g.value))
                tape.backward(loss_g)
                theta = opt_g.step(theta, th_var.grad)
        if config.outer_iters > 0:
            norm_const = norm_constant(omega)
            record(config.outer_iters)
    except (NumericalAbort, NonFiniteGradient) as exc:
        if outdir is not None:
            nets.save_checkpoint(f"{outdir}/u_abort.ckpt", u_net, theta)
            nets.save_checkpoint(f"{outdir}/m_abort.ckpt", m_net, omega, extra_scalars=1)
        if isinstance(exc, NonFiniteGradient):
            raise NumericalAbort(step, str(exc)) from exc
        raise

    return TrainResult(
        config=config,
        u_net=u_net,
        m_net=m_net,
        theta=theta,
        omega=omega[:n_count].copy(),
        hbar=float(omega[-1]),
        norm_const=norm_const,
        trace=trace,
        seconds=time.perf_counter() - t0,
    )


def _scalar_jet(net, params, x):
    v, g, s = nets.jet_batch(net, params, x)
    return v[:, 0], g[:, :, 0], s[:, :, 0]


def _scalar_jet_var(net, params, x):
    v, g, s = nets.jet_batch_var(net, params, x)
    return v[:, 0], g[:, :, 0], s[:, :, 0]
