"""Shared fixtures: one cached 1D training run reused by several tests."""

import numpy as np
import pytest

from mfglab.mfg import SolverConfig, make_test_problem, train_mfgan

TRAIN_ITERS = 6000


@pytest.fixture(scope="session")
def trained_1d():
    """A 6000-iteration 1D solver run with the closed-form oracle attached.

    Session-scoped because it costs tens of seconds; every consumer treats
    the result as read-only.
    """
    problem, oracle = make_test_problem(1)
    config = SolverConfig(dim=1, outer_iters=TRAIN_ITERS, eval_every=200, seed=0)
    return train_mfgan(problem, config, oracle=oracle)


@pytest.fixture()
def rng():
    return np.random.default_rng(0)
