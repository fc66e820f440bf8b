"""Mean-field games on the torus: problems, residuals, adversarial training."""

from .problems import (  # noqa: F401
    ClosedFormSolution,
    ErgodicMfgProblem,
    TdMfgProblem,
    hamiltonian,
    make_test_problem,
    oracle_eval,
)
from .residuals import TdLosses, ergodic_residuals, td_losses  # noqa: F401
from .train import (  # noqa: F401
    NumericalAbort,
    SolverConfig,
    TRACE_COLUMNS,
    TrainResult,
    relative_l2_error,
    train_mfgan,
)
