"""Discrete two-player training updates, their SDE limits, and weak-error studies."""

from .toys import (  # noqa: F401
    BilinearToy,
    CoupledBilinearToy,
    LinearGeneratorToy,
    QuadraticToy,
    ToyGanProblem,
    make_toy,
)
from .updates import (  # noqa: F401
    TrainState,
    alt_step,
    full_gradients,
    gradient_covariances,
    minibatch_gradients,
    run_training,
    sample_batch,
    sml_step,
)
from .sde import (  # noqa: F401
    SdeCoefficients,
    SdePath,
    b1_correction_form,
    b1_matrix_form,
    euler_maruyama,
    join_state,
    psd_sqrt,
    sde_coefficient_fns,
    sde_coefficients,
    split_state,
)
from .weak_error import (  # noqa: F401
    TEST_FUNCTIONS,
    WeakErrorResult,
    weak_error_table,
)
