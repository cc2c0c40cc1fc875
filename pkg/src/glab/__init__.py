"""Entropy, pressure and spectral experiments for group extensions of random subshifts of finite type."""

from __future__ import annotations

__version__ = "0.1.0"

from .env_sft import (
    Environment,
    RandomSFT,
    build_cyclic_environment,
    check_topological_mixing,
    count_admissible,
    prune_sft,
    return_times,
    transfer_product,
    validate_sft,
)
from .errors import (
    BudgetExceeded,
    EstimationError,
    GlabError,
    InfimumNotAttained,
    InvalidArgument,
    MixingError,
    SchemaError,
    StructuralError,
)
from .extension import (
    SkewLabeling,
    cocycle,
    constrained_partition,
    constrained_table,
    entropy_gap_experiment,
    gurevich_estimate,
    gurevich_series,
    partition_function,
    reachable_group_elements,
)
from .groups import (
    FiniteCyclic,
    FreeGroup,
    Lattice,
    folner_defect,
    kesten_ladder,
    kesten_spectral_radius,
)
from .potential import LocallyConstantPotential, birkhoff_sum, kappa, variation, variation_bound
from .transfer import (
    ExtensionOperator,
    apply_extension_operator,
    fiber_ruelle,
    markov_average_and_Tn,
    normalize_potential,
    spectral_radius_H,
)
from .varprin import TiltedPressureProblem, equilibrium_drift, minimize_pressure, verify_variational_identity
