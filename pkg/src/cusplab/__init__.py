"""Entropy bounds for diagonal flows on the space of unimodular lattices."""
from .weyl import (
    DiagonalFlow,
    LinearFunctional,
    Orientation,
    ParabolicSubgroup,
    enumerate_parabolics,
    entropy,
    h_phi,
    multiset_le,
    orientation,
    project,
    weyl_double_cosets,
)
from .bounds import (
    bound_at_P,
    bound_cusp,
    bound_weighted,
    closed_form_B_bound,
    closed_form_hinf,
    closed_form_hinf_Pk,
    optimize_phi,
)
from .lattice import (
    Lattice,
    LatticeSnapshot,
    ToleranceConfig,
    alpha_min_covol,
    classify,
    cusp_witness,
    successive_minima_data,
)
from .coding import (
    Coding,
    Trajectory,
    build_partition,
    run,
    schedule,
    threshold_intervals,
    verify_budgets,
)

__version__ = "0.1.0"
