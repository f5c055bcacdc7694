"""Equilibrium computation, sizing and simulation for two-round assessment voting."""
from .equilibrium import (
    CostParam,
    Equilibrium,
    EquilibriumKind,
    EquilibriumSet,
    asymmetric_roots,
    c_star,
    d_star,
    enumerate_equilibria,
    solve_symmetric,
    totally_mixed_roots,
)
from .poisson_core import (
    PivotQuery,
    SeriesTolerance,
    TruncationError,
    cross_sum,
    log_poisson_pmf,
    pivot_benefit_a,
    pivot_benefit_b,
    skellam_a_wins,
)
from .sizing_welfare import (
    ElectionParams,
    hoeffding_failure_bound,
    n1_star,
    reproduce_table2,
    welfare_report,
)
from .simulator import SelectionPolicy, SimConfig, simulate_av

__all__ = [name for name in dir() if not name.startswith("_")]
