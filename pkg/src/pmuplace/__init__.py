"""Optimal PMU placement for power system dynamic state estimation.

Pipeline: load a case, solve its power flow, Kron-reduce to generator
internal nodes, compute empirical observability Gramians around the
operating point, maximize the log-determinant over sensor subsets, and
validate placements with square-root unscented Kalman filtering.
"""

__version__ = "0.1.0"

from .backend import active_backend
from .dynamics import (
    FaultSchedule,
    Trajectory,
    build_fault_schedule,
    derivative_m1,
    derivative_m2,
    measure,
    modified_euler_step,
    simulate,
)
from .errors import PmuPlaceError
from .estimation import (
    EstimationRun,
    EstimatorConfig,
    Scenario,
    SquareRootUkf,
    count_convergent,
    method1_scenario,
    method2_scenario,
    run_estimation,
    srukf_step,
    state_error,
)
from .gramian import (
    Gramian,
    GramianBank,
    GramianConfig,
    empirical_gramian,
    linear_gramian_oracle,
    logdet,
    min_max_eigenvalue,
    per_generator_bank,
)
from .network import (
    PowerFlowSolution,
    PowerSystemCase,
    ReducedModel,
    apply_load_scaling,
    build_ybus,
    init_steady_state,
    kron_reduce,
    load_case,
    solve_power_flow,
)
from .placement import Placement, evaluate, exhaustive, greedy, incremental, mads
from .robustness import (
    RobustnessReport,
    contingency_case,
    contingency_study,
    cross_evaluate,
    fluctuation_case,
    fluctuation_study,
    overlap_ratio,
    ranked_contingency_branches,
)

__all__ = [name for name in dir() if not name.startswith("_")]
