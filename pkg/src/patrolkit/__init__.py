"""Strategy synthesis for adversarial patrolling on graphs with timed edges."""

from ._kernels import NUMBA_ENABLED, backend_name
from .evaluator import (
    EvalStats,
    EvaluationError,
    ProtectionTable,
    RvalReport,
    SofteningConfig,
    claim_equality_warnings,
    eval_term,
    forward_protection,
    hard_value,
    protection_table,
    rval_of,
    soft_eval,
    soft_value_gradient,
)
from .generators import (
    GridSpec,
    gen_grid,
    gen_office,
    gen_points_complete,
    office_tour,
    strategy_from_tour,
    synthetic_atm_points,
    tour_time,
)
from .graph import (
    GraphFormatError,
    GraphStats,
    PatrollingGraph,
    TargetSpec,
    graph_stats,
    is_strongly_connected,
    load_graph,
    parse_graph,
    serialize_graph,
)
from .optimizer import (
    BestResult,
    OptRun,
    OptimizerConfig,
    ascent_step,
    default_config,
    optimize,
    regstar,
)
from .oracle import (
    PathEntry,
    PathLimitError,
    PathSet,
    brute_protection,
    enumerate_paths,
    fd_gradient,
    mc_protection,
)
from .strategy import (
    NormJacobian,
    Strategy,
    StrategyIndex,
    build_index,
    is_deterministic_update,
    normalize_full,
    normalize_pivot,
    random_strategy,
    strategy_from_json,
    strategy_to_json,
)

__version__ = "0.1.0"
