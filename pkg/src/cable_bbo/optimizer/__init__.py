from .objectives import (
    GradientConfig,
    InferenceProblem,
    eval_distance_cost,
    eval_g1,
    eval_mse,
    gradient_minimize,
    reconstruction_loss,
)
from .pareto import crowding_distance, nondominated_mask, nondominated_rank
from .search import (
    ParetoPoint,
    SearchResult,
    pareto_front,
    run_gradient,
    run_motpe,
    run_tpe,
    select_execution,
)
from .tpe import (
    Dimension,
    ParzenEstimator,
    SearchSpace,
    TPEConfig,
    Trial,
    cable_space,
    default_gamma,
    motpe_minimize,
    random_search,
    tpe_minimize,
)
