"""Monte Carlo error estimation, rate fits and bound evaluation."""
from .rates import (
    ErrorRow,
    ErrorTable,
    RateFit,
    fit_loglog,
    fit_rate,
    modes_for_policy,
    predicted_exponent,
    weak_error_exact,
)
from .montecarlo import (
    MonteCarlo,
    semilinear_distance_table,
    strong_error_mc,
    strong_error_table_mc,
    path_moments,
    sup_moment,
    variation_fd_check,
    weak_and_strong_tables,
    weak_error_mc,
    weak_error_table_mc,
)
from .bounds import (
    BoundReport,
    Seminorms,
    eval_apriori_bound,
    eval_kp_bound,
    eval_mollify_bound,
    eval_perturbation_bound,
    eval_semilinear_distance_bound,
)
