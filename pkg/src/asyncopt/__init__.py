"""Asynchronous stochastic first-order optimization under arbitrary delays.

Simulation of the delayed round protocol, asynchronous mini-batching with
stale-gradient filtering, the quantile-adaptive doubling sweep, classical
base optimizers with tuned schedules, exact delay-quantile statistics,
closed-form rate guarantees, and exact lower-bound constructions.
"""

from .bounds import (
    BoundReport,
    machine_average_report,
    minibatched_rate,
    rate_acsa,
    rate_psgd_lipschitz,
    rate_rsgd_nonconvex,
    rate_sgd_convex_smooth,
    scaling_rate,
    simulate_fixed_stepsize,
    small_stepsize_lower_bound,
    staircase_lower_bound,
)
from .delays import (
    DelaySequence,
    DelayStats,
    WorkerSchedule,
    compute_stats,
    constant_delay,
    half_outlier,
    load_delays,
    one_fast_machine,
    quantile_support,
    save_delays,
    simulate_workers,
    staircase_adversarial,
    worker_delays,
)
from .engine import RoundLog, run
from .errors import (
    BudgetError,
    ConfigurationError,
    DomainError,
    ParameterError,
    ProtocolError,
    ScheduleError,
)
from .minibatch import (
    MiniBatchConfig,
    MiniBatchDiagnostics,
    MiniBatchRunner,
    Schedule,
    Strictness,
    check_dispatch_count,
    count_dispatches,
    derive_schedule,
    dispatch_floor,
    run_minibatched,
)
from .optimizers import (
    AcSa,
    FixedQueryAlgorithm,
    OptimizerOutput,
    QueryAlgorithm,
    Sgd,
    VanillaAsyncSgd,
    acsa_accelerated,
    psgd_convex_lipschitz,
    run_synchronous,
    sgd_convex_smooth,
    sgd_nonconvex,
)
from .problems import (
    Ball,
    GradientOracle,
    Problem,
    initial_distance,
    initial_gap,
    make_convex_lipschitz,
    make_logistic,
    make_nonconvex_smooth,
    make_quadratic,
    problem_from_config,
)
from .sweep import (
    EnvelopeReport,
    Setting,
    SweepResult,
    SweepSchedule,
    check_sweep_budget,
    make_schedule,
    run_adaptive_sweep,
    sweep_rate_envelope,
)

__version__ = "0.1.0"
