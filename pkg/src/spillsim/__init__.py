"""Experiment simulation and bound verification under evolving interference."""

from .analysis import (
    BoundConstants,
    BoundReport,
    CigSequence,
    auto_radius,
    bias_bound,
    build_cig,
    cd_table,
    close_pair_schedule,
    cluster_degree,
    compute_bound_report,
    cov_bound_lit,
    exposure_lower_bound,
    lit,
    mse_bound,
    variance_bound,
)
from .design import (
    AssignmentMatrix,
    VerticalDesign,
    build_partitions,
    clusters_touching,
    make_design,
    region_partition,
    sample_assignment,
    single_block_partition,
    singleton_partition,
    union_component_partition,
)
from .env import (
    Environment,
    OutcomePanel,
    build_env,
    env_from_spec,
    initial_sensitivity,
    propagate_exact,
    simulate,
    treated_fraction,
    true_ate,
)
from .estimator import (
    DegenerateExposureError,
    HtReport,
    exposure_count,
    exposure_indicator,
    exposure_probability,
    ht_estimate,
)
from .graphs import (
    ErParams,
    GraphSequence,
    TrajectorySet,
    make_dynamic_er,
    make_metric,
    make_static,
    neighborhood,
    random_walk_trajectories,
    spatio_temporal_neighborhood,
)
from .oracle import (
    BoundCheck,
    BoundLedger,
    MomentReport,
    exact_moments,
    mc_moments,
    pair_table_rows,
    verify_bounds,
)

__version__ = "0.1.0"
