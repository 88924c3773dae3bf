"""Transferable-utility matching: optimal assignment by column generation and moment-matching estimation."""

from .assignment import (
    AggregateMatching,
    AssignmentError,
    DualSolution,
    IndividualMatching,
    aggregate,
    brute_force_optimal,
    check_optimality,
    disaggregate,
    solve_naive,
    solve_refined,
)
from .estimation import (
    EstimationError,
    ObservedMatching,
    SmmOptions,
    SmmResult,
    build_smm_lp,
    moments,
    nrmse,
    run_smm_rroa,
    simulated_entropy,
    solve_smm_direct,
)
from .market import (
    MarketInstance,
    Population,
    SurplusBasis,
    TypeSpace,
    build_surplus,
    make_instance,
    match_values,
)
from .rroa import ChoiceSets, RroaError, RroaTrace, build_restricted, price, run_rroa
from .shocks import (
    AdditiveAttributeNormal,
    CorrelatedNormal,
    IidGumbel,
    IidNormal,
    ShockPanel,
    center_shocks,
    gumbel_matched_moments,
    sample_shocks,
)

__version__ = "0.1.0"
