"""Extreme value laws, hitting time statistics and escape rates for
full-branch expanding interval maps.

Subpackage map:

* ``intervals``  exact set algebra on finite unions of circle arcs
* ``maps``       full-branch maps, preimages, periodic points, pressure
* ``events``     exceedance sets, annuli, extremal indices, exact oracles
* ``brackets``   closed-form error brackets and blocking optimizers
* ``montecarlo`` seeded, reproducible large-scale estimators
* ``cli``        command-line entry points
"""

from .intervals import CIRCLE, LINE, Interval, IntervalUnion, ball, circle_distance
from .maps import (
    AffineBranch,
    FullBranchMap,
    Potential,
    SmoothBranch,
    SymbolicOrbit,
    bv_norm_indicator,
    periodic_points,
    pressure_sequence,
    symbolic_sample,
    ulam_matrix,
    weighted_periodic_sum,
)
from .events import (
    EventFamily,
    Observable,
    ThresholdSchedule,
    annulus_set,
    dprime_sum,
    event_family,
    exact_evl_prob,
    exact_hts_prob,
    exceedance_set,
    first_return_time,
    survivor_set,
    theta_limit,
    theta_n,
    threshold_for,
)
from .brackets import (
    BlockEstimate,
    BlockingParams,
    DecayModel,
    ErrorBudget,
    EscapeWindow,
    annuli_gap_bound,
    limit_evl_bracket,
    escape_rate_window,
    exp_approx_error,
    optimize_kt_evl,
    optimize_kt_hts,
    survivor_block_estimate,
    general_evl_bracket,
    sharp_evl_bracket,
    sharp_hts_bracket,
    upsilon,
    xi,
)
from .montecarlo import (
    ECDF,
    EscapeFit,
    EvlEstimate,
    SweepConfig,
    SweepTable,
    convergence_sweep,
    estimate_escape_rate,
    estimate_evl,
    estimate_evl_grid,
    estimate_hts,
    ulam_escape_oracle,
    wilson_halfwidth,
)

__version__ = "0.1.0"
