"""UAV data-harvesting planner under a probabilistic LoS channel.

Pipeline: synthesize Manhattan-type cities and ray-trace LoS statistics,
fit the generalized-logistic LoS probability model, optimize a 3D flight
path and transmission schedule offline (block coordinate descent over a
scheduling LP and two convex trajectory subproblems), then adapt flying
speeds and scheduling online along the fixed path with per-waypoint LPs.
"""

from .channel import (ChannelParams, LogisticFit, SurrogateCoeffs, VerticalSurrogate,
                      channel_gain, elevation_angle, expected_rate,
                      expected_rate_jensen, expected_rate_lb, fit_logistic,
                      horizontal_surrogate, los_probability, params_from_fit,
                      psi, rate_conditional, vertical_surrogate)
from .city import (Building, CityParams, CityRealization, LosSampleTable,
                   generate_city, los_visible, los_visible_batch, place_sensors,
                   sample_los_probability)
from .experiment import (ExperimentConfig, ResultRow, baseline_lb, baseline_plla,
                         baseline_static, run_monte_carlo)
from .offline import (MissionConfig, OfflineSolution, Trajectory, bcd_optimize,
                      choose_slot_count, init_trajectory, optimize_horizontal,
                      optimize_scheduling, optimize_vertical,
                      reconstruct_binary_schedule)
from .online import (EpisodeResult, FlightPath, OnlineState, PathSegment, Policy,
                     build_path, run_episode, sample_channel_states,
                     solve_online_step)
from .solvers import (LinearProgram, SmoothConvexProgram, SolveReport,
                      solve_lp, solve_smooth)

__version__ = "0.1.0"
