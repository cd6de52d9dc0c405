"""Joint user scheduling, active beamforming and passive-plate phase
optimization for air-ground integrated sensing and communication."""

from .metrics import (DesignVariables, MetricsReport, beampattern,
                      comm_mi_per_user, sensing_mi, sensing_mi_logdet,
                      sum_nmse, sum_objective)
from .model import (ChannelSet, SystemConfig, build_array_to_plate_channel,
                    build_channel_set, build_comm_channel,
                    build_target_covariance, crandn, los_channel_set,
                    sample_comm_channel, sample_symbols,
                    sample_target_response, spawn_rng, steering_vector)
from .passive_opt import (QuadraticForm, RgaTrace, reduce_to_quadratic,
                          retract, riemannian_gradient, rga_optimize,
                          sdr_optimize, solve_unit_diag_sdp, transport)
from .usago import (VARIANTS, RunResult, baseline_if, baseline_mmse,
                    evaluate, run_variant, us_ago)
from .wmmse import (SolverState, comm_combiner, initialize_state, inner_loop,
                    mse_comm, mse_sensing, penalty, penalty_linearized,
                    round_schedule, sensing_combiner, solve_joint_subproblem,
                    surrogate_value, update_weights)

__version__ = "0.1.0"
