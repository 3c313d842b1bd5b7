"""Distance-robust safety filter keeping scene features inside a camera cone."""

from .barrier import (ClassK, ConstraintGroup, ConstraintRow, FeatureObs,
                      FovSensor, GammaTooSmall, InvalidRange, RobustnessParams,
                      attitude_gain_bounds_first_order,
                      attitude_gain_bounds_second_order, barrier,
                      barrier_grad_attitude, barrier_grad_position,
                      curvature_terms, scale_floor, split_rows_first_order,
                      split_rows_second_order)
from .dynamics import (BodyState, DegenerateThrust, QuadrotorParams,
                       TrackingGains, geometric_tracking_control,
                       quadrotor_step, step_first_order, step_second_order,
                       wrench_from_accel)
from .qp import (FilterResult, QpProblem, QpSolution, QpStatus,
                 build_filter_qp, solve, solve_filter)
from .scenarios import (EmptyLog, ScenarioConfig, ScenarioError, SimLog,
                        Summary, ValidationError, gate_features, nominal_pd,
                        reference_trajectory, run, summarize)

__version__ = "0.1.0"
