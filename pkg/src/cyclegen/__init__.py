"""Representative multi-dimensional drive-cycle construction.

Builds 1 Hz speed / acceleration / road-grade cycles representative of a
fleet of recorded trips, using an Expected-SARSA + Monte-Carlo agent over
the fleet's sparse state-transition matrix, with micro-trip and Markov-chain
baselines and a full evaluation stack.
"""

from .analysis import (DistStats, FragmentCost, KinematicFragments, Scalogram,
                       accuracy_level, cwt, distribution_stats, fleet_reference,
                       fragment_cost, kinematic_fragments, morlet_scales, vsp,
                       wavelet_hf_fraction)
from .baselines import (McbGenerator, MicroTrip, MtbGenerator, Sagfd,
                        mcb_generate, mtb_generate, sagfd, sagfd_error,
                        segment_microtrips)
from .piesmc import (AgentConfig, AgentTables, DriveCycle, IdleModel,
                     PiesmcGenerator, Trajectory, audit_feasibility,
                     build_idle_model, run_episode, train_and_generate)
from .preprocess import (GradeErrorReport, TripRecord, central_diff_accel,
                         clean_speed, grade_error_metrics, haversine_distance,
                         process_raw_trip, raw_grade, resample_1hz,
                         savitzky_golay)
from .statespace import (BinningScheme, Sagstm, bin_sample, build_sagstm,
                         decode_state, encode_state, feasible_actions,
                         state_kinematics)

__version__ = "0.1.0"
