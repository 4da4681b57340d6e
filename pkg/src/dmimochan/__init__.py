"""Spatially consistent stochastic channel simulator for distributed MIMO
links in industrial environments.

The model couples a two-state LoS/OLoS process, dual-slope log-distance
path gain, cross-anchor correlated log-normal shadowing with exponential
spatial autocorrelation, and interacting-object small-scale fading with
state-dependent Ricean statistics, plus the estimator suite needed to
validate generated channels against the calibrated statistics.
"""

from .geometry import (Deployment, InteractingObject, LinkState, PointCloud,
                       Trajectory, classify_state, distance, fresnel_coverage,
                       fresnel_radius, place_interacting_objects)
from .link_state import (LinkStateTrace, TransitionModel, count_los_links,
                         draw_transition_model, estimate_transition_rate,
                         simulate_states)
from .large_scale import (CovarianceMatrix, CovarianceParams, PathGainModel,
                          PerState, ShadowingModel, draw_covariance,
                          estimate_path_gain, estimate_path_gain_binned,
                          extract_lsf, fit_autocorrelation, fit_lognormal,
                          path_gain, reflective_correlation, simulate_lsf)
from .small_scale import (IOSet, RiceModel, extract_ssf, filter_k_factor,
                          fit_rice, synth_frequency_response)
from .analysis import (DpssSet, LocalScatteringFunction, avg_power_gain,
                       collinearity, collinearity_matrix, dpss, ecdf,
                       local_scattering_function, mrt_gain, pdp,
                       rms_delay_spread, stationarity_distance)
from .synthesis import (ChannelTensor, GroundTruth, ModelConfig,
                        SimulationState, generate, hardening_summary,
                        initialize, step)
from .pipeline import StatsReport, analyze
from .config import RunConfig, load_config, load_trajectory_csv
from .tensorio import crc64, read_tensor, write_tensor

__version__ = "0.1.0"
