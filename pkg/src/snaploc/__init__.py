"""Snapshot 6D radio localization: geometry, bounds, and estimators.

A single multi-antenna base station observes one OFDM snapshot from a
clock-offset user terminal over a line-of-sight path and at least one
single-bounce reflection.  This package computes the channel geometry,
Fisher-information bounds on the 6D pose (position + orientation) and
clock bias, and recovers those quantities from noisy channel estimates
with a closed-form initializer refined by manifold gradient descent.
"""

from .errors import (
    ConfigError,
    GeometryError,
    NonIdentifiableError,
    SingularGeometryError,
)
from .geometry import (
    SPEED_OF_LIGHT,
    ChannelParams,
    Scene,
    SphericalAngles,
    angles_from_direction,
    arrival_direction,
    axis_angle_rotation,
    channel_params,
    channel_params_from_pose,
    departure_direction,
    direction_from_angles,
    euler_zyx_to_rotation,
    random_rotation,
    rotation_x,
    rotation_y,
    rotation_z,
    skew,
    split_eta,
    toa,
    unit_from_azimuth_elevation,
)
from .signal_model import (
    ArrayGeometry,
    SignalConfig,
    array_response,
    array_response_with_gradients,
    arrays_for_config,
    build_signal_config,
    channel_gain,
    channel_gain_magnitude,
    noise_free_observations,
    noise_free_symbol,
    path_gains,
    random_beams,
    upa_geometry,
)
from .fisher import (
    BoundsReport,
    LikelihoodParams,
    bounds_for_scene,
    bounds_from_ccrb,
    ccrb,
    constraint_gradient,
    constraint_nullspace,
    constraint_values,
    decorrelate,
    efim_channel,
    fim_channel,
    fim_localization,
    identifiability_margin,
    jacobian_upsilon,
    kappa_from_variance,
    likelihood_params,
)
from .measurements import (
    MeasurementSet,
    noise_free_measurements,
    sample_measurements,
)
from .adhoc import (
    AdhocConfig,
    AdhocEstimate,
    adhoc_estimate,
    closest_point_to_two_lines,
    estimate_clock_bias,
    estimate_positions,
    estimate_rotation,
    halfline_min_distance,
    psi_objective,
    rotation_family,
    solve_rtilde,
)
from .mle import (
    MlConfig,
    MlEstimate,
    ml_estimate,
    nll,
    nll_gradients,
    riemannian_step,
    so3_project,
    so3_retract,
)

__version__ = "0.1.0"

__all__ = [
    "AdhocConfig",
    "AdhocEstimate",
    "ArrayGeometry",
    "BoundsReport",
    "ChannelParams",
    "ConfigError",
    "GeometryError",
    "LikelihoodParams",
    "MeasurementSet",
    "MlConfig",
    "MlEstimate",
    "NonIdentifiableError",
    "SPEED_OF_LIGHT",
    "Scene",
    "SignalConfig",
    "SingularGeometryError",
    "SphericalAngles",
    "adhoc_estimate",
    "angles_from_direction",
    "array_response",
    "array_response_with_gradients",
    "arrays_for_config",
    "arrival_direction",
    "axis_angle_rotation",
    "bounds_for_scene",
    "bounds_from_ccrb",
    "build_signal_config",
    "ccrb",
    "channel_gain",
    "channel_gain_magnitude",
    "channel_params",
    "channel_params_from_pose",
    "closest_point_to_two_lines",
    "constraint_gradient",
    "constraint_nullspace",
    "constraint_values",
    "decorrelate",
    "departure_direction",
    "direction_from_angles",
    "efim_channel",
    "estimate_clock_bias",
    "estimate_positions",
    "estimate_rotation",
    "euler_zyx_to_rotation",
    "fim_channel",
    "fim_localization",
    "halfline_min_distance",
    "identifiability_margin",
    "jacobian_upsilon",
    "kappa_from_variance",
    "likelihood_params",
    "ml_estimate",
    "nll",
    "nll_gradients",
    "noise_free_measurements",
    "noise_free_observations",
    "noise_free_symbol",
    "path_gains",
    "psi_objective",
    "random_beams",
    "random_rotation",
    "riemannian_step",
    "rotation_family",
    "rotation_x",
    "rotation_y",
    "rotation_z",
    "sample_measurements",
    "skew",
    "so3_project",
    "so3_retract",
    "solve_rtilde",
    "split_eta",
    "toa",
    "unit_from_azimuth_elevation",
    "upa_geometry",
]
