"""Geometric three-step initial estimator.

Step 1 recovers the UE rotation: the LoS arrival/departure pair pins the
rotation up to a one-parameter family about the arrival direction, and a
1D grid search picks the family member whose NLoS half-lines come closest
to intersecting in a scaled frame (BS-UE distance set to 1). Step 2
recovers absolute scale from TDoAs and places the UE and the incidence
points. Step 3 reads the clock bias off the mean ToA residual.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import GeometryError, SingularGeometryError
from .geometry import (
    SPEED_OF_LIGHT,
    as_direction,
    as_vec3,
    assert_rotation,
    axis_angle_rotation,
    skew,
    unit_from_azimuth_elevation,
)
from .measurements import MeasurementSet

# Below this, 1 - (d1.d2)^2 is treated as parallel (cf. |d1.d2| = 1
# within 1e-12): the interior stationary point is skipped and the
# boundary candidates, where the constrained minimum then lies, decide.
_PARALLEL_TOL = 4e-12
_DEGENERATE_DOT = 1e-9
_RODRIGUES_SAFE = 1e-5


@dataclass(frozen=True)
class AdhocConfig:
    """Rotation-search settings.

    psi_grid_step is the granularity of the axis-angle sweep over
    [0, 2pi); refine_psi adds one parabolic refinement around the best
    grid point.
    """

    psi_grid_step: float = np.pi / 200.0
    refine_psi: bool = False

    def __post_init__(self):
        if not 0.0 < self.psi_grid_step <= np.pi / 8.0:
            raise GeometryError("psi_grid_step must lie in (0, pi/8]")


@dataclass(frozen=True)
class AdhocEstimate:
    """Output of the three-step pipeline.

    negative_tdoa flags the event that some measured NLoS ToA fell below
    the LoS ToA; the closed-form scale estimate then degrades but is still
    returned.
    """

    r_ue_hat: np.ndarray
    p_ue_hat: np.ndarray
    ip_hats: np.ndarray
    b_hat: float
    psi_hat: float
    residual: float
    rho0_hat: float
    negative_tdoa: bool

    def __post_init__(self):
        r = assert_rotation(self.r_ue_hat)
        p = as_vec3(self.p_ue_hat)
        ips = np.atleast_2d(np.asarray(self.ip_hats, dtype=float))
        if ips.shape[1] != 3:
            raise GeometryError("ip_hats must be an (M, 3) array")
        for name, val in (("r_ue_hat", r), ("p_ue_hat", p), ("ip_hats", ips)):
            val.setflags(write=False)
            object.__setattr__(self, name, val)


def solve_rtilde(d_a0, r_bs, d_d0) -> np.ndarray:
    """One rotation aligning the LoS directions: R~ d_A0 = -R_BS d_D0.

    Built as I + [d]x + [d]x^2 / (1 - d_A0 . R_BS d_D0) with
    d = -d_A0 x R_BS d_D0. Near the singular configuration
    d_A0 = R_BS d_D0 the same rotation is formed as an axis-angle turn
    about the normalized cross product (identical analytically, stable
    numerically), and at the configuration itself it falls back to a
    half-turn about a deterministic axis orthogonal to d_A0.
    """
    a = as_direction(d_a0)
    b = -(np.asarray(r_bs, dtype=float) @ as_direction(d_d0))
    dot = float(a @ b)
    denom = 1.0 + dot
    if denom <= _DEGENERATE_DOT:
        axis = _orthogonal_axis(a)
        return axis_angle_rotation(axis, np.pi)
    d = np.cross(a, b)
    if denom < _RODRIGUES_SAFE:
        axis = d / np.linalg.norm(d)
        return axis_angle_rotation(axis, float(np.arctan2(np.linalg.norm(d), dot)))
    s = skew(d)
    return np.eye(3) + s + (s @ s) / denom


def _orthogonal_axis(a):
    """Deterministic unit vector orthogonal to a: use the first standard
    basis vector not parallel to a (a unit vector can have at most one
    component of magnitude >= 0.9)."""
    for i in range(3):
        e = np.zeros(3)
        e[i] = 1.0
        if abs(a[i]) < 0.9:
            axis = np.cross(a, e)
            return axis / np.linalg.norm(axis)
    raise GeometryError("no orthogonal axis found for a non-unit input")


def rotation_family(r_tilde, d_a0, psi: float) -> np.ndarray:
    """Member psi of the one-parameter rotation family R~ Q_{d_A0}(psi)."""
    return np.asarray(r_tilde, dtype=float) @ axis_angle_rotation(d_a0, psi)


def halfline_min_distance(p1, d1, p2, d2):
    """Shortest distance between half-lines p_i + t_i d_i, t_i >= 0.

    Returns (distance, t1, t2). The distance-squared is convex quadratic
    in (t1, t2); the minimizer is the interior stationary point when that
    is feasible, otherwise it lies on a t_i = 0 face, so evaluating the
    clamped face candidates alongside the interior one and keeping the
    best is exact. Ties resolve toward the earlier candidate.
    """
    p1 = as_vec3(p1)
    p2 = as_vec3(p2)
    d1 = as_direction(d1)
    d2 = as_direction(d2)
    p12 = p1 - p2
    c = float(d1 @ d2)
    b1 = float(d1 @ p12)
    b2 = float(d2 @ p12)
    det = 1.0 - c * c
    candidates = []
    if det > _PARALLEL_TOL:
        candidates.append(((-b1 + c * b2) / det, (b2 - c * b1) / det))
        if candidates[0][0] < 0.0 or candidates[0][1] < 0.0:
            candidates.pop()
    candidates.append((0.0, max(b2, 0.0)))
    candidates.append((max(-b1, 0.0), 0.0))
    best = None
    for t1, t2 in candidates:
        gap = p12 + t1 * d1 - t2 * d2
        dist_sq = float(gap @ gap)
        if best is None or dist_sq < best[0]:
            best = (dist_sq, t1, t2)
    return float(np.sqrt(max(best[0], 0.0))), best[1], best[2]


class _ScaledFrame:
    """Measurement-derived quantities reused across the psi sweep."""

    def __init__(self, measurements: MeasurementSet, p_bs, r_bs):
        if measurements.num_paths < 2:
            raise GeometryError("rotation search requires at least one NLoS path")
        self.p_bs = as_vec3(p_bs)
        self.r_bs = assert_rotation(r_bs)
        self.d_a = unit_from_azimuth_elevation(
            measurements.aoa_hat[:, 0], measurements.aoa_hat[:, 1])
        d_d = unit_from_azimuth_elevation(
            measurements.aod_hat[:, 0], measurements.aod_hat[:, 1])
        self.bs_dirs = d_d @ self.r_bs.T
        self.r_tilde = solve_rtilde(self.d_a[0], self.r_bs, d_d[0])
        self.p_ue1 = self.p_bs + self.bs_dirs[0]

    def objective(self, psi: float) -> float:
        rot = rotation_family(self.r_tilde, self.d_a[0], psi)
        dists = [
            halfline_min_distance(self.p_bs, self.bs_dirs[m],
                                  self.p_ue1, rot @ self.d_a[m])[0]
            for m in range(1, self.d_a.shape[0])
        ]
        return float(np.linalg.norm(dists))


def psi_objective(psi: float, measurements: MeasurementSet, p_bs, r_bs) -> float:
    """Norm of the stacked NLoS half-line distances at rotation angle psi.

    Evaluated in the scaled frame with the BS-UE distance set to 1.
    """
    return _ScaledFrame(measurements, p_bs, r_bs).objective(psi)


def estimate_rotation(measurements: MeasurementSet, p_bs, r_bs,
                      config: AdhocConfig | None = None):
    """Grid search for the rotation-family angle; returns (R_hat, psi_hat).

    Ties go to the smallest psi. With refine_psi, one parabola is fitted
    through the squared objective at the best grid triple (the squared
    half-line distances are smooth through their zero, the norm is not)
    and the vertex kept if it improves.
    """
    config = config or AdhocConfig()
    frame = _ScaledFrame(measurements, p_bs, r_bs)
    grid = np.arange(0.0, 2.0 * np.pi, config.psi_grid_step)
    values = np.array([frame.objective(psi) for psi in grid])
    i = int(np.argmin(values))
    psi_hat = float(grid[i])
    best = float(values[i])
    if config.refine_psi:
        n = grid.size
        f_m, f_0, f_p = values[i - 1] ** 2, values[i] ** 2, values[(i + 1) % n] ** 2
        curvature = f_m - 2.0 * f_0 + f_p
        if curvature > 0.0:
            shift = float(np.clip(0.5 * (f_m - f_p) / curvature, -0.5, 0.5))
            candidate = float(np.mod(psi_hat + shift * config.psi_grid_step,
                                     2.0 * np.pi))
            value = frame.objective(candidate)
            if value < best:
                psi_hat, best = candidate, value
    return rotation_family(frame.r_tilde, frame.d_a[0], psi_hat), psi_hat


def closest_point_to_two_lines(p1, d1, p2, d2) -> np.ndarray:
    """Point minimizing the summed squared distances to two full lines.

    Solves (P1 + P2) x = P1 p1 + P2 p2 with P_i the projectors onto the
    complements of the line directions.
    """
    p1 = as_vec3(p1)
    p2 = as_vec3(p2)
    d1 = as_direction(d1)
    d2 = as_direction(d2)
    if 1.0 - float(d1 @ d2) ** 2 <= _PARALLEL_TOL:
        raise SingularGeometryError("parallel lines have no unique closest point")
    proj1 = np.eye(3) - np.outer(d1, d1)
    proj2 = np.eye(3) - np.outer(d2, d2)
    return np.linalg.solve(proj1 + proj2, proj1 @ p1 + proj2 @ p2)


def estimate_positions(measurements: MeasurementSet, r_ue_hat, p_bs, r_bs,
                       propagation_speed: float = SPEED_OF_LIGHT):
    """Scale recovery and position estimates given the rotation.

    Works in the scaled frame (BS-UE distance 1): intersects full lines
    to place scaled IPs, forms per-path excess path lengths beta_m, and
    recovers the absolute LoS distance as rho0 = beta . TDoA / beta . beta.
    Returns (p_ue_hat, ip_hats, rho0_hat).
    """
    frame = _ScaledFrame(measurements, p_bs, r_bs)
    r_ue_hat = np.asarray(r_ue_hat, dtype=float)
    num_ips = measurements.num_paths - 1
    scaled_ips = np.empty((num_ips, 3))
    rho = np.empty(num_ips)
    bs_frame_dirs = np.empty((num_ips, 3))
    beta = np.empty(num_ips)
    d_d0 = frame.bs_dirs[0] @ frame.r_bs  # departure direction, BS frame
    for m in range(1, num_ips + 1):
        point = closest_point_to_two_lines(
            frame.p_bs, frame.bs_dirs[m],
            frame.p_ue1, r_ue_hat @ frame.d_a[m])
        offset = point - frame.p_bs
        dist = float(np.linalg.norm(offset))
        if dist <= 1e-12:
            raise SingularGeometryError(
                "scaled incidence point collapsed onto the base station")
        scaled_ips[m - 1] = point
        rho[m - 1] = dist
        bs_frame_dirs[m - 1] = frame.r_bs.T @ (offset / dist)
        beta[m - 1] = dist + np.linalg.norm(d_d0 - dist * bs_frame_dirs[m - 1]) - 1.0
    tdoa = propagation_speed * (measurements.toa_hat[1:] - measurements.toa_hat[0])
    norm_sq = float(beta @ beta)
    if norm_sq <= 0.0:
        raise SingularGeometryError(
            "all excess path lengths vanish; scale is unobservable")
    rho0 = float(beta @ tdoa) / norm_sq
    p_ue_hat = frame.p_bs + rho0 * frame.bs_dirs[0]
    ip_hats = frame.p_bs + rho0 * rho[:, None] * (bs_frame_dirs @ frame.r_bs.T)
    return p_ue_hat, ip_hats, rho0


def estimate_clock_bias(measurements: MeasurementSet, p_ue_hat, ip_hats, p_bs,
                        propagation_speed: float = SPEED_OF_LIGHT) -> float:
    """Mean residual between measured ToAs and reconstructed delays."""
    p_ue = as_vec3(p_ue_hat)
    p_bs = as_vec3(p_bs)
    ips = np.atleast_2d(np.asarray(ip_hats, dtype=float))
    lengths = np.empty(measurements.num_paths)
    lengths[0] = np.linalg.norm(p_ue - p_bs)
    for m in range(1, measurements.num_paths):
        ip = ips[m - 1]
        lengths[m] = np.linalg.norm(ip - p_bs) + np.linalg.norm(p_ue - ip)
    return float(np.mean(measurements.toa_hat - lengths / propagation_speed))


def adhoc_estimate(measurements: MeasurementSet, p_bs, r_bs,
                   config: AdhocConfig | None = None,
                   propagation_speed: float = SPEED_OF_LIGHT) -> AdhocEstimate:
    """Full three-step pipeline: rotation, positions, clock bias."""
    config = config or AdhocConfig()
    r_hat, psi_hat = estimate_rotation(measurements, p_bs, r_bs, config)
    p_ue_hat, ip_hats, rho0 = estimate_positions(
        measurements, r_hat, p_bs, r_bs, propagation_speed)
    b_hat = estimate_clock_bias(measurements, p_ue_hat, ip_hats, p_bs,
                                propagation_speed)
    residual = psi_objective(psi_hat, measurements, p_bs, r_bs)
    negative = bool(np.any(measurements.toa_hat[1:] < measurements.toa_hat[0]))
    return AdhocEstimate(r_ue_hat=r_hat, p_ue_hat=p_ue_hat, ip_hats=ip_hats,
                         b_hat=b_hat, psi_hat=psi_hat, residual=residual,
                         rho0_hat=rho0, negative_tdoa=negative)
