"""Scene geometry for single-anchor radio localization.

Positions and rotations of the base station (BS) and user equipment (UE),
incidence points (IPs) of single-bounce paths, and the forward map from a
scene to exact per-path channel parameters: angles of arrival (AoA) and
departure (AoD) in the respective local frames, and biased times of
arrival (ToA).

Conventions
-----------
- Spherical angles: azimuth in [0, 2*pi) measured in the local x-y plane
  from +x, elevation in [0, pi] measured from the local +z axis.
- A direction with elevation exactly 0 or pi has its azimuth canonicalized
  to 0.
- The stacked channel-parameter vector eta orders all AoAs first (azimuth,
  elevation interleaved per path, LoS path first), then all AoDs the same
  way, then all ToAs.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import GeometryError

SPEED_OF_LIGHT = 3e8
"""Propagation speed in m/s used by scenario defaults."""

_UNIT_TOL = 1e-9
_ROTATION_TOL = 1e-10
_COINCIDENT_TOL = 1e-6


def as_vec3(v) -> np.ndarray:
    """Validate and return a finite 3-vector as a float ndarray."""
    arr = np.asarray(v, dtype=float)
    if arr.shape != (3,):
        raise GeometryError(f"expected a 3-vector, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise GeometryError("vector components must be finite")
    return arr


def as_direction(v, tol: float = _UNIT_TOL) -> np.ndarray:
    """Validate a unit-norm direction vector."""
    arr = as_vec3(v)
    if abs(np.linalg.norm(arr) - 1.0) > tol:
        raise GeometryError(f"direction must have unit norm, got {np.linalg.norm(arr)!r}")
    return arr


def assert_rotation(R, tol: float = _ROTATION_TOL) -> np.ndarray:
    """Validate a proper rotation matrix (orthonormal, det +1)."""
    arr = np.asarray(R, dtype=float)
    if arr.shape != (3, 3):
        raise GeometryError(f"expected a 3x3 matrix, got shape {arr.shape}")
    if np.linalg.norm(arr.T @ arr - np.eye(3)) > tol:
        raise GeometryError("matrix is not orthonormal")
    if abs(np.linalg.det(arr) - 1.0) > tol:
        raise GeometryError("matrix determinant is not +1")
    return arr


def wrap_angle(theta):
    """Wrap angles into the canonical [0, 2*pi) interval."""
    return np.mod(theta, 2.0 * np.pi)


@dataclass(frozen=True)
class SphericalAngles:
    """Azimuth/elevation pair in canonical ranges.

    Azimuth is wrapped into [0, 2*pi) on construction; elevation must lie
    in [0, pi] (inputs within 1e-12 outside are clipped).
    """

    azimuth: float
    elevation: float

    def __post_init__(self):
        az = float(wrap_angle(self.azimuth))
        el = float(self.elevation)
        if not (-1e-12 <= el <= np.pi + 1e-12):
            raise GeometryError(f"elevation {el!r} outside [0, pi]")
        el = min(max(el, 0.0), float(np.pi))
        object.__setattr__(self, "azimuth", az)
        object.__setattr__(self, "elevation", el)


def unit_from_azimuth_elevation(azimuth, elevation) -> np.ndarray:
    """Direction vector for raw azimuth/elevation values.

    Does not require canonical ranges; useful for noisy angle estimates,
    for which the trigonometric map below stays exact under mod-2*pi
    representatives. Broadcasts over array inputs (angles stacked in the
    last axis of the result).
    """
    az = np.asarray(azimuth, dtype=float)
    el = np.asarray(elevation, dtype=float)
    sin_el = np.sin(el)
    return np.stack(
        [sin_el * np.cos(az), sin_el * np.sin(az), np.cos(el)], axis=-1
    )


def direction_from_angles(angles: SphericalAngles) -> np.ndarray:
    """Unit direction [sin(el)cos(az), sin(el)sin(az), cos(el)]."""
    return unit_from_azimuth_elevation(angles.azimuth, angles.elevation)


def angles_from_direction(d) -> SphericalAngles:
    """Spherical angles of a unit direction.

    At the poles (elevation 0 or pi) the azimuth is canonicalized to 0.
    """
    arr = as_direction(d)
    az = float(np.arctan2(arr[1], arr[0]))
    el = float(np.arccos(np.clip(arr[2], -1.0, 1.0)))
    if arr[0] == 0.0 and arr[1] == 0.0:
        az = 0.0
    return SphericalAngles(az, el)


@dataclass(frozen=True)
class Scene:
    """Ground-truth geometry of one localization problem.

    Attributes
    ----------
    p_bs, p_ue : ndarray, shape (3,)
        BS and UE positions in the global frame, meters.
    r_bs, r_ue : ndarray, shape (3, 3)
        BS and UE orientations as rotation matrices (local to global).
    ips : ndarray, shape (M, 3)
        Incidence-point positions of the M >= 1 single-bounce paths.
    clock_bias : float
        UE clock bias in seconds, added to every ToA.
    reflection_coeffs : ndarray, shape (M,)
        Per-path reflection coefficients in (0, 1].
    propagation_speed : float
        Propagation speed in m/s.
    """

    p_bs: np.ndarray
    r_bs: np.ndarray
    p_ue: np.ndarray
    r_ue: np.ndarray
    ips: np.ndarray
    clock_bias: float
    reflection_coeffs: np.ndarray
    propagation_speed: float = SPEED_OF_LIGHT

    def __post_init__(self):
        p_bs = as_vec3(self.p_bs)
        p_ue = as_vec3(self.p_ue)
        r_bs = assert_rotation(self.r_bs)
        r_ue = assert_rotation(self.r_ue)
        ips = np.atleast_2d(np.asarray(self.ips, dtype=float))
        if ips.ndim != 2 or ips.shape[1] != 3 or ips.shape[0] < 1:
            raise GeometryError("ips must be an (M, 3) array with M >= 1")
        coeffs = np.asarray(self.reflection_coeffs, dtype=float)
        if coeffs.shape != (ips.shape[0],):
            raise GeometryError("reflection_coeffs length must equal the number of IPs")
        if np.any(coeffs <= 0.0) or np.any(coeffs > 1.0):
            raise GeometryError("reflection coefficients must lie in (0, 1]")
        if self.propagation_speed <= 0.0:
            raise GeometryError("propagation speed must be positive")
        anchors = np.vstack([p_bs, p_ue, ips])
        diffs = anchors[:, None, :] - anchors[None, :, :]
        dist = np.linalg.norm(diffs, axis=-1)
        np.fill_diagonal(dist, np.inf)
        if dist.min() <= _COINCIDENT_TOL:
            raise GeometryError("BS, UE, and IPs must be pairwise separated by > 1e-6 m")
        for name, val in (("p_bs", p_bs), ("p_ue", p_ue), ("r_bs", r_bs),
                          ("r_ue", r_ue), ("ips", ips), ("reflection_coeffs", coeffs)):
            val.setflags(write=False)
            object.__setattr__(self, name, val)
        object.__setattr__(self, "clock_bias", float(self.clock_bias))
        object.__setattr__(self, "propagation_speed", float(self.propagation_speed))

    @property
    def num_ips(self) -> int:
        return self.ips.shape[0]

    @property
    def num_paths(self) -> int:
        """Number of propagation paths, LoS included (M + 1)."""
        return self.num_ips + 1


@dataclass(frozen=True)
class ChannelParams:
    """Exact channel parameters per path, LoS first.

    Attributes
    ----------
    aoa, aod : ndarray, shape (M+1, 2)
        (azimuth, elevation) per path, at the UE and BS respectively.
    toa : ndarray, shape (M+1,)
        Biased times of arrival, seconds.
    """

    aoa: np.ndarray
    aod: np.ndarray
    toa: np.ndarray

    def __post_init__(self):
        aoa = np.asarray(self.aoa, dtype=float)
        aod = np.asarray(self.aod, dtype=float)
        toa = np.asarray(self.toa, dtype=float)
        if aoa.ndim != 2 or aoa.shape[1] != 2 or aoa.shape != aod.shape:
            raise GeometryError("aoa and aod must both have shape (M+1, 2)")
        if toa.shape != (aoa.shape[0],):
            raise GeometryError("toa length must match the number of paths")
        for name, val in (("aoa", aoa), ("aod", aod), ("toa", toa)):
            val.setflags(write=False)
            object.__setattr__(self, name, val)

    @property
    def num_paths(self) -> int:
        return self.toa.shape[0]

    @property
    def eta(self) -> np.ndarray:
        """Stacked parameter vector of length 5(M+1): AoAs, AoDs, ToAs."""
        return np.concatenate([self.aoa.ravel(), self.aod.ravel(), self.toa])


def split_eta(eta, num_paths: int):
    """Split a stacked eta vector into (aoa, aod, toa) arrays."""
    eta = np.asarray(eta, dtype=float)
    p = num_paths
    if eta.shape != (5 * p,):
        raise GeometryError(f"eta must have length 5*(M+1)={5 * p}, got {eta.shape}")
    aoa = eta[: 2 * p].reshape(p, 2)
    aod = eta[2 * p: 4 * p].reshape(p, 2)
    toa = eta[4 * p:]
    return aoa, aod, toa


def _unit_offset(target, source):
    diff = np.asarray(target, dtype=float) - np.asarray(source, dtype=float)
    norm = np.linalg.norm(diff)
    if norm <= _COINCIDENT_TOL:
        raise GeometryError("coincident points leave the direction undefined")
    return diff / norm, norm


def arrival_direction(scene: Scene, m: int) -> np.ndarray:
    """Unit arrival direction at the UE, in the UE local frame.

    Path m = 0 arrives from the BS, paths m >= 1 from incidence point m.
    """
    _check_path_index(scene, m)
    source = scene.p_bs if m == 0 else scene.ips[m - 1]
    u, _ = _unit_offset(source, scene.p_ue)
    return scene.r_ue.T @ u


def departure_direction(scene: Scene, m: int) -> np.ndarray:
    """Unit departure direction at the BS, in the BS local frame."""
    _check_path_index(scene, m)
    target = scene.p_ue if m == 0 else scene.ips[m - 1]
    u, _ = _unit_offset(target, scene.p_bs)
    return scene.r_bs.T @ u


def toa(scene: Scene, m: int) -> float:
    """Biased time of arrival of path m in seconds."""
    _check_path_index(scene, m)
    if m == 0:
        length = np.linalg.norm(scene.p_ue - scene.p_bs)
    else:
        p = scene.ips[m - 1]
        length = np.linalg.norm(p - scene.p_bs) + np.linalg.norm(scene.p_ue - p)
    return float(length / scene.propagation_speed + scene.clock_bias)


def _check_path_index(scene: Scene, m: int):
    if not 0 <= m <= scene.num_ips:
        raise GeometryError(f"path index {m} outside 0..{scene.num_ips}")


def channel_params_from_pose(r_ue, p_ue, ips, p_bs, r_bs, clock_bias,
                             propagation_speed=SPEED_OF_LIGHT) -> ChannelParams:
    """Channel parameters for an arbitrary pose, without Scene validation.

    Angles are computed directly from frame-column dot products, so the
    map stays well-defined (and differentiable) for any square r_ue, which
    estimators exploit when probing non-orthonormal perturbations.
    """
    p_ue = np.asarray(p_ue, dtype=float)
    ips = np.atleast_2d(np.asarray(ips, dtype=float))
    p_bs = np.asarray(p_bs, dtype=float)
    r_ue = np.asarray(r_ue, dtype=float)
    r_bs = np.asarray(r_bs, dtype=float)
    num_paths = ips.shape[0] + 1
    aoa = np.empty((num_paths, 2))
    aod = np.empty((num_paths, 2))
    toas = np.empty(num_paths)
    for m in range(num_paths):
        if m == 0:
            u_a, d_bu = _unit_offset(p_bs, p_ue)
            u_d, _ = _unit_offset(p_ue, p_bs)
            length = d_bu
        else:
            p = ips[m - 1]
            u_a, d_pu = _unit_offset(p, p_ue)
            u_d, d_pb = _unit_offset(p, p_bs)
            length = d_pb + d_pu
        aoa[m] = _azimuth_elevation(r_ue, u_a)
        aod[m] = _azimuth_elevation(r_bs, u_d)
        toas[m] = length / propagation_speed + clock_bias
    return ChannelParams(aoa=aoa, aod=aod, toa=toas)


def _azimuth_elevation(frame, u):
    """Raw azimuth/elevation of global unit direction u in a frame.

    Uses column dot products r_i . u, valid for any 3x3 frame matrix.
    """
    x = frame[:, 0] @ u
    y = frame[:, 1] @ u
    z = frame[:, 2] @ u
    az = 0.0 if (x == 0.0 and y == 0.0) else np.arctan2(y, x)
    return wrap_angle(az), np.arccos(np.clip(z, -1.0, 1.0))


def channel_params(scene: Scene) -> ChannelParams:
    """Exact channel parameters of a scene, stacked in canonical order."""
    return channel_params_from_pose(
        scene.r_ue, scene.p_ue, scene.ips, scene.p_bs, scene.r_bs,
        scene.clock_bias, scene.propagation_speed,
    )


def rotation_x(gamma) -> np.ndarray:
    """Counter-clockwise rotation about the x axis."""
    c, s = np.cos(gamma), np.sin(gamma)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def rotation_y(beta) -> np.ndarray:
    """Counter-clockwise rotation about the y axis."""
    c, s = np.cos(beta), np.sin(beta)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def rotation_z(alpha) -> np.ndarray:
    """Counter-clockwise rotation about the z axis."""
    c, s = np.cos(alpha), np.sin(alpha)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def euler_zyx_to_rotation(alpha, beta, gamma) -> np.ndarray:
    """Rotation R_z(alpha) @ R_y(beta) @ R_x(gamma)."""
    return rotation_z(alpha) @ rotation_y(beta) @ rotation_x(gamma)


def skew(d) -> np.ndarray:
    """Skew-symmetric cross-product matrix: skew(d) @ v == cross(d, v)."""
    d = as_vec3(d)
    return np.array([
        [0.0, -d[2], d[1]],
        [d[2], 0.0, -d[0]],
        [-d[1], d[0], 0.0],
    ])


def axis_angle_rotation(u, psi) -> np.ndarray:
    """Rotation by angle psi about the unit axis u.

    Built as skew(u)*sin(psi) + (I - u u^T)*cos(psi) + u u^T, which fixes
    u exactly for every psi.
    """
    u = as_direction(u)
    outer = np.outer(u, u)
    return skew(u) * np.sin(psi) + (np.eye(3) - outer) * np.cos(psi) + outer


def random_rotation(rng: np.random.Generator) -> np.ndarray:
    """Uniformly distributed rotation matrix (QR of a Gaussian sample)."""
    z = rng.standard_normal((3, 3))
    q, r = np.linalg.qr(z)
    q = q * np.sign(np.diag(r))
    if np.linalg.det(q) < 0:
        q[:, [0, 1]] = q[:, [1, 0]]
    return q
