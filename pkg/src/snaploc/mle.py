"""Maximum-likelihood refinement on SO(3) x R^(3(M+1)+1).

Minimizes the negative log-likelihood of the angle/delay measurements by
block coordinate descent: one backtracking Riemannian step on the
rotation, then a bounded inner descent on the Euclidean block
zeta = [p_UE, p_1..p_M, b]. Search directions come from the Gauss-Newton
model of the likelihood (it is an exact weighted least-squares once the
cosines are written as versines), with steepest descent as the fallback;
every accepted step satisfies an Armijo sufficient-decrease condition, so
the NLL trace is nonincreasing.

Internally the objective is shifted by the parameter-free constant
1'kappa_A + 1'kappa_D, which makes it ~0 at the optimum instead of a
large negative number; without the shift, line-search comparisons near
convergence drown in the float resolution of the constant. Reported NLL
values undo the shift.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import GeometryError
from .fisher import constraint_nullspace, upsilon_from_pose
from .geometry import (
    SPEED_OF_LIGHT,
    as_vec3,
    assert_rotation,
    channel_params_from_pose,
    rotation_x,
    rotation_y,
)
from .measurements import MeasurementSet

_MAX_BACKTRACKS = 60
_POLE_GUARD = 1e-9
_PERTURB_ANGLE = 1e-7


@dataclass(frozen=True)
class MlConfig:
    """Optimizer settings; defaults favor convergence over speed."""

    max_outer_iters: int = 200
    nll_rel_tol: float = 1e-9
    shrink_factor: float = 0.5
    sufficient_decrease: float = 1e-4
    initial_step: float = 1.0
    euclidean_inner_iters: int = 25

    def __post_init__(self):
        if (self.max_outer_iters <= 0 or self.nll_rel_tol <= 0.0
                or not 0.0 < self.shrink_factor < 1.0
                or self.sufficient_decrease <= 0.0 or self.initial_step <= 0.0
                or self.euclidean_inner_iters <= 0):
            raise GeometryError("invalid optimizer configuration")


@dataclass(frozen=True)
class MlEstimate:
    """Refined estimate with the optimization trace."""

    r_ue_hat: np.ndarray
    p_ue_hat: np.ndarray
    ip_hats: np.ndarray
    b_hat: float
    nll: float
    iterations: int
    converged: bool
    nll_trace: np.ndarray

    def __post_init__(self):
        r = assert_rotation(self.r_ue_hat)
        p = as_vec3(self.p_ue_hat)
        ips = np.atleast_2d(np.asarray(self.ip_hats, dtype=float))
        trace = np.asarray(self.nll_trace, dtype=float)
        for name, val in (("r_ue_hat", r), ("p_ue_hat", p), ("ip_hats", ips),
                          ("nll_trace", trace)):
            val.setflags(write=False)
            object.__setattr__(self, name, val)

    @property
    def zeta_hat(self) -> np.ndarray:
        """Euclidean block [p_UE, p_1..p_M, b] with b in seconds."""
        return np.concatenate([self.p_ue_hat, self.ip_hats.ravel(),
                               [self.b_hat]])


def _split_zeta(zeta, num_paths):
    zeta = np.asarray(zeta, dtype=float)
    if zeta.shape != (3 * num_paths + 1,):
        raise GeometryError("zeta length must be 3(M+1)+1")
    p_ue = zeta[:3]
    ips = zeta[3:-1].reshape(num_paths - 1, 3)
    return p_ue, ips, float(zeta[-1])


def nll(r, zeta, measurements: MeasurementSet, p_bs, r_bs,
        propagation_speed: float = SPEED_OF_LIGHT) -> float:
    """Negative log-likelihood of the measurements at (R, zeta).

    Gaussian quadratic in the delays, minus concentration-weighted cosines
    of the raw angle differences (the cosine supplies 2pi periodicity, so
    no wrapping is applied).
    """
    p = measurements.num_paths
    p_ue, ips, bias = _split_zeta(zeta, p)
    params = channel_params_from_pose(
        np.asarray(r, dtype=float), p_ue, ips,
        as_vec3(p_bs), np.asarray(r_bs, dtype=float), bias, propagation_speed)
    lik = measurements.params
    toa_term = 0.5 * float(
        ((measurements.toa_hat - params.toa) ** 2 / lik.toa_var).sum())
    aoa_term = float(
        lik.kappa_a @ np.cos(measurements.aoa_hat.ravel() - params.aoa.ravel()))
    aod_term = float(
        lik.kappa_d @ np.cos(measurements.aod_hat.ravel() - params.aod.ravel()))
    return toa_term - aoa_term - aod_term


def nll_gradients(r, zeta, measurements: MeasurementSet, p_bs, r_bs,
                  propagation_speed: float = SPEED_OF_LIGHT):
    """Exact NLL gradients: (dL/dR as 3x3, dL/dzeta as vector).

    Chain rule through the channel-parameter Jacobian; the rotation block
    is the raw Euclidean gradient, to be projected onto the tangent space
    by the caller.
    """
    p = measurements.num_paths
    p_ue, ips, bias = _split_zeta(zeta, p)
    r = np.asarray(r, dtype=float)
    r_bs = np.asarray(r_bs, dtype=float)
    p_bs = as_vec3(p_bs)
    params = channel_params_from_pose(r, p_ue, ips, p_bs, r_bs, bias,
                                      propagation_speed)
    lik = measurements.params
    g_eta = np.concatenate([
        -lik.kappa_a * np.sin(measurements.aoa_hat.ravel() - params.aoa.ravel()),
        -lik.kappa_d * np.sin(measurements.aod_hat.ravel() - params.aod.ravel()),
        -(measurements.toa_hat - params.toa) / lik.toa_var,
    ])
    ups = upsilon_from_pose(r, p_ue, ips, p_bs, r_bs, propagation_speed)
    g_xi = ups.T @ g_eta
    d_rot = g_xi[:9].reshape(3, 3, order="F")
    return d_rot, g_xi[9:]


def so3_project(x, u) -> np.ndarray:
    """Project an ambient 3x3 matrix onto the tangent space at x."""
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    return x @ (x.T @ u - u.T @ x) / 2.0


def so3_retract(x, u) -> np.ndarray:
    """Retraction (x + u)(I + u^T u)^(-1/2) back onto the manifold."""
    u = np.asarray(u, dtype=float)
    w, v = np.linalg.eigh(np.eye(3) + u.T @ u)
    inv_sqrt = (v / np.sqrt(w)) @ v.T
    return (np.asarray(x, dtype=float) + u) @ inv_sqrt


def riemannian_step(r, grad, step: float) -> np.ndarray:
    """One projected-gradient step of the given size, retracted to SO(3)."""
    return so3_retract(r, -step * so3_project(r, grad))


def _ensure_angles_regular(r, zeta, measurements, p_bs, r_bs, speed):
    """Nudge the rotation off polar arrival elevations.

    The angle derivatives divide by sin(elevation); if any path sits
    within 1e-9 of a pole, compose a 1e-7-radian rotation (two axes tried
    in turn) so the gradient is defined. Departure-side poles cannot be
    fixed by rotating the UE and are left to raise.
    """
    p = measurements.num_paths
    p_ue, ips, bias = _split_zeta(zeta, p)
    for attempt in range(3):
        params = channel_params_from_pose(r, p_ue, ips, p_bs, r_bs, bias, speed)
        margin = np.minimum(np.abs(params.aoa[:, 1]),
                            np.abs(np.pi - params.aoa[:, 1])).min()
        if margin > _POLE_GUARD:
            return r
        tweak = rotation_x(_PERTURB_ANGLE) if attempt == 0 else rotation_y(_PERTURB_ANGLE)
        r = r @ tweak
    return r


def _backtrack(value, slope, trial, config, evaluate):
    """Armijo backtracking: shrink the trial step until sufficient decrease.

    slope is the directional derivative along the search direction
    (negative for descent). Returns (accepted_step, new_value) with
    accepted_step = 0.0 when no step passed within the backtrack budget
    (the iterate then stays put).
    """
    for _ in range(_MAX_BACKTRACKS):
        candidate = evaluate(trial)
        if np.isfinite(candidate) and \
                candidate <= value + config.sufficient_decrease * trial * slope:
            return trial, candidate
        trial *= config.shrink_factor
    return 0.0, value


def _residual(r, zeta, measurements, p_bs, r_bs, speed):
    """Weighted residual rho with 0.5*||rho||^2 = nll + 1'kappa_A + 1'kappa_D.

    The identity is exact: 2k*sin^2(d/2) = k - k*cos(d), so the versine
    angle residuals reproduce the cosine likelihood up to its
    parameter-free constant.
    """
    p_ue, ips, bias = _split_zeta(zeta, measurements.num_paths)
    params = channel_params_from_pose(r, p_ue, ips, p_bs, r_bs, bias, speed)
    lik = measurements.params
    da = measurements.aoa_hat.ravel() - params.aoa.ravel()
    dd = measurements.aod_hat.ravel() - params.aod.ravel()
    dt = measurements.toa_hat - params.toa
    return np.concatenate([
        2.0 * np.sqrt(lik.kappa_a) * np.sin(da / 2.0),
        2.0 * np.sqrt(lik.kappa_d) * np.sin(dd / 2.0),
        dt / np.sqrt(lik.toa_var),
    ])


def _residual_jacobian(r, zeta, measurements, p_bs, r_bs, speed, basis):
    """Residual and its Jacobian in reduced coordinates.

    Coordinates are [tangent rotation (3), p_UE, p_1..p_M, b in meters];
    the rotation block is expressed in the orthonormal tangent basis at r
    so the Gauss-Newton system stays square and well scaled.
    """
    p_ue, ips, bias = _split_zeta(zeta, measurements.num_paths)
    params = channel_params_from_pose(r, p_ue, ips, p_bs, r_bs, bias, speed)
    lik = measurements.params
    da = measurements.aoa_hat.ravel() - params.aoa.ravel()
    dd = measurements.aod_hat.ravel() - params.aod.ravel()
    dt = measurements.toa_hat - params.toa
    sqa = np.sqrt(lik.kappa_a)
    sqd = np.sqrt(lik.kappa_d)
    st = np.sqrt(lik.toa_var)
    rho = np.concatenate([2.0 * sqa * np.sin(da / 2.0),
                          2.0 * sqd * np.sin(dd / 2.0), dt / st])
    weights = -np.concatenate([sqa * np.cos(da / 2.0),
                               sqd * np.cos(dd / 2.0), 1.0 / st])
    ups = upsilon_from_pose(r, p_ue, ips, p_bs, r_bs, speed)
    J_xi = weights[:, None] * ups
    J_rot = J_xi[:, :9] @ basis
    J_rest = J_xi[:, 9:].copy()
    J_rest[:, -1] /= speed  # bias column: seconds -> meters
    return rho, np.hstack([J_rot, J_rest])


def _descent_direction(J, g):
    """Damped Gauss-Newton direction, falling back to steepest descent.

    Returns (direction, slope); slope = g.direction is guaranteed
    negative whenever g is nonzero.
    """
    A = J.T @ J
    n = A.shape[0]
    reg = 1e-12 * max(float(np.trace(A)) / n, 1e-300)
    try:
        direction = np.linalg.solve(A + reg * np.eye(n), -g)
        slope = float(g @ direction)
        if np.isfinite(slope) and slope < 0.0:
            return direction, slope
    except np.linalg.LinAlgError:
        pass
    return -g, -float(g @ g)


def _tangent_basis(r) -> np.ndarray:
    """Orthonormal basis (9x3) of the SO(3) tangent space at r.

    Columns are vec(r @ S_i)/sqrt(2) for the three elementary skew
    generators, stacked column-major to match the vec(R) convention of
    the localization state.
    """
    return constraint_nullspace(r, 1)[:9, :3]


def ml_estimate(init, measurements: MeasurementSet, p_bs, r_bs,
                config: MlConfig | None = None,
                propagation_speed: float = SPEED_OF_LIGHT) -> MlEstimate:
    """Block-coordinate ML refinement from an initial estimate.

    init is either an ad-hoc estimate (duck-typed: r_ue_hat, p_ue_hat,
    ip_hats, b_hat) or a flat state vector [vec(R); p_UE; ips; b]. The
    clock bias is optimized internally in meters so the Euclidean block is
    uniformly scaled; results are reported in seconds. Each outer
    iteration takes one backtracking Riemannian step on the rotation, then
    a bounded inner descent on the Euclidean block; it stops when the
    relative NLL decrease over an outer iteration falls below nll_rel_tol
    or when no step can improve the objective at float resolution.
    """
    config = config or MlConfig()
    p_bs = as_vec3(p_bs)
    r_bs = np.asarray(r_bs, dtype=float)
    speed = float(propagation_speed)
    p = measurements.num_paths
    r, zeta = _unpack_init(init, p)
    lik = measurements.params
    kappa_sum = float(lik.kappa_a.sum() + lik.kappa_d.sum())

    scale = np.ones(zeta.size)
    scale[-1] = speed  # bias seconds -> meters
    z = zeta * scale

    def objective_at(rot, z_vec):
        rho = _residual(rot, z_vec / scale, measurements, p_bs, r_bs, speed)
        return 0.5 * float(rho @ rho)

    value = objective_at(r, z)
    if not np.isfinite(value):
        raise GeometryError("initial NLL is not finite")
    trace = [value]
    converged = False
    iterations = 0

    for iterations in range(1, config.max_outer_iters + 1):
        previous = value

        nudged = _ensure_angles_regular(r, z / scale, measurements, p_bs,
                                        r_bs, speed)
        if nudged is not r:
            r = nudged
            value = objective_at(r, z)
        basis = _tangent_basis(r)
        rho, J = _residual_jacobian(r, z / scale, measurements, p_bs, r_bs,
                                    speed, basis)
        g_rot = J[:, :3].T @ rho
        if float(g_rot @ g_rot) > 0.0:
            d_omega, slope = _descent_direction(J[:, :3], g_rot)
            accepted, value = _backtrack(
                value, slope, config.initial_step, config,
                lambda t: objective_at(
                    so3_retract(r, (basis @ (t * d_omega)).reshape(
                        3, 3, order="F")), z))
            if accepted > 0.0:
                r = so3_retract(r, (basis @ (accepted * d_omega)).reshape(
                    3, 3, order="F"))

        for _ in range(config.euclidean_inner_iters):
            nudged = _ensure_angles_regular(r, z / scale, measurements, p_bs,
                                            r_bs, speed)
            if nudged is not r:
                r = nudged
                value = objective_at(r, z)
            basis = _tangent_basis(r)
            rho, J = _residual_jacobian(r, z / scale, measurements, p_bs,
                                        r_bs, speed, basis)
            J_z = J[:, 3:]
            g = J_z.T @ rho
            if float(g @ g) <= 0.0:
                break
            direction, slope = _descent_direction(J_z, g)
            accepted, value = _backtrack(
                value, slope, config.initial_step, config,
                lambda t: objective_at(r, z + t * direction))
            if accepted == 0.0:
                break
            z = z + accepted * direction

        trace.append(value)
        drop = previous - value
        if drop <= config.nll_rel_tol * max(abs(previous), 1e-300):
            converged = True
            break

    p_ue, ips, bias = _split_zeta(z / scale, p)
    return MlEstimate(r_ue_hat=r, p_ue_hat=p_ue, ip_hats=ips, b_hat=bias,
                      nll=value - kappa_sum, iterations=iterations,
                      converged=converged,
                      nll_trace=np.array(trace) - kappa_sum)


def _unpack_init(init, num_paths):
    if hasattr(init, "r_ue_hat"):
        r = np.array(init.r_ue_hat, dtype=float)
        zeta = np.concatenate([
            np.asarray(init.p_ue_hat, dtype=float),
            np.asarray(init.ip_hats, dtype=float).ravel(),
            [float(init.b_hat)],
        ])
    else:
        xi = np.asarray(init, dtype=float)
        if xi.shape != (3 * num_paths + 10,):
            raise GeometryError("state vector length must be 3(M+1)+10")
        r = xi[:9].reshape(3, 3, order="F")
        zeta = xi[9:].copy()
    if zeta.shape != (3 * num_paths + 1,):
        raise GeometryError("initial estimate does not match the path count")
    return assert_rotation(r), zeta
