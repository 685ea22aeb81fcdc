"""Fisher-information chain for the localization problem.

From the Slepian-Bangs information matrix of the channel parameters
(angles, delays, complex gains), through the equivalent FIM after
removing the nuisance gains, the Jacobian transform onto the localization
state xi = [vec(R_UE), p_UE, p_1..p_M, b], the constrained CRB on the
SO(3) manifold, the four scalar error bounds, and the likelihood
parameters (von Mises concentrations and ToA variances) consumed by the
estimators.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import i0e, i1e

from .errors import GeometryError, NonIdentifiableError, SingularGeometryError
from .geometry import Scene, channel_params
from .signal_model import (
    ArrayGeometry,
    SignalConfig,
    array_response_with_gradients,
    arrays_for_config,
)

_EIG_CUTOFF = 1e-12
_POLE_TOL = 1e-9
_KAPPA_TOL = 1e-10
_KAPPA_HIGH_SNR = 500.0


@dataclass(frozen=True)
class BoundsReport:
    """Constrained CRB and the scalar error bounds derived from it.

    oeb is the dimensionless bound on the rotation Frobenius RMSE, peb and
    ipeb are in meters (ipeb averaged over incidence points), seb is in
    seconds.
    """

    ccrb: np.ndarray
    oeb: float
    peb: float
    ipeb: float
    seb: float


@dataclass(frozen=True)
class LikelihoodParams:
    """Measurement-likelihood parameters extracted from the channel FIM.

    Attributes
    ----------
    kappa_a, kappa_d : ndarray, shape (2(M+1),)
        von Mises concentrations for arrival and departure angles,
        (azimuth, elevation) interleaved per path, LoS first.
    sigma_tau : ndarray, shape (M+1, M+1)
        Diagonal Gaussian ToA covariance, seconds^2.
    """

    kappa_a: np.ndarray
    kappa_d: np.ndarray
    sigma_tau: np.ndarray

    def __post_init__(self):
        ka = np.asarray(self.kappa_a, dtype=float)
        kd = np.asarray(self.kappa_d, dtype=float)
        st = np.asarray(self.sigma_tau, dtype=float)
        p = st.shape[0] if st.ndim == 2 else 0
        if ka.shape != kd.shape or ka.ndim != 1 or st.shape != (p, p) or ka.size != 2 * p:
            raise GeometryError("likelihood parameter shapes are inconsistent")
        if np.any(ka < 0.0) or np.any(kd < 0.0):
            raise GeometryError("concentrations must be nonnegative")
        if np.any(st != np.diag(np.diag(st))) or np.any(np.diag(st) <= 0.0):
            raise GeometryError("ToA covariance must be diagonal positive")
        for name, val in (("kappa_a", ka), ("kappa_d", kd), ("sigma_tau", st)):
            val.setflags(write=False)
            object.__setattr__(self, name, val)

    @property
    def toa_var(self) -> np.ndarray:
        """Diagonal of the ToA covariance as a vector, seconds^2."""
        return np.diag(self.sigma_tau)

    @property
    def num_paths(self) -> int:
        return self.sigma_tau.shape[0]


def _scaled_eigh(matrix, label):
    """Eigendecomposition of the unit-normalized symmetric matrix.

    Jacobi scaling D^-1 J D^-1 with D = sqrt(diag J) removes the mixed
    physical units (rad^2, m^2, s^2 rows differ by many decades), so the
    relative eigenvalue cutoff measures structural rank, not unit choice.
    Returns (eigenvalues, eigenvectors, diag_scale); raises
    NonIdentifiableError when the scaled matrix has relative eigenvalue
    at or below the cutoff.
    """
    J = np.asarray(matrix, dtype=float)
    diag = np.diag(J)
    if np.any(diag <= 0.0) or not np.all(np.isfinite(J)):
        raise NonIdentifiableError(
            f"{label}: zero or invalid diagonal information",
            eigenvalues=np.zeros(J.shape[0]),
            null_directions=np.eye(J.shape[0])[:, diag <= 0.0] if np.all(np.isfinite(diag)) else None,
        )
    d = np.sqrt(diag)
    scaled = J / np.outer(d, d)
    scaled = (scaled + scaled.T) / 2.0
    w, v = np.linalg.eigh(scaled)
    if w[-1] <= 0.0 or w[0] <= _EIG_CUTOFF * w[-1]:
        bad = w <= _EIG_CUTOFF * max(w[-1], 0.0)
        null = (v[:, bad].T / d).T
        raise NonIdentifiableError(
            f"{label}: singular information matrix "
            f"(relative eigenvalues {w / max(w[-1], np.finfo(float).tiny)})",
            eigenvalues=w,
            null_directions=null,
        )
    return w, v, d


def _solve_spd(matrix, rhs, label):
    """Solve matrix @ x = rhs for a symmetric matrix with the scaled-eigen
    identifiability gate; genuine inversion, no pseudo-inverse cutoff."""
    w, v, d = _scaled_eigh(matrix, label)
    y = np.asarray(rhs, dtype=float)
    scaled_rhs = (v.T @ (y.T / d).T)
    x = v @ ((scaled_rhs.T / w).T)
    return (x.T / d).T


def invert_information(matrix, label="information matrix"):
    """Inverse of a symmetric information matrix via scaled eigenlogic."""
    w, v, d = _scaled_eigh(matrix, label)
    inv_scaled = v @ np.diag(1.0 / w) @ v.T
    inv = inv_scaled / np.outer(d, d)
    return (inv + inv.T) / 2.0


def identifiability_margin(matrix) -> float:
    """Smallest relative eigenvalue of the unit-normalized matrix.

    Zero (or negative) means structurally singular; values at or below the
    1e-12 cutoff trigger the error path in the solving routines.
    """
    J = np.asarray(matrix, dtype=float)
    diag = np.diag(J).copy()
    if np.any(diag <= 0.0) or not np.all(np.isfinite(J)):
        return 0.0
    d = np.sqrt(diag)
    scaled = J / np.outer(d, d)
    w = np.linalg.eigvalsh((scaled + scaled.T) / 2.0)
    if w[-1] <= 0.0:
        return 0.0
    return float(w[0] / w[-1])


def fim_channel(scene: Scene, gains, config: SignalConfig,
                ue_array: ArrayGeometry | None = None,
                bs_array: ArrayGeometry | None = None) -> np.ndarray:
    """Slepian-Bangs FIM of the channel parameters [eta; Re(h); Im(h)].

    Entry (i, j) is (2 E_s / (n_0 N_0)) * sum over symbols and subcarriers
    of Re{d y* / d eta_i * d y / d eta_j}. The per-symbol beam couplings
    and per-subcarrier delay ramps factorize, so the double sum reduces to
    Re((C^H C) (.) (U^H U)) with C holding symbol coefficients and U the
    subcarrier ramps. Arrays default to the UPAs implied by the config.
    """
    if ue_array is None or bs_array is None:
        ue_array, bs_array = arrays_for_config(config)
    params = channel_params(scene)
    gains = np.asarray(gains, dtype=complex)
    p = params.num_paths
    if gains.shape != (p,):
        raise GeometryError("one complex gain per path is required")
    k_count = config.num_symbols
    n_count = config.num_subcarriers
    cols = 7 * p
    C = np.empty((k_count, cols), dtype=complex)
    U = np.empty((n_count, cols), dtype=complex)
    n_idx = np.arange(n_count)
    delay_factor = -2j * np.pi * config.subcarrier_spacing * n_idx
    W = config.combiners.conj()
    F = config.precoders
    for m in range(p):
        a_ue, da_ue_az, da_ue_el = array_response_with_gradients(
            ue_array, params.aoa[m, 0], params.aoa[m, 1], config.wavelength)
        a_bs, da_bs_az, da_bs_el = array_response_with_gradients(
            bs_array, params.aod[m, 0], params.aod[m, 1], config.wavelength)
        wa = W @ a_ue
        wa_az = W @ da_ue_az
        wa_el = W @ da_ue_el
        af = F @ a_bs
        af_az = F @ da_bs_az
        af_el = F @ da_bs_el
        ramp = np.exp(delay_factor * params.toa[m])
        h = gains[m]
        # AoA az, el
        C[:, 2 * m] = h * wa_az * af
        C[:, 2 * m + 1] = h * wa_el * af
        # AoD az, el
        C[:, 2 * p + 2 * m] = h * wa * af_az
        C[:, 2 * p + 2 * m + 1] = h * wa * af_el
        # ToA
        C[:, 4 * p + m] = h * wa * af
        # Gain real/imaginary parts
        C[:, 5 * p + m] = wa * af
        C[:, 6 * p + m] = 1j * wa * af
        U[:, 2 * m] = ramp
        U[:, 2 * m + 1] = ramp
        U[:, 2 * p + 2 * m] = ramp
        U[:, 2 * p + 2 * m + 1] = ramp
        U[:, 4 * p + m] = delay_factor * ramp
        U[:, 5 * p + m] = ramp
        U[:, 6 * p + m] = ramp
    scale = 2.0 * config.symbol_energy / config.noise_variance
    J = scale * np.real((C.conj().T @ C) * (U.conj().T @ U))
    return (J + J.T) / 2.0


def efim_channel(J_channel) -> np.ndarray:
    """Equivalent FIM of (AoA, AoD, ToA) with the gains marginalized out.

    Computed as the Schur complement of the gain block, which equals the
    inverse of the leading 5(M+1) block of the full inverse. Raises
    NonIdentifiableError when the channel FIM is singular.
    """
    J = np.asarray(J_channel, dtype=float)
    total = J.shape[0]
    if total % 7 != 0:
        raise GeometryError("channel FIM size must be a multiple of 7")
    _scaled_eigh(J, "channel FIM")
    n_eta = 5 * (total // 7)
    A = J[:n_eta, :n_eta]
    B = J[:n_eta, n_eta:]
    D = J[n_eta:, n_eta:]
    efim = A - B @ _solve_spd(D, B.T, "gain block")
    return (efim + efim.T) / 2.0


def _angle_jacobian_blocks(frame, u):
    """Gradients of (azimuth, elevation) of direction u in a frame.

    Returns (daz_du, del_du, x, y, s) where x = r1.u, y = r2.u and
    s = sin(elevation); raises SingularGeometryError at the poles.
    """
    r1, r2, r3 = frame[:, 0], frame[:, 1], frame[:, 2]
    x = r1 @ u
    y = r2 @ u
    z = r3 @ u
    planar_sq = x * x + y * y
    s_sq = 1.0 - z * z
    if s_sq <= _POLE_TOL ** 2 or planar_sq <= _POLE_TOL ** 2:
        raise SingularGeometryError(
            "angle derivatives are undefined at polar elevation")
    s = np.sqrt(s_sq)
    daz_du = (x * r2 - y * r1) / planar_sq
    del_du = -r3 / s
    return daz_du, del_du, x, y, s


def upsilon_from_pose(r_ue, p_ue, ips, p_bs, r_bs,
                      propagation_speed) -> np.ndarray:
    """Jacobian of eta w.r.t. xi = [vec(R_UE); p_UE; p_1..p_M; b].

    vec() stacks columns. Closed forms: angle gradients through the frame
    dot products and the normalized offset directions, ToA gradients
    through the path lengths. AoDs and ToAs do not depend on the rotation;
    angles do not depend on the clock bias.
    """
    r_ue = np.asarray(r_ue, dtype=float)
    r_bs = np.asarray(r_bs, dtype=float)
    p_ue = np.asarray(p_ue, dtype=float)
    p_bs = np.asarray(p_bs, dtype=float)
    ips = np.atleast_2d(np.asarray(ips, dtype=float))
    n_ips = ips.shape[0]
    p = n_ips + 1
    n_xi = 3 * p + 10
    ups = np.zeros((5 * p, n_xi))
    c = propagation_speed

    def ip_cols(m):
        return slice(12 + 3 * (m - 1), 15 + 3 * (m - 1))

    for m in range(p):
        # Global unit direction and range from the UE toward the source.
        if m == 0:
            diff_a = p_bs - p_ue
        else:
            diff_a = ips[m - 1] - p_ue
        dist_a = np.linalg.norm(diff_a)
        if dist_a <= 0.0:
            raise SingularGeometryError("coincident points in arrival geometry")
        u_a = diff_a / dist_a
        daz_du, del_du, x, y, s = _angle_jacobian_blocks(r_ue, u_a)
        row_az, row_el = 2 * m, 2 * m + 1
        # Rotation block: d angle / d vec(R_UE); only the first two frame
        # columns carry azimuth, only the third carries elevation.
        planar_sq = x * x + y * y
        ups[row_az, 0:3] = -y * u_a / planar_sq
        ups[row_az, 3:6] = x * u_a / planar_sq
        ups[row_el, 6:9] = -u_a / s
        du_dpue = (np.outer(u_a, u_a) - np.eye(3)) / dist_a
        ups[row_az, 9:12] = du_dpue.T @ daz_du
        ups[row_el, 9:12] = du_dpue.T @ del_du
        if m != 0:
            du_dpm = (np.eye(3) - np.outer(u_a, u_a)) / dist_a
            ups[row_az, ip_cols(m)] = du_dpm.T @ daz_du
            ups[row_el, ip_cols(m)] = du_dpm.T @ del_du

        # Departure angles in the BS frame.
        if m == 0:
            diff_d = p_ue - p_bs
        else:
            diff_d = ips[m - 1] - p_bs
        dist_d = np.linalg.norm(diff_d)
        if dist_d <= 0.0:
            raise SingularGeometryError("coincident points in departure geometry")
        u_d = diff_d / dist_d
        daz_du, del_du, _, _, _ = _angle_jacobian_blocks(r_bs, u_d)
        row_az, row_el = 2 * p + 2 * m, 2 * p + 2 * m + 1
        proj = (np.eye(3) - np.outer(u_d, u_d)) / dist_d
        if m == 0:
            ups[row_az, 9:12] = proj.T @ daz_du
            ups[row_el, 9:12] = proj.T @ del_du
        else:
            ups[row_az, ip_cols(m)] = proj.T @ daz_du
            ups[row_el, ip_cols(m)] = proj.T @ del_du

        # ToA row.
        row_toa = 4 * p + m
        if m == 0:
            ups[row_toa, 9:12] = (p_ue - p_bs) / (c * dist_a)
        else:
            pm = ips[m - 1]
            dist_pm_ue = np.linalg.norm(p_ue - pm)
            dist_pm_bs = np.linalg.norm(pm - p_bs)
            ups[row_toa, 9:12] = (p_ue - pm) / (c * dist_pm_ue)
            ups[row_toa, ip_cols(m)] = ((pm - p_bs) / dist_pm_bs
                                        + (pm - p_ue) / dist_pm_ue) / c
        ups[row_toa, n_xi - 1] = 1.0
    return ups


def jacobian_upsilon(scene: Scene) -> np.ndarray:
    """Jacobian of the channel parameters w.r.t. the localization state."""
    return upsilon_from_pose(scene.r_ue, scene.p_ue, scene.ips,
                             scene.p_bs, scene.r_bs, scene.propagation_speed)


def fim_localization(J_eta, upsilon) -> np.ndarray:
    """FIM of the localization state: Upsilon^T J_eta Upsilon."""
    ups = np.asarray(upsilon, dtype=float)
    J = ups.T @ np.asarray(J_eta, dtype=float) @ ups
    return (J + J.T) / 2.0


def constraint_values(r_ue) -> np.ndarray:
    """Orthonormality constraint residuals h(xi) of the rotation block."""
    r = np.asarray(r_ue, dtype=float)
    r1, r2, r3 = r[:, 0], r[:, 1], r[:, 2]
    return np.array([
        r1 @ r1 - 1.0,
        r2 @ r1,
        r3 @ r1,
        r2 @ r2 - 1.0,
        r2 @ r3,
        r3 @ r3 - 1.0,
    ])


def constraint_gradient(r_ue, num_ips: int) -> np.ndarray:
    """Analytic gradient G of the constraints w.r.t. xi (6 x dim(xi))."""
    r = np.asarray(r_ue, dtype=float)
    r1, r2, r3 = r[:, 0], r[:, 1], r[:, 2]
    z = np.zeros(3)
    rows = [
        np.concatenate([2 * r1, z, z]),
        np.concatenate([r2, r1, z]),
        np.concatenate([r3, z, r1]),
        np.concatenate([z, 2 * r2, z]),
        np.concatenate([z, r3, r2]),
        np.concatenate([z, z, 2 * r3]),
    ]
    G = np.zeros((6, 3 * (num_ips + 1) + 10))
    G[:, :9] = np.vstack(rows)
    return G


def constraint_nullspace(r_ue, num_ips: int) -> np.ndarray:
    """Orthonormal basis M of the constraint tangent space.

    Block diagonal of the 9x3 rotation tangent basis (scaled by 1/sqrt(2))
    and the identity over positions and clock bias; satisfies G(xi) M = 0.
    """
    r = np.asarray(r_ue, dtype=float)
    r1, r2, r3 = r[:, 0], r[:, 1], r[:, 2]
    z = np.zeros(3)
    m0 = np.column_stack([
        np.concatenate([-r3, z, r1]),
        np.concatenate([z, -r3, r2]),
        np.concatenate([r2, -r1, z]),
    ])
    rest = 3 * (num_ips + 1) + 1
    out = np.zeros((9 + rest, 3 + rest))
    out[:9, :3] = m0 / np.sqrt(2.0)
    out[9:, 3:] = np.eye(rest)
    return out


def ccrb(J_xi, nullspace_basis) -> np.ndarray:
    """Constrained CRB: M (M^T J_xi M)^-1 M^T.

    Raises NonIdentifiableError when the reduced FIM is singular (relative
    eigenvalue at or below 1e-12 after unit normalization), reporting the
    unobservable directions.
    """
    M = np.asarray(nullspace_basis, dtype=float)
    reduced = M.T @ np.asarray(J_xi, dtype=float) @ M
    reduced = (reduced + reduced.T) / 2.0
    cov = M @ invert_information(reduced, "reduced localization FIM") @ M.T
    return (cov + cov.T) / 2.0


def bounds_from_ccrb(ccrb_matrix, num_ips: int) -> BoundsReport:
    """Scalar error bounds from the CCRB diagonal blocks."""
    C = np.asarray(ccrb_matrix, dtype=float)
    diag = np.diag(C)
    oeb = float(np.sqrt(diag[:9].sum()))
    peb = float(np.sqrt(diag[9:12].sum()))
    ip_var = diag[12:12 + 3 * num_ips]
    ipeb = float(np.sqrt(ip_var.sum() / num_ips))
    seb = float(np.sqrt(diag[-1]))
    return BoundsReport(ccrb=C, oeb=oeb, peb=peb, ipeb=ipeb, seb=seb)


def bounds_for_scene(scene: Scene, gains, config: SignalConfig,
                     decorrelated: bool = False,
                     ue_array: ArrayGeometry | None = None,
                     bs_array: ArrayGeometry | None = None) -> BoundsReport:
    """Full bound chain for a scene.

    With decorrelated=True the channel EFIM is replaced by the diagonal
    matrix of inverse marginal variances before the Jacobian transform.
    """
    J_eta = efim_channel(fim_channel(scene, gains, config, ue_array, bs_array))
    if decorrelated:
        J_eta = decorrelate(J_eta)
    ups = jacobian_upsilon(scene)
    J_xi = fim_localization(J_eta, ups)
    basis = constraint_nullspace(scene.r_ue, scene.num_ips)
    return bounds_from_ccrb(ccrb(J_xi, basis), scene.num_ips)


def kappa_from_variance(variance) -> np.ndarray:
    """Concentration kappa with Fisher information 1/variance.

    Solves kappa * I1(kappa) / I0(kappa) = 1/variance by bisection on the
    strictly increasing left side (relative tolerance 1e-10), with the
    large-argument shortcut kappa = 1/variance once 1/variance exceeds 500
    (where I1/I0 is 1 within 1e-3).
    """
    v = np.asarray(variance, dtype=float)
    scalar = v.ndim == 0
    v = np.atleast_1d(v)
    if np.any(v <= 0.0):
        raise GeometryError("angle variances must be positive")
    target = 1.0 / v
    out = np.empty_like(target)
    high_snr = target > _KAPPA_HIGH_SNR
    out[high_snr] = target[high_snr]
    rest = ~high_snr
    if np.any(rest):
        t = target[rest]
        lo = t.copy()  # kappa*I1/I0 < kappa, so the root is above 1/v
        hi = t + 1.0
        while True:
            grow = _bessel_info(hi) < t
            if not np.any(grow):
                break
            hi[grow] *= 2.0
        while np.max((hi - lo) / hi) > _KAPPA_TOL:
            mid = (lo + hi) / 2.0
            low_side = _bessel_info(mid) < t
            lo[low_side] = mid[low_side]
            hi[~low_side] = mid[~low_side]
        out[rest] = (lo + hi) / 2.0
    return float(out[0]) if scalar else out


def _bessel_info(kappa):
    """kappa * I1(kappa) / I0(kappa), overflow-safe."""
    return kappa * i1e(kappa) / i0e(kappa)


def likelihood_params(J_eta) -> LikelihoodParams:
    """von Mises concentrations and ToA variances from the channel EFIM.

    Marginal variances come from the diagonal of the inverse EFIM; each
    angle variance is converted to the concentration whose circular Fisher
    information matches it.
    """
    J = np.asarray(J_eta, dtype=float)
    p = J.shape[0] // 5
    if J.shape != (5 * p, 5 * p):
        raise GeometryError("EFIM size must be 5*(M+1)")
    variances = np.diag(invert_information(J, "channel EFIM"))
    if np.any(variances <= 0.0):
        raise GeometryError("nonpositive marginal variances")
    return LikelihoodParams(
        kappa_a=kappa_from_variance(variances[: 2 * p]),
        kappa_d=kappa_from_variance(variances[2 * p: 4 * p]),
        sigma_tau=np.diag(variances[4 * p:]),
    )


def decorrelate(J_eta) -> np.ndarray:
    """Diagonal information matrix of inverse marginal variances."""
    variances = np.diag(invert_information(np.asarray(J_eta, dtype=float),
                                           "channel EFIM"))
    return np.diag(1.0 / variances)
