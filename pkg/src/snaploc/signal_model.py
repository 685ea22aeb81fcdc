"""Downlink MIMO-OFDM signal synthesis.

Uniform planar arrays, array response vectors and their angle
derivatives, free-space channel gains, random unit-modulus beams, and the
noise-free received pilot symbols. Everything the Fisher-information
chain needs; no noisy IQ generation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import GeometryError
from .geometry import (
    ChannelParams,
    Scene,
    SphericalAngles,
    channel_params,
    unit_from_azimuth_elevation,
)

_NORM_TOL = 1e-12


@dataclass(frozen=True)
class ArrayGeometry:
    """Antenna element displacements from the phase center.

    Attributes
    ----------
    displacements : ndarray, shape (3, N)
        Per-element 3D displacement in the local array frame, meters.
        Columns must average to the zero vector (phase-center centering).
    """

    displacements: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.displacements, dtype=float)
        if arr.ndim != 2 or arr.shape[0] != 3 or arr.shape[1] < 1:
            raise GeometryError("displacements must be a (3, N) array with N >= 1")
        if np.linalg.norm(arr.mean(axis=1)) > _NORM_TOL * max(1.0, np.abs(arr).max()):
            raise GeometryError("element displacements must be centered on the phase center")
        arr.setflags(write=False)
        object.__setattr__(self, "displacements", arr)

    @property
    def num_elements(self) -> int:
        return self.displacements.shape[1]


def upa_geometry(side: int, spacing: float) -> ArrayGeometry:
    """Square uniform planar array in the local x-y plane.

    Element (i-1)*side + j (1-based i, j) sits at
    [j - (side+1)/2, -i + (side+1)/2, 0] * spacing, so the grid is centered
    and row index i grows toward -y.
    """
    if side < 1:
        raise GeometryError("array side must be >= 1")
    i = np.repeat(np.arange(1, side + 1), side)
    j = np.tile(np.arange(1, side + 1), side)
    half = (side + 1) / 2.0
    disp = np.vstack([(j - half), (-i + half), np.zeros(side * side)]) * spacing
    return ArrayGeometry(displacements=disp)


@dataclass(frozen=True)
class SignalConfig:
    """OFDM pilot and beamforming configuration.

    Attributes
    ----------
    carrier_frequency : float
        Carrier in Hz.
    subcarrier_spacing : float
        Subcarrier spacing in Hz.
    num_subcarriers, num_symbols : int
        N_f subcarriers and K pilot symbols.
    transmit_power : float
        Total transmit power in watts, spread over the bandwidth.
    noise_psd : float
        Noise power spectral density N_0 in W/Hz.
    noise_figure : float
        Receiver noise figure as a linear factor (>= 1).
    wavelength : float
        Carrier wavelength in meters (propagation speed / carrier).
    precoders : ndarray, shape (K, N_BS), complex
        Unit-norm transmit beam per symbol.
    combiners : ndarray, shape (K, N_UE), complex
        Unit-norm receive beam per symbol.
    """

    carrier_frequency: float
    subcarrier_spacing: float
    num_subcarriers: int
    num_symbols: int
    transmit_power: float
    noise_psd: float
    noise_figure: float
    wavelength: float
    precoders: np.ndarray
    combiners: np.ndarray

    def __post_init__(self):
        if min(self.carrier_frequency, self.subcarrier_spacing, self.transmit_power,
               self.noise_psd, self.noise_figure, self.wavelength) <= 0.0:
            raise GeometryError("signal scalars must be positive")
        if self.num_subcarriers < 1 or self.num_symbols < 1:
            raise GeometryError("subcarrier and symbol counts must be >= 1")
        f = np.asarray(self.precoders, dtype=complex)
        w = np.asarray(self.combiners, dtype=complex)
        k = self.num_symbols
        if f.ndim != 2 or f.shape[0] != k or w.ndim != 2 or w.shape[0] != k:
            raise GeometryError("precoders/combiners must have one row per symbol")
        if np.abs(np.linalg.norm(f, axis=1) - 1.0).max() > _NORM_TOL * 10:
            raise GeometryError("precoders must be unit norm")
        if np.abs(np.linalg.norm(w, axis=1) - 1.0).max() > _NORM_TOL * 10:
            raise GeometryError("combiners must be unit norm")
        f.setflags(write=False)
        w.setflags(write=False)
        object.__setattr__(self, "precoders", f)
        object.__setattr__(self, "combiners", w)

    @property
    def bandwidth(self) -> float:
        return self.num_subcarriers * self.subcarrier_spacing

    @property
    def symbol_energy(self) -> float:
        """Pilot energy E_s = P_TX / B."""
        return self.transmit_power / self.bandwidth

    @property
    def noise_variance(self) -> float:
        """Per-sample combined noise variance n_0 * N_0."""
        return self.noise_figure * self.noise_psd


def build_signal_config(carrier_frequency, subcarrier_spacing, num_subcarriers,
                        num_symbols, transmit_power, noise_psd, noise_figure,
                        precoders, combiners,
                        propagation_speed=3e8) -> SignalConfig:
    """Assemble a SignalConfig, deriving the wavelength from the carrier."""
    return SignalConfig(
        carrier_frequency=float(carrier_frequency),
        subcarrier_spacing=float(subcarrier_spacing),
        num_subcarriers=int(num_subcarriers),
        num_symbols=int(num_symbols),
        transmit_power=float(transmit_power),
        noise_psd=float(noise_psd),
        noise_figure=float(noise_figure),
        wavelength=float(propagation_speed) / float(carrier_frequency),
        precoders=precoders,
        combiners=combiners,
    )


def array_response(geometry: ArrayGeometry, angles: SphericalAngles,
                   wavelength: float) -> np.ndarray:
    """Array response vector; element n is exp(j*(2*pi/lambda)*delta_n . d)."""
    d = unit_from_azimuth_elevation(angles.azimuth, angles.elevation)
    phase = (2.0 * np.pi / wavelength) * (geometry.displacements.T @ d)
    return np.exp(1j * phase)


def array_response_with_gradients(geometry: ArrayGeometry, azimuth, elevation,
                                  wavelength: float):
    """Array response and its azimuth/elevation derivatives.

    Returns (a, da_daz, da_del); derivatives follow from
    da/dtheta = j*(2*pi/lambda) * (Delta^T dd/dtheta) (.) a.
    """
    az = float(azimuth)
    el = float(elevation)
    sin_el, cos_el = np.sin(el), np.cos(el)
    sin_az, cos_az = np.sin(az), np.cos(az)
    d = np.array([sin_el * cos_az, sin_el * sin_az, cos_el])
    dd_daz = np.array([-sin_el * sin_az, sin_el * cos_az, 0.0])
    dd_del = np.array([cos_el * cos_az, cos_el * sin_az, -sin_el])
    scale = 2.0 * np.pi / wavelength
    delta_t = geometry.displacements.T
    a = np.exp(1j * scale * (delta_t @ d))
    da_daz = 1j * scale * (delta_t @ dd_daz) * a
    da_del = 1j * scale * (delta_t @ dd_del) * a
    return a, da_daz, da_del


def channel_gain_magnitude(scene: Scene, m: int, wavelength: float) -> float:
    """Deterministic gain magnitude of path m from free-space path loss.

    The cosine-squared factors model the element radiation pattern at both
    ends; NLoS paths scale by the reflection coefficient and use the total
    two-segment path length.
    """
    params = channel_params(scene)
    cos_a = np.cos(params.aoa[m, 1])
    cos_d = np.cos(params.aod[m, 1])
    if m == 0:
        length = np.linalg.norm(scene.p_bs - scene.p_ue)
        coeff = 1.0
    else:
        p = scene.ips[m - 1]
        length = np.linalg.norm(p - scene.p_bs) + np.linalg.norm(scene.p_ue - p)
        coeff = scene.reflection_coeffs[m - 1]
    mag_sq = (wavelength ** 2 * coeff * cos_a ** 2 * cos_d ** 2
              / ((4.0 * np.pi) ** 2 * length ** 2))
    return float(np.sqrt(mag_sq))


def channel_gain(scene: Scene, m: int, wavelength: float,
                 rng: np.random.Generator) -> complex:
    """Complex gain of path m: deterministic magnitude, uniform random phase.

    Only the phase consumes RNG state (exactly one uniform draw).
    """
    phase = rng.uniform(0.0, 2.0 * np.pi)
    return channel_gain_magnitude(scene, m, wavelength) * np.exp(1j * phase)


def path_gains(scene: Scene, wavelength: float,
               rng: np.random.Generator) -> np.ndarray:
    """Complex gains for all paths, drawn in ascending path order."""
    return np.array([channel_gain(scene, m, wavelength, rng)
                     for m in range(scene.num_paths)])


def random_beams(rng: np.random.Generator, num_antennas: int,
                 num_symbols: int) -> np.ndarray:
    """Unit-norm beams with unit-modulus entries and fresh random phases.

    Returns a (K, N) complex array; each row has Euclidean norm 1. Phases
    are drawn once per symbol and held fixed across subcarriers.
    """
    phases = rng.uniform(0.0, 2.0 * np.pi, size=(num_symbols, num_antennas))
    return np.exp(1j * phases) / np.sqrt(num_antennas)


def arrays_for_config(config: SignalConfig):
    """UE and BS array geometries implied by the beamformer widths.

    Antenna counts are read off the combiner/precoder lengths and laid out
    as square half-wavelength UPAs, the only layout used here. Returns
    (ue_array, bs_array).
    """
    ue = _square_upa(config.combiners.shape[1], config.wavelength)
    bs = _square_upa(config.precoders.shape[1], config.wavelength)
    return ue, bs


def _square_upa(num_antennas: int, wavelength: float) -> ArrayGeometry:
    side = math.isqrt(num_antennas)
    if side * side != num_antennas:
        raise GeometryError(
            f"antenna count {num_antennas} does not form a square UPA")
    return upa_geometry(side, wavelength / 2.0)


def noise_free_observations_from_params(params: ChannelParams, gains,
                                        config: SignalConfig,
                                        ue_array: ArrayGeometry,
                                        bs_array: ArrayGeometry) -> np.ndarray:
    """Noise-free received pilots for explicit channel parameters.

    Returns a (K, N_f) complex array with
    y[k, n] = sum_m h_m (w_k^H a_UE,m)(a_BS,m^T f_k) sqrt(E_s)
              * exp(-j*2*pi*n*subcarrier_spacing*toa_m)   for n = 0..N_f-1.
    """
    gains = np.asarray(gains, dtype=complex)
    k_count = config.num_symbols
    n_count = config.num_subcarriers
    out = np.zeros((k_count, n_count), dtype=complex)
    n_idx = np.arange(n_count)
    pilot = np.sqrt(config.symbol_energy)
    for m in range(params.num_paths):
        a_ue = _raw_response(ue_array, params.aoa[m], config.wavelength)
        a_bs = _raw_response(bs_array, params.aod[m], config.wavelength)
        beam = (config.combiners.conj() @ a_ue) * (config.precoders @ a_bs)
        ramp = np.exp(-2j * np.pi * n_idx * config.subcarrier_spacing * params.toa[m])
        out += gains[m] * pilot * np.outer(beam, ramp)
    return out


def _raw_response(geometry: ArrayGeometry, angles, wavelength: float) -> np.ndarray:
    d = unit_from_azimuth_elevation(angles[0], angles[1])
    return np.exp(1j * (2.0 * np.pi / wavelength) * (geometry.displacements.T @ d))


def noise_free_observations(scene: Scene, gains, config: SignalConfig,
                            ue_array: ArrayGeometry | None = None,
                            bs_array: ArrayGeometry | None = None) -> np.ndarray:
    """Noise-free received pilots of a scene; see the params variant.

    Arrays default to the half-wavelength UPAs implied by the config.
    """
    if ue_array is None or bs_array is None:
        ue_array, bs_array = arrays_for_config(config)
    return noise_free_observations_from_params(
        channel_params(scene), gains, config, ue_array, bs_array)


def noise_free_symbol(scene: Scene, gains, config: SignalConfig,
                      k: int, n: int,
                      ue_array: ArrayGeometry | None = None,
                      bs_array: ArrayGeometry | None = None) -> complex:
    """Single noise-free pilot sample for 1-based symbol k, subcarrier n."""
    if ue_array is None or bs_array is None:
        ue_array, bs_array = arrays_for_config(config)
    if not (1 <= k <= config.num_symbols and 1 <= n <= config.num_subcarriers):
        raise GeometryError("symbol or subcarrier index out of range")
    params = channel_params(scene)
    gains = np.asarray(gains, dtype=complex)
    pilot = np.sqrt(config.symbol_energy)
    total = 0.0 + 0.0j
    for m in range(params.num_paths):
        a_ue = _raw_response(ue_array, params.aoa[m], config.wavelength)
        a_bs = _raw_response(bs_array, params.aod[m], config.wavelength)
        coupling = (config.combiners[k - 1].conj() @ a_ue) * (config.precoders[k - 1] @ a_bs)
        ramp = np.exp(-2j * np.pi * (n - 1) * config.subcarrier_spacing * params.toa[m])
        total += gains[m] * coupling * pilot * ramp
    return complex(total)
