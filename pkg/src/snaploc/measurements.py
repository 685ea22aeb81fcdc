"""Synthetic noisy channel-parameter measurements.

Stands in for an actual channel estimator: angles are drawn from von Mises
distributions and delays from Gaussians whose parameters come from the
channel EFIM, per the assumed factorized measurement likelihood.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import GeometryError
from .fisher import LikelihoodParams
from .geometry import ChannelParams

_TWO_PI = 2.0 * np.pi


@dataclass(frozen=True)
class MeasurementSet:
    """Noisy per-path angle/delay estimates plus their likelihood parameters.

    Angles are plain mod-2pi representatives, not range-checked spherical
    pairs: von Mises noise is circular, and folding a noisy elevation back
    into [0, pi] would silently change the likelihood. Every consumer uses
    sines and cosines, for which the representative is exact.

    Attributes
    ----------
    aoa_hat, aod_hat : ndarray, shape (M+1, 2)
        Measured (azimuth, elevation) per path, LoS first, wrapped to
        [0, 2pi).
    toa_hat : ndarray, shape (M+1,)
        Measured ToAs in seconds; may fall below the geometric minimum.
    params : LikelihoodParams
        Concentrations and ToA covariance the measurements were (or are
        modeled as) drawn with.
    """

    aoa_hat: np.ndarray
    aod_hat: np.ndarray
    toa_hat: np.ndarray
    params: LikelihoodParams

    def __post_init__(self):
        p = self.params.num_paths
        aoa = np.mod(np.asarray(self.aoa_hat, dtype=float), _TWO_PI)
        aod = np.mod(np.asarray(self.aod_hat, dtype=float), _TWO_PI)
        toa = np.asarray(self.toa_hat, dtype=float)
        if aoa.shape != (p, 2) or aod.shape != (p, 2) or toa.shape != (p,):
            raise GeometryError(
                "measurement shapes do not match the likelihood parameters")
        if not (np.all(np.isfinite(aoa)) and np.all(np.isfinite(aod))
                and np.all(np.isfinite(toa))):
            raise GeometryError("measurements must be finite")
        for name, val in (("aoa_hat", aoa), ("aod_hat", aod), ("toa_hat", toa)):
            val.setflags(write=False)
            object.__setattr__(self, name, val)

    @property
    def num_paths(self) -> int:
        return self.toa_hat.size

    @property
    def eta_hat(self) -> np.ndarray:
        """Stacked measurement vector [AoAs, AoDs, ToAs]."""
        return np.concatenate([self.aoa_hat.ravel(), self.aod_hat.ravel(),
                               self.toa_hat])


def sample_measurements(truth: ChannelParams, params: LikelihoodParams,
                        rng: np.random.Generator) -> MeasurementSet:
    """Draw one noisy measurement set around the true channel parameters.

    Independent components: AoAs first (az, el interleaved per path), then
    AoDs, then ToAs, each block as a single vectorized draw. Angles use
    the Best-Fisher von Mises sampler; ToAs are Gaussian and deliberately
    not clamped to the geometric minimum.
    """
    p = truth.num_paths
    if params.num_paths != p:
        raise GeometryError("likelihood parameters do not match path count")
    aoa = rng.vonmises(truth.aoa.ravel(), params.kappa_a).reshape(p, 2)
    aod = rng.vonmises(truth.aod.ravel(), params.kappa_d).reshape(p, 2)
    toa = rng.normal(truth.toa, np.sqrt(params.toa_var))
    return MeasurementSet(aoa_hat=aoa, aod_hat=aod, toa_hat=toa, params=params)


def noise_free_measurements(truth: ChannelParams,
                            params: LikelihoodParams) -> MeasurementSet:
    """Measurement set that equals the truth exactly, parameters attached."""
    if params.num_paths != truth.num_paths:
        raise GeometryError("likelihood parameters do not match path count")
    return MeasurementSet(aoa_hat=truth.aoa.copy(), aod_hat=truth.aod.copy(),
                          toa_hat=truth.toa.copy(), params=params)
