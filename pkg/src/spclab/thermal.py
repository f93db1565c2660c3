"""Bose-Einstein statistics and the two-phonon thermal factor.

These drive every relaxation model in the package. Both functions accept
scalars or arrays and are guarded against overflow and cancellation across
the full working range (roughly 1-600 cm^-1, 1 mK-10^4 K).
"""

from dataclasses import dataclass

import numpy as np

from .core import CONSTANTS, EnergyGrid, Spectrum
from .errors import ValidationError
from .validation import frozen_array

# Branch switchovers: series expansion below, hard underflow above.
_SMALL_X = 1e-6
_LARGE_X = 700.0


def _reduced_energy(energy_cm, temperature_K):
    energy_cm = np.asarray(energy_cm, dtype=float)
    temperature_K = np.asarray(temperature_K, dtype=float)
    if np.any(energy_cm <= 0):
        raise ValidationError("bose statistics: energy must be > 0 cm^-1")
    if np.any(temperature_K <= 0):
        raise ValidationError("bose statistics: temperature must be > 0 K")
    return energy_cm / (CONSTANTS.kB_cm_per_K * temperature_K)


def bose_occupation(energy_cm, temperature_K):
    """Mean phonon occupation 1/(e^x - 1) with x = E / (k_B T).

    Uses the series 1/x - 1/2 + x/12 for x < 1e-6 to avoid cancellation and
    returns 0 beyond x = 700 where the population underflows.
    """
    x = _reduced_energy(energy_cm, temperature_K)
    shape = np.shape(x)
    x = np.atleast_1d(x)
    out = np.zeros_like(x)
    small = x < _SMALL_X
    large = x > _LARGE_X
    mid = ~small & ~large
    out[small] = 1.0 / x[small] - 0.5 + x[small] / 12.0
    out[mid] = 1.0 / np.expm1(x[mid])
    return float(out[0]) if shape == () else out.reshape(shape)


def two_phonon_factor(energy_cm, temperature_K):
    """Thermal weight e^x / (e^x - 1)^2 for a two-phonon event at equal energies.

    Equals n(E,T) * (n(E,T) + 1). Evaluated as e^-x / (1 - e^-x)^2 so large
    x decays to the e^-x asymptote without overflow; small x uses the series
    1/x^2 - 1/12 + x^2/240.
    """
    x = _reduced_energy(energy_cm, temperature_K)
    shape = np.shape(x)
    x = np.atleast_1d(x)
    out = np.zeros_like(x)
    small = x < _SMALL_X
    large = x > _LARGE_X
    mid = ~small & ~large
    out[small] = 1.0 / x[small] ** 2 - 1.0 / 12.0 + x[small] ** 2 / 240.0
    # expm1 keeps the denominator cancellation-free near the small-x switchover
    out[mid] = np.exp(-x[mid]) / np.expm1(-x[mid]) ** 2
    out[large] = np.exp(-x[large])
    return float(out[0]) if shape == () else out.reshape(shape)


@dataclass(frozen=True, eq=False)
class BoseWeightedSpectrum:
    """A spectrum weighted bin-wise by the Bose occupation at its temperature."""

    grid: EnergyGrid
    weighted: np.ndarray
    temperature_K: float

    def __post_init__(self):
        weighted = frozen_array(self.weighted, "BoseWeightedSpectrum.weighted")
        if weighted.size != self.grid.n_bins:
            raise ValidationError("BoseWeightedSpectrum: length mismatch with grid")
        if np.any(weighted < 0):
            raise ValidationError("BoseWeightedSpectrum: weights must be >= 0")
        object.__setattr__(self, "weighted", weighted)


def bose_weight(spec: Spectrum) -> BoseWeightedSpectrum:
    """Weight a spectrum by the phonon occupation at its own temperature.

    Bins centered at E <= 0 get weight zero.
    """
    centers = spec.grid.centers
    weighted = np.zeros_like(spec.intensity)
    ok = centers > 0
    weighted[ok] = spec.intensity[ok] * bose_occupation(
        centers[ok], spec.temperature_K
    )
    return BoseWeightedSpectrum(
        grid=spec.grid, weighted=weighted, temperature_K=spec.temperature_K
    )
