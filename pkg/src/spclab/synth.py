"""Synthetic spectra, rate series, and recovery traces with known ground truth.

Every generator is a pure function of its parameters and seed (numpy PCG64),
and emits the same objects the analysis side consumes, so round-trip tests
close over the full pipeline.
"""

from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr

from .core import EnergyGrid, Spectrum, SpectrumSet
from .errors import ValidationError
from .ins import CorrectionConfig, normalize
from .relax import RatePoint, RateSeries, RecoveryTrace
from .spc import LambdaProfile, forward_rate

RNG_ALGORITHM = "numpy PCG64 (default_rng)"

GAUSS_SIGMA = 2.0 * np.sqrt(2.0 * np.log(2.0))  # fwhm / sigma


@dataclass(frozen=True)
class SynthPeak:
    """One Gaussian component: position, width, area, and their T-slopes."""

    center_cm: float
    fwhm_cm: float
    weight: float
    softening_cm_per_K: float = 0.0
    broadening_cm_per_K: float = 0.0

    def __post_init__(self):
        if self.fwhm_cm <= 0:
            raise ValidationError("SynthPeak.fwhm_cm must be > 0")
        if self.weight < 0:
            raise ValidationError("SynthPeak.weight must be >= 0")


@dataclass(frozen=True, eq=False)
class SynthSpec:
    """Recipe for a temperature-indexed synthetic spectrum family."""

    peaks: tuple
    temperatures_K: tuple
    grid: EnergyGrid
    debye_amplitude: float = 0.0
    debye_cutoff_cm: float = 15.0
    normalization_cutoff_cm: float = 600.0
    seed: int = 0

    def __post_init__(self):
        if not self.peaks and self.debye_amplitude <= 0:
            raise ValidationError("SynthSpec: need at least one peak or a Debye tail")
        if self.debye_amplitude < 0:
            raise ValidationError("SynthSpec.debye_amplitude must be >= 0")
        temps = tuple(float(t) for t in self.temperatures_K)
        if len(temps) < 1 or any(b <= a for a, b in zip(temps, temps[1:])):
            raise ValidationError("SynthSpec.temperatures_K must be strictly increasing")
        object.__setattr__(self, "peaks", tuple(self.peaks))
        object.__setattr__(self, "temperatures_K", temps)


def _gaussian_bin_masses(grid, center, fwhm):
    sigma = fwhm / GAUSS_SIGMA
    return np.diff(ndtr((grid.edges - center) / sigma))


def generate_spectrum_set(spec: SynthSpec) -> SpectrumSet:
    """Build the synthetic spectrum family: shifted Gaussian comb + Debye tail.

    Peak centers move as center + softening*(T - T_min); widths as
    fwhm + broadening*(T - T_min), floored at a tenth of the cold width.
    Each spectrum is normalized to unit area below the normalization cutoff.
    Deterministic: the seed only feeds downstream noise generators.
    """
    t0 = spec.temperatures_K[0]
    cfg = CorrectionConfig(
        normalization_cutoff_cm=min(spec.normalization_cutoff_cm, float(spec.grid.edges[-1]))
    )
    spectra = []
    for t in spec.temperatures_K:
        mass = np.zeros(spec.grid.n_bins)
        for peak in spec.peaks:
            center = peak.center_cm + peak.softening_cm_per_K * (t - t0)
            fwhm = max(
                peak.fwhm_cm + peak.broadening_cm_per_K * (t - t0), 0.1 * peak.fwhm_cm
            )
            mass += peak.weight * _gaussian_bin_masses(spec.grid, center, fwhm)
        if spec.debye_amplitude > 0:
            # A * E^2 density below the Debye cutoff, integrated exactly per bin.
            lo = np.minimum(spec.grid.edges[:-1], spec.debye_cutoff_cm)
            hi = np.minimum(spec.grid.edges[1:], spec.debye_cutoff_cm)
            mass += spec.debye_amplitude * (hi**3 - lo**3) / 3.0
        raw = Spectrum(
            grid=spec.grid,
            intensity=mass / spec.grid.widths,
            temperature_K=t,
            provenance="corrected",
        )
        spectra.append(normalize(raw, cfg))
    return SpectrumSet(tuple(spectra))


def generate_rate_series(
    profile: LambdaProfile,
    spectra: SpectrumSet,
    temperatures_K,
    noise_rel=0.0,
    seed=0,
    a_dir_per_us_K=0.0,
    label="synthetic",
) -> RateSeries:
    """Rates from the forward model with multiplicative lognormal noise.

    The quoted one-sigma error of each point is rate * noise_rel. Points
    below 30 K are tagged saturation-recovery, the rest inversion-recovery,
    matching the assembly convention.
    """
    temps = np.asarray(temperatures_K, dtype=float)
    if noise_rel < 0:
        raise ValidationError("generate_rate_series: noise_rel must be >= 0")
    rng = np.random.default_rng(seed)
    points = []
    for t in temps:
        rate = a_dir_per_us_K * t + forward_rate(profile, spectra, t)
        if noise_rel > 0:
            rate *= np.exp(noise_rel * rng.standard_normal())
        points.append(
            RatePoint(
                temperature_K=float(t),
                rate_per_us=float(rate),
                rate_err_per_us=float(rate * noise_rel),
                method="saturation" if t < 30.0 else "inversion",
            )
        )
    return RateSeries(points=tuple(points), label=label)


def generate_recovery_trace(
    t1_us,
    beta=1.0,
    kind="inversion",
    noise=0.0,
    seed=0,
    n_points=64,
) -> RecoveryTrace:
    """Stretched-exponential recovery with additive Gaussian noise.

    Inversion: 1 - 2 exp(-(t/T1)^beta); saturation: 1 - exp(-(t/T1)^beta).
    Delays are log-spaced over [T1/50, 10 T1].
    """
    if t1_us <= 0:
        raise ValidationError("generate_recovery_trace: t1_us must be > 0")
    if not 0.5 <= beta <= 1.5:
        raise ValidationError("generate_recovery_trace: beta must be in [0.5, 1.5]")
    if kind not in ("inversion", "saturation"):
        raise ValidationError("generate_recovery_trace: kind must be inversion|saturation")
    if n_points < 8:
        raise ValidationError("generate_recovery_trace: need at least 8 points")
    delays = np.geomspace(t1_us / 50.0, 10.0 * t1_us, int(n_points))
    decay = np.exp(-((delays / t1_us) ** beta))
    signal = 1.0 - (2.0 if kind == "inversion" else 1.0) * decay
    if noise > 0:
        rng = np.random.default_rng(seed)
        signal = signal + noise * rng.standard_normal(signal.size)
    return RecoveryTrace(delays_us=delays, signal=signal, kind=kind)
