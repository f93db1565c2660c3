"""Corrections turning raw measured vibrational spectra into normalized G_T(E).

Pipeline order is fixed: background subtraction, population (Bose)
correction, multiphonon stripping, elastic-line removal, normalization.
Elastic removal runs late so the low-energy quadratic tail is not distorted
by the multiphonon subtraction.
"""

import warnings
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from .core import EnergyGrid, Spectrum, SpectrumSet, integrate, resample
from .errors import FitConvergenceError, ValidationError
from .thermal import bose_occupation


@dataclass(frozen=True)
class CorrectionConfig:
    """Knobs of the spectrum-correction pipeline.

    ``elastic_cutoff_cm`` is normally in 10-20 cm^-1; ``normalization_cutoff_cm``
    is 600 by convention (380 as a robustness alternative). ``multiphonon_order``
    0 disables multiphonon stripping entirely.
    """

    elastic_cutoff_cm: float = 15.0
    normalization_cutoff_cm: float = 600.0
    multiphonon_order: int = 2
    multiphonon_tolerance: float = 1e-4
    background: Spectrum = None

    def __post_init__(self):
        if self.elastic_cutoff_cm <= 0:
            raise ValidationError("CorrectionConfig.elastic_cutoff_cm must be > 0")
        if self.normalization_cutoff_cm <= self.elastic_cutoff_cm:
            raise ValidationError(
                "CorrectionConfig.normalization_cutoff_cm must exceed the elastic cutoff"
            )
        if self.multiphonon_order < 0:
            raise ValidationError("CorrectionConfig.multiphonon_order must be >= 0")
        if self.multiphonon_tolerance <= 0:
            raise ValidationError("CorrectionConfig.multiphonon_tolerance must be > 0")


def subtract_background(spec: Spectrum, bg: Spectrum) -> Spectrum:
    """Subtract an instrumental background, clamping negatives to zero."""
    if not spec.grid.matches(bg.grid):
        bg = resample(bg, spec.grid)
    return spec.with_intensity(
        np.clip(spec.intensity - bg.intensity, 0.0, None), provenance="corrected"
    )


def correct_population(spec: Spectrum) -> Spectrum:
    """Divide by (n(E,T) + 1), the neutron energy-loss excitation probability."""
    centers = spec.grid.centers
    out = spec.intensity.copy()
    ok = centers > 0
    if not np.all(ok):
        warnings.warn("population correction: skipping bins at E <= 0")
    out[ok] = out[ok] / (bose_occupation(centers[ok], spec.temperature_K) + 1.0)
    return spec.with_intensity(out, provenance="corrected")


def _convolve_masses(mass_a, mass_b, grid: EnergyGrid):
    """Convolution of two per-bin mass arrays, folded back onto the grid.

    Mass landing beyond the grid maximum is dropped. Requires a uniform grid.
    """
    widths = grid.widths
    if not np.allclose(widths, widths[0], rtol=1e-9, atol=0.0):
        raise ValidationError("multiphonon correction requires a uniform grid")
    step = widths[0]
    conv = np.convolve(mass_a, mass_b)
    # Entry k of conv sits at energy 2*c0 + k*step; fold into the source bins.
    energies = 2.0 * grid.centers[0] + step * np.arange(conv.size)
    idx = np.floor((energies - grid.edges[0]) / step).astype(int)
    out = np.zeros(grid.n_bins)
    keep = (idx >= 0) & (idx < grid.n_bins)
    np.add.at(out, idx[keep], conv[keep])
    return out


def _order_weights(total, order):
    """Debye-Waller strength w with sum_{k=1..order} w^k/k! = total, and the weights."""
    import math

    from scipy.optimize import brentq

    ks = np.arange(1, order + 1)
    facts = np.array([math.factorial(k) for k in ks], dtype=float)

    def excess(w):
        return np.sum(w**ks / facts) - total

    hi = max(1.0, total)
    while excess(hi) < 0:
        hi *= 2.0
    w = brentq(excess, 0.0, hi, xtol=1e-14, rtol=1e-14)
    return w, w**ks / facts


def correct_multiphonon(spec: Spectrum, cfg: CorrectionConfig) -> Spectrum:
    """Strip multiphonon intensity with an iterated incoherent-expansion model.

    The measured spectrum is decomposed as sum_k (w^k/k!) * g1^(*k) with g1
    the unit-area one-phonon shape and w an effective Debye-Waller strength
    chosen so the expansion reproduces the integrated intensity. Orders
    2..multiphonon_order are rebuilt from the current g1 estimate and
    subtracted until the shape stabilizes. The result carries the original
    total intensity, reshaped onto the one-phonon profile, so the exact
    instrument scheme (which this stands in for) can be swapped in without
    touching normalization. Order 0 (and 1) pass the spectrum through.
    """
    if cfg.multiphonon_order <= 1:
        return spec
    total = spec.total()
    if total <= 0:
        return spec
    widths = spec.grid.widths
    w, weights = _order_weights(total, cfg.multiphonon_order)

    mass = spec.intensity * widths
    g1 = mass / total
    # Damped fixed-point iteration; strong multiphonon weights make the
    # undamped map oscillate between spike- and band-dominated shapes.
    damping = 0.5
    for _ in range(100):
        # Build orders 2..K from the current one-phonon shape.
        higher = np.zeros_like(g1)
        conv = g1.copy()
        for k in range(2, cfg.multiphonon_order + 1):
            conv = _convolve_masses(conv, g1, spec.grid)
            conv_sum = conv.sum()
            profile = conv / conv_sum if conv_sum > 0 else conv
            higher += weights[k - 1] * profile
        new_mass = np.clip(mass - higher, 0.0, None)
        s = new_mass.sum()
        if s <= 0:
            raise FitConvergenceError(
                "multiphonon correction consumed the whole spectrum",
                last=spec.with_intensity(higher / widths, provenance="corrected"),
            )
        new_g1 = (1.0 - damping) * g1 + damping * new_mass / s
        delta = np.abs(new_g1 - g1).sum()
        g1 = new_g1
        if delta < cfg.multiphonon_tolerance * damping:
            return spec.with_intensity(g1 * total / widths, provenance="corrected")
    raise FitConvergenceError(
        "multiphonon correction did not converge in 100 iterations",
        last=spec.with_intensity(g1 * total / widths, provenance="corrected"),
        details={"last_delta": float(delta)},
    )


def remove_elastic_line(spec: Spectrum, cfg: CorrectionConfig) -> Spectrum:
    """Replace bins below the elastic cutoff by a quadratic A*E^2 tail.

    A is fixed by matching the density of the first bin at or above the
    cutoff, so the replacement is continuous there.
    """
    centers = spec.grid.centers
    cutoff = cfg.elastic_cutoff_cm
    if cutoff <= spec.grid.edges[0] or cutoff >= spec.grid.edges[-1]:
        raise ValidationError("elastic cutoff outside the energy grid")
    above = np.nonzero(centers >= cutoff)[0]
    if above.size == 0:
        raise ValidationError("elastic cutoff outside the energy grid")
    anchor = above[0]
    a = spec.intensity[anchor] / centers[anchor] ** 2
    out = spec.intensity.copy()
    below = centers < cutoff
    out[below] = a * centers[below] ** 2
    return spec.with_intensity(out, provenance="corrected")


def normalize(spec: Spectrum, cfg: CorrectionConfig) -> Spectrum:
    """Scale so the integral from 0 to the normalization cutoff is exactly one.

    Bins above the cutoff are rescaled by the same factor and kept.
    """
    cutoff = cfg.normalization_cutoff_cm
    if cutoff > spec.grid.edges[-1]:
        raise ValidationError("normalization cutoff beyond the energy grid")
    total = integrate(spec.intensity, spec.grid, lo=0.0, hi=cutoff)
    if total <= 0:
        raise ValidationError("normalize: zero integrated intensity below the cutoff")
    return spec.with_intensity(spec.intensity / total, provenance="normalized")


def correct_spectrum(spec: Spectrum, cfg: CorrectionConfig = None) -> Spectrum:
    """Run the full correction pipeline on one spectrum."""
    cfg = cfg or CorrectionConfig()
    out = spec
    if cfg.background is not None:
        out = subtract_background(out, cfg.background)
    out = correct_population(out)
    out = correct_multiphonon(out, cfg)
    out = remove_elastic_line(out, cfg)
    return normalize(out, cfg)


def interpolate_temperature(spectra: SpectrumSet, temperature_K) -> Spectrum:
    """Per-bin linear interpolation in temperature between measured spectra.

    Exact matches return the measured spectrum; temperatures outside the
    measured range are refused (callers may clamp explicitly).
    """
    t = float(temperature_K)
    temps = spectra.temperatures
    if t < temps[0] or t > temps[-1]:
        raise ValidationError(
            f"extrapolation refused: T={t} K outside measured range "
            f"[{temps[0]}, {temps[-1]}] K"
        )
    exact = np.nonzero(temps == t)[0]
    if exact.size:
        return spectra.spectra[exact[0]]
    hi = int(np.searchsorted(temps, t))
    lo = hi - 1
    s_lo, s_hi = spectra.spectra[lo], spectra.spectra[hi]
    frac = (t - temps[lo]) / (temps[hi] - temps[lo])
    blend = (1.0 - frac) * s_lo.intensity + frac * s_hi.intensity
    return Spectrum(
        grid=spectra.grid,
        intensity=blend,
        temperature_K=t,
        provenance=s_lo.provenance,
    )


class SpectrumCorrector(BaseEstimator, TransformerMixin):
    """Stateless transformer wrapping the correction pipeline.

    Accepts a Spectrum or a SpectrumSet in ``transform`` and applies
    background, population, multiphonon, elastic, and normalization steps
    in order. Parameters mirror CorrectionConfig.
    """

    def __init__(
        self,
        elastic_cutoff_cm=15.0,
        normalization_cutoff_cm=600.0,
        multiphonon_order=2,
        multiphonon_tolerance=1e-4,
        background=None,
    ):
        self.elastic_cutoff_cm = elastic_cutoff_cm
        self.normalization_cutoff_cm = normalization_cutoff_cm
        self.multiphonon_order = multiphonon_order
        self.multiphonon_tolerance = multiphonon_tolerance
        self.background = background

    def _config(self):
        return CorrectionConfig(
            elastic_cutoff_cm=self.elastic_cutoff_cm,
            normalization_cutoff_cm=self.normalization_cutoff_cm,
            multiphonon_order=self.multiphonon_order,
            multiphonon_tolerance=self.multiphonon_tolerance,
            background=self.background,
        )

    def fit(self, X=None, y=None):
        self._config()  # validate parameters
        return self

    def transform(self, X):
        cfg = self._config()
        if isinstance(X, SpectrumSet):
            return X.map(lambda s: correct_spectrum(s, cfg))
        return correct_spectrum(X, cfg)
