"""Shared domain types, physical constants, energy grids, and quadrature.

Unit conventions are fixed package-wide: energies in cm^-1, temperatures in
K, rates in 1/us, lengths in Angstrom. Spectra store intensity as a density
per cm^-1 so that normalization is independent of the binning.
"""

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ValidationError
from .validation import (
    as_1d_float,
    check_lengths_match,
    check_positive_scalar,
    frozen_array,
)


@dataclass(frozen=True)
class Constants:
    """CODATA-derived physical constants in the package's working units."""

    kB_cm_per_K: float = 0.6950348004861274  # k_B / (h c)
    hbar_J_s: float = 1.054571817e-34
    amu_kg: float = 1.66053906660e-27
    cm_to_rad_per_s: float = 2.0 * np.pi * 2.99792458e10

    def __post_init__(self):
        for name in ("kB_cm_per_K", "hbar_J_s", "amu_kg", "cm_to_rad_per_s"):
            if getattr(self, name) <= 0:
                raise ValidationError(f"Constants.{name} must be positive")


CONSTANTS = Constants()

#: Mean-square displacement scale: u^2 [A^2] = MSD_SCALE_A2_AMU_CM / (m [amu] * freq [cm^-1])
MSD_SCALE_A2_AMU_CM = (
    CONSTANTS.hbar_J_s / (2.0 * CONSTANTS.amu_kg * CONSTANTS.cm_to_rad_per_s) * 1e20
)


@dataclass(frozen=True, eq=False)
class EnergyGrid:
    """Contiguous energy bins defined by strictly increasing edges (cm^-1)."""

    edges: np.ndarray

    def __post_init__(self):
        edges = frozen_array(self.edges, "EnergyGrid.edges")
        if edges.size < 2:
            raise ValidationError("EnergyGrid: need at least 2 edges")
        if edges[0] < 0:
            raise ValidationError("EnergyGrid: first edge must be >= 0")
        if np.any(np.diff(edges) <= 0):
            raise ValidationError("EnergyGrid: edges must be strictly increasing")
        object.__setattr__(self, "edges", edges)

    @classmethod
    def uniform(cls, e_min, e_max, n_bins):
        return cls(np.linspace(float(e_min), float(e_max), int(n_bins) + 1))

    @property
    def centers(self):
        return 0.5 * (self.edges[:-1] + self.edges[1:])

    @property
    def widths(self):
        return np.diff(self.edges)

    @property
    def n_bins(self):
        return self.edges.size - 1

    def matches(self, other):
        return self.edges.shape == other.edges.shape and np.array_equal(
            self.edges, other.edges
        )

    def overlap_widths(self, lo, hi):
        """Per-bin overlap length with the interval [lo, hi] (cm^-1)."""
        lo, hi = float(lo), float(hi)
        left = np.maximum(self.edges[:-1], lo)
        right = np.minimum(self.edges[1:], hi)
        return np.clip(right - left, 0.0, None)


PROVENANCE_TAGS = ("raw", "corrected", "normalized", "dos")


@dataclass(frozen=True, eq=False)
class Spectrum:
    """A vibrational spectrum at one temperature.

    ``intensity`` is a non-negative density per cm^-1 on ``grid``.
    """

    grid: EnergyGrid
    intensity: np.ndarray
    temperature_K: float
    provenance: str = "raw"

    def __post_init__(self):
        intensity = frozen_array(self.intensity, "Spectrum.intensity")
        if intensity.size != self.grid.n_bins:
            raise ValidationError(
                f"Spectrum: intensity has {intensity.size} bins, grid has {self.grid.n_bins}"
            )
        if np.any(intensity < 0):
            raise ValidationError("Spectrum: intensity must be non-negative")
        check_positive_scalar(self.temperature_K, "Spectrum.temperature_K")
        if self.provenance not in PROVENANCE_TAGS:
            raise ValidationError(
                f"Spectrum: unknown provenance {self.provenance!r}, expected one of {PROVENANCE_TAGS}"
            )
        object.__setattr__(self, "intensity", intensity)

    def with_intensity(self, intensity, provenance=None):
        return replace(
            self,
            intensity=np.asarray(intensity, dtype=float),
            provenance=self.provenance if provenance is None else provenance,
        )

    def total(self):
        return integrate(self.intensity, self.grid)


@dataclass(frozen=True, eq=False)
class SpectrumSet:
    """A temperature-indexed family of spectra on one shared grid."""

    spectra: tuple = field(default_factory=tuple)

    def __post_init__(self):
        spectra = tuple(sorted(self.spectra, key=lambda s: s.temperature_K))
        if not spectra:
            raise ValidationError("SpectrumSet: need at least one spectrum")
        grid = spectra[0].grid
        for s in spectra[1:]:
            if not grid.matches(s.grid):
                raise ValidationError("SpectrumSet: all spectra must share one grid")
        temps = np.array([s.temperature_K for s in spectra])
        if np.any(np.diff(temps) <= 0):
            raise ValidationError("SpectrumSet: duplicate temperatures")
        object.__setattr__(self, "spectra", spectra)

    @property
    def grid(self):
        return self.spectra[0].grid

    @property
    def temperatures(self):
        return np.array([s.temperature_K for s in self.spectra])

    def __len__(self):
        return len(self.spectra)

    def __iter__(self):
        return iter(self.spectra)

    def map(self, fn):
        """Apply ``fn`` to every member spectrum, returning a new set."""
        return SpectrumSet(tuple(fn(s) for s in self.spectra))


def integrate(values, grid, lo=None, hi=None):
    """Midpoint-rule integral of a per-bin density over the grid.

    With ``lo``/``hi`` set, bins partially inside [lo, hi] contribute in
    proportion to their overlap.
    """
    values = as_1d_float(values, "values")
    check_lengths_match(values, grid.centers, "values", "grid bins")
    if lo is None and hi is None:
        return float(np.dot(values, grid.widths))
    lo = grid.edges[0] if lo is None else lo
    hi = grid.edges[-1] if hi is None else hi
    return float(np.dot(values, grid.overlap_widths(lo, hi)))


def resample(spec, target):
    """Conservatively rebin a spectrum onto a new grid.

    Integrals over any interval shared by both grids are preserved (the
    density is treated as piecewise constant); target bins outside the
    source range are set to zero.
    """
    src = spec.grid
    if target.edges[0] >= src.edges[-1] or target.edges[-1] <= src.edges[0]:
        raise ValidationError("disjoint grids")
    if src.matches(target):
        return spec
    # Cumulative mass at source edges; interpolation clamps outside the
    # source range, which zeroes the mass assigned out there.
    cum = np.concatenate([[0.0], np.cumsum(spec.intensity * src.widths)])
    cum_at_target = np.interp(target.edges, src.edges, cum)
    mass = np.diff(cum_at_target)
    density = mass / target.widths
    return Spectrum(
        grid=target,
        intensity=np.clip(density, 0.0, None),
        temperature_K=spec.temperature_K,
        provenance=spec.provenance,
    )
