"""spclab: experimental spin-phonon coupling analysis.

Ingests temperature-indexed vibrational spectra, spin-lattice relaxation
data, diffraction peak tracks, and phonon eigenvector sets; extracts
windowed coupling coefficients, relaxation-model parameters, anharmonicity
metrics, and mode-character rankings. A synthetic forward simulator closes
the loop for round-trip validation.
"""

__version__ = "0.1.0"

from .core import CONSTANTS, Constants, EnergyGrid, Spectrum, SpectrumSet, integrate, resample
from .errors import DataFormatError, FitConvergenceError, SpcLabError, ValidationError
from .thermal import BoseWeightedSpectrum, bose_occupation, bose_weight, two_phonon_factor

__all__ = [
    "CONSTANTS",
    "Constants",
    "EnergyGrid",
    "Spectrum",
    "SpectrumSet",
    "integrate",
    "resample",
    "SpcLabError",
    "ValidationError",
    "FitConvergenceError",
    "DataFormatError",
    "BoseWeightedSpectrum",
    "bose_occupation",
    "bose_weight",
    "two_phonon_factor",
    "__version__",
]
