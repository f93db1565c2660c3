"""Normal-mode eigenvector analytics.

Eigenvectors are accepted mass-weighted and unit-normalized (the common
phonon-code convention); real displacements are recovered internally by
dividing by sqrt(mass). Only Gamma-point mode sets are handled.
"""

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr

from .core import MSD_SCALE_A2_AMU_CM, EnergyGrid, Spectrum
from .errors import ValidationError
from .ins import CorrectionConfig, normalize
from .thermal import bose_occupation
from .validation import check_positive_scalar, frozen_array


@dataclass(frozen=True, eq=False)
class Atom:
    element: str
    mass_amu: float
    position_A: np.ndarray
    sigma_inc_barn: float = 0.0

    def __post_init__(self):
        check_positive_scalar(self.mass_amu, "Atom.mass_amu")
        pos = frozen_array(self.position_A, "Atom.position_A")
        if pos.size != 3:
            raise ValidationError("Atom.position_A must have 3 components")
        if self.sigma_inc_barn < 0:
            raise ValidationError("Atom.sigma_inc_barn must be >= 0")
        object.__setattr__(self, "position_A", pos)


@dataclass(frozen=True, eq=False)
class Mode:
    """One normal mode: frequency and mass-weighted eigenvector, shape (n_atoms, 3)."""

    freq_cm: float
    eigvec: np.ndarray

    def __post_init__(self):
        if self.freq_cm < 0:
            raise ValidationError("Mode.freq_cm: imaginary modes are rejected")
        vec = np.array(self.eigvec, dtype=float)
        if vec.ndim == 1:
            if vec.size % 3:
                raise ValidationError("Mode.eigvec: length must be 3N")
            vec = vec.reshape(-1, 3)
        if vec.ndim != 2 or vec.shape[1] != 3:
            raise ValidationError("Mode.eigvec: expected shape (n_atoms, 3)")
        norm = np.linalg.norm(vec)
        if abs(norm - 1.0) > 1e-6:
            raise ValidationError(f"Mode.eigvec: 2-norm is {norm:.8f}, expected 1")
        vec = vec.copy()
        vec.flags.writeable = False
        object.__setattr__(self, "eigvec", vec)


@dataclass(frozen=True, eq=False)
class ModeSet:
    """Atoms plus normal modes for eigenvector analytics."""

    atoms: tuple
    modes: tuple

    def __post_init__(self):
        atoms = tuple(self.atoms)
        modes = tuple(self.modes)
        if not atoms or not modes:
            raise ValidationError("ModeSet: need atoms and modes")
        n = len(atoms)
        for m in modes:
            if m.eigvec.shape[0] != n:
                raise ValidationError("ModeSet: eigenvector does not cover all atoms")
        freqs = [m.freq_cm for m in modes]
        if any(b < a for a, b in zip(freqs, freqs[1:])):
            raise ValidationError("ModeSet: modes must be sorted by frequency")
        object.__setattr__(self, "atoms", atoms)
        object.__setattr__(self, "modes", modes)

    @property
    def masses_amu(self):
        return np.array([a.mass_amu for a in self.atoms])

    @property
    def frequencies_cm(self):
        return np.array([m.freq_cm for m in self.modes])


@dataclass(frozen=True, eq=False)
class CoreSpec:
    """The molecular core: central atom, its four ligand atoms, and the plane normal."""

    center_index: int
    ligand_indices: tuple
    plane_normal: np.ndarray

    def __post_init__(self):
        ligands = tuple(int(i) for i in self.ligand_indices)
        if len(ligands) != 4:
            raise ValidationError("CoreSpec: exactly 4 ligand atoms required")
        normal = frozen_array(self.plane_normal, "CoreSpec.plane_normal")
        if normal.size != 3:
            raise ValidationError("CoreSpec.plane_normal must have 3 components")
        norm = np.linalg.norm(normal)
        if abs(norm - 1.0) > 1e-6:
            raise ValidationError("CoreSpec.plane_normal must be unit length")
        object.__setattr__(self, "ligand_indices", ligands)
        object.__setattr__(self, "plane_normal", normal)

    @property
    def atom_indices(self):
        return (int(self.center_index),) + self.ligand_indices


def _thermal_factor(freq_cm, temperature_K):
    """2n + 1 at the mode frequency; 1 at T = 0."""
    if temperature_K == 0:
        return 1.0
    return 2.0 * bose_occupation(freq_cm, temperature_K) + 1.0


def rmsd_per_atom(modeset: ModeSet, temperature_K, e_max_cm):
    """Thermal root-mean-square displacement per atom (Angstrom).

    Sums (scale / (m_a * freq)) * |e_a|^2 * (2n+1) over modes with
    0 < freq <= e_max_cm; zero-frequency modes in range are skipped with a
    warning (their harmonic amplitude diverges).
    """
    if temperature_K < 0:
        raise ValidationError("rmsd_per_atom: temperature must be >= 0")
    e_max = check_positive_scalar(e_max_cm, "e_max_cm")
    masses = modeset.masses_amu
    u2 = np.zeros(len(modeset.atoms))
    for mode in modeset.modes:
        if mode.freq_cm > e_max:
            break
        if mode.freq_cm == 0.0:
            warnings.warn("rmsd_per_atom: skipping zero-frequency mode")
            continue
        amp2 = np.sum(mode.eigvec**2, axis=1) / masses
        u2 += (
            MSD_SCALE_A2_AMU_CM
            / mode.freq_cm
            * amp2
            * _thermal_factor(mode.freq_cm, temperature_K)
        )
    return np.sqrt(u2)


def sample_rmsd_per_atom(modeset: ModeSet, temperature_K, e_max_cm, n_samples, seed=0):
    """Monte Carlo check of rmsd_per_atom by sampling mode amplitudes.

    Each in-range mode's normal coordinate is drawn from a Gaussian with the
    harmonic variance (scale/freq)*(2n+1); displacements accumulate per atom
    and the per-atom RMS over samples is returned.
    """
    rng = np.random.default_rng(seed)
    masses = modeset.masses_amu
    active = [
        m for m in modeset.modes if 0.0 < m.freq_cm <= e_max_cm
    ]
    if not active:
        return np.zeros(len(modeset.atoms))
    sigmas = np.array(
        [
            np.sqrt(
                MSD_SCALE_A2_AMU_CM / m.freq_cm * _thermal_factor(m.freq_cm, temperature_K)
            )
            for m in active
        ]
    )
    vecs = np.stack([m.eigvec for m in active])  # (n_modes, n_atoms, 3)
    u2_accum = np.zeros(len(modeset.atoms))
    block = 10000
    remaining = int(n_samples)
    inv_sqrt_m = 1.0 / np.sqrt(masses)
    while remaining > 0:
        k = min(block, remaining)
        q = rng.standard_normal((k, len(active))) * sigmas[None, :]
        # (k, atoms, 3) displacement = sum_modes q * eigvec / sqrt(m)
        disp = np.einsum("km,maj->kaj", q, vecs) * inv_sqrt_m[None, :, None]
        u2_accum += np.sum(disp**2, axis=(0, 2))
        remaining -= k
    return np.sqrt(u2_accum / n_samples)


def summarize_rmsd(values, atom_indices=None):
    """Arithmetic mean RMSD over a group of atoms (all atoms when omitted)."""
    values = np.asarray(values, dtype=float)
    if atom_indices is None:
        group = values
    else:
        idx = list(atom_indices)
        if not idx:
            raise ValidationError("summarize_rmsd: empty atom group")
        group = values[np.asarray(idx, dtype=int)]
    if group.size == 0:
        raise ValidationError("summarize_rmsd: empty atom group")
    return float(group.mean())


def stretch_character(modeset: ModeSet, core: CoreSpec):
    """Score each mode's symmetric metal-ligand stretching character.

    For each of the four bonds, the real-space relative displacement of the
    ligand against the center is projected onto the in-plane bond axis; the
    score is |sum of projections| / (4 * max bond displacement), which is 1
    for a pure in-plane breathing mode and 0 when opposite bonds cancel.
    Returns (mode_index, score) pairs sorted by descending score.
    """
    n_hat = core.plane_normal
    center = core.center_index
    masses = modeset.masses_amu
    positions = np.stack([a.position_A for a in modeset.atoms])
    axes = []
    for lig in core.ligand_indices:
        bond = positions[lig] - positions[center]
        in_plane = bond - (bond @ n_hat) * n_hat
        norm = np.linalg.norm(in_plane)
        if norm < 1e-12:
            raise ValidationError(
                f"stretch_character: bond to atom {lig} has no in-plane extent"
            )
        axes.append(in_plane / norm)

    scored = []
    for idx, mode in enumerate(modeset.modes):
        disp = mode.eigvec / np.sqrt(masses)[:, None]
        u_center = disp[center]
        proj_sum = 0.0
        r_max = 0.0
        for axis, lig in zip(axes, core.ligand_indices):
            r = disp[lig] - u_center
            r_max = max(r_max, float(np.linalg.norm(r)))
            r_in_plane = r - (r @ n_hat) * n_hat
            proj_sum += float(r_in_plane @ axis)
        score = abs(proj_sum) / (4.0 * r_max) if r_max > 0 else 0.0
        scored.append((idx, score))
    scored.sort(key=lambda item: (-item[1], item[0]))
    return scored


def mode_neutron_weights(sigmas_barn, masses_amu, eigvec):
    """Incoherent neutron weight of one mode: sum_a sigma_a |e_a|^2 / m_a."""
    amp2 = np.sum(np.asarray(eigvec, dtype=float).reshape(-1, 3) ** 2, axis=1)
    return float(np.sum(np.asarray(sigmas_barn) * amp2 / np.asarray(masses_amu)))


def neutron_weighted_dos(
    modeset: ModeSet,
    broadening_fwhm_cm,
    grid: EnergyGrid,
    temperature_K=300.0,
    normalized=True,
):
    """Incoherent-weighted vibrational spectrum from a mode set.

    Each mode contributes a Gaussian at its frequency weighted by
    sum_a sigma_a |e_a|^2 / m_a; bin masses come from the Gaussian CDF so
    the pre-normalization integral equals the summed weights. This is a
    simplified stand-in for full instrument-weighting codes.
    """
    fwhm = check_positive_scalar(broadening_fwhm_cm, "broadening_fwhm_cm")
    freqs = modeset.frequencies_cm
    if grid.edges[0] > freqs.min() or grid.edges[-1] < freqs.max():
        raise ValidationError("neutron_weighted_dos: grid must span the mode range")
    sigma = fwhm / (2.0 * np.sqrt(2.0 * np.log(2.0)))
    sigmas_barn = np.array([a.sigma_inc_barn for a in modeset.atoms])
    masses = modeset.masses_amu
    mass_per_bin = np.zeros(grid.n_bins)
    for mode in modeset.modes:
        weight = mode_neutron_weights(sigmas_barn, masses, mode.eigvec)
        z = (grid.edges - mode.freq_cm) / sigma
        mass_per_bin += weight * np.diff(ndtr(z))
    spectrum = Spectrum(
        grid=grid,
        intensity=mass_per_bin / grid.widths,
        temperature_K=temperature_K,
        provenance="dos",
    )
    if not normalized:
        return spectrum
    cutoff = min(600.0, float(grid.edges[-1]))
    out = normalize(spectrum, CorrectionConfig(normalization_cutoff_cm=cutoff))
    return Spectrum(
        grid=out.grid,
        intensity=out.intensity,
        temperature_K=temperature_K,
        provenance="dos",
    )
