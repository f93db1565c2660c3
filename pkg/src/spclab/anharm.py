"""Phonon peak tracking versus temperature and quasiharmonic Grueneisen fits."""

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.optimize import least_squares

from .core import SpectrumSet
from .errors import ValidationError
from .lattice import GAUSS_FWHM, VolumeTrack

PROFILES = ("gaussian", "pseudo-voigt")


@dataclass(frozen=True, eq=False)
class PhononPeakTrack:
    """Fitted phonon peak center/width versus temperature (energies in cm^-1)."""

    label: str
    profile: str
    temperatures_K: np.ndarray
    centers_cm: np.ndarray
    center_errs_cm: np.ndarray
    fwhms_cm: np.ndarray
    fwhm_errs_cm: np.ndarray
    amplitudes: np.ndarray
    etas: np.ndarray
    missing: np.ndarray

    @property
    def valid(self):
        return ~np.asarray(self.missing, dtype=bool)

    def _first_valid(self):
        good = np.nonzero(self.valid)[0]
        if good.size == 0:
            raise ValidationError(f"track {self.label}: no valid fits")
        return good[0]

    @property
    def delta_center_cm(self):
        """center(T) - center(T_min), NaN where missing."""
        return self.centers_cm - self.centers_cm[self._first_valid()]

    @property
    def delta_fwhm_cm(self):
        return self.fwhms_cm - self.fwhms_cm[self._first_valid()]


def pseudo_voigt(x, amplitude, center, fwhm, eta):
    """Unit-height mix eta*Lorentzian + (1-eta)*Gaussian with shared FWHM."""
    half = fwhm / 2.0
    lorentz = half**2 / ((x - center) ** 2 + half**2)
    gauss = np.exp(-0.5 * ((x - center) / (fwhm / GAUSS_FWHM)) ** 2)
    return amplitude * (eta * lorentz + (1.0 - eta) * gauss)


def _fit_peak_profile(x, y, center0, window, profile):
    """Single peak + linear baseline; returns (params, errs, noise) or None.

    params = (amp, center, fwhm, eta, b0, b1); eta is fixed at 0 for the
    pure-Gaussian profile.
    """
    b1_0 = (y[-1] - y[0]) / (x[-1] - x[0]) if x[-1] != x[0] else 0.0
    b0_0 = y[0] - b1_0 * x[0]
    resid0 = y - (b0_0 + b1_0 * x)
    amp0 = float(max(resid0.max(), np.ptp(y) if np.ptp(y) > 0 else 1.0))
    c0 = float(x[np.argmax(resid0)]) if resid0.max() > 0 else center0
    fwhm0 = max(window / 6.0, 3.0 * np.median(np.abs(np.diff(x))))
    fit_eta = profile == "pseudo-voigt"

    def residual(p):
        amp, center, fwhm, eta, b0, b1 = p
        return pseudo_voigt(x, amp, center, abs(fwhm), eta) + b0 + b1 * x - y

    x0 = [amp0, c0, fwhm0, 0.2 if fit_eta else 0.0, b0_0, b1_0]
    lo = [-np.inf, -np.inf, 0.0, 0.0, -np.inf, -np.inf]
    hi = [np.inf, np.inf, np.inf, 1.0 if fit_eta else 1e-12, np.inf, np.inf]
    try:
        res = least_squares(residual, x0=x0, bounds=(lo, hi), ftol=1e-12, xtol=1e-12, max_nfev=4000)
    except ValueError:
        return None
    if not res.success or not np.all(np.isfinite(res.x)):
        return None
    p = res.x.copy()
    p[2] = abs(p[2])
    dof = max(x.size - (6 if fit_eta else 5), 1)
    s2 = float(res.fun @ res.fun) / dof
    try:
        cov = s2 * np.linalg.pinv(res.jac.T @ res.jac)
        errs = np.sqrt(np.clip(np.diag(cov), 0.0, None))
    except np.linalg.LinAlgError:
        errs = np.full(6, np.nan)
    return p, errs, float(np.sqrt(s2))


def fit_phonon_peaks(
    spectra: SpectrumSet,
    seeds,
    profile="gaussian",
    min_points=7,
    significance=3.0,
    resolution_fwhm_cm=None,
):
    """Track phonon peaks across a temperature-indexed spectrum set.

    ``seeds`` is a list of (center0_cm, window_cm) pairs. Each temperature is
    fitted with a single peak plus linear baseline, the search window
    recentering on the previous temperature's fit. Overlapping seed windows
    emit an "unresolved overlap" warning (such fits are qualitative).
    ``resolution_fwhm_cm`` optionally removes a fixed instrumental width in
    quadrature from the reported FWHMs.
    """
    if profile not in PROFILES:
        raise ValidationError(f"fit_phonon_peaks: profile must be one of {PROFILES}")
    seeds = [(float(c), float(w)) for c, w in seeds]
    for i in range(len(seeds)):
        for j in range(i + 1, len(seeds)):
            ci, wi = seeds[i]
            cj, wj = seeds[j]
            if abs(ci - cj) < (wi + wj) / 2.0:
                warnings.warn(
                    f"unresolved overlap between seeds at {ci} and {cj} cm^-1; "
                    "fits in this region are primarily qualitative"
                )
    x_all = spectra.grid.centers
    tracks = []
    for i_seed, (c_seed, window) in enumerate(seeds):
        center = c_seed
        temps, centers, c_errs, fwhms, f_errs, amps, etas, missing = (
            [], [], [], [], [], [], [], [],
        )
        for spec in spectra:
            mask = np.abs(x_all - center) <= window / 2.0
            if mask.sum() < min_points:
                raise ValidationError(
                    f"fit_phonon_peaks: window around {center:.1f} cm^-1 holds "
                    f"{int(mask.sum())} bins, need >= {min_points}"
                )
            fit = _fit_peak_profile(
                x_all[mask], spec.intensity[mask], center, window, profile
            )
            temps.append(spec.temperature_K)
            ok = False
            if fit is not None:
                p, errs, noise = fit
                inside = abs(p[1] - center) <= window / 2.0
                significant = noise == 0.0 or p[0] >= significance * noise
                ok = inside and significant and p[0] > 0 and p[2] > 0
            if ok:
                fwhm, fwhm_err = p[2], errs[2]
                if resolution_fwhm_cm is not None:
                    fwhm = np.sqrt(max(fwhm**2 - resolution_fwhm_cm**2, 0.0))
                centers.append(p[1])
                c_errs.append(errs[1])
                fwhms.append(fwhm)
                f_errs.append(fwhm_err)
                amps.append(p[0])
                etas.append(p[3])
                missing.append(False)
                center = float(p[1])
            else:
                for acc in (centers, c_errs, fwhms, f_errs, amps, etas):
                    acc.append(np.nan)
                missing.append(True)
        track = PhononPeakTrack(
            label=f"mode{i_seed}@{c_seed:g}cm",
            profile=profile,
            temperatures_K=np.array(temps),
            centers_cm=np.array(centers),
            center_errs_cm=np.array(c_errs),
            fwhms_cm=np.array(fwhms),
            fwhm_errs_cm=np.array(f_errs),
            amplitudes=np.array(amps),
            etas=np.array(etas),
            missing=np.array(missing),
        )
        if np.asarray(track.missing).all():
            warnings.warn(f"fit_phonon_peaks: seed at {c_seed} cm^-1 never fit")
        tracks.append(track)
    return tracks


@dataclass(frozen=True)
class GruneisenResult:
    """Mode Grueneisen parameter from frequency shifts and volume expansion.

    ``gamma`` is positive when the mode softens as the lattice expands
    (dE/E = -gamma * dV/V). ``linearity_rmse`` is the residual of an
    unconstrained linear fit, a diagnostic for how well the quasiharmonic
    proportionality holds.
    """

    gamma: float
    gamma_err: float
    linearity_rmse: float
    base_energy_cm: float
    base_temperature_K: float
    n_points: int


def gruneisen(track: PhononPeakTrack, vol: VolumeTrack) -> GruneisenResult:
    """Origin-constrained regression of dE/E against dV/V over shared temperatures."""
    t_track = track.temperatures_K
    t_vol = vol.temperatures_K
    common = []
    for i, t in enumerate(t_track):
        if not track.valid[i]:
            continue
        j = np.nonzero(np.isclose(t_vol, t))[0]
        if j.size and np.isfinite(vol.dv_over_v[j[0]]):
            common.append((i, j[0]))
    if len(common) < 3:
        raise ValidationError(
            f"gruneisen: need >= 3 overlapping temperatures, found {len(common)}"
        )
    idx_t = np.array([c[0] for c in common])
    idx_v = np.array([c[1] for c in common])
    base = 0  # lowest common temperature (tracks are sorted in T)
    e0 = track.centers_cm[idx_t[base]]
    t0 = t_track[idx_t[base]]
    y = (track.centers_cm[idx_t] - e0) / e0
    x = vol.dv_over_v[idx_v] - vol.dv_over_v[idx_v[base]]
    # Drop the base point itself (identically zero on both axes).
    x, y = x[1:], y[1:]
    if np.max(np.abs(x)) < 1e-12:
        raise ValidationError("gruneisen: no expansion signal (dV/V is zero everywhere)")
    sxx = float(x @ x)
    slope = float(x @ y) / sxx
    gamma = -slope
    resid = y - slope * x
    dof = max(x.size - 1, 1)
    gamma_err = float(np.sqrt((resid @ resid) / dof / sxx))
    if x.size >= 2:
        coeffs = np.polyfit(x, y, 1)
        lin_resid = y - np.polyval(coeffs, x)
        linearity = float(np.sqrt(np.mean(lin_resid**2)))
    else:
        linearity = 0.0
    return GruneisenResult(
        gamma=gamma,
        gamma_err=gamma_err,
        linearity_rmse=linearity,
        base_energy_cm=float(e0),
        base_temperature_K=float(t0),
        n_points=int(x.size),
    )
