"""Diffraction peak tracking and isotropic volume expansion."""

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.optimize import least_squares

from .errors import ValidationError
from .validation import check_positive_scalar, frozen_array

GAUSS_FWHM = 2.0 * np.sqrt(2.0 * np.log(2.0))  # fwhm = GAUSS_FWHM * sigma


@dataclass(frozen=True, eq=False)
class DiffractionPattern:
    """Powder diffraction intensity versus d-spacing at one temperature."""

    d_angstrom: np.ndarray
    intensity: np.ndarray
    temperature_K: float

    def __post_init__(self):
        d = frozen_array(self.d_angstrom, "DiffractionPattern.d_angstrom")
        intensity = frozen_array(self.intensity, "DiffractionPattern.intensity")
        if d.size != intensity.size:
            raise ValidationError("DiffractionPattern: length mismatch")
        if np.any(d <= 0):
            raise ValidationError("DiffractionPattern: d-spacings must be > 0")
        diffs = np.diff(d)
        if not (np.all(diffs > 0) or np.all(diffs < 0)):
            raise ValidationError("DiffractionPattern: d grid must be monotone")
        check_positive_scalar(self.temperature_K, "DiffractionPattern.temperature_K")
        object.__setattr__(self, "d_angstrom", d)
        object.__setattr__(self, "intensity", intensity)


@dataclass(frozen=True, eq=False)
class PeakTrack:
    """Fitted peak center and width versus temperature for one reflection.

    Missing entries (failed or insignificant fits) are flagged in ``missing``
    with NaN parameter values.
    """

    label: str
    temperatures_K: np.ndarray
    centers: np.ndarray
    center_errs: np.ndarray
    fwhms: np.ndarray
    fwhm_errs: np.ndarray
    amplitudes: np.ndarray
    missing: np.ndarray

    def __post_init__(self):
        n = np.asarray(self.temperatures_K).size
        for name in ("centers", "center_errs", "fwhms", "fwhm_errs", "amplitudes"):
            if np.asarray(getattr(self, name)).size != n:
                raise ValidationError(f"PeakTrack: {name} length mismatch")
        object.__setattr__(self, "missing", np.asarray(self.missing, dtype=bool))

    @property
    def valid(self):
        return ~self.missing


def gaussian_peak(x, amplitude, center, fwhm):
    sigma = fwhm / GAUSS_FWHM
    return amplitude * np.exp(-0.5 * ((x - center) / sigma) ** 2)


def _fit_gaussian_with_baseline(x, y, center0, window):
    """Gaussian + linear baseline least squares inside one window.

    Returns (params, errors, noise) with params = (amp, center, fwhm, b0, b1),
    or None when the optimizer fails.
    """
    b1_0 = (y[-1] - y[0]) / (x[-1] - x[0]) if x[-1] != x[0] else 0.0
    b0_0 = y[0] - b1_0 * x[0]
    resid0 = y - (b0_0 + b1_0 * x)
    amp0 = float(resid0.max())
    c0 = float(x[np.argmax(resid0)]) if amp0 > 0 else center0
    fwhm0 = max(window / 6.0, 4.0 * np.median(np.abs(np.diff(x))))

    def residual(p):
        amp, center, fwhm, b0, b1 = p
        return gaussian_peak(x, amp, center, abs(fwhm)) + b0 + b1 * x - y

    try:
        res = least_squares(
            residual,
            x0=[amp0 if amp0 > 0 else np.ptp(y), c0, fwhm0, b0_0, b1_0],
            ftol=1e-12,
            xtol=1e-12,
            max_nfev=4000,
        )
    except ValueError:
        return None
    if not res.success or not np.all(np.isfinite(res.x)):
        return None
    p = res.x.copy()
    p[2] = abs(p[2])
    dof = max(x.size - 5, 1)
    s2 = float(res.fun @ res.fun) / dof
    try:
        cov = s2 * np.linalg.pinv(res.jac.T @ res.jac)
        errs = np.sqrt(np.clip(np.diag(cov), 0.0, None))
    except np.linalg.LinAlgError:
        errs = np.full(5, np.nan)
    noise = float(np.sqrt(s2))
    return p, errs, noise


def track_peaks(patterns, seeds, min_points=7, significance=3.0):
    """Track peaks across temperature with windowed Gaussian + baseline fits.

    ``seeds`` is a list of (d0, window) pairs (window is the full search
    width). The window recenters on the previous temperature's fitted
    position. Fits whose amplitude is below ``significance`` times the
    residual noise are marked missing and tracking continues from the last
    good center.
    """
    patterns = sorted(patterns, key=lambda p: p.temperature_K)
    if not patterns:
        raise ValidationError("track_peaks: no patterns")
    tracks = []
    for i_seed, (d0, window) in enumerate(seeds):
        center = float(d0)
        temps, centers, c_errs, fwhms, f_errs, amps, missing = [], [], [], [], [], [], []
        for pattern in patterns:
            x_all = pattern.d_angstrom
            y_all = pattern.intensity
            mask = np.abs(x_all - center) <= window / 2.0
            if mask.sum() < min_points:
                raise ValidationError(
                    f"track_peaks: window around d={center:.3f} A holds "
                    f"{int(mask.sum())} points at T={pattern.temperature_K} K, need >= {min_points}"
                )
            x, y = x_all[mask], y_all[mask]
            order = np.argsort(x)
            x, y = x[order], y[order]
            fit = _fit_gaussian_with_baseline(x, y, center, window)
            temps.append(pattern.temperature_K)
            ok = False
            if fit is not None:
                p, errs, noise = fit
                inside = abs(p[1] - center) <= window / 2.0
                significant = noise == 0.0 or p[0] >= significance * noise
                ok = inside and significant and p[0] > 0
            if ok:
                centers.append(p[1])
                c_errs.append(errs[1])
                fwhms.append(p[2])
                f_errs.append(errs[2])
                amps.append(p[0])
                missing.append(False)
                center = float(p[1])
            else:
                centers.append(np.nan)
                c_errs.append(np.nan)
                fwhms.append(np.nan)
                f_errs.append(np.nan)
                amps.append(np.nan)
                missing.append(True)
        track = PeakTrack(
            label=f"peak{i_seed}@{d0:g}",
            temperatures_K=np.array(temps),
            centers=np.array(centers),
            center_errs=np.array(c_errs),
            fwhms=np.array(fwhms),
            fwhm_errs=np.array(f_errs),
            amplitudes=np.array(amps),
            missing=np.array(missing),
        )
        if track.missing.all():
            warnings.warn(f"track_peaks: no significant peak found for seed d0={d0}")
        tracks.append(track)
    return tracks


@dataclass(frozen=True, eq=False)
class VolumeTrack:
    """Fractional volume change versus temperature with a spread estimate."""

    temperatures_K: np.ndarray
    dv_over_v: np.ndarray
    spread: np.ndarray
    reference_source: str  # provided | highest-T fit

    @property
    def valid(self):
        return np.isfinite(self.dv_over_v)


def volume_expansion(tracks, reference_d=None, mode="isotropic"):
    """Isotropic fractional volume change from d-spacing tracks.

    Per track, dV/V = (d/d_ref)^3 - 1; the combined value at each
    temperature is the mean over tracks and the spread is their standard
    deviation. ``reference_d`` lists a reference spacing per track (e.g.
    room-temperature powder XRD values); when omitted, each track's
    highest-temperature fit is used and the output is flagged accordingly.
    """
    if mode != "isotropic":
        raise ValidationError(f"volume_expansion: unsupported mode {mode!r}")
    if not tracks:
        raise ValidationError("volume_expansion: no tracks")
    temps = tracks[0].temperatures_K
    for t in tracks[1:]:
        if not np.array_equal(t.temperatures_K, temps):
            raise ValidationError("volume_expansion: tracks cover different temperatures")

    if reference_d is None:
        refs = []
        for t in tracks:
            good = np.nonzero(t.valid)[0]
            if good.size == 0:
                raise ValidationError(
                    f"volume_expansion: track {t.label} has no valid points"
                )
            refs.append(t.centers[good[-1]])
        source = "highest-T fit"
    else:
        refs = list(reference_d)
        if len(refs) != len(tracks):
            raise ValidationError("volume_expansion: need one reference per track")
        source = "provided"

    per_track = np.vstack(
        [(t.centers / ref) ** 3 - 1.0 for t, ref in zip(tracks, refs)]
    )  # NaN where missing
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)  # all-NaN columns
        mean = np.nanmean(per_track, axis=0)
        count = np.sum(np.isfinite(per_track), axis=0)
        spread = np.where(
            count > 1, np.nanstd(per_track, axis=0, ddof=1), 0.0
        )
    spread = np.where(count == 0, np.nan, spread)
    return VolumeTrack(
        temperatures_K=temps.copy(),
        dv_over_v=mean,
        spread=spread,
        reference_source=source,
    )
