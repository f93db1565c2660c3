"""Windowed spin-phonon coupling coefficients from spectra and rate data.

The rate model integrates the measured spectrum against the two-phonon
thermal factor, with a piecewise-constant coupling coefficient over energy
windows:

    rate(T) = integral lambda(e) * G_T(e) * e^x/(e^x-1)^2 de,  x = e/(k_B T)

Fitting the per-window coefficients to measured rates, scanning the window
cutoff, and emitting the integrand ("spectral density") all live here.
"""

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import nnls
from sklearn.base import BaseEstimator

from .core import SpectrumSet, integrate
from .errors import FitConvergenceError, ValidationError
from .ins import CorrectionConfig, interpolate_temperature, normalize
from .relax import RateSeries, _fit_log_model, _sigma_from_jacobian
from .thermal import two_phonon_factor
from .validation import frozen_array, max_workers

_LOG10 = math.log(10.0)

DEFAULT_E_PH_MAX_CM = 600.0


@dataclass(frozen=True, eq=False)
class LambdaProfile:
    """Piecewise-constant coupling coefficient over energy windows.

    ``window_edges_cm`` has one more entry than ``lambdas_per_us``; the last
    edge is the integration ceiling. ``excluded_below_cm`` optionally zeroes
    the contribution of everything below an acoustic floor.
    """

    window_edges_cm: np.ndarray
    lambdas_per_us: np.ndarray
    excluded_below_cm: float = None

    def __post_init__(self):
        edges = frozen_array(self.window_edges_cm, "LambdaProfile.window_edges_cm")
        lambdas = frozen_array(self.lambdas_per_us, "LambdaProfile.lambdas_per_us")
        if edges.size < 2 or np.any(np.diff(edges) <= 0):
            raise ValidationError("LambdaProfile: edges must be increasing, >= 2 entries")
        if edges[0] < 0:
            raise ValidationError("LambdaProfile: first edge must be >= 0")
        if lambdas.size != edges.size - 1:
            raise ValidationError("LambdaProfile: need one lambda per window")
        if np.any(lambdas < 0):
            raise ValidationError("LambdaProfile: lambdas must be >= 0")
        object.__setattr__(self, "window_edges_cm", edges)
        object.__setattr__(self, "lambdas_per_us", lambdas)

    @property
    def n_windows(self):
        return self.lambdas_per_us.size

    @property
    def e_ph_max_cm(self):
        return float(self.window_edges_cm[-1])

    def with_lambdas(self, lambdas):
        return replace(self, lambdas_per_us=np.asarray(lambdas, dtype=float))


@dataclass(frozen=True)
class Crossover:
    """Temperature where two adjacent windows contribute equally."""

    kind: str  # crossing | none | degenerate
    temperature_K: float = None


@dataclass(frozen=True)
class SpcFit:
    """Fitted window coefficients with diagnostics."""

    profile: LambdaProfile
    lambda_errs_per_us: np.ndarray
    rmse_log: float
    crossovers: tuple
    a_dir_per_us_K: float = 0.0
    a_dir_err_per_us_K: float = 0.0
    n_points: int = 0
    t_floor_K: float = 10.0
    metadata: dict = field(default_factory=dict)


@dataclass(frozen=True)
class SpcFitOptions:
    """Fit configuration: data floor, direct term, acoustic floor, spectra mode."""

    t_floor_K: float = 10.0
    include_direct: bool = False
    excluded_below_cm: float = None
    interpolation: str = "linear"  # linear | nearest ("frozen spectrum")

    def __post_init__(self):
        if self.interpolation not in ("linear", "nearest"):
            raise ValidationError("interpolation must be 'linear' or 'nearest'")


def _spectrum_at(spectra: SpectrumSet, temperature_K, interpolation):
    if interpolation == "nearest":
        temps = spectra.temperatures
        t = float(temperature_K)
        if t < temps[0] or t > temps[-1]:
            raise ValidationError(
                f"extrapolation refused: T={t} K outside measured range"
            )
        return spectra.spectra[int(np.argmin(np.abs(temps - t)))]
    return interpolate_temperature(spectra, temperature_K)


def _window_overlaps(grid, profile: LambdaProfile):
    """(n_windows, n_bins) matrix of bin overlap widths with each window.

    The acoustic-exclusion floor truncates windows from below.
    """
    floor = profile.window_edges_cm[0]
    if profile.excluded_below_cm is not None:
        floor = max(floor, profile.excluded_below_cm)
    rows = []
    for w in range(profile.n_windows):
        lo = max(profile.window_edges_cm[w], floor)
        hi = profile.window_edges_cm[w + 1]
        if hi <= lo:
            rows.append(np.zeros(grid.n_bins))
        else:
            rows.append(grid.overlap_widths(lo, hi))
    return np.vstack(rows)


def _unit_window_contributions(spectra, temperature_K, profile, interpolation):
    """Per-window integral of G_T * thermal factor (coupling set to one)."""
    spec = _spectrum_at(spectra, temperature_K, interpolation)
    centers = spec.grid.centers
    weight = np.zeros_like(centers)
    ok = centers > 0
    weight[ok] = spec.intensity[ok] * two_phonon_factor(centers[ok], temperature_K)
    return _window_overlaps(spec.grid, profile) @ weight


def spectral_density(profile, spectra: SpectrumSet, temperature_K, interpolation="linear"):
    """Per-bin relaxation density lambda(e) * G_T(e) * thermal factor (1/us per cm^-1).

    Integrating this density over the grid reproduces ``forward_rate``
    exactly (same quadrature). Accepts a LambdaProfile or an SpcFit.
    """
    if isinstance(profile, SpcFit):
        profile = profile.profile
    spec = _spectrum_at(spectra, temperature_K, interpolation)
    centers = spec.grid.centers
    weight = np.zeros_like(centers)
    ok = centers > 0
    weight[ok] = spec.intensity[ok] * two_phonon_factor(centers[ok], temperature_K)
    overlaps = _window_overlaps(spec.grid, profile)
    lam_widths = profile.lambdas_per_us @ overlaps  # effective lambda*width per bin
    return weight * lam_widths / spec.grid.widths


def forward_rate(profile, spectra: SpectrumSet, temperature_K, interpolation="linear"):
    """Two-phonon rate (1/us) from a coupling profile and measured spectra."""
    if isinstance(profile, SpcFit):
        profile = profile.profile
    density = spectral_density(profile, spectra, temperature_K, interpolation)
    return integrate(density, spectra.grid)


def window_contributions(profile, spectra: SpectrumSet, temperature_K, interpolation="linear"):
    """Per-window share of the rate at one temperature (1/us per window)."""
    if isinstance(profile, SpcFit):
        profile = profile.profile
    unit = _unit_window_contributions(spectra, temperature_K, profile, interpolation)
    return profile.lambdas_per_us * unit


class WindowedCouplingModel(BaseEstimator):
    """Fit per-window coupling coefficients to a rate series.

    rate(T) = [A_dir*T] + sum_w lambda_w * integral_w G_T(e)*factor(e,T) de

    The fit minimizes squared log10 residuals with log-parameterized
    lambdas; the per-temperature window integrals are precomputed once, so
    the model is linear in the coefficients and fits are fast. Attributes
    after ``fit(series, spectra)``: ``lambdas_``, ``lambda_errs_``,
    ``rmse_log_``, ``fit_result_``.
    """

    def __init__(
        self,
        window_edges_cm=(0.0, 185.0, DEFAULT_E_PH_MAX_CM),
        t_floor_K=10.0,
        include_direct=False,
        excluded_below_cm=None,
        interpolation="linear",
    ):
        self.window_edges_cm = window_edges_cm
        self.t_floor_K = t_floor_K
        self.include_direct = include_direct
        self.excluded_below_cm = excluded_below_cm
        self.interpolation = interpolation

    def _profile(self, lambdas=None):
        edges = np.asarray(self.window_edges_cm, dtype=float)
        if lambdas is None:
            lambdas = np.zeros(edges.size - 1)
        return LambdaProfile(
            window_edges_cm=edges,
            lambdas_per_us=lambdas,
            excluded_below_cm=self.excluded_below_cm,
        )

    def fit(self, series: RateSeries, spectra: SpectrumSet):
        options = SpcFitOptions(
            t_floor_K=self.t_floor_K,
            include_direct=self.include_direct,
            excluded_below_cm=self.excluded_below_cm,
            interpolation=self.interpolation,
        )
        kept = series.restrict(t_min=options.t_floor_K)
        temps = kept.temperatures
        rates = kept.rates
        profile0 = self._profile()
        n_windows = profile0.n_windows

        unit = np.vstack(
            [
                _unit_window_contributions(spectra, t, profile0, options.interpolation)
                for t in temps
            ]
        )  # (n_T, n_windows)
        col_scale = unit.max(axis=0)
        dead = col_scale <= 0
        if dead.any():
            w = int(np.nonzero(dead)[0][0])
            edges = profile0.window_edges_cm
            raise ValidationError(
                f"window {w} ({edges[w]:.0f}-{edges[w + 1]:.0f} cm^-1) has zero "
                "spectral weight at every temperature; its coefficient is unidentifiable"
            )

        log_y = np.log10(rates)
        n_params = n_windows + (1 if options.include_direct else 0)

        def unpack(params):
            params = np.minimum(params, 300.0)  # cap 10**p against overflow
            if options.include_direct:
                return 10.0 ** params[0], 10.0 ** params[1:]
            return 0.0, 10.0 ** params

        def model_of(params):
            a_dir, lam = unpack(params)
            return a_dir * temps + unit @ lam

        def residual(params):
            return np.log10(np.maximum(model_of(params), 1e-300)) - log_y

        def jacobian(params):
            a_dir, lam = unpack(params)
            model = np.maximum(a_dir * temps + unit @ lam, 1e-300)
            jac = unit * lam[None, :] / model[:, None]
            if options.include_direct:
                jac = np.column_stack([a_dir * temps / model, jac])
            return jac

        # Non-negative linear-space solution is an excellent starting point
        # (exact on noiseless data); add a flat start for robustness.
        lam_nnls, _ = nnls(unit, rates)
        lam_nnls = np.maximum(lam_nnls, 1e-12)
        flat = np.full(n_windows, max(rates.mean() / max(unit.sum(axis=1).mean(), 1e-300), 1e-12))
        starts = []
        for lam0 in (lam_nnls, flat, lam_nnls * 10.0, lam_nnls / 10.0):
            p = [math.log10(max(rates.min() / temps.min(), 1e-12))] if options.include_direct else []
            starts.append(p + list(np.log10(lam0)))

        res = _fit_log_model(residual, starts, n_params, jac=jacobian)
        a_dir, lam = unpack(res.x)
        sig = _sigma_from_jacobian(res.jac, res.fun, n_params)
        offset = 1 if options.include_direct else 0
        lam_errs = _LOG10 * lam * sig[offset:]
        a_err = _LOG10 * a_dir * sig[0] if options.include_direct else 0.0

        profile = self._profile(lam)
        crossovers = crossover_temperature(profile, spectra, interpolation=options.interpolation)
        self.lambdas_ = lam
        self.lambda_errs_ = lam_errs
        self.a_dir_ = float(a_dir)
        self.rmse_log_ = float(np.sqrt(np.mean(res.fun**2)))
        self.spectra_ = spectra
        self.fit_result_ = SpcFit(
            profile=profile,
            lambda_errs_per_us=lam_errs,
            rmse_log=self.rmse_log_,
            crossovers=crossovers,
            a_dir_per_us_K=float(a_dir),
            a_dir_err_per_us_K=float(a_err),
            n_points=len(kept),
            t_floor_K=options.t_floor_K,
        )
        return self

    def predict(self, temperatures_K):
        t = np.atleast_1d(np.asarray(temperatures_K, dtype=float))
        profile = self.fit_result_.profile
        out = np.array(
            [
                self.a_dir_ * ti
                + forward_rate(profile, self.spectra_, ti, self.interpolation)
                for ti in t
            ]
        )
        return float(out[0]) if np.isscalar(temperatures_K) else out


def fit_lambda_windows(series, spectra, window_edges_cm, options: SpcFitOptions = None, metadata=None) -> SpcFit:
    """Fit per-window coupling coefficients; see WindowedCouplingModel."""
    options = options or SpcFitOptions()
    model = WindowedCouplingModel(
        window_edges_cm=window_edges_cm,
        t_floor_K=options.t_floor_K,
        include_direct=options.include_direct,
        excluded_below_cm=options.excluded_below_cm,
        interpolation=options.interpolation,
    )
    model.fit(series, spectra)
    fit = model.fit_result_
    if metadata:
        fit = replace(fit, metadata=dict(metadata))
    return fit


def crossover_temperature(profile, spectra: SpectrumSet, tol_K=0.1, interpolation="linear"):
    """Bisection for the temperature where adjacent windows contribute equally.

    Returns one Crossover per adjacent window pair. Pairs whose difference
    never changes sign in the measured range report "none"; pairs whose
    contributions are indistinguishable everywhere report "degenerate".
    """
    if isinstance(profile, SpcFit):
        profile = profile.profile
    temps = spectra.temperatures
    t_lo, t_hi = float(temps[0]), float(temps[-1])
    probes = np.linspace(t_lo, t_hi, 33)
    results = []
    for w in range(profile.n_windows - 1):
        def diff(t):
            c = window_contributions(profile, spectra, t, interpolation)
            return c[w + 1] - c[w]

        def scale(t):
            c = window_contributions(profile, spectra, t, interpolation)
            return c[w + 1] + c[w]

        values = np.array([diff(t) for t in probes])
        scales = np.array([scale(t) for t in probes])
        tiny = np.maximum(scales, 1e-300) * 1e-9
        if np.all(np.abs(values) <= tiny):
            results.append(Crossover(kind="degenerate"))
            continue
        bracket = None
        for i in range(len(probes) - 1):
            if values[i] == 0.0:
                bracket = (probes[i], probes[i])
                break
            if values[i] * values[i + 1] < 0:
                bracket = (probes[i], probes[i + 1])
                break
        if bracket is None:
            results.append(Crossover(kind="none"))
            continue
        lo, hi = bracket
        f_lo = diff(lo)
        while hi - lo > tol_K / 2.0:
            mid = 0.5 * (lo + hi)
            f_mid = diff(mid)
            if f_mid == 0.0:
                lo = hi = mid
                break
            if f_lo * f_mid < 0:
                hi = mid
            else:
                lo, f_lo = mid, f_mid
        results.append(Crossover(kind="crossing", temperature_K=0.5 * (lo + hi)))
    return tuple(results)


@dataclass(frozen=True)
class CutoffScan:
    """Result of scanning the low/high window boundary."""

    cutoffs_cm: np.ndarray
    total_rmse_log: np.ndarray
    rmse_by_series: dict
    selected_cutoff_cm: float
    coarse_cutoffs_cm: np.ndarray
    coarse_rmse_log: np.ndarray
    weakly_identified: bool

    def __post_init__(self):
        object.__setattr__(self, "cutoffs_cm", np.asarray(self.cutoffs_cm, dtype=float))
        object.__setattr__(self, "total_rmse_log", np.asarray(self.total_rmse_log, dtype=float))


def _scan_cell(series_list, spectra_list, cutoff, e_ph_max, options):
    total = 0.0
    per_series = []
    for series, spectra in zip(series_list, spectra_list):
        try:
            fit = fit_lambda_windows(
                series, spectra, (0.0, cutoff, e_ph_max), options=options
            )
            per_series.append(fit.rmse_log)
            total += fit.rmse_log
        except (ValidationError, FitConvergenceError):
            per_series.append(np.nan)
            total = np.nan
    return total, per_series


def cutoff_scan(
    series,
    spectra,
    grid_cm=None,
    e_ph_max_cm=DEFAULT_E_PH_MAX_CM,
    options: SpcFitOptions = None,
    refine_factor=5,
):
    """Fit two windows per cutoff and pick the cutoff minimizing the log rmse.

    ``series``/``spectra`` may be single objects or parallel lists of
    datasets; with several datasets the selection minimizes the summed rmse.
    After the coarse grid, the region around the minimum is re-scanned at
    ``refine_factor`` times finer spacing. Ties break toward the lower cutoff.
    """
    options = options or SpcFitOptions()
    series_list = list(series) if isinstance(series, (list, tuple)) else [series]
    spectra_list = list(spectra) if isinstance(spectra, (list, tuple)) else [spectra]
    if len(spectra_list) == 1 and len(series_list) > 1:
        spectra_list = spectra_list * len(series_list)
    if len(series_list) != len(spectra_list):
        raise ValidationError("cutoff_scan: series and spectra dataset counts differ")
    if grid_cm is None:
        grid_cm = np.arange(25.0, 576.0, 10.0)
    grid_cm = np.asarray(grid_cm, dtype=float)
    if np.any(grid_cm <= 0) or np.any(grid_cm >= e_ph_max_cm):
        raise ValidationError("cutoff_scan: cutoffs must lie strictly inside (0, E_max)")

    def run_cells(cutoffs):
        workers = max_workers()
        if workers > 1 and cutoffs.size > 1:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                rows = list(
                    pool.map(
                        lambda c: _scan_cell(series_list, spectra_list, c, e_ph_max_cm, options),
                        cutoffs,
                    )
                )
        else:
            rows = [
                _scan_cell(series_list, spectra_list, c, e_ph_max_cm, options)
                for c in cutoffs
            ]
        totals = np.array([r[0] for r in rows])
        per = np.array([r[1] for r in rows])  # (n_cutoffs, n_series)
        return totals, per

    coarse_totals, coarse_per = run_cells(grid_cm)
    ok = np.isfinite(coarse_totals)
    if ok.sum() < max(1, grid_cm.size // 2):
        raise FitConvergenceError(
            f"cutoff scan: only {int(ok.sum())}/{grid_cm.size} grid points converged"
        )
    i_min = int(np.nanargmin(coarse_totals))
    step = float(np.min(np.diff(grid_cm))) if grid_cm.size > 1 else 0.0

    cutoffs = grid_cm
    totals = coarse_totals
    per = coarse_per
    if grid_cm.size > 1 and refine_factor > 1:
        fine_step = step / refine_factor
        lo = max(grid_cm[i_min] - step, fine_step)
        hi = min(grid_cm[i_min] + step, e_ph_max_cm - fine_step)
        fine = np.arange(lo, hi + fine_step / 2, fine_step)
        fine = np.array([c for c in fine if not np.any(np.isclose(c, grid_cm))])
        if fine.size:
            fine_totals, fine_per = run_cells(fine)
            cutoffs = np.concatenate([grid_cm, fine])
            totals = np.concatenate([coarse_totals, fine_totals])
            per = np.vstack([coarse_per, fine_per])
            order = np.argsort(cutoffs)
            cutoffs, totals, per = cutoffs[order], totals[order], per[order]

    finite = np.isfinite(totals)
    best = np.nanmin(totals)
    candidates = cutoffs[finite & (totals <= best + 1e-15)]
    selected = float(candidates.min())

    # Flat within noise: even the worst cutoff fits about as well as the best
    # (log10 spread below 0.01 means all models agree with the data to ~2%).
    spread = float(np.nanmax(totals) - best)
    weakly = spread < max(0.01, 0.25 * best)

    labels = []
    for i, s in enumerate(series_list):
        base = getattr(s, "label", "") or f"series{i}"
        labels.append(base if base not in labels else f"{base}#{i}")
    rmse_by_series = {lab: per[:, i] for i, lab in enumerate(labels)}
    return CutoffScan(
        cutoffs_cm=cutoffs,
        total_rmse_log=totals,
        rmse_by_series=rmse_by_series,
        selected_cutoff_cm=selected,
        coarse_cutoffs_cm=grid_cm,
        coarse_rmse_log=coarse_totals,
        weakly_identified=bool(weakly),
    )


@dataclass(frozen=True)
class SweepCell:
    """One robustness-sweep configuration and its fit (or failure)."""

    set_name: str
    normalization_cutoff_cm: float
    fit: SpcFit = None
    error: str = None

    @property
    def lambda_ratio(self):
        """Highest over lowest window coefficient, the headline contrast."""
        if self.fit is None:
            return None
        lam = self.fit.profile.lambdas_per_us
        if lam[0] <= 0:
            return math.inf
        return float(lam[-1] / lam[0])


def robustness_sweep(
    series,
    named_sets,
    normalization_cutoffs_cm=(600.0, 380.0),
    window_edges_cm=(0.0, 185.0, DEFAULT_E_PH_MAX_CM),
    options: SpcFitOptions = None,
):
    """Cartesian sweep over spectrum representations and normalization cutoffs.

    ``named_sets`` maps a representation name (e.g. "instrument", "dos") to
    a SpectrumSet. Each cell renormalizes the spectra below the cell's
    cutoff, refits, and records the outcome; failures are kept as cells so
    the sweep always completes.
    """
    options = options or SpcFitOptions()
    if not named_sets:
        raise ValidationError("robustness_sweep: need at least one spectrum set")
    cells = []

    def run_cell(item):
        (name, spectra), cutoff = item
        cfg = CorrectionConfig(normalization_cutoff_cm=cutoff)
        try:
            renorm = spectra.map(lambda s: normalize(s, cfg))
            fit = fit_lambda_windows(
                series,
                renorm,
                window_edges_cm,
                options=options,
                metadata={"normalization_cutoff_cm": cutoff, "representation": name},
            )
            return SweepCell(set_name=name, normalization_cutoff_cm=cutoff, fit=fit)
        except (ValidationError, FitConvergenceError) as exc:
            return SweepCell(
                set_name=name, normalization_cutoff_cm=cutoff, error=str(exc)
            )

    items = [
        ((name, spectra), cutoff)
        for name, spectra in named_sets.items()
        for cutoff in normalization_cutoffs_cm
    ]
    workers = max_workers()
    if workers > 1 and len(items) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            cells = list(pool.map(run_cell, items))
    else:
        cells = [run_cell(item) for item in items]
    return {(c.set_name, c.normalization_cutoff_cm): c for c in cells}
