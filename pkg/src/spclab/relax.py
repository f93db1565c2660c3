"""Spin-lattice relaxation: trace fitting, rate assembly, and rate models.

Rates span several decades between liquid-helium and room temperature, so
every model here is fitted with a base-10 logarithmic least-squares
objective and parameters are log-parameterized to enforce positivity.
Multi-starts use fixed deterministic seed lists so fits are reproducible.
"""

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad
from scipy.optimize import least_squares
from sklearn.base import BaseEstimator

from .errors import FitConvergenceError, ValidationError
from .thermal import two_phonon_factor
from .validation import as_1d_float, check_positive_scalar, frozen_array

ORIENTATIONS = ("parallel", "perpendicular", "unspecified")
METHODS = ("inversion", "saturation")

_LOG10 = math.log(10.0)


@dataclass(frozen=True, eq=False)
class RecoveryTrace:
    """Raw polarization-recovery signal versus pulse delay."""

    delays_us: np.ndarray
    signal: np.ndarray
    kind: str = "inversion"

    def __post_init__(self):
        delays = frozen_array(self.delays_us, "RecoveryTrace.delays_us")
        signal = frozen_array(self.signal, "RecoveryTrace.signal")
        if delays.size < 8:
            raise ValidationError("RecoveryTrace: need at least 8 points")
        if delays.size != signal.size:
            raise ValidationError("RecoveryTrace: delays and signal lengths differ")
        if np.any(delays <= 0) or np.any(np.diff(delays) <= 0):
            raise ValidationError("RecoveryTrace: delays must be positive and strictly increasing")
        if self.kind not in METHODS:
            raise ValidationError(f"RecoveryTrace.kind must be one of {METHODS}")
        object.__setattr__(self, "delays_us", delays)
        object.__setattr__(self, "signal", signal)


@dataclass(frozen=True)
class RatePoint:
    """One spin-lattice relaxation rate measurement."""

    temperature_K: float
    rate_per_us: float
    rate_err_per_us: float = 0.0
    orientation: str = "unspecified"
    method: str = "inversion"

    def __post_init__(self):
        check_positive_scalar(self.temperature_K, "RatePoint.temperature_K")
        check_positive_scalar(self.rate_per_us, "RatePoint.rate_per_us")
        if self.rate_err_per_us < 0:
            raise ValidationError("RatePoint.rate_err_per_us must be >= 0")
        if self.orientation not in ORIENTATIONS:
            raise ValidationError(f"RatePoint.orientation must be one of {ORIENTATIONS}")
        if self.method not in METHODS:
            raise ValidationError(f"RatePoint.method must be one of {METHODS}")


@dataclass(frozen=True, eq=False)
class RateSeries:
    """Rate points sorted by temperature, unique per (T, orientation, method)."""

    points: tuple
    label: str = ""

    def __post_init__(self):
        points = tuple(
            sorted(self.points, key=lambda p: (p.temperature_K, p.orientation, p.method))
        )
        if not points:
            raise ValidationError("RateSeries: empty")
        keys = [(p.temperature_K, p.orientation, p.method) for p in points]
        if len(set(keys)) != len(keys):
            raise ValidationError("RateSeries: duplicate (T, orientation, method) entries")
        object.__setattr__(self, "points", points)

    @property
    def temperatures(self):
        return np.array([p.temperature_K for p in self.points])

    @property
    def rates(self):
        return np.array([p.rate_per_us for p in self.points])

    @property
    def errors(self):
        return np.array([p.rate_err_per_us for p in self.points])

    def __len__(self):
        return len(self.points)

    def restrict(self, t_min=None, t_max=None):
        lo = -np.inf if t_min is None else t_min
        hi = np.inf if t_max is None else t_max
        kept = tuple(p for p in self.points if lo <= p.temperature_K <= hi)
        if not kept:
            raise ValidationError("RateSeries.restrict: no points left")
        return RateSeries(points=kept, label=self.label)


@dataclass(frozen=True)
class ModeTerm:
    """One local-mode contribution: amplitude C (1/us) at energy E (cm^-1)."""

    c_per_us: float
    e_cm: float
    c_err_per_us: float = 0.0
    e_err_cm: float = 0.0


@dataclass(frozen=True)
class LocalModeFit:
    """Direct + local-mode rate model with one-sigma parameter errors."""

    a_dir_per_us_K: float
    modes: tuple
    rmse_log: float
    a_dir_err_per_us_K: float = 0.0
    converged: bool = True

    @property
    def mode_energies_cm(self):
        return np.array([m.e_cm for m in self.modes])


@dataclass(frozen=True)
class StretchedExpFit:
    """Parameters of I(t) = offset + amplitude * exp(-(t/T1)^beta)."""

    t1_us: float
    beta: float
    amplitude: float
    offset: float
    t1_err_us: float = 0.0
    beta_err: float = 0.0
    rmse: float = 0.0


def stretched_exponential(t, t1, beta, amplitude, offset):
    t = np.asarray(t, dtype=float)
    return offset + amplitude * np.exp(-((t / t1) ** beta))


def local_mode_rate(temperature_K, a_dir, modes):
    """Rate model a_dir*T + sum_k C_k * e^x/(e^x-1)^2, x = E_k/(k_B T)."""
    t = np.asarray(temperature_K, dtype=float)
    out = a_dir * t
    for c, e in modes:
        out = out + c * two_phonon_factor(e, t)
    return out


def _sigma_from_jacobian(jac, residuals, n_params):
    """One-sigma parameter estimates from a least-squares Jacobian."""
    dof = max(residuals.size - n_params, 1)
    s2 = float(residuals @ residuals) / dof
    try:
        cov = s2 * np.linalg.pinv(jac.T @ jac)
        return np.sqrt(np.clip(np.diag(cov), 0.0, None))
    except np.linalg.LinAlgError:
        return np.full(n_params, np.nan)


def _noise_floor(signal):
    """Noise estimate from second differences (robust to smooth trends)."""
    if signal.size < 3:
        return 0.0
    return float(np.std(np.diff(signal, 2)) / np.sqrt(6.0))


class StretchedExponentialModel(BaseEstimator):
    """Stretched-exponential recovery fit, beta constrained to [0.5, 1.5].

    After ``fit(delays_us, signal)`` the attributes ``t1_us_``, ``beta_``,
    ``amplitude_``, ``offset_`` hold the parameters and ``result_`` the full
    StretchedExpFit. The sign of the amplitude is free, covering inversion
    and saturation recovery alike.
    """

    def __init__(self, beta_min=0.5, beta_max=1.5):
        self.beta_min = beta_min
        self.beta_max = beta_max

    def fit(self, delays_us, signal, y=None):
        delays = as_1d_float(delays_us, "delays_us")
        signal = as_1d_float(signal, "signal")
        if delays.size != signal.size:
            raise ValidationError("delays and signal lengths differ")
        noise = _noise_floor(signal)
        span = float(np.ptp(signal))
        if span == 0.0 or (noise > 0 and span < 3.0 * noise):
            raise ValidationError("no decay detected: signal range below 3x noise floor")

        offset0 = float(signal[-1])
        amp0 = float(signal[0] - offset0)
        if amp0 == 0.0:
            amp0 = span if signal[0] < signal[-1] else -span
        # Delay at which the decay has dropped to 1/e of its initial span.
        target = offset0 + amp0 / math.e
        crossing = np.nonzero(np.sign(signal - target) != np.sign(signal[0] - target))[0]
        t1_0 = float(delays[crossing[0]]) if crossing.size else float(np.median(delays))

        def residual(params):
            log_t1, beta, amp, off = params
            return stretched_exponential(delays, 10.0**log_t1, beta, amp, off) - signal

        lower = [-np.inf, self.beta_min, -np.inf, -np.inf]
        upper = [np.inf, self.beta_max, np.inf, np.inf]
        res = least_squares(
            residual,
            x0=[math.log10(t1_0), 1.0, amp0, offset0],
            bounds=(lower, upper),
            ftol=1e-12,
            xtol=1e-12,
            gtol=1e-12,
            max_nfev=2000,
        )
        if not res.success:
            raise FitConvergenceError(
                "stretched-exponential fit did not converge",
                details={"status": res.status, "final_cost": float(res.cost)},
            )
        log_t1, beta, amp, off = res.x
        sig = _sigma_from_jacobian(res.jac, res.fun, 4)
        t1 = 10.0**log_t1
        self.t1_us_ = float(t1)
        self.beta_ = float(beta)
        self.amplitude_ = float(amp)
        self.offset_ = float(off)
        self.result_ = StretchedExpFit(
            t1_us=float(t1),
            beta=float(beta),
            amplitude=float(amp),
            offset=float(off),
            t1_err_us=float(_LOG10 * t1 * sig[0]),
            beta_err=float(sig[1]),
            rmse=float(np.sqrt(np.mean(res.fun**2))),
        )
        return self

    def predict(self, delays_us):
        return stretched_exponential(
            np.asarray(delays_us, dtype=float),
            self.t1_us_,
            self.beta_,
            self.amplitude_,
            self.offset_,
        )


def fit_recovery_trace(trace: RecoveryTrace) -> StretchedExpFit:
    """Fit a recovery trace; returns T1, beta, amplitude, offset with errors."""
    return StretchedExponentialModel().fit(trace.delays_us, trace.signal).result_


@dataclass(frozen=True)
class AssemblyPolicy:
    """Which measurement wins when several cover the same temperature.

    Saturation recovery suppresses spectral diffusion and is preferred below
    ``crossover_K``; inversion recovery is preferred at or above it. If
    ``orientation`` is set, other orientations are dropped first.
    """

    crossover_K: float = 30.0
    orientation: str = None


def assemble_rate_series(points, policy: AssemblyPolicy = None, label="") -> RateSeries:
    """Select one rate per temperature according to the assembly policy."""
    policy = policy or AssemblyPolicy()
    pts = list(points)
    if policy.orientation is not None:
        pts = [p for p in pts if p.orientation == policy.orientation]
    if not pts:
        raise ValidationError("assemble_rate_series: empty selection")
    by_temp = {}
    for p in pts:
        by_temp.setdefault(p.temperature_K, []).append(p)
    selected = []
    for t, group in by_temp.items():
        preferred = "saturation" if t < policy.crossover_K else "inversion"
        candidates = [p for p in group if p.method == preferred] or group
        err_key = lambda p: (
            p.rate_err_per_us if p.rate_err_per_us > 0 else np.inf,
            p.method,
            p.orientation,
        )
        selected.append(min(candidates, key=err_key))
    return RateSeries(points=tuple(selected), label=label)


def log_slope(series: RateSeries, window=5):
    """Sliding-window slope d ln(rate)/d ln(T), one value per point.

    Each slope is a local linear regression of ln(rate) on ln(T) over
    ``window`` points (odd); endpoints use truncated windows.
    """
    if len(series) < 3:
        raise ValidationError("log_slope: need at least 3 points")
    window = int(window)
    if window < 3 or window % 2 == 0:
        raise ValidationError("log_slope: window must be odd and >= 3")
    ln_t = np.log(series.temperatures)
    ln_r = np.log(series.rates)
    half = window // 2
    n = len(series)
    slopes = np.empty(n)
    for i in range(n):
        lo, hi = max(0, i - half), min(n, i + half + 1)
        x, y = ln_t[lo:hi], ln_r[lo:hi]
        slopes[i] = np.polyfit(x, y, 1)[0]
    return slopes


def _fit_log_model(residual_fn, starts, n_params, jac=None):
    """Run a deterministic multi-start log-space fit, return the best result.

    Best-of selection orders by (objective, parameter vector) so the winner
    does not depend on evaluation order.
    """
    best = None
    failures = []
    for x0 in starts:
        x0 = np.asarray(x0, dtype=float)
        n_res = residual_fn(x0).size
        try:
            res = least_squares(
                residual_fn,
                x0=x0,
                jac=jac if jac is not None else "2-point",
                method="lm" if n_res >= n_params else "trf",
                ftol=1e-12,
                xtol=1e-12,
                gtol=1e-12,
                max_nfev=2000 * n_params,
            )
        except Exception as exc:  # singular Jacobians on wild starts
            failures.append(str(exc))
            continue
        if not np.all(np.isfinite(res.x)) or not np.isfinite(res.cost):
            continue
        key = (round(float(res.cost), 15), tuple(res.x))
        if best is None or key < best[0]:
            best = (key, res)
    if best is None:
        raise FitConvergenceError(
            "all fit starts failed", details={"failures": failures}
        )
    return best[1]


class LocalModeRelaxationModel(BaseEstimator):
    """Direct + local-mode rate model fitted in log space.

    rate(T) = A_dir * T + sum_k C_k * e^x_k / (e^x_k - 1)^2, x_k = E_k/(k_B T).

    ``fit(T, rate)`` performs a deterministic multi-start log-least-squares
    fit; results land in ``a_dir_``, ``modes_`` and ``fit_result_``.
    """

    def __init__(
        self,
        n_modes=2,
        include_direct=True,
        e_min_cm=10.0,
        e_max_cm=600.0,
        n_starts=8,
        weighted=False,
        degenerate_sep_cm=5.0,
    ):
        self.n_modes = n_modes
        self.include_direct = include_direct
        self.e_min_cm = e_min_cm
        self.e_max_cm = e_max_cm
        self.n_starts = n_starts
        self.weighted = weighted
        self.degenerate_sep_cm = degenerate_sep_cm

    def _starts(self, temps, rates):
        """Fixed list of starting points over log-spaced mode-energy seeds."""
        n_modes = self.n_modes
        seeds = np.geomspace(self.e_min_cm * 1.5, self.e_max_cm * 0.7, 6)
        combos = []
        if n_modes == 1:
            combos = [(e,) for e in seeds]
        else:
            for i in range(len(seeds)):
                for j in range(i + 1, len(seeds)):
                    if n_modes == 2:
                        combos.append((seeds[i], seeds[j]))
                    else:
                        for k in range(j + 1, len(seeds)):
                            combos.append((seeds[i], seeds[j], seeds[k]))
        combos = combos[: max(self.n_starts, 8)]
        a0 = max(rates.min() / temps[np.argmin(rates)], 1e-12)
        starts = []
        for es in combos:
            params = []
            if self.include_direct:
                params.append(math.log10(a0))
            for e in es:
                c0 = max(rates.max() / two_phonon_factor(e, temps.max()), 1e-12) / n_modes
                params.extend([math.log10(c0), math.log10(e)])
            starts.append(params)
        return starts

    def _unpack(self, params):
        i = 0
        a_dir = 0.0
        if self.include_direct:
            a_dir = 10.0 ** params[0]
            i = 1
        modes = []
        for _ in range(self.n_modes):
            modes.append((10.0 ** params[i], 10.0 ** params[i + 1]))
            i += 2
        return a_dir, modes

    def fit(self, temperatures_K, rates_per_us, rate_errs=None):
        temps = as_1d_float(temperatures_K, "temperatures_K")
        rates = as_1d_float(rates_per_us, "rates_per_us")
        if temps.size != rates.size:
            raise ValidationError("temperatures and rates lengths differ")
        if self.n_modes not in (1, 2, 3):
            raise ValidationError("n_modes must be 1, 2, or 3")
        if np.any(rates <= 0):
            raise ValidationError("rates must be positive")
        log_y = np.log10(rates)
        weights = None
        if self.weighted and rate_errs is not None:
            errs = as_1d_float(rate_errs, "rate_errs")
            sigma_log = np.where(errs > 0, errs / (rates * _LOG10), np.inf)
            finite = np.isfinite(sigma_log)
            if finite.any():
                fill = sigma_log[finite].max()
                sigma_log = np.where(finite, sigma_log, fill)
                weights = 1.0 / sigma_log

        def residual(params):
            a_dir, modes = self._unpack(params)
            model = local_mode_rate(temps, a_dir, modes)
            r = np.log10(np.maximum(model, 1e-300)) - log_y
            return r * weights if weights is not None else r

        n_params = (1 if self.include_direct else 0) + 2 * self.n_modes
        res = _fit_log_model(residual, self._starts(temps, rates), n_params)
        a_dir, modes = self._unpack(res.x)
        sig = _sigma_from_jacobian(res.jac, res.fun, n_params)
        i = 0
        a_err = 0.0
        if self.include_direct:
            a_err = _LOG10 * a_dir * sig[0]
            i = 1
        terms = []
        for c, e in modes:
            terms.append(
                ModeTerm(
                    c_per_us=c,
                    e_cm=e,
                    c_err_per_us=_LOG10 * c * sig[i],
                    e_err_cm=_LOG10 * e * sig[i + 1],
                )
            )
            i += 2
        terms.sort(key=lambda m: m.e_cm)
        terms = _merge_degenerate(terms, self.degenerate_sep_cm)
        model_rates = local_mode_rate(temps, a_dir, [(m.c_per_us, m.e_cm) for m in terms])
        rmse = float(np.sqrt(np.mean((np.log10(model_rates) - log_y) ** 2)))
        self.a_dir_ = float(a_dir)
        self.modes_ = tuple(terms)
        self.fit_result_ = LocalModeFit(
            a_dir_per_us_K=float(a_dir),
            modes=tuple(terms),
            rmse_log=rmse,
            a_dir_err_per_us_K=float(a_err),
        )
        return self

    def predict(self, temperatures_K):
        return local_mode_rate(
            temperatures_K, self.a_dir_, [(m.c_per_us, m.e_cm) for m in self.modes_]
        )


def _merge_degenerate(terms, sep_cm):
    """Merge modes closer than sep_cm, warning; amplitudes add, energy is C-weighted."""
    merged = []
    for term in terms:
        if merged and abs(term.e_cm - merged[-1].e_cm) < sep_cm:
            prev = merged[-1]
            warnings.warn(
                f"degenerate local modes at {prev.e_cm:.1f} and {term.e_cm:.1f} cm^-1 merged"
            )
            c = prev.c_per_us + term.c_per_us
            e = (prev.c_per_us * prev.e_cm + term.c_per_us * term.e_cm) / c
            merged[-1] = ModeTerm(
                c_per_us=c,
                e_cm=e,
                c_err_per_us=math.hypot(prev.c_err_per_us, term.c_err_per_us),
                e_err_cm=math.hypot(prev.e_err_cm, term.e_err_cm),
            )
        else:
            merged.append(term)
    return merged


def fit_local_modes(series: RateSeries, n_modes=2, include_direct=True, weighted=False) -> LocalModeFit:
    """Fit the direct + n-local-mode model to a rate series."""
    model = LocalModeRelaxationModel(
        n_modes=n_modes, include_direct=include_direct, weighted=weighted
    )
    model.fit(series.temperatures, series.rates, series.errors if weighted else None)
    return model.fit_result_


def raman_transport_integral(y):
    """I8(y) = integral_0^y x^8 e^x/(e^x-1)^2 dx by adaptive quadrature.

    The integrand is evaluated as x^8 e^-x/(1-e^-x)^2 for overflow safety.
    I8(inf) = 8! * zeta(8) = 40484.399...
    """

    def integrand(x):
        if x < 1e-8:
            return x**6  # limit of x^8 / x^2
        ex = math.exp(-x)
        return x**8 * ex / (1.0 - ex) ** 2

    y = float(y)
    if y <= 0:
        return 0.0
    if math.isinf(y):
        val, _ = quad(integrand, 0.0, 80.0, epsabs=0.0, epsrel=1e-10, limit=400)
        tail, _ = quad(integrand, 80.0, np.inf, epsabs=1e-12, epsrel=1e-10, limit=400)
        return val + tail
    val, _ = quad(integrand, 0.0, min(y, 500.0), epsabs=0.0, epsrel=1e-10, limit=400)
    if y > 500.0:
        tail, _ = quad(integrand, 500.0, y, epsabs=1e-12, epsrel=1e-10, limit=400)
        val += tail
    return val


def debye_raman_rate(temperature_K, a_dir, c_raman, theta_d_K):
    """Kramers-doublet Raman rate a_dir*T + C*T^9*I8(theta_D/T)."""
    t = np.atleast_1d(np.asarray(temperature_K, dtype=float))
    i8 = np.array([raman_transport_integral(theta_d_K / ti) for ti in t])
    out = a_dir * t + c_raman * t**9 * i8
    return float(out[0]) if np.isscalar(temperature_K) else out


@dataclass(frozen=True)
class DebyeRamanFit:
    a_dir_per_us_K: float
    c_raman: float
    theta_d_K: float
    rmse_log: float
    a_dir_err_per_us_K: float = 0.0
    c_raman_err: float = 0.0
    theta_d_err_K: float = 0.0


class DebyeRamanModel(BaseEstimator):
    """Debye-model Raman fit: rate = A_dir*T + C*T^9*I8(theta_D/T)."""

    def __init__(self, include_direct=True, theta_min_K=20.0, theta_max_K=1000.0):
        self.include_direct = include_direct
        self.theta_min_K = theta_min_K
        self.theta_max_K = theta_max_K

    def _unpack(self, params):
        if self.include_direct:
            return 10.0 ** params[0], 10.0 ** params[1], 10.0 ** params[2]
        return 0.0, 10.0 ** params[0], 10.0 ** params[1]

    def fit(self, temperatures_K, rates_per_us, y=None):
        temps = as_1d_float(temperatures_K, "temperatures_K")
        rates = as_1d_float(rates_per_us, "rates_per_us")
        if np.any(rates <= 0):
            raise ValidationError("rates must be positive")
        log_y = np.log10(rates)

        def residual(params):
            a_dir, c, theta = self._unpack(params)
            model = debye_raman_rate(temps, a_dir, c, theta)
            return np.log10(np.maximum(model, 1e-300)) - log_y

        theta_seeds = np.geomspace(self.theta_min_K, self.theta_max_K, 8)
        a0 = max(rates.min() / temps[np.argmin(rates)], 1e-12)
        starts = []
        for theta in theta_seeds:
            c0 = rates.max() / (
                temps.max() ** 9 * max(raman_transport_integral(theta / temps.max()), 1e-300)
            )
            p = [math.log10(a0)] if self.include_direct else []
            p += [math.log10(c0), math.log10(theta)]
            starts.append(p)
        n_params = 3 if self.include_direct else 2
        res = _fit_log_model(residual, starts, n_params)
        a_dir, c, theta = self._unpack(res.x)
        sig = _sigma_from_jacobian(res.jac, res.fun, n_params)
        offset = 1 if self.include_direct else 0
        self.a_dir_ = float(a_dir)
        self.c_raman_ = float(c)
        self.theta_d_K_ = float(theta)
        self.fit_result_ = DebyeRamanFit(
            a_dir_per_us_K=float(a_dir),
            c_raman=float(c),
            theta_d_K=float(theta),
            rmse_log=float(np.sqrt(np.mean(res.fun**2))),
            a_dir_err_per_us_K=float(_LOG10 * a_dir * sig[0]) if self.include_direct else 0.0,
            c_raman_err=float(_LOG10 * c * sig[offset]),
            theta_d_err_K=float(_LOG10 * theta * sig[offset + 1]),
        )
        return self

    def predict(self, temperatures_K):
        return debye_raman_rate(temperatures_K, self.a_dir_, self.c_raman_, self.theta_d_K_)


def fit_debye_raman(series: RateSeries, include_direct=True) -> DebyeRamanFit:
    """Fit the Debye-model Raman alternative to a rate series."""
    model = DebyeRamanModel(include_direct=include_direct)
    model.fit(series.temperatures, series.rates)
    return model.fit_result_
