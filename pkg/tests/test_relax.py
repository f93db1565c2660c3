import numpy as np
import pytest
from scipy.special import zeta

from spclab.core import CONSTANTS
from spclab.errors import ValidationError
from spclab.relax import (
    AssemblyPolicy,
    DebyeRamanModel,
    LocalModeRelaxationModel,
    RatePoint,
    RateSeries,
    RecoveryTrace,
    StretchedExponentialModel,
    assemble_rate_series,
    debye_raman_rate,
    fit_debye_raman,
    fit_local_modes,
    fit_recovery_trace,
    local_mode_rate,
    log_slope,
    raman_transport_integral,
)
from spclab.thermal import two_phonon_factor


def make_series(temps, rates, **kwargs):
    return RateSeries(
        points=tuple(
            RatePoint(temperature_K=float(t), rate_per_us=float(r), **kwargs)
            for t, r in zip(temps, rates)
        )
    )


class TestRecoveryTrace:
    def test_validation(self):
        with pytest.raises(ValidationError):
            RecoveryTrace(np.arange(1, 6, dtype=float), np.ones(5))  # < 8 points
        with pytest.raises(ValidationError):
            RecoveryTrace(np.zeros(10), np.ones(10))  # non-positive delays

    def test_exact_single_exponential(self):
        t = np.geomspace(2.0, 1000.0, 50)
        trace = RecoveryTrace(t, 1.0 - 2.0 * np.exp(-t / 100.0), kind="inversion")
        fit = fit_recovery_trace(trace)
        assert fit.t1_us == pytest.approx(100.0, abs=0.1)
        assert fit.beta == pytest.approx(1.0, abs=0.005)

    def test_stretched_round_trip(self):
        t = np.geomspace(1.0, 500.0, 60)
        trace = RecoveryTrace(t, 1.0 - np.exp(-((t / 50.0) ** 0.8)), kind="saturation")
        fit = fit_recovery_trace(trace)
        assert fit.t1_us == pytest.approx(50.0, rel=0.01)
        assert fit.beta == pytest.approx(0.8, rel=0.01)

    def test_constant_signal_errors(self):
        t = np.geomspace(1.0, 100.0, 20)
        with pytest.raises(ValidationError, match="no decay"):
            fit_recovery_trace(RecoveryTrace(t, np.ones(20)))

    def test_estimator_predict(self):
        t = np.geomspace(2.0, 1000.0, 40)
        signal = 1.0 - 2.0 * np.exp(-t / 100.0)
        model = StretchedExponentialModel().fit(t, signal)
        assert np.allclose(model.predict(t), signal, atol=1e-8)


class TestAssemble:
    def test_only_inversion_kept(self):
        points = [
            RatePoint(10.0, 1.0, method="inversion"),
            RatePoint(50.0, 2.0, method="inversion"),
        ]
        series = assemble_rate_series(points)
        assert len(series) == 2

    def test_saturation_preferred_below_crossover(self):
        points = [
            RatePoint(20.0, 1.0, method="saturation"),
            RatePoint(20.0, 2.0, method="inversion"),
            RatePoint(40.0, 3.0, method="saturation"),
            RatePoint(40.0, 4.0, method="inversion"),
        ]
        series = assemble_rate_series(points)
        by_t = {p.temperature_K: p for p in series.points}
        assert by_t[20.0].method == "saturation"
        assert by_t[40.0].method == "inversion"

    def test_sorted_output(self):
        rng = np.random.default_rng(0)
        temps = rng.permutation(np.linspace(3.5, 300, 30))
        points = [RatePoint(float(t), 1.0 + t) for t in temps]
        series = assemble_rate_series(points)
        assert np.all(np.diff(series.temperatures) > 0)

    def test_orientation_filter(self):
        points = [
            RatePoint(10.0, 1.0, orientation="parallel"),
            RatePoint(20.0, 1.0, orientation="perpendicular"),
        ]
        series = assemble_rate_series(points, AssemblyPolicy(orientation="parallel"))
        assert len(series) == 1
        with pytest.raises(ValidationError, match="empty"):
            assemble_rate_series([], AssemblyPolicy())

    def test_smallest_error_wins(self):
        points = [
            RatePoint(50.0, 1.0, rate_err_per_us=0.5, method="inversion"),
            RatePoint(50.0, 1.2, rate_err_per_us=0.1, method="inversion", orientation="parallel"),
        ]
        series = assemble_rate_series(points)
        assert series.points[0].rate_per_us == 1.2


class TestLogSlope:
    def test_linear_process(self):
        temps = np.geomspace(3.5, 300, 40)
        series = make_series(temps, 0.01 * temps)
        assert np.allclose(log_slope(series), 1.0, atol=0.02)

    def test_quadratic(self):
        temps = np.geomspace(3.5, 300, 40)
        series = make_series(temps, 2e-4 * temps**2)
        assert np.allclose(log_slope(series), 2.0, atol=0.02)

    def test_local_mode_slope_at_reference(self):
        # single local mode at 42.5 cm^-1 sampled around 20 K: slope = x*coth(x/2)
        temps = 20.0 * 1.01 ** np.arange(-6, 7)
        series = make_series(temps, two_phonon_factor(42.5, temps))
        slopes = log_slope(series, window=5)
        x = 42.5 / (CONSTANTS.kB_cm_per_K * 20.0)
        assert slopes[6] == pytest.approx(x / np.tanh(x / 2.0), abs=0.05)
        assert slopes[6] == pytest.approx(3.36, abs=0.05)

    def test_too_few_points(self):
        series = make_series([10.0, 20.0], [1.0, 2.0])
        with pytest.raises(ValidationError):
            log_slope(series)

    def test_even_window_rejected(self):
        temps = np.geomspace(5, 50, 10)
        series = make_series(temps, temps)
        with pytest.raises(ValidationError):
            log_slope(series, window=4)


class TestLocalModeFit:
    def two_mode_series(self, noise=0.0, seed=0):
        temps = np.geomspace(3.5, 300.0, 25)
        rates = local_mode_rate(temps, 3e-4, [(0.3, 42.5), (400.0, 264.8)])
        if noise:
            rng = np.random.default_rng(seed)
            rates = rates * np.exp(noise * rng.standard_normal(rates.size))
        return make_series(temps, rates)

    def test_noiseless_round_trip(self):
        fit = fit_local_modes(self.two_mode_series(), n_modes=2, include_direct=True)
        energies = fit.mode_energies_cm
        assert energies[0] == pytest.approx(42.5, rel=0.02)
        assert energies[1] == pytest.approx(264.8, rel=0.02)
        assert fit.a_dir_per_us_K == pytest.approx(3e-4, rel=0.01)

    def test_single_mode_exact(self):
        temps = np.geomspace(5.0, 300.0, 20)
        rates = local_mode_rate(temps, 0.0, [(5.0, 100.0)])
        fit = fit_local_modes(make_series(temps, rates), n_modes=1, include_direct=False)
        assert fit.modes[0].e_cm == pytest.approx(100.0, rel=1e-6)
        assert fit.modes[0].c_per_us == pytest.approx(5.0, rel=1e-6)

    def test_linear_data_drives_mode_to_zero(self):
        temps = np.geomspace(3.5, 300.0, 20)
        rates = 1e-3 * temps
        fit = fit_local_modes(make_series(temps, rates), n_modes=1, include_direct=True)
        model_mode_part = fit.modes[0].c_per_us * two_phonon_factor(
            fit.modes[0].e_cm, temps.max()
        )
        assert model_mode_part < 1e-6 * rates.max()
        assert fit.a_dir_per_us_K == pytest.approx(1e-3, rel=1e-4)

    def test_nested_models_never_worse(self):
        series = self.two_mode_series(noise=0.05, seed=3)
        one = fit_local_modes(series, n_modes=1, include_direct=True)
        two = fit_local_modes(series, n_modes=2, include_direct=True)
        assert two.rmse_log <= one.rmse_log + 1e-9

    def test_degenerate_modes_merged_with_warning(self):
        # two true modes only 3 cm^-1 apart land inside the merge threshold
        temps = np.geomspace(5.0, 300.0, 30)
        rates = local_mode_rate(temps, 0.0, [(3.0, 100.0), (2.0, 103.0)])
        with pytest.warns(UserWarning, match="degenerate"):
            fit = fit_local_modes(
                make_series(temps, rates), n_modes=2, include_direct=False
            )
        assert len(fit.modes) == 1
        assert fit.modes[0].e_cm == pytest.approx(101.2, rel=0.02)
        assert fit.modes[0].c_per_us == pytest.approx(5.0, rel=0.02)

    def test_model_positive_everywhere(self):
        fit = fit_local_modes(self.two_mode_series(noise=0.05, seed=1), n_modes=2)
        model = LocalModeRelaxationModel(n_modes=2)
        model.fit(self.two_mode_series().temperatures, self.two_mode_series().rates)
        temps = np.geomspace(0.5, 1000.0, 50)
        assert np.all(model.predict(temps) > 0)

    def test_slope_transitions_between_plateaus(self):
        # direct + one local mode: slope 1 at low T, 2 at high T, with an
        # activation ridge above 2 in between
        temps = np.geomspace(0.5, 5000.0, 120)
        rates = local_mode_rate(temps, 1e-4, [(10.0, 150.0)])
        slopes = log_slope(make_series(temps, rates))
        assert slopes[0] == pytest.approx(1.0, abs=0.02)
        assert slopes[-1] == pytest.approx(2.0, abs=0.02)
        assert slopes.max() > 2.5  # activation ridge


class TestDebyeRaman:
    def test_transport_integral_against_known_constant(self):
        # I8(inf) = 8! * zeta(8) = 64 pi^8 / 15 = 40484.399
        exact = 40320.0 * zeta(8)
        assert raman_transport_integral(np.inf) == pytest.approx(exact, abs=0.1)
        assert exact == pytest.approx(64.0 * np.pi**8 / 15.0, rel=1e-14)

    def test_transport_integral_monotone(self):
        values = [raman_transport_integral(y) for y in (0.5, 1.0, 5.0, 50.0)]
        assert all(b > a for a, b in zip(values, values[1:]))
        assert raman_transport_integral(0.0) == 0.0

    def test_high_t_limit_slope_two(self):
        # T >> theta_D: C T^9 I8(theta/T) ~ T^2
        theta = 50.0
        temps = np.geomspace(2000.0, 8000.0, 10)
        rates = debye_raman_rate(temps, 0.0, 1e-18, theta)
        series = make_series(temps, rates)
        assert np.allclose(log_slope(series), 2.0, atol=0.02)

    def test_round_trip(self):
        temps = np.geomspace(4.0, 300.0, 30)
        rates = debye_raman_rate(temps, 2e-4, 1e-16, 100.0)
        fit = fit_debye_raman(make_series(temps, rates))
        assert fit.theta_d_K == pytest.approx(100.0, rel=0.02)
        assert fit.a_dir_per_us_K == pytest.approx(2e-4, rel=0.02)

    def test_estimator_predict(self):
        temps = np.geomspace(4.0, 300.0, 25)
        rates = debye_raman_rate(temps, 1e-4, 1e-16, 80.0)
        model = DebyeRamanModel().fit(temps, rates)
        assert np.allclose(model.predict(temps), rates, rtol=1e-4)
