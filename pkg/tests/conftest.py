import numpy as np
import pytest

from spclab.core import EnergyGrid
from spclab.spc import LambdaProfile
from spclab.synth import SynthPeak, SynthSpec, generate_spectrum_set

TABLE_LAMBDAS = (0.068, 127.0)  # reference low/high coupling coefficients
TABLE_EDGES = (0.0, 185.0, 600.0)

# (criterion, description, passed) tuples filled in by test_acceptance.py
ACCEPTANCE_RESULTS = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for criterion, description, passed in sorted(
        ACCEPTANCE_RESULTS, key=lambda item: (len(item[0]), item[0])
    ):
        status = "PASS" if passed else "FAIL"
        terminalreporter.write_line(f"[criterion {criterion:>3}] {status} - {description}")


@pytest.fixture(scope="session")
def twoband_spectra():
    """Two-band spectrum family: bands at 40 and 265 cm^-1, identical at all T."""
    recipe = SynthSpec(
        peaks=(SynthPeak(40.0, 15.0, 0.7), SynthPeak(265.0, 30.0, 0.3)),
        temperatures_K=(5.0, 100.0, 200.0, 300.0),
        grid=EnergyGrid.uniform(0.0, 600.0, 300),
    )
    return generate_spectrum_set(recipe)


@pytest.fixture(scope="session")
def table_profile():
    return LambdaProfile(
        window_edges_cm=np.array(TABLE_EDGES), lambdas_per_us=np.array(TABLE_LAMBDAS)
    )
