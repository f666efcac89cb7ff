import numpy as np
import pytest

from rotbayes.calibration import load_si_table
from rotbayes.design import WeightMatrix
from rotbayes.harness import CampaignConfig
from rotbayes.model import ParameterPoint


@pytest.fixture(scope="session")
def si_table():
    return load_si_table()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def small_config(si_table):
    pts, mean = si_table
    return CampaignConfig(
        G=WeightMatrix.select("theta"),
        true_points=(ParameterPoint(pts[2].theta, mean),),
        seed=11, M=2, n_p=400, N_max=300, bootstrap_resamples=100,
    )


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for n in sorted(RESULTS):
            terminalreporter.write_line(RESULTS[n])
