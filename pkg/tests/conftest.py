import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from mecoffload.scenario import ScenarioConfig, deployment_from_positions

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def cfg():
    return ScenarioConfig()


@pytest.fixture
def small_cfg():
    return ScenarioConfig(n_ues=2, n_aps=2)


def line_deployment(config, xs, ap_xs=None):
    """UEs (and optionally APs) on the x axis."""
    ues = np.array([[x, 0.0] for x in xs])
    aps = None if ap_xs is None else np.array([[x, 0.0] for x in ap_xs])
    return deployment_from_positions(config, ues, aps)


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(results):
        passed, detail = results[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if passed else 'FAIL'}  {detail}")
