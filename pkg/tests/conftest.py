import numpy as np
import pytest

from carbon_threshold.model import build_scenario
from carbon_threshold.tables import packaged_config


def scenario(name="baseline", updates=None):
    doc = dict(packaged_config(name))
    doc.update({k: str(v) for k, v in (updates or {}).items()})
    return build_scenario(doc)


def random_constant_scenarios(n, seed):
    """Constant-coefficient scenarios spread over a plausible parameter box."""
    rng = np.random.default_rng(seed)
    out = []
    while len(out) < n:
        upd = {
            "model.mu_bar": rng.uniform(0.0, 0.5),
            "model.sigma": rng.uniform(1.0, 3.0),
            "econ.l_base": rng.uniform(0.5, 2.0),
            "econ.l_max": rng.uniform(1.0, 5.0),
            "econ.Lambda_bar": rng.uniform(0.1, 1.0),
            "econ.delta": rng.uniform(0.05, 0.2),
            "econ.c_tax": rng.uniform(0.0, 0.3),
            "bias.lambda": rng.uniform(0.1, 5.0),
            "bias.alpha": rng.uniform(0.5, 0.99),
        }
        out.append(scenario("baseline", upd))
    return out


@pytest.fixture(scope="session")
def baseline():
    return scenario("baseline")


@pytest.fixture(scope="session")
def ou():
    return scenario("ou")


@pytest.fixture(scope="session")
def random_scenarios():
    return random_constant_scenarios(50, 20240617)


# one line per acceptance criterion, echoed in the terminal summary
CRITERIA: dict[int, str] = {}


def record_criterion(n: int, ok: bool, detail: str) -> bool:
    line = f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
    CRITERIA[n] = line
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if CRITERIA:
        terminalreporter.section("acceptance criteria")
        for n in sorted(CRITERIA):
            terminalreporter.write_line(CRITERIA[n])
