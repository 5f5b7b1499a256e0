import numpy as np
import pytest

from scmkit import CovariateTable, OutcomeKind, Panel, SolverSettings, StudyDesign
from scmkit.generate import GeneratorSpec, generate_panel


@pytest.fixture
def rng():
    return np.random.default_rng(20231)


@pytest.fixture
def fast_settings():
    """Cheap V search for tests that exercise plumbing rather than optimum quality."""
    return SolverSettings(multistart_count=2, outer_max_evaluations=200)


@pytest.fixture
def share_panel(rng):
    """21 units x 46 periods of shares in [0, 1], treated ``unit00``, t0 = 27."""
    units = [f"unit{j:02d}" for j in range(21)]
    periods = [str(t) for t in range(1, 47)]
    Y = np.clip(np.cumsum(rng.uniform(0, 0.02, (21, 46)), axis=1), 0, 1)
    return Panel(units, periods, Y, OutcomeKind.SHARE)


@pytest.fixture
def share_covs(share_panel, rng):
    names = ["foreign_born", "high_education", "covid_deaths", "financial_aid",
             "alcohol_addiction", "fast_internet", "high_trust", "neet"]
    return CovariateTable(share_panel.unit_ids, names, rng.uniform(0, 1, (21, 8)))


@pytest.fixture
def small_instance():
    """Seeded 8-unit noisy panel with a planted effect; treated ``unit00``, t0 = 12."""
    spec = GeneratorSpec(n_units=8, n_periods=18, t0=12, noise=0.01, effect=0.1, seed=7, n_covariates=3)
    panel, covs, truth = generate_panel(spec)
    return panel, covs, StudyDesign(truth.treated_unit, spec.t0)


@pytest.fixture
def exact_instance():
    """Noise-free panel whose treated unit is exactly 0.3 * unit01 + 0.7 * unit02 before t0.

    Twenty latent factors make the 20 donors affinely independent over the
    27 pre-periods, so the planted weights are the unique exact fit.
    """
    spec = GeneratorSpec(noise=0.0, n_factors=20, planted_weights=(0.3, 0.7), seed=3)
    panel, covs, truth = generate_panel(spec)
    return panel, covs, StudyDesign(truth.treated_unit, spec.t0), truth


ACCEPTANCE_LINES = []


@pytest.fixture
def acceptance():
    """Record one pass/fail line for an acceptance criterion; shown in the terminal summary."""

    def record(number, ok, detail, status=None):
        status = status or ("PASS" if ok else "FAIL")
        ACCEPTANCE_LINES.append((number, f"criterion {number}: {status}  {detail}"))
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(ACCEPTANCE_LINES, key=lambda x: x[0]):
            terminalreporter.write_line(line)
