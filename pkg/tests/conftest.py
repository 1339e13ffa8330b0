import numpy as np
import pytest

from alkit.views import EmbeddingMatrix, PredictionTensor


def random_prob_tensor(rng, passes, n, classes):
    """Dirichlet-ish random row-stochastic tensor [S, N, C]."""
    raw = rng.gamma(1.0, 1.0, size=(passes, n, classes)) + 1e-8
    return raw / raw.sum(axis=-1, keepdims=True)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def make_tensor(values, indices=None):
    values = np.asarray(values, dtype=np.float64)
    if values.ndim == 2:
        values = values[None]
    if indices is None:
        indices = np.arange(values.shape[1])
    return PredictionTensor(values=values, indices=np.asarray(indices))


def make_embeddings(values, indices=None):
    values = np.asarray(values, dtype=np.float64)
    if indices is None:
        indices = np.arange(values.shape[0])
    return EmbeddingMatrix(values=values, indices=np.asarray(indices))


# ---------------------------------------------------------------------------
# Acceptance reporting: one pass/fail line per criterion after the run.
# ---------------------------------------------------------------------------

ACCEPTANCE_RESULTS = {}


def pytest_runtest_logreport(report):
    if report.when != "call" and not (report.when == "setup" and report.skipped):
        return
    if "test_acceptance" not in report.nodeid:
        return
    name = report.nodeid.split("::")[-1]
    if report.skipped:
        reason = ""
        if isinstance(report.longrepr, tuple):
            reason = report.longrepr[2]
        ACCEPTANCE_RESULTS[name] = f"SKIPPED ({reason})"
    else:
        ACCEPTANCE_RESULTS[name] = "PASS" if report.passed else "FAIL"


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.write_sep("-", "acceptance criteria")
    for name, outcome in sorted(ACCEPTANCE_RESULTS.items()):
        terminalreporter.write_line(f"{name}: {outcome}")
