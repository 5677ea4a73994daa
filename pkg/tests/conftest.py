import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", max_examples=60, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def random_model(rng, D, d, scale=1.0):
    from qmf.features import QuadModel, n_quadratic
    return QuadModel(rng.standard_normal(D), rng.standard_normal((D, d)),
                     scale * rng.standard_normal((D, n_quadratic(d))))


def orthonormal_embedding(rng, d, m):
    from qmf.core import orthonormalize
    return orthonormalize(rng.standard_normal((d, m)))


def pytest_terminal_summary(terminalreporter):
    mod = __import__("sys").modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if results:
        terminalreporter.section("acceptance criteria")
        for n in sorted(results):
            terminalreporter.write_line(results[n])
