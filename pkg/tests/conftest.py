import functools

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from chordarc import make_domain, sample_boundary

settings.register_profile("default", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@functools.lru_cache(maxsize=None)
def domain(spec):
    return make_domain(spec)


@functools.lru_cache(maxsize=None)
def cloud(spec, h):
    return sample_boundary(domain(spec), h)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


_CRITERIA = {}


@pytest.fixture
def criterion():
    """``rec = criterion(n)`` marks n as failing until ``rec(ok, detail)`` runs."""

    def start(n):
        _CRITERIA[n] = (False, "did not finish")

        def done(ok, detail=""):
            _CRITERIA[n] = (bool(ok), detail)
            print(f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}")
            return ok

        return done

    return start


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for n in sorted(_CRITERIA):
        ok, detail = _CRITERIA[n]
        terminalreporter.write_line(f"criterion {n:>2}: {'PASS' if ok else 'FAIL'}  {detail}")
