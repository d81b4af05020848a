from __future__ import annotations

import numpy as np
import pytest

from propnav import training, world


@pytest.fixture(scope="session")
def models():
    """Trained (collision, fall) classifiers, cached on disk after the first run."""
    return training.cached_models()


@pytest.fixture
def empty_layout():
    g = np.zeros((100, 100), dtype=bool)
    g[0, :] = g[-1, :] = g[:, 0] = g[:, -1] = True
    return g


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def open_world(n=100):
    g = np.zeros((n, n), dtype=bool)
    return world.flat_world(g)


# ---------------------------------------------------------------- acceptance lines

_ACCEPTANCE = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n, title): numbered acceptance criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or rep.when not in ("setup", "call"):
        return
    if rep.when == "setup" and rep.passed:
        return
    n, title = mark.args
    detail = "; ".join(f"{k}={v}" for k, v in item.user_properties)
    _ACCEPTANCE[n] = ("PASS" if rep.passed else "FAIL", title, detail)


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_ACCEPTANCE):
        verdict, title, detail = _ACCEPTANCE[n]
        terminalreporter.write_line(f"{verdict} criterion {n:2d} {title}: {detail}")
