import os

import hypothesis
import numpy as np
import pytest

from cdar.data import ActivityDomain, window

hypothesis.settings.register_profile("dev", max_examples=30, deadline=None)
hypothesis.settings.register_profile("ci", max_examples=200, deadline=None)
hypothesis.settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "dev"))


def make_domain(name="d", T=200, C=3, n_classes=3, seed=0, shift=0.0):
    r = np.random.default_rng(seed)
    series = r.normal(size=(T, C)) + shift
    labels = np.repeat(np.arange(T) * n_classes // T, 1)
    return ActivityDomain(name, series, labels, [f"c{i}" for i in range(C)], 50.0)


@pytest.fixture
def small_ws():
    return window(make_domain("small", T=400, C=3), 20, 10)


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance: end-to-end acceptance criteria")


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split("criterion ")[1].split(":")[0])):
            terminalreporter.write_line(line)
