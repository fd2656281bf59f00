import os

import numpy as np
import pytest


def ball_points(rng, n, dim, c=1.0, max_norm=0.9):
    """Uniform directions with radii uniform in [0, max_norm / sqrt(c)]."""
    v = rng.normal(size=(n, dim))
    v /= np.linalg.norm(v, axis=-1, keepdims=True)
    r = rng.uniform(0.0, max_norm, size=(n, 1)) / np.sqrt(c)
    return v * r


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_collection_modifyitems(config, items):
    if os.environ.get("FFHR_LONG") == "1":
        return
    skip = pytest.mark.skip(reason="long benchmark; set FFHR_LONG=1 to run")
    for item in items:
        if "long" in item.keywords:
            item.add_marker(skip)


ACCEPTANCE_LINES = []


def record_criterion(name, passed, detail):
    line = f"{'PASS' if passed else 'FAIL'}  {name}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return passed


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
