import os

import numpy as np
import pytest

from muscleformer.autodiff import get_tape, precision


def pytest_addoption(parser):
    parser.addoption("--run-long", action="store_true", default=False,
                     help="run the long desk-scale training criteria")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--run-long") or os.environ.get("MF_RUN_LONG") == "1":
        return
    if "long" in (config.getoption("-m") or ""):
        return
    skip = pytest.mark.skip(reason="long training run; use --run-long or -m long")
    for item in items:
        if "long" in item.keywords:
            item.add_marker(skip)


@pytest.fixture
def f64():
    with precision("float64"):
        yield
    get_tape().clear()


@pytest.fixture(autouse=True)
def _clean_tape():
    yield
    get_tape().clear()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import REPORT
    except ImportError:
        return
    if REPORT:
        terminalreporter.section("acceptance criteria")
        for line in sorted(REPORT):
            terminalreporter.write_line(line)
