import random

import pytest

from taptree.synth import generate_forest, split_by_label


@pytest.fixture
def rng():
    return random.Random(1234)


@pytest.fixture(scope="session")
def small_forest():
    """About 300 benign trees and 6 planted attack trees."""
    return generate_forest(300, n_attacks=6, seed=5)


@pytest.fixture(scope="session")
def small_split(small_forest):
    return split_by_label(small_forest)


# -- acceptance summary ----------------------------------------------------------
# Tests marked ``criterion(n, title)`` get one PASS/FAIL line in the terminal
# summary; ``record_property("detail", ...)`` adds the measured values.

_LINES = pytest.StashKey[list]()


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n, title): numbered acceptance criterion")
    config.stash[_LINES] = []


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or rep.when != "call":
        return
    n, title = mark.args
    detail = dict(item.user_properties).get("detail", "")
    line = f"criterion {n}: {'PASS' if rep.passed else 'FAIL'}  {title}"
    item.config.stash[_LINES].append((n, line + (f"  [{detail}]" if detail else "")))


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(_LINES, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(lines):
            terminalreporter.write_line(line)
