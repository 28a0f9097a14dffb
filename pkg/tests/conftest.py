import functools

import numpy as np
import pytest

from landuse_pricing.io import load_fixture
from landuse_pricing.network import enumerate_routes

ACCEPTANCE_LINES: list[str] = []


@functools.lru_cache(maxsize=None)
def fixture_bundle(name):
    sc = load_fixture(name)
    return sc, enumerate_routes(sc.network)


@pytest.fixture(params=["s2", "t2", "sixnode"])
def any_fixture(request):
    return fixture_bundle(request.param)


@pytest.fixture
def s2():
    return fixture_bundle("s2")


@pytest.fixture
def t2():
    return fixture_bundle("t2")


@pytest.fixture
def sixnode():
    return fixture_bundle("sixnode")


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def record_acceptance():
    def record(number, title, ok, detail=""):
        line = f"[{'PASS' if ok else 'FAIL'}] criterion {number}: {title}" + (f" ({detail})" if detail else "")
        ACCEPTANCE_LINES.append(line)
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split("criterion ")[1].split(":")[0])):
            terminalreporter.write_line(line)
