import math

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from rkrfm.geometry import DomainBox, build_collocation, build_partition

settings.register_profile("default", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

TWO_PI = 2 * math.pi


@pytest.fixture
def square():
    return DomainBox((0.0, 0.0), (TWO_PI, TWO_PI))


@pytest.fixture
def part2x2(square):
    return build_partition(square, 2, 2)


@pytest.fixture
def coll2x2(part2x2):
    return build_collocation(part2x2, 8, 8)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# --------------------------------------------------------------------------
# slow tier and the acceptance summary

AC_KEY = pytest.StashKey[dict]()


def pytest_addoption(parser):
    parser.addoption("--run-slow", action="store_true", default=False,
                     help="also run criteria marked slow (hours on one core)")


def pytest_configure(config):
    config.stash[AC_KEY] = {}


def pytest_collection_modifyitems(config, items):
    if config.getoption("--run-slow"):
        return
    skip = pytest.mark.skip(reason="slow; run with --run-slow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip)


def _criterion(nodeid: str):
    name = nodeid.rsplit("::", 1)[-1]
    if name.startswith("test_ac") and name[7:9].isdigit():
        return f"AC-{int(name[7:9])}"
    return None


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    ac = _criterion(item.nodeid)
    if ac is None:
        return
    entry = item.config.stash[AC_KEY].setdefault(ac, {"status": None, "detail": ""})
    if rep.when == "call":
        entry["status"] = "PASS" if rep.passed else "FAIL"
    elif rep.skipped and entry["status"] is None:
        entry["status"] = "SKIP"
        entry["detail"] = entry["detail"] or "slow; run with --run-slow"
    elif rep.failed and entry["status"] is None:
        entry["status"] = "ERROR"


@pytest.fixture
def ac_report(request):
    """Attach a one-line measurement summary to the running criterion."""
    ac = _criterion(request.node.nodeid)
    entry = request.config.stash[AC_KEY].setdefault(ac, {"status": None, "detail": ""})

    def note(text: str) -> None:
        entry["detail"] = text
        print(f"{ac}: {text}")
    return note


def pytest_terminal_summary(terminalreporter, config):
    results = config.stash.get(AC_KEY, {})
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for ac in sorted(results, key=lambda k: int(k.split("-")[1])):
        r = results[ac]
        terminalreporter.write_line(f"{ac} {r['status'] or 'NOT RUN'}: {r['detail']}")
