"""Shared fixtures.

The full-scenario simulations are expensive (tens of seconds), so each
one runs at most once per session and is shared between the tests that
inspect it.  Each result carries `wall_seconds` so runtime budgets can
be checked.
"""

import time
from dataclasses import replace

import pytest

from mmhopsim.runner import compare, run_scenario
from mmhopsim.scenario import MODE_SINGLE_HOP, load_bundled_scenario


def _timed_run(scenario):
    start = time.monotonic()
    result = run_scenario(scenario)
    result.wall_seconds = time.monotonic() - start
    return result


@pytest.fixture(scope="session")
def single_flow_multi():
    return _timed_run(load_bundled_scenario("blocker-single-flow"))


@pytest.fixture(scope="session")
def single_flow_single():
    scenario = load_bundled_scenario("blocker-single-flow")
    return _timed_run(replace(scenario, mode=MODE_SINGLE_HOP))


@pytest.fixture(scope="session")
def nlos_multi():
    return _timed_run(load_bundled_scenario("nlos-relay"))


@pytest.fixture(scope="session")
def nlos_single():
    scenario = load_bundled_scenario("nlos-relay")
    return _timed_run(replace(scenario, mode=MODE_SINGLE_HOP))


@pytest.fixture(scope="session")
def multi_flow_report():
    return compare(load_bundled_scenario("blocker-multi-flow"))
