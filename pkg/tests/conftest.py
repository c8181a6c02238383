"""Shared fixtures: the built-in scenario and a session-wide pipeline.

The pipeline caches every (sector, eps, t_count) solve, so the heavier
acceptance checks share their runs instead of recomputing them.
"""

import numpy as np
import pytest

from qsum.scenarios import Pipeline, chained_scenario, example_scenario


@pytest.fixture(scope="session")
def scenario():
    return example_scenario()


@pytest.fixture(scope="session")
def pipeline(scenario):
    return Pipeline(scenario)


@pytest.fixture(scope="session")
def chained():
    sc = chained_scenario()
    return sc, Pipeline(sc)


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(20240817)
