"""PyTest Fixtures.

They should not be imported, instead add code below to your root conftest.py
file:

pytest_plugins = ['zrpfluct.testing.fixtures']
"""
import copy
from argparse import Namespace
from typing import Iterator

import numpy as np
import pytest
from _pytest.fixtures import SubRequest

from zrpfluct import config
from zrpfluct.conditions import ConditionsCollection
from zrpfluct.ensemble import DensityPoint, fugacity_of_density
from zrpfluct.frame import perturbed_rw_frame
from zrpfluct.rates import (
    RateFamily,
    ScalarRate,
    h_example_rate,
    independent,
    multi_color,
    perturbed_walks,
)
from zrpfluct.testing import RunConditions


@pytest.fixture
def condition_runner(request: SubRequest) -> RunConditions:
    """Return runner for a specific condition class."""
    condition_class = request.param
    collection = ConditionsCollection(conditionsdirs=[])
    collection.enable_list.append(condition_class.id)
    collection.register(condition_class())
    return RunConditions(collection)


@pytest.fixture
def config_options() -> Iterator[Namespace]:
    """Return configuration options that will be restored after testrun."""
    original_options = copy.deepcopy(config.options)
    yield config.options
    config.options = original_options


@pytest.fixture
def rng() -> np.random.Generator:
    """Return a seeded counter-based generator."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(20210417)))


@pytest.fixture
def walkers() -> RateFamily:
    """Return two species of independent walkers."""
    return independent(2)


@pytest.fixture
def colored_poisson() -> RateFamily:
    """Return the two-color family with g(m)=m."""
    return multi_color(2, ScalarRate())


@pytest.fixture
def colored_h_example() -> RateFamily:
    """Return the two-color family built on the three-level H example."""
    return multi_color(2, h_example_rate())


@pytest.fixture
def perturbed_frame_point() -> DensityPoint:
    """Return the frame density of the perturbed walks at phi1=0.49, x=3."""
    frame = perturbed_rw_frame(0.49, 3.0)
    family = perturbed_walks(3.0, frame.y)
    return fugacity_of_density(family, frame.a)
