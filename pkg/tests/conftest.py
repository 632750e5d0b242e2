import random

import pytest
from hypothesis import HealthCheck, settings

from ratobs.builtin import load_builtin
from ratobs.inverse import find_observability_index
from ratobs.observer import make_observer
from ratobs.realization import output_based_realization

settings.register_profile(
    "ratobs", max_examples=40, deadline=None,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.data_too_large])
settings.load_profile("ratobs")


class Pipeline:
    """The symbolic part of a synthesis run, built once per session."""

    def __init__(self, sys):
        self.sys = sys
        self.m, self.chain, self.inv = find_observability_index(sys)
        self.real = output_based_realization(sys, self.chain, self.inv)
        self.obs = make_observer(self.real)


_CACHE = {}


def pipeline(name, **params):
    key = (name, tuple(sorted(params.items())))
    if key not in _CACHE:
        sys = load_builtin(name)
        if params:
            sys = sys.bind(params)
        _CACHE[key] = Pipeline(sys)
    return _CACHE[key]


@pytest.fixture
def rng():
    return random.Random(1234)


@pytest.fixture(scope="session")
def polsys_unit():
    return pipeline("polsys", a11=1, a12=1, a22=1)
