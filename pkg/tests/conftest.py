import numpy as np
import pytest

from quickiva import simgen


@pytest.fixture
def rng():
    return simgen.make_rng(20191015)


def cnormal(rng, *shape):
    return simgen.complex_normal(rng, shape)
