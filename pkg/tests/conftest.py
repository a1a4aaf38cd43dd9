import numpy as np
import pytest

from bellsched import Instance, School, tiny_instance


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def tiny_corpus(count, offset=0):
    return [tiny_instance(offset + s) for s in range(count)]


@pytest.fixture
def two_route_school():
    # one school, two unit routes, window 1, three slots
    return Instance(3, [School(1, (1, 1))])
