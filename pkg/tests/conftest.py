import numpy as np
import pytest

from polyminmax.poly_core import Polynomial, VariableSpace


@pytest.fixture
def toy_space():
    return VariableSpace.from_blocks(["theta"], ["alpha"])


def var(space, name):
    return Polynomial.variable(space, name)
