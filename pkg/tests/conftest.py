import math

import numpy as np
import pytest
from hypothesis import settings
from hypothesis import strategies as st

from owc.model import BoundaryState, DomainLayout, FieldState, PhysicalParams

settings.register_profile("owc", deadline=None, max_examples=60, derandomize=True)
settings.load_profile("owc")

G = 9.81


@pytest.fixture
def p():
    return PhysicalParams()


@pytest.fixture
def layout(p):
    return DomainLayout(p, 4.0, 40, 25, 35)


@pytest.fixture
def rest(layout):
    return FieldState.rest(layout), BoundaryState()


def subcritical_states(h_rest=1.0, max_fr=0.9):
    """(zeta, q) pairs with h in [0.3, 3] h_rest and Froude number below max_fr."""

    @st.composite
    def build(draw):
        h = draw(st.floats(0.3 * h_rest, 3.0 * h_rest))
        fr = draw(st.floats(-max_fr, max_fr))
        return h - h_rest, fr * h * math.sqrt(G * h)

    return build()


def gaussian_state(layout, amp=0.01, center=-2.0, width=0.5):
    return FieldState.from_functions(layout, lambda x: amp * np.exp(-(((x - center) / width) ** 2)))
