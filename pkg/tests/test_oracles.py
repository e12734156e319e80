import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from membrelax.models import SeparableLaminate, join
from membrelax.oracles import (EnvelopeDensity, axis_envelope, convex_envelope_1d, dense_line_min,
                               two_point_laminate, well_envelope)

# frozen from the two-point enumeration (first run): the wells at +-e3 each
# cost the weight 1/2, mixed half and half
LAMINATE_ZERO = 0.5


def g(b):
    return SeparableLaminate().well_energy(b)[0]


def test_two_point_laminate_at_zero():
    value, v1, v2, theta = two_point_laminate(g, np.zeros(3))
    assert value == pytest.approx(LAMINATE_ZERO, abs=1e-12)
    assert np.allclose(sorted([v1[2], v2[2]]), [-1, 1])
    assert theta == pytest.approx(0.5)


def test_convex_envelope_1d_against_axis_closed_form():
    s = np.linspace(-3, 3, 6001)
    fs = g(s[:, None] * np.array([0.0, 0.0, 1.0]))
    env = convex_envelope_1d(s, fs)
    assert np.max(np.abs(env - axis_envelope(s))) < 1e-12


def test_well_envelope_along_axis():
    env = well_envelope(SeparableLaminate())
    s = np.linspace(-2.9, 2.9, 59)
    vals = env(s[:, None] * np.array([0.0, 0.0, 1.0]))
    assert np.max(np.abs(vals - axis_envelope(s))) < 1e-10


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(-1.7, 1.7), min_size=3, max_size=3))
def test_envelope_lies_below_the_well_and_above_the_laminates(b):
    b = np.array(b)
    env = well_envelope(SeparableLaminate())
    cg = float(env(b[None])[0])
    # bilinear table (step 0.05) of the exact hull; the error grows like
    # step^2 times the curvature of g, largest next to the wells
    assert cg <= float(g(b)) + 2.5e-3
    assert cg >= 0.5 - 1e-9


def test_envelope_density_is_separable():
    lam = SeparableLaminate()
    dens = EnvelopeDensity(lam)
    xi = join(np.array([[0.3, 0.0], [0.0, 0.4], [0.0, 0.0]]), np.array([0.0, 0.0, 0.5]))
    assert float(dens.value(xi)) == pytest.approx(0.5 + 0.5, abs=1e-9)


def test_dense_line_min():
    v, t = dense_line_min(lambda t: (t - 0.25) ** 2 + 1, -1, 1)
    assert v == pytest.approx(1.0) and t == pytest.approx(0.25, abs=1e-5)
