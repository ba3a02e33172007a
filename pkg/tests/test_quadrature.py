import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from skewadvect.quadrature import triangle_rule

DEGREES = (1, 2, 5, 8)


def exact_monomial(p, q):
    # int over the reference triangle of x^p y^q
    return math.factorial(p) * math.factorial(q) / math.factorial(p + q + 2)


@pytest.mark.parametrize("degree", DEGREES)
def test_weights_sum_to_one_and_points_are_barycentric(degree):
    rule = triangle_rule(degree)
    assert rule.degree >= degree
    assert np.isclose(rule.weights.sum(), 1.0, atol=1e-14)
    assert np.allclose(rule.points.sum(axis=1), 1.0, atol=1e-14)
    assert np.all(rule.points >= -1e-14)


@settings(max_examples=60, deadline=None)
@given(degree=st.sampled_from(DEGREES), data=st.data())
def test_monomials_integrated_exactly(degree, data):
    rule = triangle_rule(degree)
    p = data.draw(st.integers(0, rule.degree))
    q = data.draw(st.integers(0, rule.degree - p))
    # reference triangle (0,0), (1,0), (0,1): x = lam_1, y = lam_2, area 1/2
    x, y = rule.points[:, 1], rule.points[:, 2]
    approx = 0.5 * np.sum(rule.weights * x**p * y**q)
    assert approx == pytest.approx(exact_monomial(p, q), rel=1e-13, abs=1e-16)


def test_rule_selection_rounds_up():
    assert triangle_rule(3).degree == 5
    assert triangle_rule(6).degree == 8


def test_unavailable_degree_rejected():
    with pytest.raises(ValueError):
        triangle_rule(20)
