"""Symmetric quadrature rules on triangles in barycentric form."""

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class QuadratureRule:
    """Barycentric points with weights summing to one.

    Integrals over a triangle T are approximated by ``|T| * sum(w_q f(x_q))``.
    """

    points: np.ndarray
    weights: np.ndarray
    degree: int

    def __len__(self):
        return len(self.weights)


def _orbit3(a, w):
    b = 1.0 - 2.0 * a
    return [(a, a, b), (a, b, a), (b, a, a)], [w] * 3


def _orbit6(a, b, w):
    c = 1.0 - a - b
    pts = [(a, b, c), (a, c, b), (b, a, c), (b, c, a), (c, a, b), (c, b, a)]
    return pts, [w] * 6


def _build(parts, degree):
    pts, wts = [], []
    for p, w in parts:
        pts.extend(p)
        wts.extend(w)
    return QuadratureRule(np.array(pts, dtype=float), np.array(wts, dtype=float), degree)


def _rule1():
    return _build([([(1 / 3, 1 / 3, 1 / 3)], [1.0])], 1)


def _rule2():
    return _build([_orbit3(1 / 6, 1 / 3)], 2)


def _rule5():
    s = np.sqrt(15.0)
    return _build(
        [
            ([(1 / 3, 1 / 3, 1 / 3)], [9 / 40]),
            _orbit3((6 - s) / 21, (155 - s) / 1200),
            _orbit3((6 + s) / 21, (155 + s) / 1200),
        ],
        5,
    )


def _rule8():
    # Dunavant (1985), 16 points
    return _build(
        [
            ([(1 / 3, 1 / 3, 1 / 3)], [0.144315607677787]),
            _orbit3(0.459292588292723, 0.095091634267285),
            _orbit3(0.170569307751760, 0.103217370534718),
            _orbit3(0.050547228317031, 0.032458497623198),
            _orbit6(0.263112829634638, 0.008394777409958, 0.027230314174435),
        ],
        8,
    )


_RULES = {1: _rule1, 2: _rule2, 5: _rule5, 8: _rule8}


def triangle_rule(degree):
    """Return the smallest tabulated rule exact to at least ``degree``."""
    for d in sorted(_RULES):
        if d >= degree:
            return _RULES[d]()
    raise ValueError(f"no triangle rule of degree {degree}; max is {max(_RULES)}")
