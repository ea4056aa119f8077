"""Built-in multi-patch model problems.

Both domains are unions of translated unit squares, and both use the manufactured
solution ``g = sin(pi x) sin(pi y)`` with ``f = -Δg = 2 pi^2 g``. ``g`` also
supplies the Dirichlet data.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .geometry import GeometryMap


def exact_solution(x, y):
    return np.sin(np.pi * x) * np.sin(np.pi * y)


def exact_gradient(x, y):
    return (np.pi * np.cos(np.pi * x) * np.sin(np.pi * y),
            np.pi * np.sin(np.pi * x) * np.cos(np.pi * y))


def source_term(x, y):
    return 2.0 * np.pi ** 2 * np.sin(np.pi * x) * np.sin(np.pi * y)


@dataclass
class Scenario:
    """Patches plus data of a Poisson problem ``-Δu = f``, ``u = g`` on the boundary."""

    name: str
    patches: list
    f: object = source_term
    g: object = exact_solution
    grad_g: object = exact_gradient
    meta: dict = field(default_factory=dict)

    @property
    def area(self):
        total = 0.0
        for G in self.patches:
            c = G.corner_points()
            # shoelace over the corner loop (0,0), (1,0), (1,1), (0,1)
            loop = c[[0, 1, 3, 2]]
            x, y = loop[:, 0], loop[:, 1]
            total += 0.5 * abs(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))
        return total


def scenario_unit_square():
    """``(-0.6, 1.4)^2`` split into four translated unit squares."""
    patches = [GeometryMap.rectangle(x0, y0) for y0 in (-0.6, 0.4) for x0 in (-0.6, 0.4)]
    return Scenario("unit_square", patches)


def scenario_l_shape():
    """``{x < 0.4 or y < 0.4}`` inside ``(-0.6, 1.4)^2``; three translated unit squares."""
    patches = [GeometryMap.rectangle(-0.6, -0.6), GeometryMap.rectangle(0.4, -0.6),
               GeometryMap.rectangle(-0.6, 0.4)]
    return Scenario("l_shape", patches)


SCENARIOS = {"unit_square": scenario_unit_square, "l_shape": scenario_l_shape}
