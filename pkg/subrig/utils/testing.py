"""Charts, sample points and random sections shared by the test suites."""

import math

import numpy as np

from geometry.fields import OneFormField
from geometry.structures import SubRiemannianStructure
from subrig.utils import expr
from subrig.utils.expr import Chart

XYZ = Chart(("x", "y", "z"))
CYLINDER = Chart(
    ("r", "theta", "z"), ((0.01, 10.0), (-math.inf, math.inf), (-math.inf, math.inf))
)


def montgomery_profile(r: float) -> float:
    return r**2 / 2 - r**4 / 4


def sample_points(s: SubRiemannianStructure, count: int, seed: int = 0) -> np.ndarray:
    """Random points in a modest box where every example is well conditioned."""
    rng = np.random.default_rng(seed)
    points = rng.uniform(-1.0, 1.0, size=(count, s.dimension))
    if s.chart.names[0] == "r":
        points[:, 0] = rng.uniform(0.5, 1.5, size=count)
    return points


def random_one_form(chart: Chart, rng: np.random.Generator) -> OneFormField:
    a, b, c = chart.names[:3]
    components = []
    for _ in range(chart.dimension):
        k = rng.uniform(-1, 1, size=4)
        components.append(
            f"{k[0]:.6f} + {k[1]:.6f}*{a}*{b} + {k[2]:.6f}*{c}^2 + {k[3]:.6f}*sin({b})"
        )
    return OneFormField.parse(chart, components)


def random_function(chart: Chart, rng: np.random.Generator) -> expr.Expr:
    k = rng.uniform(-1, 1, size=3)
    return expr.parse(
        f"1.5 + {k[0]:.6f}*{chart.names[0]} + {k[1]:.6f}*cos({chart.names[1]}) "
        f"+ {k[2]:.6f}*{chart.names[2]}",
        chart,
    )
