from collections.abc import Callable, Sequence
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from subrig.utils import expr
from subrig.utils.expr import Chart, Expr


def _compile(exprs: Sequence[Expr]) -> Callable[[Sequence[float]], np.ndarray]:
    funcs = [expr.lambdify(e) for e in exprs]
    return lambda x: np.array([f(x) for f in funcs], dtype=float)


def _jacobian_exprs(
    chart: Chart, components: Sequence[Expr]
) -> tuple[tuple[Expr, ...], ...]:
    # Row j, column i holds d(component j)/dx^i.
    return tuple(expr.gradient(c, chart) for c in components)


@dataclass(frozen=True)
class VectorField:
    chart: Chart
    components: tuple[Expr, ...]

    def __post_init__(self) -> None:
        components = tuple(self.components)
        if len(components) != self.chart.dimension:
            raise ValueError(
                f"Vector field has {len(components)} components, "
                f"chart has dimension {self.chart.dimension}"
            )
        object.__setattr__(self, "components", components)

    @classmethod
    def parse(cls, chart: Chart, sources: Sequence[str]) -> "VectorField":
        return cls(chart, tuple(expr.parse(src, chart) for src in sources))

    @classmethod
    def coordinate(cls, chart: Chart, index: int) -> "VectorField":
        return cls(
            chart,
            tuple(expr.ONE if i == index else expr.ZERO for i in range(chart.dimension)),
        )

    @classmethod
    def zero(cls, chart: Chart) -> "VectorField":
        return cls(chart, (expr.ZERO,) * chart.dimension)

    @classmethod
    def combination(
        cls,
        chart: Chart,
        coefficients: Sequence[Expr],
        fields: Sequence["VectorField"],
    ) -> "VectorField":
        """Pointwise linear combination sum_a c_a X_a."""
        if len(coefficients) != len(fields):
            raise ValueError("One coefficient per field is required")
        components = []
        for j in range(chart.dimension):
            total = expr.ZERO
            for c, field in zip(coefficients, fields):
                total = expr.add(total, expr.mul(c, field.components[j]))
            components.append(total)
        return cls(chart, tuple(components))

    @property
    def is_zero(self) -> bool:
        return all(c == expr.ZERO for c in self.components)

    @cached_property
    def jacobian_exprs(self) -> tuple[tuple[Expr, ...], ...]:
        return _jacobian_exprs(self.chart, self.components)

    @cached_property
    def _value(self) -> Callable[[Sequence[float]], np.ndarray]:
        return _compile(self.components)

    @cached_property
    def _jacobian(self) -> Callable[[Sequence[float]], np.ndarray]:
        n = self.chart.dimension
        flat = _compile([e for row in self.jacobian_exprs for e in row])
        return lambda x: flat(x).reshape(n, n)

    def value(self, x: Sequence[float]) -> np.ndarray:
        return self._value(x)

    def jacobian(self, x: Sequence[float]) -> np.ndarray:
        return self._jacobian(x)

    def __str__(self) -> str:
        return "(" + ", ".join(expr.unparse(c) for c in self.components) + ")"


@dataclass(frozen=True)
class OneFormField:
    chart: Chart
    components: tuple[Expr, ...]

    def __post_init__(self) -> None:
        components = tuple(self.components)
        if len(components) != self.chart.dimension:
            raise ValueError(
                f"One-form has {len(components)} components, "
                f"chart has dimension {self.chart.dimension}"
            )
        object.__setattr__(self, "components", components)

    @classmethod
    def parse(cls, chart: Chart, sources: Sequence[str]) -> "OneFormField":
        return cls(chart, tuple(expr.parse(src, chart) for src in sources))

    def __add__(self, other: "OneFormField") -> "OneFormField":
        return OneFormField(
            self.chart,
            tuple(expr.add(a, b) for a, b in zip(self.components, other.components)),
        )

    def scale(self, factor: Expr) -> "OneFormField":
        return OneFormField(
            self.chart, tuple(expr.mul(factor, c) for c in self.components)
        )

    @cached_property
    def jacobian_exprs(self) -> tuple[tuple[Expr, ...], ...]:
        return _jacobian_exprs(self.chart, self.components)

    @cached_property
    def _value(self) -> Callable[[Sequence[float]], np.ndarray]:
        return _compile(self.components)

    @cached_property
    def _jacobian(self) -> Callable[[Sequence[float]], np.ndarray]:
        n = self.chart.dimension
        flat = _compile([e for row in self.jacobian_exprs for e in row])
        return lambda x: flat(x).reshape(n, n)

    def value(self, x: Sequence[float]) -> np.ndarray:
        return self._value(x)

    def jacobian(self, x: Sequence[float]) -> np.ndarray:
        """Entry [i, j] is d(alpha_i)/dx^j."""
        return self._jacobian(x)
