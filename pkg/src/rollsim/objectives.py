"""Objectives with analytic gradients for exercising the optimizers.

Each objective is callable and returns ``(value, gradient)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True, eq=False)
class Quadratic:
    """``0.5 theta^T A theta - b^T theta`` for symmetric positive definite ``A``."""

    A: np.ndarray
    b: np.ndarray | None = None

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        if not np.allclose(A, A.T):
            raise ValueError("A must be symmetric")
        b = np.zeros(len(A)) if self.b is None else np.asarray(self.b, dtype=float)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", b)

    @classmethod
    def diagonal(cls, *curvatures) -> Quadratic:
        return cls(np.diag(curvatures))

    @property
    def curvature_range(self) -> tuple[float, float]:
        ev = np.linalg.eigvalsh(self.A)
        return float(ev[0]), float(ev[-1])

    def __call__(self, theta):
        theta = np.asarray(theta, dtype=float)
        g = self.A @ theta - self.b
        return float(0.5 * theta @ self.A @ theta - self.b @ theta), g


@dataclass(frozen=True)
class BumpyWell:
    """1-D bowl ``a x^2`` with a Gaussian bump of height ``h`` at ``c``.

    With the defaults the bump leaves a shallow local minimum near
    ``x = 4.1`` on its far side; the global minimum is near 0.
    """

    a: float = 0.05
    h: float = 1.0
    c: float = 3.0
    s: float = 0.5

    def __call__(self, theta):
        x = np.asarray(theta, dtype=float)
        e = np.exp(-((x - self.c) ** 2) / (2 * self.s**2))
        f = self.a * x**2 + self.h * e
        g = 2 * self.a * x - self.h * e * (x - self.c) / self.s**2
        return float(np.sum(f)), g


@dataclass(frozen=True)
class Rosenbrock:
    a: float = 1.0
    b: float = 100.0

    def __call__(self, theta):
        x, y = np.asarray(theta, dtype=float)
        f = (self.a - x) ** 2 + self.b * (y - x * x) ** 2
        g = np.array([-2 * (self.a - x) - 4 * self.b * x * (y - x * x), 2 * self.b * (y - x * x)])
        return float(f), g


BUILTIN = {
    "quadratic_kappa100": Quadratic.diagonal(1.0, 100.0),
    "bumpy_well": BumpyWell(),
    "rosenbrock": Rosenbrock(),
}
