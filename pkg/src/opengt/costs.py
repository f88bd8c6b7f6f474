"""Local cost functions with gradients, plus exact and iterative computation
of the minimizer of a cluster's summed objective.

Quadratic costs ``0.5 * a * (x - b)**2`` cover the standard experiments and
admit closed-form cluster minimizers; arbitrary smooth convex costs can be
supplied as value/gradient callables and are handled by an independent
gradient-descent solver.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, field
from typing import Callable

from .errors import ConfigurationError, CostEvaluationError, MinimizerError

QUADRATIC = "quadratic"
CUSTOM = "custom"


@dataclass(frozen=True)
class CostFunction:
    """One agent's local cost; immutable and shareable across threads.

    ``valid_from`` records the round the function takes effect (costs change
    only when an agent joins or re-joins).
    """

    kind: str
    lipschitz: float
    valid_from: int = 0
    a: float | None = None
    b: float | None = None
    value_fn: Callable[[float], float] | None = field(default=None, repr=False)
    gradient_fn: Callable[[float], float] | None = field(default=None, repr=False)


def quadratic(a: float, b: float, valid_from: int = 0) -> CostFunction:
    """Cost ``0.5 * a * (x - b)**2`` with curvature ``a > 0`` and target ``b``."""
    if a <= 0:
        raise ConfigurationError(f"quadratic curvature must be positive, got {a}")
    return CostFunction(kind=QUADRATIC, lipschitz=float(a), valid_from=valid_from,
                        a=float(a), b=float(b))


def custom(
    value_fn: Callable[[float], float],
    gradient_fn: Callable[[float], float],
    lipschitz: float,
    valid_from: int = 0,
) -> CostFunction:
    """Cost given by explicit value and gradient callables."""
    if lipschitz <= 0:
        raise ConfigurationError(f"Lipschitz constant must be positive, got {lipschitz}")
    return CostFunction(kind=CUSTOM, lipschitz=float(lipschitz), valid_from=valid_from,
                        value_fn=value_fn, gradient_fn=gradient_fn)


def value(c: CostFunction, x: float) -> float:
    if c.kind == QUADRATIC:
        d = x - c.b
        return 0.5 * c.a * d * d
    try:
        return float(c.value_fn(x))
    except Exception as exc:  # noqa: BLE001 - user callable
        raise CostEvaluationError(f"cost value failed at x={x}: {exc}") from exc


def gradient(c: CostFunction, x: float) -> float:
    if c.kind == QUADRATIC:
        return c.a * (x - c.b)
    try:
        return float(c.gradient_fn(x))
    except Exception as exc:  # noqa: BLE001 - user callable
        raise CostEvaluationError(f"gradient failed at x={x}: {exc}") from exc


@dataclass(frozen=True)
class ClusterObjective:
    """The summed objective of one cluster's members."""

    members: tuple[int, ...]
    costs: tuple[CostFunction, ...]
    mu: float | None = None

    def __post_init__(self):
        if not self.members:
            raise ConfigurationError("a cluster objective needs at least one member")
        if len(self.members) != len(self.costs):
            raise ConfigurationError(
                f"{len(self.members)} members but {len(self.costs)} cost functions"
            )
        if self.mu is not None and self.mu <= 0:
            raise ConfigurationError(f"strong-convexity modulus must be positive, got {self.mu}")

    def strong_convexity(self) -> float | None:
        """Declared modulus, or the summed curvature for all-quadratic clusters."""
        if self.mu is not None:
            return self.mu
        if all(c.kind == QUADRATIC for c in self.costs):
            return math.fsum(c.a for c in self.costs)
        return None


def cluster_objective_value(obj: ClusterObjective, x: float) -> float:
    """Sum of the members' costs at x."""
    return math.fsum(value(c, x) for c in obj.costs)


def cluster_gradient(obj: ClusterObjective, x: float) -> float:
    """Gradient of the summed objective at x."""
    return math.fsum(gradient(c, x) for c in obj.costs)


def cluster_minimizer(obj: ClusterObjective) -> float:
    """Minimizer of the summed objective.

    All-quadratic clusters use the closed form sum(a*b)/sum(a); anything else
    falls back to the iterative solver.
    """
    if all(c.kind == QUADRATIC for c in obj.costs):
        total = math.fsum(c.a for c in obj.costs)
        if total <= 0:
            raise ConfigurationError("cluster objective is not strongly convex (sum a <= 0)")
        return math.fsum(c.a * c.b for c in obj.costs) / total
    return iterative_minimizer(obj)


def iterative_minimizer(
    obj: ClusterObjective,
    tol: float = 1e-12,
    max_iters: int = 500_000,
    x0: float = 0.0,
) -> float:
    """Centralized gradient descent on the summed objective, run to
    gradient magnitude <= ``tol``.

    Serves as the independent optimality oracle for error metrics; it never
    shares code with the distributed update.
    """
    step = 1.0 / math.fsum(c.lipschitz for c in obj.costs)
    x = x0
    g = cluster_gradient(obj, x)
    for _ in range(max_iters):
        if abs(g) <= tol:
            return x
        x -= step * g
        g = cluster_gradient(obj, x)
    raise MinimizerError(
        f"minimizer did not reach |gradient| <= {tol} in {max_iters} iterations", abs(g)
    )


def gradient_check_max_error(
    cost: CostFunction,
    rng: random.Random,
    points: int = 100,
    lo: float = -10.0,
    hi: float = 10.0,
) -> float:
    """Largest relative mismatch between the declared gradient and a central
    finite difference of the value function, over random sample points."""
    worst = 0.0
    for _ in range(points):
        x = rng.uniform(lo, hi)
        h = 1e-6 * max(1.0, abs(x))
        fd = (value(cost, x + h) - value(cost, x - h)) / (2.0 * h)
        g = gradient(cost, x)
        err = abs(fd - g) / max(1.0, abs(fd), abs(g))
        worst = max(worst, err)
    return worst
