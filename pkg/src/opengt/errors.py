"""Exception types shared across the package."""

from __future__ import annotations


class ConfigurationError(Exception):
    """Invalid static configuration: graph structure, cost definitions, parameters."""


class ScenarioError(ConfigurationError):
    """A scenario failed validation.  Carries every problem found, not just the first."""

    def __init__(self, problems: list[str], source: str = "scenario"):
        self.problems = list(problems)
        self.source = source
        lines = [f"{source}: {len(self.problems)} validation problem(s)"]
        lines += [f"  - {p}" for p in self.problems]
        super().__init__("\n".join(lines))


class SimulationError(Exception):
    """Fatal runtime invariant violation, annotated with round/agent context."""


class CostEvaluationError(Exception):
    """A user-supplied cost value or gradient callback failed."""


class MinimizerError(Exception):
    """The iterative minimizer hit its iteration cap before reaching tolerance."""

    def __init__(self, message: str, residual: float):
        self.residual = residual
        super().__init__(f"{message} (gradient residual {residual:.3e})")
