"""Learning-based licensed/unlicensed spectrum allocation simulator."""

from .scenario import ALGORITHMS, ScenarioConfig, desk_config
from .harness import monte_carlo, resolve_conflicts, run, sweep

__all__ = ["ALGORITHMS", "ScenarioConfig", "desk_config", "monte_carlo",
           "resolve_conflicts", "run", "sweep"]
