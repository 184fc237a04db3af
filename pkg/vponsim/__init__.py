__version__ = "0.1.0"

from .decorators import guard
from .exceptions import GuardValidationError, ScenarioValidationError, SimulationError
from .guard import Guard
from .runner import ResultBundle, run_scenario, sweep
from .scenario import load_scenario, parse_scenario
from .validators import Validator

__all__ = [
    "guard",
    "Guard",
    "Validator",
    "GuardValidationError",
    "ScenarioValidationError",
    "SimulationError",
    "ResultBundle",
    "run_scenario",
    "sweep",
    "load_scenario",
    "parse_scenario",
]
