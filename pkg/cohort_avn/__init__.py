import datetime

from .errors import (
    AuthUnavailableError,
    CohortAVNError,
    ConfigurationError,
    InvariantViolation,
    ProtocolError,
    ScenarioError,
    UnknownVehicleError,
)
from .parallel_runs import run_scenarios_parallel
from .recording.record_model import record_model
from .security.attacks import AttackKind, AttackSpec, inject_attack
from .sim.model import HighwayModel
from .sim.runner import ScenarioTrace, run_attack_suite, run_scenario
from .sim.scenario import Scenario, load_scenario, validate_scenario

__all__ = [
    "AttackKind",
    "AttackSpec",
    "AuthUnavailableError",
    "CohortAVNError",
    "ConfigurationError",
    "HighwayModel",
    "InvariantViolation",
    "ProtocolError",
    "Scenario",
    "ScenarioError",
    "ScenarioTrace",
    "UnknownVehicleError",
    "inject_attack",
    "load_scenario",
    "record_model",
    "run_attack_suite",
    "run_scenario",
    "run_scenarios_parallel",
    "validate_scenario",
]

__title__ = "Cohort-AVN"
__version__ = "0.1.0"
__license__ = "MIT"
_this_year = datetime.datetime.now(tz=datetime.UTC).date().year
__copyright__ = f"Copyright {_this_year} Cohort-AVN developers"
