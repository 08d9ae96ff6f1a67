"""Exception hierarchy shared by the protocol library and the scenario harness.

Protocol outcomes (reject reasons, receive flags, slot violations) are plain
values. Exceptions are reserved for broken inputs and broken invariants.
"""

from typing import Any


class CohortAVNError(Exception):
    """Base class for every error raised by cohort_avn."""


class ConfigurationError(CohortAVNError, ValueError):
    """A parameter set cannot describe a valid road, frame, policy or attack."""


class UnknownVehicleError(CohortAVNError, KeyError):
    """A vehicle id is not present in the world snapshot (a scenario bug)."""

    def __init__(self, vehicle_id: int):
        super().__init__(vehicle_id)
        self.vehicle_id = vehicle_id

    def __str__(self) -> str:
        return f"unknown vehicle id {self.vehicle_id}"


class ProtocolError(CohortAVNError):
    """The protocol was driven into a state it cannot represent (a protocol bug)."""


class AuthUnavailableError(CohortAVNError):
    """The SC pseudonym pool is empty, so no join request can be signed."""


class ScenarioError(CohortAVNError):
    """A scenario failed validation. ``issues`` lists every problem found."""

    def __init__(self, issues: list[str]):
        self.issues = list(issues)
        super().__init__("; ".join(self.issues) or "invalid scenario")


class InvariantViolation(CohortAVNError):
    """Checked mode caught a broken invariant while processing ``event``."""

    def __init__(self, message: str, event: Any = None):
        super().__init__(message)
        self.event = event
