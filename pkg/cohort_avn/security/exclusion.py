"""
Stop maneuver and exclusion reporting.

Once its SC-TPD holds a violation, a vehicle is taken over by its SCR
subsystem: warning lights on, constant deceleration to a safe halt on the
emergency lane, and one exclusion report addressed to the authorities.
"""

import logging
from dataclasses import dataclass, field

from cohort_avn.cohort.cohort import Cohort
from cohort_avn.cohort.protocol import leave
from cohort_avn.errors import AuthUnavailableError, ConfigurationError, ProtocolError
from cohort_avn.kinematics import KinematicState, advance_state
from cohort_avn.security.tpd import TamperProofDevice, ViolationEntry

logger = logging.getLogger(__name__)

EMERGENCY_LANE = 0
DEFAULT_STOP_DECEL = 3.0
DEFAULT_RECIPIENTS = ("police", "highway_authority", "insurer")


@dataclass(frozen=True)
class TrajectorySample:
    time: float
    position: float
    velocity: float


@dataclass(frozen=True)
class StopTrajectory:
    samples: tuple[TrajectorySample, ...]
    halt_time: float
    halt_position: float
    halt_lane: int = EMERGENCY_LANE
    warning_lights: bool = True

    @property
    def final_velocity(self) -> float:
        return self.samples[-1].velocity


@dataclass(frozen=True)
class ExclusionReport:
    """V2X report telling the authorities where to find an excluded vehicle."""

    halt_position: float
    halt_lane: int
    certificate_id: str
    violations: tuple[ViolationEntry, ...]
    signature_pseudo: str | None
    recipients: tuple[str, ...] = DEFAULT_RECIPIENTS
    encrypted: bool = True

    def to_wire(self) -> dict:
        return {
            "class": "exclusion_report",
            "halt": {"position": round(self.halt_position, 3), "lane": self.halt_lane},
            "certificate": self.certificate_id,
            "violations": [
                [entry.timestamp, entry.predicate_id, entry.evidence_digest]
                for entry in self.violations
            ],
            "pseudo": self.signature_pseudo,
            "recipients": list(self.recipients),
            "encrypted": self.encrypted,
        }


@dataclass
class StopOutcome:
    trajectory: StopTrajectory
    report: ExclusionReport
    remaining_cohorts: list[Cohort] = field(default_factory=list)


def stop_trajectory(
    state: KinematicState, stop_decel: float = DEFAULT_STOP_DECEL, dt: float = 0.01
) -> StopTrajectory:
    if stop_decel <= 0:
        raise ConfigurationError("stop_decel must be positive")
    samples = [TrajectorySample(0.0, state.position, state.velocity)]
    current = state
    t = 0.0
    while current.velocity > 0:
        current = advance_state(current, -stop_decel, dt)
        t += dt
        samples.append(TrajectorySample(t, current.position, current.velocity))
    return StopTrajectory(
        samples=tuple(samples),
        halt_time=state.velocity / stop_decel,
        halt_position=state.position + state.velocity**2 / (2 * stop_decel),
    )


def execute_stop(
    state: KinematicState,
    sc_tpd: TamperProofDevice,
    nsc_tpd: TamperProofDevice,
    *,
    vehicle_id: int | None = None,
    cohort: Cohort | None = None,
    new_cohort_id: int | None = None,
    stop_decel: float = DEFAULT_STOP_DECEL,
    dt: float = 0.01,
    day: int = 0,
    recipients: tuple[str, ...] = DEFAULT_RECIPIENTS,
) -> StopOutcome:
    """Halt an offending vehicle and build its exclusion report.

    When ``cohort`` is given the vehicle leaves it first; the surviving part(s)
    are returned renumbered.
    """
    if not sc_tpd.violation_log:
        raise ProtocolError("Stop requested without a recorded violation")
    remaining: list[Cohort] = []
    if cohort is not None:
        if vehicle_id is None:
            raise ConfigurationError("vehicle_id is needed to leave a cohort")
        new_id = cohort.cohort_id + 1 if new_cohort_id is None else new_cohort_id
        remaining = leave(cohort, vehicle_id, new_id)

    trajectory = stop_trajectory(state, stop_decel, dt)
    try:
        pseudo = nsc_tpd.take_pseudo(day).pseudo_id
    except AuthUnavailableError:
        logger.warning(
            "NSC pool of %s is empty, exclusion report goes out unsigned",
            sc_tpd.certificate_id,
        )
        pseudo = None
    report = ExclusionReport(
        halt_position=trajectory.halt_position,
        halt_lane=trajectory.halt_lane,
        certificate_id=sc_tpd.certificate_id,
        violations=sc_tpd.violation_log,
        signature_pseudo=pseudo,
        recipients=tuple(recipients),
    )
    logger.info(
        "Stop of %s: halt after %.3f s at %.3f m",
        sc_tpd.certificate_id,
        trajectory.halt_time,
        trajectory.halt_position,
    )
    return StopOutcome(trajectory, report, remaining)
