"""Vehicles as mesa agents: kinematics, tamper-proof devices and N2N state."""

import logging
from dataclasses import dataclass, replace
from enum import StrEnum

from mesa import Agent

from cohort_avn.cells import VehicleView
from cohort_avn.kinematics import KinematicState, advance_state
from cohort_avn.messaging.acceptance import AcceptanceState
from cohort_avn.messaging.message import HopKind
from cohort_avn.messaging.relay import LongitudinalRelay
from cohort_avn.naming import Name
from cohort_avn.security.attacks import AttackBehaviour
from cohort_avn.security.exclusion import EMERGENCY_LANE
from cohort_avn.security.predicates import PredicateEngine
from cohort_avn.security.tpd import TamperProofDevice
from cohort_avn.sim.events import EventCode

logger = logging.getLogger(__name__)


class DriveMode(StrEnum):
    DRIVING = "driving"
    STOPPING = "stopping"
    HALTED = "halted"


@dataclass(frozen=True)
class LateralDuty:
    """One lateral copy this vehicle owes the origin's designated receivers."""

    origin: Name
    origin_frame: int
    payload: str
    designated: tuple[int, ...]
    hop: HopKind = HopKind.DIRECT
    frame: int = 0


class VehicleAgent(Agent):
    """
    A vehicle on the road segment.

    The agent holds what lives on board: the kinematic state, both TPDs, the
    SCR predicate engine and the N2N relay and acceptance state. Cohort
    membership is kept by the model, which also issues the motion command
    applied at each kinematic tick.

    Attributes:
        vehicle_id: scenario id; never put on the air.
        command: commanded acceleration for the next tick (m/s^2).
        heard: vehicle id -> last frame in which its slot burst was received.
        front_heard: last frame in which the predecessor's burst arrived.
        clock_skew_us: how far this vehicle's transmit clock lags UTC.
        silence: consecutive silent frames per sensed in-range neighbour.
    """

    def __init__(
        self,
        model,
        vehicle_id: int,
        state: KinematicState,
        aul: int,
        *,
        length: float = 4.5,
        stealth: bool = False,
        n2n: bool = True,
        sc_tpd: TamperProofDevice,
        nsc_tpd: TamperProofDevice,
        predicates: PredicateEngine,
        timeout_frames: int = 2,
        attack: AttackBehaviour | None = None,
        clock_skew_us: int = 0,
    ):
        super().__init__(model)
        self.vehicle_id = vehicle_id
        self.state = state
        self.aul = aul
        self.length = length
        self.stealth = stealth
        self.n2n = n2n
        self.sc_tpd = sc_tpd
        self.nsc_tpd = nsc_tpd
        self.predicates = predicates
        self.attack = attack
        self.clock_skew_us = clock_skew_us
        self.relay = LongitudinalRelay(
            AcceptanceState(1, state.lane, timeout_frames), attack
        )
        self.lateral = AcceptanceState(1, state.lane, timeout_frames)
        self.lateral_duties: list[LateralDuty] = []
        self.mode = DriveMode.DRIVING
        self.command = 0.0
        self.stop_decel = 0.0
        self.tx_rank: int | None = None
        self.heard: dict[int, int] = {}
        self.heard_any = -1
        self.front_heard = 0
        self.silence: dict[int, int] = {}
        self.silence_reported: set[int] = set()
        self.recorder = None

    @property
    def active(self) -> bool:
        """Still on the carriageway and on the N2N channels."""
        return self.mode is DriveMode.DRIVING

    @property
    def name(self) -> Name:
        return self.relay.name

    def view(self) -> VehicleView:
        return VehicleView(
            vehicle_id=self.vehicle_id,
            position=self.state.position,
            lane=self.state.lane,
            velocity=self.state.velocity,
            aul=self.aul,
            length=self.length,
        )

    def renumber(self, rank: int, lane: int, frame: int):
        self.relay.renumber(rank, lane)
        self.lateral.renumber(rank, lane)
        self.predicates.reset_history()
        self.front_heard = frame
        # pending lateral copies carry the old name
        self.lateral_duties.clear()

    def change_lane(self, lane: int):
        self.state = replace(self.state, lane=lane)

    def begin_stop(self, stop_decel: float):
        """SCR takeover: warning lights on, pull onto the emergency lane."""
        self.mode = DriveMode.STOPPING
        self.stop_decel = stop_decel
        self.state = replace(self.state, lane=EMERGENCY_LANE)
        self.lateral_duties.clear()
        self.relay.queue.clear()

    def advance(self, dt: float):
        if self.mode is DriveMode.HALTED:
            return
        accel = -self.stop_decel if self.mode is DriveMode.STOPPING else self.command
        self.state = advance_state(self.state, accel, dt)
        road = self.model.road
        if road.wrap:
            self.state = replace(self.state, position=road.normalize(self.state.position))
        if self.mode is DriveMode.STOPPING and self.state.velocity == 0:
            self.mode = DriveMode.HALTED
            logger.info("vehicle %s halted at %.2f m", self.vehicle_id, self.state.position)
            if self.recorder is not None:
                self.recorder.record(
                    EventCode.HALT,
                    self.vehicle_id,
                    {
                        "position": round(self.state.position, 3),
                        "lane": self.state.lane,
                    },
                    time_us=self.model.now_us + self.model.tick_us,
                )
