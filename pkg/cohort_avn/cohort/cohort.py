"""
Cohorts: ranked single-lane formations with an automation-level window.

A cohort stores its members head to tail, so rank r is ``members[r - 1]`` and
ranks are consecutive by construction. Renumbering is a list edit committed
in a single call.
"""

import math
from dataclasses import dataclass, field
from enum import StrEnum

from cohort_avn.cells import WorldSnapshot
from cohort_avn.errors import ConfigurationError, UnknownVehicleError
from cohort_avn.kinematics import AUTOMATION_LEVELS
from cohort_avn.naming import Name

DEFAULT_N_MAX_BY_VELOCITY: tuple[tuple[float, int], ...] = (
    (10.0, 24),
    (20.0, 18),
    (30.0, 12),
    (math.inf, 8),
)


def _check_aul(aul: int):
    if aul not in AUTOMATION_LEVELS:
        raise ConfigurationError(f"automation level must be in 0..5, got {aul}")


@dataclass(frozen=True)
class CohortPolicy:
    """Size table and default automation window for new cohorts.

    ``n_max_by_velocity`` is a step table of (velocity upper bound, max size)
    rows in increasing velocity order; the last bound must be infinite.
    """

    n_max_by_velocity: tuple[tuple[float, int], ...] = DEFAULT_N_MAX_BY_VELOCITY
    sl: int = 3
    hl: int = 5
    homogeneous: bool = False
    link_failure_frames: int = 3

    def __post_init__(self):
        _check_aul(self.sl)
        _check_aul(self.hl)
        if self.sl > self.hl:
            raise ConfigurationError("sl must not exceed hl")
        table = self.n_max_by_velocity
        if not table or table[-1][0] != math.inf:
            raise ConfigurationError("n_max table must end with an unbounded row")
        bounds = [bound for bound, _ in table]
        sizes = [size for _, size in table]
        if bounds != sorted(bounds) or len(set(bounds)) != len(bounds):
            raise ConfigurationError("n_max table bounds must strictly increase")
        if any(later > earlier for earlier, later in zip(sizes, sizes[1:])):
            raise ConfigurationError("n_max must be nonincreasing in velocity")
        if min(sizes) < 1:
            raise ConfigurationError("n_max must be at least 1")
        if self.link_failure_frames < 1:
            raise ConfigurationError("link_failure_frames must be at least 1")

    def n_max(self, velocity: float) -> int:
        for bound, size in self.n_max_by_velocity:
            if velocity <= bound:
                return size
        return self.n_max_by_velocity[-1][1]

    def bounds_for(self, aul: int) -> tuple[int, int]:
        """[SL, HL] of a cohort founded by a vehicle of level ``aul``."""
        _check_aul(aul)
        if self.homogeneous:
            return aul, aul
        return min(self.sl, aul), max(self.hl, aul)


@dataclass(frozen=True)
class CommonKnowledge:
    n: int
    velocity: float
    sl: int
    hl: int

    def to_payload(self) -> str:
        return f"ck:n={self.n};v={self.velocity:.3f};sl={self.sl};hl={self.hl}"


@dataclass(frozen=True)
class Membership:
    vehicle_id: int
    rank: int
    cohort_id: int
    name: Name


class RejectReason(StrEnum):
    LEVEL = "level"
    FULL = "full"
    AUTH = "auth"
    AUTH_UNAVAILABLE = "auth_unavailable"
    RANGE = "range"
    GAP = "gap"
    MEMBER = "member"
    POSITION = "position"


@dataclass(frozen=True)
class JoinDecision:
    accepted: bool
    reason: RejectReason | None = None
    rank: int | None = None
    verifiers: tuple[int, ...] = ()
    delay: float = 0.0
    replay: bool = False

    @classmethod
    def reject(cls, reason: RejectReason, **kwargs) -> "JoinDecision":
        return cls(False, reason, **kwargs)


@dataclass
class Cohort:
    cohort_id: int
    lane: int
    members: list[int]
    velocity: float
    sl: int
    hl: int
    auls: dict[int, int] = field(default_factory=dict)

    @classmethod
    def singleton(
        cls,
        cohort_id: int,
        vehicle_id: int,
        lane: int,
        velocity: float,
        aul: int,
        policy: CohortPolicy,
    ) -> "Cohort":
        sl, hl = policy.bounds_for(aul)
        return cls(cohort_id, lane, [vehicle_id], velocity, sl, hl, {vehicle_id: aul})

    @property
    def n(self) -> int:
        return len(self.members)

    @property
    def head(self) -> int:
        return self.members[0]

    @property
    def tail(self) -> int:
        return self.members[-1]

    @property
    def common_knowledge(self) -> CommonKnowledge:
        return CommonKnowledge(self.n, self.velocity, self.sl, self.hl)

    def __contains__(self, vehicle_id: int) -> bool:
        return vehicle_id in self.auls

    def rank_of(self, vehicle_id: int) -> int:
        if vehicle_id not in self.auls:
            raise UnknownVehicleError(vehicle_id)
        return self.members.index(vehicle_id) + 1

    def member_at(self, rank: int) -> int:
        if not 1 <= rank <= self.n:
            raise ConfigurationError(f"rank {rank} is not in 1..{self.n}")
        return self.members[rank - 1]

    def name_of(self, vehicle_id: int) -> Name:
        return Name(self.rank_of(vehicle_id), self.lane)

    def memberships(self) -> list[Membership]:
        return [
            Membership(vid, rank, self.cohort_id, Name(rank, self.lane))
            for rank, vid in enumerate(self.members, start=1)
        ]

    def check_invariants(
        self, policy: CohortPolicy, snapshot: WorldSnapshot | None = None
    ) -> list[str]:
        """Every broken cohort invariant, as readable strings."""
        problems = []
        tag = f"cohort {self.cohort_id}"
        if self.n < 1:
            problems.append(f"{tag} is empty")
        if len(set(self.members)) != self.n or set(self.members) != set(self.auls):
            problems.append(f"{tag} member list and levels disagree")
        if self.sl > self.hl:
            problems.append(f"{tag} has SL {self.sl} > HL {self.hl}")
        for vid, aul in self.auls.items():
            if not self.sl <= aul <= self.hl:
                problems.append(f"{tag} member {vid} aul {aul} outside [SL, HL]")
        if policy.homogeneous and len(set(self.auls.values())) > 1:
            problems.append(f"{tag} is not homogeneous")
        if self.n > policy.n_max(self.velocity):
            problems.append(f"{tag} size {self.n} exceeds n_max at {self.velocity}")
        if snapshot is not None:
            views = [snapshot.get(vid) for vid in self.members]
            for front, rear in zip(views, views[1:]):
                if snapshot.road.delta(rear.position, front.position) <= 0:
                    problems.append(
                        f"{tag} rank order broken between {front.vehicle_id} "
                        f"and {rear.vehicle_id}"
                    )
            for view in views:
                if view.lane != self.lane:
                    problems.append(f"{tag} member {view.vehicle_id} off lane")
        return problems


def admission_check(aul: int, cohort: Cohort, policy: CohortPolicy) -> JoinDecision:
    """Level window first, then room at the cohort's current velocity."""
    _check_aul(aul)
    if not cohort.sl <= aul <= cohort.hl:
        return JoinDecision.reject(RejectReason.LEVEL)
    if cohort.n >= policy.n_max(cohort.velocity):
        return JoinDecision.reject(RejectReason.FULL)
    return JoinDecision(True)
