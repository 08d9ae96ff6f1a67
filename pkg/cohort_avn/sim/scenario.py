"""
Scenario documents.

A scenario is a versioned JSON object (``"schema": "cohort-avn/1"``) parsed by
the pydantic models below. Field-level problems are reported by pydantic in
one pass; once the document parses, every cross-field problem (overlapping
vehicles, unknown ids, adversary-model breaches...) is collected in a second
pass. Either pass raises ``ScenarioError`` with the full list of issues.
"""

import json
import math
import os
from importlib import resources
from pathlib import Path
from typing import Annotated, Any, Literal

from pydantic import BaseModel, ConfigDict, Field, ValidationError

from cohort_avn.analysis import CrowdsourceConfig, CrowdsourceMode, V2XClass
from cohort_avn.cells import RangeConfig
from cohort_avn.cohort.cohort import DEFAULT_N_MAX_BY_VELOCITY, CohortPolicy
from cohort_avn.errors import CohortAVNError, ScenarioError
from cohort_avn.kinematics import DEFAULT_HEADWAY_BY_AUL, GapPolicy, RoadSegment
from cohort_avn.mac import MacFrame
from cohort_avn.messaging.message import Direction
from cohort_avn.security.attacks import AttackSpec, adversary_issues, attack_issues
from cohort_avn.security.exclusion import DEFAULT_RECIPIENTS, DEFAULT_STOP_DECEL
from cohort_avn.security.tpd import DEFAULT_SC_POOL, DEFAULT_VERIFY_DELAY
from cohort_avn.sim.channel import LossModel

SCHEMA_VERSION = "cohort-avn/1"
ENV_SCENARIO_DIR = "COHORT_AVN_SCENARIO_DIR"


class _Params(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class RoadParams(_Params):
    lane_count: int = Field(default=3, ge=1)
    lane_width: float = Field(default=3.5, gt=0)
    length: float = Field(default=5000.0, gt=0)
    wrap: bool = False

    def build(self) -> RoadSegment:
        return RoadSegment(self.lane_count, self.lane_width, self.length, self.wrap)


class RangeParams(_Params):
    n2n_range: float = Field(default=30.0, gt=0)
    sc_v2v_range: float = Field(default=60.0, gt=0)
    cell_window: float | None = Field(default=None, gt=0)
    position_noise: float = Field(default=0.0, ge=0)

    def build(self) -> RangeConfig:
        return RangeConfig(self.n2n_range, self.sc_v2v_range, self.cell_window)


class GapParams(_Params):
    brake_decel: float = Field(default=8.0, gt=0)
    reaction_time: float = Field(default=0.5, ge=0)
    headway_by_aul: dict[int, float] | None = None
    min_gap_floor: float = Field(default=2.0, gt=0)

    def build(self) -> GapPolicy:
        return GapPolicy(
            brake_decel=self.brake_decel,
            reaction_time=self.reaction_time,
            headway_by_aul=dict(self.headway_by_aul or DEFAULT_HEADWAY_BY_AUL),
            min_gap_floor=self.min_gap_floor,
        )


class SizeRow(_Params):
    """One row of the n_max table; ``up_to: null`` is the unbounded last row."""

    up_to: float | None
    n_max: int = Field(ge=1)


def _default_rows() -> list[SizeRow]:
    return [
        SizeRow(up_to=None if math.isinf(bound) else bound, n_max=size)
        for bound, size in DEFAULT_N_MAX_BY_VELOCITY
    ]


class CohortPolicyParams(_Params):
    n_max_by_velocity: list[SizeRow] = Field(default_factory=_default_rows)
    sl: int = Field(default=3, ge=0, le=5)
    hl: int = Field(default=5, ge=0, le=5)
    homogeneous: bool = False
    link_failure_frames: int = Field(default=3, ge=1)

    def build(self) -> CohortPolicy:
        table = tuple(
            (math.inf if row.up_to is None else row.up_to, row.n_max)
            for row in self.n_max_by_velocity
        )
        return CohortPolicy(
            table, self.sl, self.hl, self.homogeneous, self.link_failure_frames
        )


class MacParams(_Params):
    slot_duration: float = Field(default=0.001, gt=0)
    slots_per_frame: int = Field(default=24, ge=1)
    tx_time: float = Field(default=0.0002, gt=0)
    longitudinal_offset: float = Field(default=0.0, ge=0)
    lateral_offset: float = Field(default=0.0, ge=0)
    epoch: float = 0.0
    # bound of each vehicle's transmit clock lag behind UTC, in seconds
    clock_skew: float = Field(default=0.0, ge=0)

    def build(self) -> MacFrame:
        return MacFrame(**self.model_dump(exclude={"clock_skew"}))


class MessagingParams(_Params):
    timeout_frames: int = Field(default=2, ge=1)


class SecurityParams(_Params):
    verify_delay: float = Field(default=DEFAULT_VERIFY_DELAY, ge=0)
    stop_decel: float = Field(default=DEFAULT_STOP_DECEL, gt=0)
    silence_frames: int = Field(default=3, ge=1)
    min_separation: float | None = Field(default=None, gt=0)
    day: int = Field(default=0, ge=0)
    recipients: list[str] = Field(default_factory=lambda: list(DEFAULT_RECIPIENTS))


class LinkLoss(_Params):
    sender: int
    receiver: int
    probability: float = Field(ge=0, le=1)


class LossParams(_Params):
    probability: float = Field(default=0.0, ge=0, le=1)
    overrides: list[LinkLoss] = Field(default_factory=list)

    def build(self) -> LossModel:
        return LossModel(
            self.probability,
            {(o.sender, o.receiver): o.probability for o in self.overrides},
        )


class CrowdsourceParams(_Params):
    enabled: bool = False
    mode: CrowdsourceMode = CrowdsourceMode.DETERMINISTIC
    p: float | None = Field(default=None, gt=0, le=1)
    period: float = Field(default=1.0, gt=0)

    def build(self) -> CrowdsourceConfig:
        return CrowdsourceConfig(self.mode, self.p)


class CohortSpec(_Params):
    id: int = Field(ge=0)
    lane: int
    members: list[int] = Field(min_length=1)
    velocity: float | None = Field(default=None, ge=0)
    sl: int | None = Field(default=None, ge=0, le=5)
    hl: int | None = Field(default=None, ge=0, le=5)


class VehicleSpec(_Params):
    id: int = Field(ge=0)
    position: float
    lane: int
    velocity: float = Field(default=25.0, ge=0)
    aul: int = Field(default=4, ge=0, le=5)
    length: float = Field(default=4.5, gt=0)
    stealth: bool = False
    sc_pool: int = Field(default=DEFAULT_SC_POOL, ge=0)
    nsc_pool: int = Field(default=100, ge=0)
    n2n: bool = True


class _Scripted(_Params):
    time: float = Field(ge=0)


class JoinEvent(_Scripted):
    type: Literal["join"] = "join"
    vehicle: int
    cohort: int
    kind: Literal["lg", "lt"] = "lg"
    gap: int | None = Field(default=None, ge=0)
    forged: bool = False


class MessageEvent(_Scripted):
    type: Literal["message"] = "message"
    vehicle: int
    payload: str
    direction: Direction = Direction.TAILWARD


class LateralEvent(_Scripted):
    type: Literal["lateral"] = "lateral"
    vehicle: int
    payload: str


class LeaveEvent(_Scripted):
    type: Literal["leave"] = "leave"
    vehicle: int


class VelocityEvent(_Scripted):
    type: Literal["velocity"] = "velocity"
    cohort: int
    velocity: float = Field(ge=0)


class V2XEvent(_Scripted):
    type: Literal["v2x"] = "v2x"
    vehicle: int
    msg_class: V2XClass
    body: dict[str, Any] = Field(default_factory=dict)


ScriptedEvent = Annotated[
    JoinEvent | MessageEvent | LateralEvent | LeaveEvent | VelocityEvent | V2XEvent,
    Field(discriminator="type"),
]


class Scenario(_Params):
    model_config = ConfigDict(extra="forbid", frozen=True, populate_by_name=True)

    schema_version: Literal["cohort-avn/1"] = Field(
        default=SCHEMA_VERSION, alias="schema"
    )
    name: str
    description: str = ""
    seed: int = 0
    duration: float = Field(gt=0)
    dt: float = Field(default=0.01, gt=0)
    road: RoadParams = Field(default_factory=RoadParams)
    ranges: RangeParams = Field(default_factory=RangeParams)
    gap_policy: GapParams = Field(default_factory=GapParams)
    cohort_policy: CohortPolicyParams = Field(default_factory=CohortPolicyParams)
    mac: MacParams = Field(default_factory=MacParams)
    messaging: MessagingParams = Field(default_factory=MessagingParams)
    security: SecurityParams = Field(default_factory=SecurityParams)
    loss: LossParams = Field(default_factory=LossParams)
    crowdsource: CrowdsourceParams = Field(default_factory=CrowdsourceParams)
    cohorts: list[CohortSpec] = Field(default_factory=list)
    vehicles: list[VehicleSpec] = Field(min_length=1)
    events: list[ScriptedEvent] = Field(default_factory=list)
    attacks: list[AttackSpec] = Field(default_factory=list)
    checked: bool = False

    def with_seed(self, seed: int) -> "Scenario":
        return self.model_copy(update={"seed": seed})

    def attack_free(self) -> "Scenario":
        return self.model_copy(
            update={"attacks": [], "name": f"{self.name}-attack-free"}
        )

    def vehicle(self, vehicle_id: int) -> VehicleSpec:
        for spec in self.vehicles:
            if spec.id == vehicle_id:
                return spec
        raise KeyError(vehicle_id)

    def to_json(self) -> str:
        return self.model_dump_json(by_alias=True, indent=2)


def semantic_issues(scenario: Scenario) -> list[str]:
    """Every cross-field problem of a parsed scenario."""
    issues: list[str] = []
    built = {}
    for label, params in (
        ("road", scenario.road),
        ("ranges", scenario.ranges),
        ("gap_policy", scenario.gap_policy),
        ("cohort_policy", scenario.cohort_policy),
        ("mac", scenario.mac),
        ("crowdsource", scenario.crowdsource),
    ):
        try:
            built[label] = params.build()
        except CohortAVNError as exc:
            issues.append(f"{label}: {exc}")
    road: RoadSegment | None = built.get("road")
    policy: CohortPolicy | None = built.get("cohort_policy")
    frame: MacFrame | None = built.get("mac")

    vehicles: dict[int, VehicleSpec] = {}
    for spec in scenario.vehicles:
        if spec.id in vehicles:
            issues.append(f"vehicles: duplicate id {spec.id}")
        vehicles[spec.id] = spec
        if road is not None and not road.has_lane(spec.lane):
            issues.append(f"vehicle {spec.id}: lane {spec.lane} is not on the road")

    by_lane: dict[int, list[VehicleSpec]] = {}
    for spec in vehicles.values():
        by_lane.setdefault(spec.lane, []).append(spec)
    for lane, specs in sorted(by_lane.items()):
        specs.sort(key=lambda s: (s.position, s.id))
        for rear, front in zip(specs, specs[1:]):
            if front.position - front.length < rear.position:
                issues.append(
                    f"vehicles {rear.id} and {front.id} overlap in lane {lane}"
                )

    placed: dict[int, int] = {}
    cohort_ids = set()
    for cohort in scenario.cohorts:
        tag = f"cohort {cohort.id}"
        if cohort.id in cohort_ids:
            issues.append(f"cohorts: duplicate id {cohort.id}")
        cohort_ids.add(cohort.id)
        members = [vehicles.get(vid) for vid in cohort.members]
        for vid, member in zip(cohort.members, members):
            if member is None:
                issues.append(f"{tag}: unknown member {vid}")
            elif vid in placed:
                issues.append(f"{tag}: vehicle {vid} already in cohort {placed[vid]}")
            else:
                placed[vid] = cohort.id
                if member.lane != cohort.lane:
                    issues.append(f"{tag}: member {vid} is not in lane {cohort.lane}")
                if not member.n2n and len(cohort.members) > 1:
                    issues.append(f"{tag}: member {vid} has no N2N radio")
        known = [m for m in members if m is not None]
        for front, rear in zip(known, known[1:]):
            if front.position <= rear.position:
                issues.append(f"{tag}: members {front.id} and {rear.id} out of order")
        if policy is not None and known:
            velocity = known[0].velocity if cohort.velocity is None else cohort.velocity
            if len(known) > policy.n_max(velocity):
                issues.append(f"{tag}: {len(known)} members exceed n_max at {velocity}")
            sl = policy.sl if cohort.sl is None else cohort.sl
            hl = policy.hl if cohort.hl is None else cohort.hl
            if sl > hl:
                issues.append(f"{tag}: sl {sl} exceeds hl {hl}")
            for member in known:
                if not sl <= member.aul <= hl:
                    issues.append(f"{tag}: member {member.id} aul outside [{sl}, {hl}]")
            if policy.homogeneous and len({m.aul for m in known}) > 1:
                issues.append(f"{tag}: homogeneous cohort with mixed levels")
        if frame is not None and len(cohort.members) > frame.slots_per_frame:
            issues.append(f"{tag}: more members than slots per frame")

    for index, event in enumerate(scenario.events):
        tag = f"events[{index}] ({event.type})"
        if event.time >= scenario.duration:
            issues.append(f"{tag}: time {event.time} is not before the end of the run")
        if hasattr(event, "vehicle") and event.vehicle not in vehicles:
            issues.append(f"{tag}: unknown vehicle {event.vehicle}")
        if hasattr(event, "cohort") and event.cohort not in cohort_ids:
            issues.append(f"{tag}: unknown cohort {event.cohort}")
        if isinstance(event, JoinEvent) and event.kind == "lt" and event.gap is None:
            issues.append(f"{tag}: a lateral join needs the insertion gap")

    if policy is not None and frame is not None:
        largest = max(size for _, size in policy.n_max_by_velocity)
        if largest > frame.slots_per_frame:
            issues.append(
                f"cohort_policy: n_max {largest} exceeds {frame.slots_per_frame} slots per frame"
            )

    attackers: set[int] = set()
    for spec in scenario.attacks:
        if spec.attacker in attackers:
            issues.append(f"attacks: vehicle {spec.attacker} carries two attacks")
        attackers.add(spec.attacker)
    for spec in scenario.attacks:
        issues.extend(attack_issues(scenario, spec))
    issues.extend(adversary_issues(scenario, list(scenario.attacks)))
    return issues


def _pydantic_issues(exc: ValidationError) -> list[str]:
    return [
        f"{'.'.join(str(part) for part in error['loc']) or 'scenario'}: {error['msg']}"
        for error in exc.errors()
    ]


def validate_scenario(data: dict | Scenario) -> Scenario:
    if isinstance(data, Scenario):
        scenario = data
    else:
        try:
            scenario = Scenario.model_validate(data)
        except ValidationError as exc:
            raise ScenarioError(_pydantic_issues(exc)) from exc
    issues = semantic_issues(scenario)
    if issues:
        raise ScenarioError(issues)
    return scenario


def bundled_scenarios() -> list[str]:
    folder = resources.files("cohort_avn") / "scenarios"
    return sorted(
        entry.name.removesuffix(".json")
        for entry in folder.iterdir()
        if entry.name.endswith(".json")
    )


def _candidates(name: str) -> list[Any]:
    found: list[Any] = [Path(name)]
    override = os.environ.get(ENV_SCENARIO_DIR)
    if override:
        found += [Path(override) / name, Path(override) / f"{name}.json"]
    bundled = resources.files("cohort_avn") / "scenarios"
    found += [bundled / name, bundled / f"{name}.json"]
    return found


def load_scenario(name_or_path: str | Path) -> Scenario:
    """Load and validate a scenario by path, by name in the override directory,
    or by bundled name, in that order."""
    for candidate in _candidates(str(name_or_path)):
        if candidate.is_file():
            try:
                data = json.loads(candidate.read_text())
            except json.JSONDecodeError as exc:
                raise ScenarioError([f"{candidate}: invalid JSON ({exc})"]) from exc
            return validate_scenario(data)
    raise ScenarioError([f"unknown scenario {name_or_path!s}"])
