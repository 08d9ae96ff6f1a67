"""
Close (N2N) and distant (V2X) cyberattacks.

An ``AttackSpec`` names the attacker and what it does; ``inject_attack`` adds
it to a scenario after checking the adversary model. At run time each spec is
turned into an ``AttackBehaviour`` that the harness consults at the
attacker's slots.
"""

from __future__ import annotations

from collections.abc import Callable
from dataclasses import dataclass, replace
from enum import StrEnum
from typing import Any

from pydantic import BaseModel, ConfigDict, Field

from cohort_avn.errors import ConfigurationError
from cohort_avn.messaging.message import HopKind
from cohort_avn.messaging.relay import QueuedCopy, RelayBehaviour

ADVERSARY_WINDOW = 3


class AttackKind(StrEnum):
    MASQUERADE = "masquerade"
    SYBIL = "sybil"
    FORGE = "forge"
    SUPPRESS = "suppress"
    FALSE_INJECT = "false_inject"
    V2X_TAMPER = "v2x_tamper"


CLOSE_ATTACKS = frozenset(AttackKind) - {AttackKind.V2X_TAMPER}


class AttackSpec(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    kind: AttackKind
    attacker: int
    victim_rank: int | None = Field(default=None, ge=1)
    payload_tag: str | None = None
    bogus_payload: str = "clear lane"
    start_frame: int = Field(default=0, ge=0)
    end_frame: int | None = Field(default=None, ge=0)
    override: bool = False

    def active(self, frame: int) -> bool:
        if frame < self.start_frame:
            return False
        return self.end_frame is None or frame <= self.end_frame

    def targets(self, payload: str) -> bool:
        return self.payload_tag is None or self.payload_tag in payload


@dataclass(frozen=True)
class RogueSend:
    """A transmission at ``slot_rank``'s slot under the name of ``claimed_rank``."""

    slot_rank: int
    claimed_rank: int


_ATTACK_BEHAVIOURS: dict[AttackKind, type[AttackBehaviour]] = {}


def attack_behaviour(kind: AttackKind) -> Callable[[type], type]:
    def decorator(cls: type) -> type:
        _ATTACK_BEHAVIOURS[kind] = cls
        return cls

    return decorator


class AttackBehaviour(RelayBehaviour):
    """Honest by default; each attack kind overrides the hooks it needs."""

    def __init__(self, spec: AttackSpec):
        self.spec = spec

    def rogue_sends(self, frame: int, rank: int, cohort_size: int) -> list[RogueSend]:
        return []

    def lateral_injection(self, frame: int) -> str | None:
        return None

    def tampers_v2x(self, frame: int) -> bool:
        return False


@attack_behaviour(AttackKind.MASQUERADE)
class Masquerade(AttackBehaviour):
    def rogue_sends(self, frame, rank, cohort_size):
        victim = self.spec.victim_rank
        if not self.spec.active(frame) or victim is None or victim > cohort_size:
            return []
        return [RogueSend(slot_rank=victim, claimed_rank=victim)]


@attack_behaviour(AttackKind.SYBIL)
class Sybil(AttackBehaviour):
    """Two made-up members behind the tail, or a victim's name plus one."""

    def rogue_sends(self, frame, rank, cohort_size):
        if not self.spec.active(frame):
            return []
        victim = self.spec.victim_rank
        if victim is not None and victim != rank and victim <= cohort_size:
            names = (victim, cohort_size + 1)
        else:
            names = (cohort_size + 1, cohort_size + 2)
        return [RogueSend(slot_rank=r, claimed_rank=r) for r in names]


@attack_behaviour(AttackKind.FORGE)
class Forge(AttackBehaviour):
    def outgoing(self, copy: QueuedCopy, frame: int) -> QueuedCopy | None:
        if (
            copy.hop is HopKind.RELAYED
            and self.spec.active(frame)
            and self.spec.targets(copy.payload)
        ):
            return replace(copy, payload=self.spec.bogus_payload)
        return copy


@attack_behaviour(AttackKind.SUPPRESS)
class Suppress(AttackBehaviour):
    def outgoing(self, copy: QueuedCopy, frame: int) -> QueuedCopy | None:
        if (
            copy.hop is not HopKind.DIRECT
            and self.spec.active(frame)
            and self.spec.targets(copy.payload)
        ):
            return None
        return copy


@attack_behaviour(AttackKind.FALSE_INJECT)
class FalseInject(AttackBehaviour):
    def lateral_injection(self, frame):
        return self.spec.bogus_payload if frame == self.spec.start_frame else None


@attack_behaviour(AttackKind.V2X_TAMPER)
class V2XTamper(AttackBehaviour):
    def tampers_v2x(self, frame):
        return frame == self.spec.start_frame


def behaviour_for(spec: AttackSpec) -> AttackBehaviour:
    return _ATTACK_BEHAVIOURS[spec.kind](spec)


def _cohort_ranks(scenario: Any) -> dict[int, tuple[int, int, int]]:
    """vehicle id -> (cohort id, rank, cohort size), singletons included."""
    placed = {}
    for cohort in scenario.cohorts:
        for rank, vid in enumerate(cohort.members, start=1):
            placed[vid] = (cohort.id, rank, len(cohort.members))
    for vehicle in scenario.vehicles:
        placed.setdefault(vehicle.id, (-vehicle.id, 1, 1))
    return placed


def adversary_issues(scenario: Any, specs: list[AttackSpec]) -> list[str]:
    """Breaches of the at-most-one-attacker-per-3-consecutive-ranks model."""
    placed = _cohort_ranks(scenario)
    by_cohort: dict[int, set[int]] = {}
    for spec in specs:
        if spec.override or spec.kind not in CLOSE_ATTACKS:
            continue
        if spec.attacker not in placed:
            continue
        cohort_id, rank, size = placed[spec.attacker]
        if size >= ADVERSARY_WINDOW:
            by_cohort.setdefault(cohort_id, set()).add(rank)
    issues = []
    for cohort_id, ranks in sorted(by_cohort.items()):
        ordered = sorted(ranks)
        for first, second in zip(ordered, ordered[1:]):
            if second - first < ADVERSARY_WINDOW:
                issues.append(
                    f"cohort {cohort_id}: attackers at ranks {first} and {second} "
                    f"share a group of {ADVERSARY_WINDOW} consecutive members"
                )
    return issues


def attack_issues(scenario: Any, spec: AttackSpec) -> list[str]:
    placed = _cohort_ranks(scenario)
    if spec.attacker not in placed:
        return [f"attack {spec.kind}: attacker {spec.attacker} is not a vehicle"]
    _, rank, size = placed[spec.attacker]
    issues = []
    if spec.kind is AttackKind.MASQUERADE:
        if spec.victim_rank is None:
            issues.append("masquerade attack needs a victim_rank")
        elif spec.victim_rank > size or spec.victim_rank == rank:
            issues.append(
                f"masquerade victim rank {spec.victim_rank} is not another member "
                f"of the attacker's cohort of {size}"
            )
    elif spec.kind is AttackKind.SYBIL and spec.victim_rank is not None:
        if spec.victim_rank > size:
            issues.append(f"sybil victim rank {spec.victim_rank} is not a member")
    if spec.end_frame is not None and spec.end_frame < spec.start_frame:
        issues.append("attack end_frame precedes start_frame")
    return issues


def inject_attack(scenario: Any, spec: AttackSpec | dict) -> Any:
    """Return a copy of ``scenario`` with ``spec`` added to its attack schedule."""
    if isinstance(spec, dict):
        spec = AttackSpec.model_validate(spec)
    attacks = [*scenario.attacks, spec]
    issues = attack_issues(scenario, spec) + adversary_issues(scenario, attacks)
    if issues:
        raise ConfigurationError("; ".join(issues))
    return scenario.model_copy(update={"attacks": attacks})
