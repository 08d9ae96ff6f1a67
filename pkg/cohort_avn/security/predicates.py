from __future__ import annotations

import logging
import threading
import weakref
from collections.abc import Callable
from dataclasses import dataclass, field
from typing import Any

from terminal_style import style

from cohort_avn.mac import MacFrame, slot_owner_at, to_us
from cohort_avn.naming import Channel
from cohort_avn.security.tpd import (
    Provenance,
    TamperProofDevice,
    ViolationEntry,
    evidence_digest,
)

logger = logging.getLogger(__name__)

DEFAULT_SILENCE_FRAMES = 3

_GLOBAL_PREDICATE_REGISTRY: dict[str, Callable] = {}
_PREDICATE_CALLBACKS: list[Callable[[Callable], None]] = []
# guards the registry, the callbacks and PredicateEngine.instances
_REGISTRY_LOCK = threading.RLock()


def add_predicate_callback(callback: Callable[[Callable], None]):
    """Add a callback to be called when a new predicate is registered"""
    with _REGISTRY_LOCK:
        _PREDICATE_CALLBACKS.append(callback)


@dataclass(frozen=True)
class PredicateSpec:
    predicate_id: str
    description: str
    stops: bool


@dataclass(frozen=True)
class SendActivation:
    """One of this vehicle's own LgSend/LtSend activations."""

    channel: Channel
    time: float
    rank: int


@dataclass(frozen=True)
class SilenceReport:
    """SCR sensors see a cell member in N2N range that never occupies a slot."""

    time: float
    neighbor: str
    silent_frames: int
    channel_active: bool = True


LocalEvent = SendActivation | SilenceReport


@dataclass
class PredicateContext:
    frame: MacFrame
    min_separation: float
    silence_frames: int = DEFAULT_SILENCE_FRAMES
    last_send_us: dict[Channel, int] = field(default_factory=dict)


@dataclass(frozen=True)
class Violation:
    predicate_id: str
    time: float
    evidence: dict[str, Any]
    stops: bool


def predicate(predicate_id: str, *, stops: bool = True, manager=None):
    """
    Register a check over local events under ``predicate_id``.

    A predicate takes (event, context) and returns an evidence dict when it is
    violated, None otherwise. Predicates with ``stops`` set trigger a Stop of
    the vehicle whose TPD recorded the violation.
    """

    def decorator(func: Callable):
        summary = (func.__doc__ or "").strip().splitlines()
        func.__predicate__ = PredicateSpec(
            predicate_id, summary[0] if summary else "", stops
        )
        if manager is not None:
            manager.register(func)
        else:
            with _REGISTRY_LOCK:
                _GLOBAL_PREDICATE_REGISTRY[predicate_id] = func
                for callback in list(_PREDICATE_CALLBACKS):
                    callback(func)
        return func

    return decorator


@predicate("P1")
def min_separation(event: LocalEvent, context: PredicateContext) -> dict | None:
    """Two consecutive sends on one channel closer than the minimum separation."""
    if not isinstance(event, SendActivation):
        return None
    now = to_us(event.time)
    previous = context.last_send_us.get(event.channel)
    if previous is None:
        return None
    gap = now - previous
    if gap < to_us(context.min_separation):
        return {"channel": event.channel.value, "gap_us": gap}
    return None


@predicate("P2")
def own_slot_only(event: LocalEvent, context: PredicateContext) -> dict | None:
    """A send outside the slot owned by the vehicle's rank."""
    if not isinstance(event, SendActivation):
        return None
    owner = slot_owner_at(event.time, event.channel, context.frame)
    if owner != event.rank:
        return {"channel": event.channel.value, "rank": event.rank, "slot": owner}
    return None


@predicate("P3", stops=False)
def silent_neighbor(event: LocalEvent, context: PredicateContext) -> dict | None:
    """A sensed cell member stays N2N-silent while the channel is active."""
    if not isinstance(event, SilenceReport):
        return None
    if event.channel_active and event.silent_frames >= context.silence_frames:
        return {"neighbor": event.neighbor, "silent_frames": event.silent_frames}
    return None


class PredicateEngine:
    """
    Table-driven evaluation of exclusion predicates for one vehicle.

    Attributes:
        predicates: {predicate_id: check}, seeded from every ``@predicate``
            registered so far plus ``extra_predicates``.
        context: per-vehicle state the checks read (last sends, thresholds).
    """

    instances: weakref.WeakSet[PredicateEngine] = weakref.WeakSet()

    def __init__(
        self,
        frame: MacFrame,
        min_separation: float | None = None,
        silence_frames: int = DEFAULT_SILENCE_FRAMES,
        extra_predicates: dict[str, Callable] | None = None,
    ):
        with _REGISTRY_LOCK:
            PredicateEngine.instances.add(self)
            predicates = dict(_GLOBAL_PREDICATE_REGISTRY)
        if extra_predicates:
            predicates.update(extra_predicates)
        self.predicates = predicates
        self.context = PredicateContext(
            frame=frame,
            min_separation=(
                frame.frame_duration if min_separation is None else min_separation
            ),
            silence_frames=silence_frames,
        )

    def register(self, fn: Callable):
        # swapped, not mutated, so a running check keeps its own table
        self.predicates = {**self.predicates, fn.__predicate__.predicate_id: fn}

    @classmethod
    def add_predicate_to_all(cls, fn: Callable):
        with _REGISTRY_LOCK:
            for instance in list(cls.instances):
                instance.register(fn)

    def spec(self, predicate_id: str) -> PredicateSpec:
        if predicate_id not in self.predicates:
            raise ValueError(style(f"Predicate '{predicate_id}' not found", color="red"))
        return self.predicates[predicate_id].__predicate__

    def reset_history(self):
        """Forget previous sends; called by the SCR side when the rank changes."""
        self.context.last_send_us.clear()

    def check(self, event: LocalEvent) -> list[Violation]:
        found = []
        predicates = self.predicates
        for predicate_id in sorted(predicates):
            evidence = predicates[predicate_id](event, self.context)
            if evidence is not None:
                found.append(
                    Violation(
                        predicate_id,
                        event.time,
                        evidence,
                        self.spec(predicate_id).stops,
                    )
                )
        if isinstance(event, SendActivation):
            self.context.last_send_us[event.channel] = to_us(event.time)
        return found


def evaluate_predicates(
    tpd: TamperProofDevice, event: LocalEvent, engine: PredicateEngine
) -> list[Violation]:
    """Run every predicate on ``event`` and append violations to the SC-TPD log."""
    violations = engine.check(event)
    for violation in violations:
        tpd.record_violation(
            ViolationEntry(
                timestamp=violation.time,
                predicate_id=violation.predicate_id,
                evidence_digest=evidence_digest(violation.evidence),
            ),
            origin=Provenance.SCR,
        )
        logger.info(
            "TPD %s recorded %s at %.6f",
            tpd.certificate_id,
            violation.predicate_id,
            violation.time,
        )
    return violations


add_predicate_callback(PredicateEngine.add_predicate_to_all)
