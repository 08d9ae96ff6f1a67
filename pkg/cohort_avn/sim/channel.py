"""
Lossy radio channel.

A copy reaches a receiver when the receiver is in range of the sender and an
independent Bernoulli draw says it was not lost. Draws are consumed in the
order pairs are given, one per in-range pair whose loss probability lies
strictly between 0 and 1, so a lossless or fully lossy link never touches
the random stream.
"""

import random
from collections.abc import Iterable, Mapping
from dataclasses import dataclass, field
from typing import Generic, TypeVar

from cohort_avn.cells import RangeConfig, RangeKind, WorldSnapshot, in_range
from cohort_avn.errors import ConfigurationError

T = TypeVar("T")


@dataclass(frozen=True)
class LossModel:
    probability: float = 0.0
    overrides: Mapping[tuple[int, int], float] = field(default_factory=dict)

    def __post_init__(self):
        for p in (self.probability, *self.overrides.values()):
            if not 0 <= p <= 1:
                raise ConfigurationError(f"loss probability {p} outside [0, 1]")

    def for_link(self, sender: int, receiver: int) -> float:
        return self.overrides.get((sender, receiver), self.probability)


@dataclass(frozen=True)
class Airborne(Generic[T]):
    """A copy of ``payload`` on its way from ``sender`` to ``receiver`` (vehicle ids)."""

    sender: int
    receiver: int
    payload: T


@dataclass
class ChannelOutcome(Generic[T]):
    delivered: list[Airborne[T]] = field(default_factory=list)
    lost: list[Airborne[T]] = field(default_factory=list)
    out_of_range: list[Airborne[T]] = field(default_factory=list)


def channel_deliver(
    copies: Iterable[Airborne[T]],
    snapshot: WorldSnapshot,
    loss: LossModel,
    rng: random.Random,
    ranges: RangeConfig,
    kind: RangeKind = RangeKind.N2N,
) -> ChannelOutcome[T]:
    outcome: ChannelOutcome[T] = ChannelOutcome()
    for copy in copies:
        if copy.receiver not in snapshot or not in_range(
            copy.sender, copy.receiver, kind, snapshot, ranges
        ):
            outcome.out_of_range.append(copy)
            continue
        p = loss.for_link(copy.sender, copy.receiver)
        if p >= 1 or (p > 0 and rng.random() < p):
            outcome.lost.append(copy)
        else:
            outcome.delivered.append(copy)
    return outcome
