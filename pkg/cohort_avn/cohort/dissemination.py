"""
Cohort-wide dissemination over the longitudinal N2N channel.

This is the frame-level driver used by the harness for common-knowledge
updates and by the analysis commands: every member runs a
``LongitudinalRelay`` and transmits at most once per frame in its own slot.
"""

import random
from collections.abc import Iterable
from dataclasses import dataclass, field

from cohort_avn.cohort.cohort import Cohort
from cohort_avn.errors import ConfigurationError
from cohort_avn.mac import MacFrame
from cohort_avn.messaging.acceptance import (
    DEFAULT_TIMEOUT_FRAMES,
    AcceptanceState,
    Flag,
    InboxEvent,
    is_addressed,
)
from cohort_avn.messaging.message import Direction, MessageKey
from cohort_avn.messaging.primitives import longitudinal_targets
from cohort_avn.messaging.relay import LongitudinalRelay, RelayBehaviour
from cohort_avn.naming import Channel


@dataclass
class DeliveryReport:
    n: int
    origin_rank: int
    direction: Direction
    frame_us: int
    origin_tx_us: int | None = None
    accept_time_us: dict[int, int] = field(default_factory=dict)
    accepted_payload: dict[int, str] = field(default_factory=dict)
    flags: list[tuple[int, Flag]] = field(default_factory=list)
    transmissions: int = 0
    delivered: int = 0
    lost: int = 0

    @property
    def addressed(self) -> list[int]:
        return [
            rank
            for rank in range(1, self.n + 1)
            if self.n > 1 and is_addressed(self.direction, self.origin_rank, rank)
        ]

    @property
    def latency_frames(self) -> dict[int, int]:
        """Accept latency per rank, in whole frames after the origin's transmission."""
        if self.origin_tx_us is None:
            return {}
        return {
            rank: -(-(t - self.origin_tx_us) // self.frame_us)
            for rank, t in sorted(self.accept_time_us.items())
        }

    @property
    def max_latency(self) -> int:
        return max(self.latency_frames.values(), default=0)

    @property
    def complete(self) -> bool:
        return all(rank in self.accept_time_us for rank in self.addressed)


def disseminate(
    cohort: Cohort,
    origin_rank: int,
    payload: str,
    direction: Direction | str = Direction.BOTH,
    *,
    frame: MacFrame | None = None,
    lost_links: Iterable[tuple[int, int]] = (),
    loss_probability: float = 0.0,
    rng: random.Random | None = None,
    timeout_frames: int = DEFAULT_TIMEOUT_FRAMES,
    max_frames: int | None = None,
    behaviours: dict[int, RelayBehaviour] | None = None,
) -> DeliveryReport:
    """Spread ``payload`` from ``origin_rank`` and report who accepted it when.

    ``lost_links`` holds directed (sender rank, receiver rank) pairs whose
    copies never arrive. Random losses draw once per addressed copy, in order
    of frame, sender rank and receiver rank.
    """
    direction = Direction(direction)
    frame = frame or MacFrame()
    n = cohort.n
    if not 1 <= origin_rank <= n:
        raise ConfigurationError(f"origin rank {origin_rank} is not in 1..{n}")
    if not 0 <= loss_probability <= 1:
        raise ConfigurationError("loss_probability must lie in [0, 1]")
    report = DeliveryReport(n, origin_rank, direction, frame.frame_us)
    if n == 1:
        return report

    rng = rng or random.Random(0)
    lost = set(lost_links)
    behaviours = behaviours or {}
    relays = {
        rank: LongitudinalRelay(
            AcceptanceState(rank, cohort.lane, timeout_frames), behaviours.get(rank)
        )
        for rank in range(1, n + 1)
    }
    relays[origin_rank].originate(payload, direction, 0)
    origin_key: MessageKey | None = None
    max_frames = 2 * n + timeout_frames + 4 if max_frames is None else max_frames

    for f in range(max_frames):
        start = frame.frame_start_us(f)
        for rank, relay in relays.items():
            report.flags.extend((rank, flag) for flag in relay.on_frame_start(f, start))
        for rank, relay in relays.items():
            tx_us = frame.slot_start_us(f, rank, Channel.LONGITUDINAL)
            message = relay.next_message(f, tx_us)
            if message is None:
                continue
            if rank == origin_rank and origin_key is None:
                origin_key = message.key
                report.origin_tx_us = tx_us
            for target in longitudinal_targets(rank, n):
                report.transmissions += 1
                if (rank, target) in lost or (
                    loss_probability > 0 and rng.random() < loss_probability
                ):
                    report.lost += 1
                    continue
                report.delivered += 1
                rx_us = tx_us + frame.tx_us
                result = relays[target].on_receive(InboxEvent(message, rx_us, f))
                report.flags.extend((target, flag) for flag in result.flags)
                for key, accepted in result.accepted:
                    if key == origin_key:
                        report.accept_time_us.setdefault(target, rx_us)
                        report.accepted_payload.setdefault(target, accepted)
        if f > 0 and all(
            not relay.queue and not relay.state.pending for relay in relays.values()
        ):
            break
    return report
