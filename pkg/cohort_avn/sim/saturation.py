"""Saturated run of one cohort's longitudinal channel."""

import logging
import random
from collections import defaultdict, deque
from collections.abc import Iterable
from dataclasses import dataclass, field

from cohort_avn.errors import ConfigurationError
from cohort_avn.mac import MacFrame, TxRecord, to_seconds, to_us
from cohort_avn.naming import Channel, Name
from cohort_avn.sim.events import Action, EventQueue

logger = logging.getLogger(__name__)


@dataclass
class SaturationReport:
    frames: int
    cohort_size: int
    tx_records: list[TxRecord] = field(default_factory=list)
    access_delays_us: list[int] = field(default_factory=list)
    collisions: int = 0

    @property
    def max_access_delay_us(self) -> int:
        return max(self.access_delays_us, default=0)

    @property
    def max_access_delay(self) -> float:
        return to_seconds(self.max_access_delay_us)


def count_collisions(records: Iterable[TxRecord], frame: MacFrame) -> int:
    """Transmissions that start before the previous one on their channel ended."""
    starts: dict[Channel, list[int]] = defaultdict(list)
    for record in records:
        starts[record.channel].append(to_us(record.tx_time))
    collisions = 0
    for times in starts.values():
        times.sort()
        for previous, start in zip(times, times[1:]):
            if start < previous + frame.tx_us:
                collisions += 1
    return collisions


def saturation_run(
    cohort_size: int,
    frame: MacFrame,
    frames: int,
    seed: int = 0,
    lane: int = 1,
) -> SaturationReport:
    """Drive a cohort whose members always have a message waiting.

    After each transmission the member's next message becomes ready a seeded
    number of slot boundaries later, at most one frame on, so every member has
    something to send in every frame. A message waits in its member's queue
    until the member's own slot comes round. Delays and collisions are read
    back from what went on the air.
    """
    if not 1 <= cohort_size <= frame.slots_per_frame:
        raise ConfigurationError("cohort does not fit in the frame")
    rng = random.Random(seed)
    queue = EventQueue()
    waiting: dict[int, deque[int]] = {
        rank: deque() for rank in range(1, cohort_size + 1)
    }
    report = SaturationReport(frames=frames, cohort_size=cohort_size)
    if frames < 1:
        return report

    for rank in waiting:
        first_slot = frame.slot_start_us(0, rank, Channel.LONGITUDINAL)
        queue.push(first_slot, Action.SLOT_LG, rank, 0)
        ready = first_slot - rng.randrange(rank) * frame.slot_us
        queue.push(ready, Action.SCRIPT, rank)

    while queue:
        item = queue.pop()
        rank = item.vehicle_id
        if item.action is Action.SCRIPT:
            waiting[rank].append(item.time_us)
            continue
        f = item.payload
        more = f + 1 < frames
        if more:
            queue.push(
                frame.slot_start_us(f + 1, rank, Channel.LONGITUDINAL),
                Action.SLOT_LG,
                rank,
                f + 1,
            )
        if not waiting[rank]:
            continue
        ready = waiting[rank].popleft()
        report.tx_records.append(
            TxRecord(
                sender=Name(rank, lane),
                channel=Channel.LONGITUDINAL,
                tx_time=to_seconds(item.time_us),
                sensed_rank=rank,
            )
        )
        report.access_delays_us.append(item.time_us + frame.tx_us - ready)
        if more:
            step = rng.randint(1, frame.slots_per_frame)
            queue.push(item.time_us + step * frame.slot_us, Action.SCRIPT, rank)

    report.collisions = count_collisions(report.tx_records, frame)
    logger.info(
        "saturation run of %d members over %d frames: max delay %d us, %d collisions",
        cohort_size,
        frames,
        report.max_access_delay_us,
        report.collisions,
    )
    return report
