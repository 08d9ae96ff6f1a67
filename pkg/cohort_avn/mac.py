"""
Slotted MAC for the two N2N channels.

The member of rank r owns slot r - 1 of every longitudinal frame and of every
lateral frame. Slot arithmetic is done in integer microseconds so that slot
boundaries compare exactly; public helpers take and return seconds.
"""

import math
from collections import defaultdict
from collections.abc import Iterable
from dataclasses import dataclass
from enum import StrEnum

from cohort_avn.errors import ConfigurationError
from cohort_avn.naming import Channel, Name

US_PER_SECOND = 1_000_000


def to_us(seconds: float) -> int:
    return round(seconds * US_PER_SECOND)


def to_seconds(us: int) -> float:
    return us / US_PER_SECOND


@dataclass(frozen=True)
class MacFrame:
    """Frame layout shared by every vehicle through the common UTC clock."""

    slot_duration: float = 0.001
    slots_per_frame: int = 24
    tx_time: float = 0.0002
    longitudinal_offset: float = 0.0
    lateral_offset: float = 0.0
    epoch: float = 0.0

    def __post_init__(self):
        if self.slot_duration <= 0:
            raise ConfigurationError("slot_duration must be positive")
        if self.slots_per_frame < 1:
            raise ConfigurationError("slots_per_frame must be at least 1")
        if not 0 < self.tx_time <= self.slot_duration:
            raise ConfigurationError("tx_time must fit inside one slot")
        for offset in (self.longitudinal_offset, self.lateral_offset):
            if not 0 <= offset < self.frame_duration:
                raise ConfigurationError("channel offsets must lie inside the frame")

    @property
    def frame_duration(self) -> float:
        return self.slots_per_frame * self.slot_duration

    @property
    def slot_us(self) -> int:
        return to_us(self.slot_duration)

    @property
    def frame_us(self) -> int:
        return self.slot_us * self.slots_per_frame

    @property
    def tx_us(self) -> int:
        return to_us(self.tx_time)

    @property
    def epoch_us(self) -> int:
        return to_us(self.epoch)

    def offset_us(self, channel: Channel) -> int:
        offset = (
            self.longitudinal_offset
            if channel is Channel.LONGITUDINAL
            else self.lateral_offset
        )
        return to_us(offset)

    def frame_index(self, time_us: int) -> int:
        return (time_us - self.epoch_us) // self.frame_us

    def frame_start_us(self, frame: int) -> int:
        return self.epoch_us + frame * self.frame_us

    def slot_start_us(self, frame: int, rank: int, channel: Channel) -> int:
        self._check_rank(rank)
        return (
            self.frame_start_us(frame)
            + self.offset_us(channel)
            + (rank - 1) * self.slot_us
        )

    def _check_rank(self, rank: int):
        if not 1 <= rank <= self.slots_per_frame:
            raise ConfigurationError(
                f"rank {rank} exceeds frame capacity of {self.slots_per_frame} slots"
            )


@dataclass(frozen=True)
class TxRecord:
    """A transmission as observed by a receiver sharing the frame epoch.

    ``sensed_rank`` is the rank of the emitter as localised by the receiver's
    own sensors, or None when the receiver cannot place it in its cohort.
    """

    sender: Name
    channel: Channel
    tx_time: float
    payload_digest: str = ""
    sensed_rank: int | None = None


class SlotVerdict(StrEnum):
    OK = "ok"
    MASQUERADE = "masquerade"
    OFF_SLOT = "off_slot"
    SYBIL = "sybil"


@dataclass(frozen=True)
class SlotCheck:
    verdict: SlotVerdict
    slot_owner: int | None = None
    emitter_rank: int | None = None

    @property
    def ok(self) -> bool:
        return self.verdict is SlotVerdict.OK


@dataclass(frozen=True)
class SafetyMargin:
    distance_in_lambda: float
    ratio: float
    passed: bool


def slot_times(rank: int, frame: MacFrame) -> tuple[float, float]:
    """(Lg_r, Lt_r) as offsets from the start of each frame."""
    frame._check_rank(rank)
    base = (rank - 1) * frame.slot_us
    return (
        (base + frame.offset_us(Channel.LONGITUDINAL)) / US_PER_SECOND,
        (base + frame.offset_us(Channel.LATERAL)) / US_PER_SECOND,
    )


def access_delay_bound(frame: MacFrame) -> float:
    """Worst-case wait for one's own slot, whatever the load."""
    return frame.slots_per_frame * frame.slot_duration


def safety_margin_check(lam: float, v: float, iv_gap: float) -> SafetyMargin:
    """Distance covered during one access delay against the iv-gap (pass at 10x)."""
    if iv_gap <= 0:
        raise ConfigurationError("iv_gap must be positive")
    distance = v * lam
    ratio = math.inf if distance == 0 else iv_gap / distance
    return SafetyMargin(distance_in_lambda=distance, ratio=ratio, passed=ratio >= 10)


def slot_owner_at(tx_time: float, channel: Channel, frame: MacFrame) -> int:
    offset = (to_us(tx_time) - frame.epoch_us - frame.offset_us(channel)) % frame.frame_us
    return offset // frame.slot_us + 1


def check_slot_ownership(
    tx: TxRecord,
    claimed_rank: int,
    frame: MacFrame,
    cohort_size: int | None = None,
) -> SlotCheck:
    owner = slot_owner_at(tx.tx_time, tx.channel, frame)
    if cohort_size is not None and owner > cohort_size:
        return SlotCheck(SlotVerdict.OFF_SLOT, emitter_rank=tx.sensed_rank)
    if owner != claimed_rank:
        return SlotCheck(SlotVerdict.MASQUERADE, owner, tx.sensed_rank)
    if tx.sensed_rank is not None and tx.sensed_rank != claimed_rank:
        return SlotCheck(SlotVerdict.MASQUERADE, owner, tx.sensed_rank)
    return SlotCheck(SlotVerdict.OK, owner, tx.sensed_rank)


def detect_sybil(records: Iterable[TxRecord], frame: MacFrame) -> list[TxRecord]:
    """Records whose emitter used two or more names within one frame."""
    by_emitter: dict[tuple[int, Channel, int], list[TxRecord]] = defaultdict(list)
    for record in records:
        if record.sensed_rank is None:
            continue
        key = (frame.frame_index(to_us(record.tx_time)), record.channel, record.sensed_rank)
        by_emitter[key].append(record)
    flagged = []
    for group in by_emitter.values():
        if len({record.sender for record in group}) >= 2:
            flagged.extend(group)
    return flagged
