"""
Per-member relay duty for cohort-wide longitudinal dissemination.

A member that accepts a payload relays it once, in its own slot of the next
frame. A member still holding a single unaccepted copy when its own slot comes
round in a later frame forwards that copy once as an echo, which is what lets
neighbours around a lost link reach two copies. Each member transmits any
given message at most once.
"""

from collections import deque
from dataclasses import dataclass, replace

from cohort_avn.messaging.acceptance import (
    AcceptanceState,
    Flag,
    InboxEvent,
    ReceiveResult,
    expire,
    lg_receive,
)
from cohort_avn.messaging.message import (
    Direction,
    HopKind,
    MessageKey,
    N2NMessage,
)
from cohort_avn.naming import Channel, Name


@dataclass(frozen=True)
class QueuedCopy:
    hop: HopKind
    payload: str
    direction: Direction
    eligible_frame: int
    origin: Name | None = None
    origin_frame: int | None = None

    @property
    def key(self) -> MessageKey | None:
        if self.origin is None or self.origin_frame is None:
            return None
        return (self.origin.r, self.origin.j, self.origin_frame, Channel.LONGITUDINAL)


class RelayBehaviour:
    """Honest relaying. Attack behaviours override ``outgoing``."""

    def outgoing(self, copy: QueuedCopy, frame: int) -> QueuedCopy | None:
        return copy


class LongitudinalRelay:
    def __init__(
        self, state: AcceptanceState, behaviour: RelayBehaviour | None = None
    ):
        self.state = state
        self.behaviour = behaviour or RelayBehaviour()
        self.queue: deque[QueuedCopy] = deque()
        self.transmitted: set[MessageKey] = set()

    @property
    def name(self) -> Name:
        return Name(self.state.rank, self.state.lane)

    def originate(self, payload: str, direction: Direction, frame: int):
        self.queue.append(QueuedCopy(HopKind.DIRECT, payload, direction, frame))

    def _queued(self, key: MessageKey) -> bool:
        return any(copy.key == key for copy in self.queue)

    def _drop(self, key: MessageKey):
        self.queue = deque(copy for copy in self.queue if copy.key != key)

    def on_frame_start(self, frame: int, now_us: int) -> list[Flag]:
        flags = expire(self.state, frame, now_us)
        for flag in flags:
            if flag.key is not None:
                self._drop(flag.key)
        for key, first in sorted(self.state.first_frame.items()):
            if first >= frame or key in self.transmitted or self._queued(key):
                continue
            message = self.state.pending[key][0].message
            self.queue.append(
                QueuedCopy(
                    HopKind.ECHO,
                    message.payload,
                    message.direction,
                    frame,
                    message.origin,
                    message.origin_frame,
                )
            )
        return flags

    def on_receive(self, event: InboxEvent) -> ReceiveResult:
        result = lg_receive(self.state, event)
        message = event.message
        if message.key in self.state.rejected:
            self._drop(message.key)
        for key, payload in result.accepted:
            self._drop(key)
            if key in self.transmitted:
                continue
            self.queue.append(
                QueuedCopy(
                    HopKind.RELAYED,
                    payload,
                    message.direction,
                    event.rx_frame + 1,
                    message.origin,
                    message.origin_frame,
                )
            )
        return result

    def next_message(self, frame: int, tx_time_us: int) -> N2NMessage | None:
        """The copy to put on the air in this member's slot of ``frame``, if any."""
        for copy in list(self.queue):
            if copy.eligible_frame > frame:
                continue
            self.queue.remove(copy)
            if copy.origin is None:
                copy = replace(copy, origin=self.name, origin_frame=frame)
            key = copy.key
            if key in self.transmitted:
                continue
            self.transmitted.add(key)
            outgoing = self.behaviour.outgoing(copy, frame)
            if outgoing is None:
                continue
            if copy.hop is HopKind.DIRECT:
                self.state.own[key] = copy.payload
            return N2NMessage(
                sender=self.name,
                origin=outgoing.origin,
                origin_frame=outgoing.origin_frame,
                channel=Channel.LONGITUDINAL,
                payload=outgoing.payload,
                hop=outgoing.hop,
                direction=outgoing.direction,
                tx_time_us=tx_time_us,
            )
        return None

    def renumber(self, rank: int, lane: int | None = None):
        self.state.renumber(rank, lane)
        self.queue = deque(copy for copy in self.queue if copy.origin is None)
