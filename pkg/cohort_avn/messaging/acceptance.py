"""
Redundancy-based acceptance of N2N messages.

A longitudinal payload is accepted only when seen twice (a direct copy from a
range-1 origin is the exception), a lateral payload only when two members of
the origin's lateral group agree byte for byte. Disagreement and silence are
reported as flags, never as exceptions.
"""

from abc import ABC, abstractmethod
from collections import Counter, deque
from dataclasses import dataclass, field
from enum import StrEnum

from cohort_avn.messaging.message import Direction, HopKind, MessageKey, N2NMessage
from cohort_avn.naming import Channel, Name

DEFAULT_TIMEOUT_FRAMES = 2


class FlagKind(StrEnum):
    FORGERY = "forgery"
    SUPPRESSION_OR_LOSS = "suppression_or_loss"
    SPANNING_VIOLATION = "spanning_violation"
    MINORITY = "minority"
    NO_MAJORITY = "no_majority"
    UNCONFIRMED = "unconfirmed"


@dataclass(frozen=True)
class Flag:
    kind: FlagKind
    key: MessageKey | None
    suspects: tuple[Name, ...]
    time_us: int


@dataclass(frozen=True)
class InboxEvent:
    message: N2NMessage
    rx_time_us: int
    rx_frame: int


@dataclass
class ReceiveResult:
    accepted: list[tuple[MessageKey, str]] = field(default_factory=list)
    flags: list[Flag] = field(default_factory=list)


@dataclass
class AcceptanceState:
    """
    Per-member acceptance bookkeeping.

    Attributes:
        pending: copies received so far for each not yet decided message.
        first_frame: frame in which the first copy of a pending message arrived.
        accepted / rejected: decided messages; a message is decided once.
        own: messages this member originated, to catch altered echoes.
        delivered: payloads handed to the application layer, in order.
    """

    rank: int
    lane: int
    timeout_frames: int = DEFAULT_TIMEOUT_FRAMES
    pending: dict[MessageKey, list[InboxEvent]] = field(default_factory=dict)
    first_frame: dict[MessageKey, int] = field(default_factory=dict)
    accepted: dict[MessageKey, str] = field(default_factory=dict)
    rejected: set[MessageKey] = field(default_factory=set)
    own: dict[MessageKey, str] = field(default_factory=dict)
    delivered: deque[tuple[MessageKey, str]] = field(default_factory=deque)

    def renumber(self, rank: int, lane: int | None = None):
        """Adopt a new name. Copies addressed under the old numbering are dropped."""
        self.rank = rank
        if lane is not None:
            self.lane = lane
        self.pending.clear()
        self.first_frame.clear()

    def _store(self, event: InboxEvent) -> list[InboxEvent]:
        key = event.message.key
        self.first_frame.setdefault(key, event.rx_frame)
        copies = self.pending.setdefault(key, [])
        copies.append(event)
        return copies

    def _accept(self, key: MessageKey, payload: str, result: ReceiveResult):
        self.pending.pop(key, None)
        self.first_frame.pop(key, None)
        self.accepted[key] = payload
        self.delivered.append((key, payload))
        result.accepted.append((key, payload))

    def _reject(self, key: MessageKey) -> list[InboxEvent]:
        self.first_frame.pop(key, None)
        self.rejected.add(key)
        return self.pending.pop(key, [])


def is_addressed(direction: Direction, origin_rank: int, rank: int) -> bool:
    if direction is Direction.TAILWARD:
        return rank > origin_rank
    if direction is Direction.HEADWARD:
        return rank < origin_rank
    return rank != origin_rank


def _from_origin_side(sender_rank: int, origin_rank: int, rank: int) -> bool:
    return (sender_rank - rank) * (origin_rank - rank) > 0


def _seen_twice(state: AcceptanceState, copies: list[InboxEvent]) -> bool:
    supporters: set[Name] = set()
    echo_counted = False
    for event in copies:
        message = event.message
        sender = message.sender
        if (
            message.hop is HopKind.DIRECT
            and sender == message.origin
            and abs(sender.r - state.rank) == 1
        ):
            return True
        if sender in supporters:
            continue
        if message.hop is HopKind.ECHO:
            # echoes only vouch for what arrived from the origin's side, once
            if echo_counted or not _from_origin_side(
                sender.r, message.origin.r, state.rank
            ):
                continue
            echo_counted = True
        supporters.add(sender)
    return len(supporters) >= 2


def lg_receive(state: AcceptanceState, event: InboxEvent) -> ReceiveResult:
    result = ReceiveResult()
    message = event.message
    if message.channel is not Channel.LONGITUDINAL:
        return result
    distance = message.sender.r - state.rank
    if message.sender.j != state.lane or abs(distance) not in (1, 2):
        result.flags.append(
            Flag(
                FlagKind.SPANNING_VIOLATION,
                message.key,
                (message.sender,),
                event.rx_time_us,
            )
        )
        return result

    key = message.key
    known = state.own.get(key, state.accepted.get(key))
    if known is not None:
        if message.payload != known:
            result.flags.append(
                Flag(FlagKind.FORGERY, key, (message.sender,), event.rx_time_us)
            )
        return result
    if key in state.rejected or not is_addressed(
        message.direction, message.origin.r, state.rank
    ):
        return result

    copies = state._store(event)
    if len({c.message.payload for c in copies}) > 1:
        relays = {c.message.sender for c in copies if c.message.sender != message.origin}
        adjacent = {s for s in relays if abs(s.r - state.rank) == 1}
        suspects = adjacent or relays or {c.message.sender for c in copies}
        state._reject(key)
        result.flags.append(
            Flag(FlagKind.FORGERY, key, tuple(sorted(suspects)), event.rx_time_us)
        )
        return result

    if _seen_twice(state, copies):
        state._accept(key, message.payload, result)
    return result


class LateralAcceptancePolicy(ABC):
    """Which senders may vouch for a lateral payload, and how many must agree."""

    quorum: int = 2

    @abstractmethod
    def group(self, origin: Name) -> frozenset[Name]: ...


class EchoGroupPolicy(LateralAcceptancePolicy):
    """The origin plus its range-1 longitudinal neighbours, two of three agreeing.

    A singleton origin has no neighbours, so its lateral messages can never
    reach quorum and always end up unconfirmed.
    """

    def group(self, origin: Name) -> frozenset[Name]:
        return frozenset(
            Name(origin.r + d, origin.j) for d in (-1, 0, 1) if origin.r + d >= 1
        )


def lt_receive(
    state: AcceptanceState,
    event: InboxEvent,
    policy: LateralAcceptancePolicy | None = None,
) -> ReceiveResult:
    policy = policy or EchoGroupPolicy()
    result = ReceiveResult()
    message = event.message
    if message.channel is not Channel.LATERAL:
        return result
    key = message.key
    group = policy.group(message.origin)
    if abs(message.sender.j - state.lane) != 1 or message.sender not in group:
        result.flags.append(
            Flag(
                FlagKind.SPANNING_VIOLATION, key, (message.sender,), event.rx_time_us
            )
        )
        return result
    if key in state.accepted:
        if message.payload != state.accepted[key]:
            result.flags.append(
                Flag(FlagKind.MINORITY, key, (message.sender,), event.rx_time_us)
            )
        return result
    if key in state.rejected:
        return result
    if any(c.message.sender == message.sender for c in state.pending.get(key, [])):
        return result

    copies = state._store(event)
    votes = Counter(c.message.payload for c in copies)
    payload, count = votes.most_common(1)[0]
    if count >= policy.quorum:
        minority = tuple(
            sorted(c.message.sender for c in copies if c.message.payload != payload)
        )
        state._accept(key, payload, result)
        if minority:
            result.flags.append(
                Flag(FlagKind.MINORITY, key, minority, event.rx_time_us)
            )
    elif len(copies) >= len(group):
        senders = tuple(sorted(c.message.sender for c in copies))
        state._reject(key)
        result.flags.append(
            Flag(FlagKind.NO_MAJORITY, key, senders, event.rx_time_us)
        )
    return result


def _upstream_neighbour(state: AcceptanceState, origin_rank: int) -> Name:
    step = -1 if origin_rank < state.rank else 1
    return Name(state.rank + step, state.lane)


def expire(state: AcceptanceState, frame: int, now_us: int) -> list[Flag]:
    """Reject every pending message whose first copy is older than the timeout.

    A copy first received during frame f expires at the start of frame
    f + timeout + 1.
    """
    flags = []
    for key, first in sorted(state.first_frame.items()):
        if frame < first + state.timeout_frames + 1:
            continue
        copies = state._reject(key)
        senders = tuple(sorted({c.message.sender for c in copies}))
        if key[3] is Channel.LONGITUDINAL:
            origin_rank = copies[0].message.origin.r
            flags.append(
                Flag(
                    FlagKind.SUPPRESSION_OR_LOSS,
                    key,
                    (_upstream_neighbour(state, origin_rank),),
                    now_us,
                )
            )
        elif len(senders) == 1:
            flags.append(Flag(FlagKind.UNCONFIRMED, key, senders, now_us))
        else:
            flags.append(Flag(FlagKind.NO_MAJORITY, key, senders, now_us))
    return flags
