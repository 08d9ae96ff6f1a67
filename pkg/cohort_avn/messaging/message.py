"""N2N message format. Names are the only addressing a message ever carries."""

import hashlib
import json
from dataclasses import dataclass
from enum import StrEnum

from cohort_avn.naming import Channel, Name

WIRE_FIELDS = (
    "channel",
    "sender",
    "origin",
    "origin_frame",
    "direction",
    "hop",
    "payload",
    "tx_us",
)


class Direction(StrEnum):
    HEADWARD = "headward"
    TAILWARD = "tailward"
    BOTH = "both"


class HopKind(StrEnum):
    DIRECT = "direct"
    RELAYED = "relayed"
    ECHO = "echo"


MessageKey = tuple[int, int, int, Channel]


def digest_of(payload: str) -> str:
    return hashlib.sha256(payload.encode()).hexdigest()[:16]


@dataclass(frozen=True)
class N2NMessage:
    sender: Name
    origin: Name
    origin_frame: int
    channel: Channel
    payload: str
    hop: HopKind = HopKind.DIRECT
    direction: Direction = Direction.BOTH
    tx_time_us: int = 0

    @property
    def key(self) -> MessageKey:
        """Identifies one origination; every copy of it shares the key."""
        return (self.origin.r, self.origin.j, self.origin_frame, self.channel)

    @property
    def digest(self) -> str:
        return digest_of(self.payload)

    def to_wire(self) -> dict:
        values = {
            "channel": self.channel.value,
            "sender": self.sender.as_list(),
            "origin": self.origin.as_list(),
            "origin_frame": self.origin_frame,
            "direction": self.direction.value,
            "hop": self.hop.value,
            "payload": self.payload,
            "tx_us": self.tx_time_us,
        }
        return {name: values[name] for name in WIRE_FIELDS}

    def to_json(self) -> str:
        return json.dumps(self.to_wire(), separators=(",", ":"))


@dataclass(frozen=True)
class Transmission:
    """One addressed copy of a message.

    Longitudinal copies are addressed by rank, lateral ones by the vehicle the
    designation oracle picked; the vehicle id never goes on the air.
    """

    message: N2NMessage
    target_rank: int | None = None
    target_vehicle: int | None = None
