"""Trace event codes and the protocol event queue."""

import heapq
import itertools
from dataclasses import dataclass, field
from enum import IntEnum, StrEnum
from typing import Any

GLOBAL_SUBJECT = -1


class EventCode(StrEnum):
    JOIN_REQ = "JOIN_REQ"
    JOIN_OK = "JOIN_OK"
    JOIN_REJ = "JOIN_REJ"
    SPLIT = "SPLIT"
    RENUM = "RENUM"
    DISSEM = "DISSEM"
    MAC_VIOLATION = "MAC_VIOLATION"
    TPD_VIOLATION = "TPD_VIOLATION"
    STOP = "STOP"
    EXCL_REPORT = "EXCL_REPORT"
    N2N_TX = "N2N_TX"
    N2N_ACCEPT = "N2N_ACCEPT"
    N2N_FLAG = "N2N_FLAG"
    LINK_FAIL = "LINK_FAIL"
    LEAVE = "LEAVE"
    HALT = "HALT"
    VELOCITY = "VELOCITY"
    V2X_SEND = "V2X_SEND"
    V2X_BLOCKED = "V2X_BLOCKED"
    CROWD = "CROWD"
    ATTACK = "ATTACK"


class Action(IntEnum):
    """Internal work items. The value breaks ties between equal (time, vehicle)."""

    FRAME = 0
    JOIN_DECIDE = 1
    SCRIPT = 2
    CROWD_ROUND = 3
    SLOT_LG = 4
    ROGUE = 5
    SLOT_LT = 6
    TICK = 7


@dataclass(order=True)
class QueuedEvent:
    time_us: int
    vehicle_id: int
    action: Action
    seq: int
    payload: Any = field(default=None, compare=False)


class EventQueue:
    """Min-heap of work items keyed by (time, vehicle id, action, insertion order)."""

    def __init__(self):
        self._heap: list[QueuedEvent] = []
        self._seq = itertools.count()

    def push(
        self,
        time_us: int,
        action: Action,
        vehicle_id: int = GLOBAL_SUBJECT,
        payload: Any = None,
    ):
        heapq.heappush(
            self._heap,
            QueuedEvent(time_us, vehicle_id, action, next(self._seq), payload),
        )

    def pop(self) -> QueuedEvent:
        return heapq.heappop(self._heap)

    def peek_time(self) -> int | None:
        return self._heap[0].time_us if self._heap else None

    def __len__(self) -> int:
        return len(self._heap)

    def __bool__(self) -> bool:
        return bool(self._heap)
