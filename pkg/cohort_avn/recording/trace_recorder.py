"""
Trace recorder for cohort_avn scenario runs.

Every protocol-visible happening of a run (joins, renumbering, N2N traffic,
violations, stops...) is recorded as a ``TraceEvent``. The trace hash covers
the time, code, subject and a quantized digest of each event's detail, so it
depends on nothing but the scenario and the seed.
"""

import hashlib
import json
import logging
from collections import Counter
from collections.abc import Iterable, Iterator
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from cohort_avn.sim.events import GLOBAL_SUBJECT, EventCode

logger = logging.getLogger(__name__)

RECORD_FIELDS = ("t_us", "code", "subject", "digest", "detail")
DIGEST_PRECISION = 6


def _quantize(value: Any) -> Any:
    if isinstance(value, float):
        return round(value, DIGEST_PRECISION)
    if isinstance(value, dict):
        return {str(k): _quantize(v) for k, v in value.items()}
    if isinstance(value, list | tuple):
        return [_quantize(v) for v in value]
    return value


def canonical_json(value: Any) -> str:
    return json.dumps(
        _quantize(value), sort_keys=True, separators=(",", ":"), default=str
    )


def payload_digest(detail: Any) -> str:
    """Short digest of an event detail with floats rounded to 6 decimals."""
    if detail is None:
        return ""
    return hashlib.sha256(canonical_json(detail).encode()).hexdigest()[:16]


@dataclass(frozen=True)
class TraceEvent:
    """A single recorded event of a run."""

    time_us: int
    code: EventCode
    subject: int
    digest: str
    detail: dict[str, Any] = field(default_factory=dict, compare=False)

    def hash_tuple(self) -> list:
        return [self.time_us, self.code.value, self.subject, self.digest]

    def to_record(self) -> dict[str, Any]:
        values = {
            "t_us": self.time_us,
            "code": self.code.value,
            "subject": self.subject,
            "digest": self.digest,
            "detail": self.detail,
        }
        return {name: values[name] for name in RECORD_FIELDS}

    @classmethod
    def from_record(cls, record: dict[str, Any]) -> "TraceEvent":
        return cls(
            time_us=int(record["t_us"]),
            code=EventCode(record["code"]),
            subject=int(record["subject"]),
            digest=record.get("digest", ""),
            detail=record.get("detail") or {},
        )


def trace_hash(events: Iterable[TraceEvent]) -> str:
    blob = canonical_json([event.hash_tuple() for event in events])
    return hashlib.sha256(blob.encode()).hexdigest()


class TraceRecorder:
    """
    Collects the trace of one run. The recorder is owned by its model; runs
    never share one.

    Attributes:
        model: the model whose clock (``now_us``) stamps events recorded
            without an explicit time.
        output_dir: where ``save`` writes when given a bare file name.
    """

    def __init__(self, model=None, output_dir: str | Path | None = None):
        self.model = model
        self.output_dir = Path(output_dir) if output_dir is not None else None
        self.events: list[TraceEvent] = []

    def record(
        self,
        code: EventCode | str,
        subject: int = GLOBAL_SUBJECT,
        detail: dict[str, Any] | None = None,
        time_us: int | None = None,
    ) -> TraceEvent:
        if time_us is None:
            time_us = getattr(self.model, "now_us", 0)
        detail = detail or {}
        event = TraceEvent(
            time_us=int(time_us),
            code=EventCode(code),
            subject=int(subject),
            digest=payload_digest(detail),
            detail=detail,
        )
        self.events.append(event)
        logger.debug("t=%dus %s subject=%s", event.time_us, event.code, subject)
        return event

    def record_model_event(
        self, code: EventCode | str, detail: dict[str, Any] | None = None
    ) -> TraceEvent:
        return self.record(code, GLOBAL_SUBJECT, detail)

    def get_subject_events(self, subject: int) -> list[TraceEvent]:
        return [event for event in self.events if event.subject == subject]

    def get_events_by_code(self, code: EventCode | str) -> list[TraceEvent]:
        code = EventCode(code)
        return [event for event in self.events if event.code is code]

    def counts(self) -> dict[str, int]:
        return dict(sorted(Counter(e.code.value for e in self.events).items()))

    def trace_hash(self) -> str:
        return trace_hash(self.events)

    def iter_lines(self) -> Iterator[str]:
        for event in self.events:
            yield json.dumps(event.to_record(), separators=(",", ":"), default=str)

    def save(self, path: str | Path) -> Path:
        """Write the trace as JSON lines, one event per line."""
        path = Path(path)
        if self.output_dir is not None and not path.is_absolute():
            self.output_dir.mkdir(parents=True, exist_ok=True)
            path = self.output_dir / path
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w") as f:
            for line in self.iter_lines():
                f.write(line + "\n")
        logger.info("trace with %d events saved to %s", len(self.events), path)
        return path

    def get_stats(self) -> dict[str, Any]:
        subjects = {e.subject for e in self.events if e.subject != GLOBAL_SUBJECT}
        return {
            "total_events": len(self.events),
            "unique_subjects": len(subjects),
            "event_codes": self.counts(),
            "trace_hash": self.trace_hash(),
        }


def load_trace(path: str | Path) -> list[TraceEvent]:
    events = []
    with open(path) as f:
        for line in f:
            line = line.strip()
            if line:
                events.append(TraceEvent.from_record(json.loads(line)))
    return events
