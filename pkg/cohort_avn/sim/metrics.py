"""Terminal metrics of a scenario run, plus the per-stop and per-attack records."""

from collections import Counter
from dataclasses import dataclass, field, fields
from typing import Any

from cohort_avn.messaging.message import MessageKey
from cohort_avn.security.attacks import AttackKind
from cohort_avn.security.exclusion import ExclusionReport, StopTrajectory


@dataclass
class StopRecord:
    vehicle_id: int
    trajectory: StopTrajectory
    report: ExclusionReport
    resolved_vehicle: int | None

    @property
    def accountable(self) -> bool:
        """The authority maps the report's certificate back to the offender."""
        return self.resolved_vehicle == self.vehicle_id


@dataclass
class AttackEvent:
    kind: AttackKind
    attacker: int
    frame: int
    key: MessageKey | None = None
    detected: bool = False


@dataclass
class RunMetrics:
    """
    Counters accumulated by a run.

    N2N copy accounting is exact: every addressed copy ends up delivered,
    lost or out of range, so ``n2n_transmitted`` is always the sum of the
    three. Slot bursts are MAC control and are not counted here.

    ``join_requests`` counts every scripted join; ``join_attempts`` only those
    signed with an SC pseudonym, so it matches ``pseudos_consumed``.
    """

    slots_per_frame: int = 24
    frames: int = 0
    collisions: int = 0
    mac_violations: int = 0
    tpd_violations: int = 0
    false_positives: int = 0
    forged_accepted: int = 0
    join_requests: int = 0
    join_attempts: int = 0
    joins_ok: int = 0
    joins_rejected: int = 0
    splits: int = 0
    link_failures: int = 0
    pseudos_consumed: int = 0
    nsc_pseudos_consumed: int = 0
    lg_transmissions: int = 0
    lt_transmissions: int = 0
    n2n_transmitted: int = 0
    n2n_delivered: int = 0
    n2n_lost: int = 0
    n2n_out_of_range: int = 0
    n2n_foreign: int = 0
    n2n_accepted: int = 0
    n2n_flags: int = 0
    stops: int = 0
    halts: int = 0
    exclusion_reports: int = 0
    v2x_sent: int = 0
    v2x_blocked: int = 0
    compartment_blocked: int = 0
    crowd_rounds: int = 0
    crowd_messages: int = 0
    latencies: list[int] = field(default_factory=list)
    attack_events: Counter = field(default_factory=Counter)
    attack_detected: Counter = field(default_factory=Counter)

    @property
    def channel_utilization(self) -> float:
        """Share of N2N slots (both channels) that carried a message."""
        slots = 2 * self.frames * self.slots_per_frame
        used = self.lg_transmissions + self.lt_transmissions
        return used / slots if slots else 0.0

    @property
    def detection_rate(self) -> float | None:
        total = sum(self.attack_events.values())
        if not total:
            return None
        return sum(self.attack_detected.values()) / total

    def as_dict(self) -> dict[str, Any]:
        """Flat key/value summary with a stable key order."""
        skipped = {"latencies", "attack_events", "attack_detected"}
        summary: dict[str, Any] = {
            f.name: getattr(self, f.name) for f in fields(self) if f.name not in skipped
        }
        summary["channel_utilization"] = round(self.channel_utilization, 6)
        summary["latency_count"] = len(self.latencies)
        summary["latency_max_frames"] = max(self.latencies, default=0)
        summary["latency_mean_frames"] = (
            round(sum(self.latencies) / len(self.latencies), 6)
            if self.latencies
            else 0.0
        )
        for kind in AttackKind:
            if self.attack_events[kind]:
                summary[f"attack_events_{kind.value}"] = self.attack_events[kind]
                summary[f"attack_detected_{kind.value}"] = self.attack_detected[kind]
        rate = self.detection_rate
        summary["detection_rate"] = None if rate is None else round(rate, 6)
        return summary
