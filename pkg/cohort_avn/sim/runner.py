"""
Entry points for running scenarios and the attack corpus.

``run_scenario`` is the only way the CLI and the tests drive the engine: it
validates the scenario, runs a fresh ``HighwayModel`` to the end and packs
the trace, the metrics and the per-stop records into a ``ScenarioTrace``.
"""

import json
import logging
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from cohort_avn.errors import ConfigurationError
from cohort_avn.recording.trace_recorder import TraceEvent, trace_hash
from cohort_avn.security.attacks import AttackKind, AttackSpec, inject_attack
from cohort_avn.sim.events import EventCode
from cohort_avn.sim.metrics import AttackEvent, StopRecord
from cohort_avn.sim.model import HighwayModel
from cohort_avn.sim.scenario import Scenario, load_scenario, validate_scenario

logger = logging.getLogger(__name__)

VIOLATION_CODES = (EventCode.MAC_VIOLATION, EventCode.TPD_VIOLATION)

# frame at which each scripted attack starts in the corpus
ATTACK_START_FRAMES = {
    AttackKind.MASQUERADE: 10,
    AttackKind.SYBIL: 10,
    AttackKind.FORGE: 0,
    AttackKind.SUPPRESS: 0,
    AttackKind.FALSE_INJECT: 10,
    AttackKind.V2X_TAMPER: 5,
}


@dataclass
class ScenarioTrace:
    """Everything a run produced."""

    scenario: Scenario
    seed: int
    events: list[TraceEvent]
    metrics: dict[str, Any]
    trace_hash: str
    stops: list[StopRecord] = field(default_factory=list)
    attack_events: list[AttackEvent] = field(default_factory=list)

    def codes(self) -> Counter:
        return Counter(event.code for event in self.events)

    def events_with(self, code: EventCode | str) -> list[TraceEvent]:
        code = EventCode(code)
        return [event for event in self.events if event.code is code]

    @property
    def violations(self) -> int:
        codes = self.codes()
        return sum(codes[code] for code in VIOLATION_CODES)

    def to_jsonl(self) -> str:
        return "".join(
            json.dumps(event.to_record(), separators=(",", ":"), default=str) + "\n"
            for event in self.events
        )

    def save(
        self, trace_path: str | Path | None = None, metrics_path: str | Path | None = None
    ):
        if trace_path is not None:
            Path(trace_path).write_text(self.to_jsonl())
        if metrics_path is not None:
            Path(metrics_path).write_text(json.dumps(self.metrics, indent=2) + "\n")


def _as_scenario(scenario: Scenario | dict | str | Path) -> Scenario:
    if isinstance(scenario, str | Path):
        return load_scenario(scenario)
    return validate_scenario(scenario)


def run_scenario(
    scenario: Scenario | dict | str | Path,
    seed: int | None = None,
    checked: bool | None = None,
) -> ScenarioTrace:
    """Validate and run one scenario.

    Raises:
        ScenarioError: the scenario does not validate; every issue is listed.
        InvariantViolation: checked mode caught a broken invariant.
    """
    scenario = _as_scenario(scenario)
    model = HighwayModel(scenario, seed=seed, checked=checked)
    model.run_model()
    events = list(model.recorder.events)
    result = ScenarioTrace(
        scenario=scenario,
        seed=model.seed,
        events=events,
        metrics=model.metrics.as_dict(),
        trace_hash=trace_hash(events),
        stops=list(model.stops),
        attack_events=list(model.attack_events),
    )
    logger.info("run of %s: trace hash %s", scenario.name, result.trace_hash)
    return result


def attack_scenario(base: Scenario, kind: AttackKind | str) -> Scenario:
    """The corpus scenario for ``kind``: ``base`` with one scripted attacker.

    The attacker sits in the largest cohort at rank 4 (rank n - 1 for a Sybil,
    so its made-up names trail the tail).
    """
    kind = AttackKind(kind)
    base = base.attack_free()
    if not base.cohorts:
        raise ConfigurationError("the attack corpus needs a scenario with a cohort")
    cohort = max(base.cohorts, key=lambda c: (len(c.members), -c.id))
    n = len(cohort.members)
    if n < 6:
        raise ConfigurationError("the attack corpus needs a cohort of at least 6")
    rank = n - 1 if kind is AttackKind.SYBIL else 4
    spec = AttackSpec(
        kind=kind,
        attacker=cohort.members[rank - 1],
        victim_rank=rank + 2 if kind is AttackKind.MASQUERADE else None,
        start_frame=ATTACK_START_FRAMES[kind],
    )
    name = base.name.removesuffix("-attack-free")
    return inject_attack(base, spec).model_copy(update={"name": f"{name}-{kind.value}"})


@dataclass
class AttackRow:
    kind: AttackKind
    events: int
    detected: int
    false_positives: int
    forged_accepted: int
    stops: int

    @property
    def detection_rate(self) -> float | None:
        return self.detected / self.events if self.events else None


@dataclass
class AttackSuiteReport:
    scenario: str
    rows: list[AttackRow]
    twin_violations: int
    twin_false_positives: int

    @property
    def passed(self) -> bool:
        return (
            all(
                row.events > 0
                and row.detected == row.events
                and row.false_positives == 0
                and row.forged_accepted == 0
                for row in self.rows
            )
            and self.twin_violations == 0
            and self.twin_false_positives == 0
        )

    def as_dict(self) -> dict[str, Any]:
        return {
            "scenario": self.scenario,
            "passed": self.passed,
            "twin_violations": self.twin_violations,
            "twin_false_positives": self.twin_false_positives,
            "kinds": {
                row.kind.value: {
                    "events": row.events,
                    "detected": row.detected,
                    "detection_rate": row.detection_rate,
                    "false_positives": row.false_positives,
                    "forged_accepted": row.forged_accepted,
                    "stops": row.stops,
                }
                for row in self.rows
            },
        }


def _row(kind: AttackKind, trace: ScenarioTrace) -> AttackRow:
    events = [e for e in trace.attack_events if e.kind is kind]
    return AttackRow(
        kind=kind,
        events=len(events),
        detected=sum(e.detected for e in events),
        false_positives=trace.metrics["false_positives"],
        forged_accepted=trace.metrics["forged_accepted"],
        stops=trace.metrics["stops"],
    )


def run_attack_suite(
    base: Scenario | dict | str | Path,
    kinds: list[AttackKind | str] | None = None,
    *,
    seed: int | None = None,
    parallel: bool = False,
    mode: str = "asyncio",
) -> AttackSuiteReport:
    """One run per attack kind plus the attack-free twin."""
    from cohort_avn.parallel_runs import run_scenarios_parallel

    base = _as_scenario(base)
    kinds = [AttackKind(kind) for kind in (kinds or list(AttackKind))]
    scenarios = [base.attack_free()] + [attack_scenario(base, kind) for kind in kinds]
    traces = run_scenarios_parallel(
        scenarios, seed=seed, mode=mode if parallel else "serial"
    )
    twin, attacked = traces[0], traces[1:]
    report = AttackSuiteReport(
        scenario=base.name,
        rows=[_row(kind, trace) for kind, trace in zip(kinds, attacked)],
        twin_violations=twin.violations,
        twin_false_positives=twin.metrics["false_positives"],
    )
    logger.info("attack suite on %s passed: %s", base.name, report.passed)
    return report
