"""
Standalone quantitative models: LDM staleness, PKI verification load,
crowdsourcing rounds, the cyber-stealth V2X filter and access-delay margins.

Everything here is a pure function of its arguments; randomness is injected.
"""

import random
from collections.abc import Iterable, Mapping
from dataclasses import dataclass, field
from enum import StrEnum

from cohort_avn.cohort.cohort import Cohort
from cohort_avn.errors import ConfigurationError
from cohort_avn.mac import MacFrame, SafetyMargin, safety_margin_check
from cohort_avn.security.tpd import PseudoAutonomy, pseudo_autonomy

__all__ = [
    "BeaconModel",
    "CrowdsourceConfig",
    "CrowdsourceMode",
    "PkiLoad",
    "PseudoAutonomy",
    "V2XClass",
    "V2XMessage",
    "crowdsource_round",
    "ldm_discrepancy",
    "ldm_sweep",
    "pki_load",
    "pseudo_autonomy",
    "stealth_filter",
    "wave_margin_comparison",
]

DEFAULT_THRASHING_THRESHOLD = 0.95


@dataclass(frozen=True)
class BeaconModel:
    velocity: float
    beacon_frequency: float
    lost_count: int = 0

    def __post_init__(self):
        if self.beacon_frequency <= 0:
            raise ConfigurationError("beacon_frequency must be positive")
        if self.lost_count < 0 or self.velocity < 0:
            raise ConfigurationError("velocity and lost_count must be non-negative")


def ldm_discrepancy(model: BeaconModel) -> float:
    """Gap between two observers' latest records of a vehicle, in meters."""
    return model.lost_count * model.velocity / model.beacon_frequency


def ldm_sweep(
    velocity: float, beacon_frequency: float, max_lost: int
) -> list[tuple[int, float]]:
    return [
        (lost, ldm_discrepancy(BeaconModel(velocity, beacon_frequency, lost)))
        for lost in range(max_lost + 1)
    ]


@dataclass(frozen=True)
class PkiLoad:
    utilization: float
    thrashing: bool


def pki_load(
    x: float,
    beacon_frequency: float,
    verify_time: float,
    threshold: float = DEFAULT_THRASHING_THRESHOLD,
) -> PkiLoad:
    """Share of a verifier's time spent checking signed beacons from ``x`` vehicles."""
    if min(x, beacon_frequency, verify_time) < 0:
        raise ConfigurationError("pki_load inputs must be non-negative")
    utilization = x * beacon_frequency * verify_time
    return PkiLoad(utilization, utilization >= threshold)


class CrowdsourceMode(StrEnum):
    DETERMINISTIC = "deterministic"
    PROBABILISTIC = "probabilistic"


@dataclass(frozen=True)
class CrowdsourceConfig:
    mode: CrowdsourceMode = CrowdsourceMode.DETERMINISTIC
    p: float | None = None

    def __post_init__(self):
        if self.mode is CrowdsourceMode.PROBABILISTIC and not (
            self.p is not None and 0 < self.p <= 1
        ):
            raise ConfigurationError("probabilistic crowdsourcing needs 0 < p <= 1")


def crowdsource_round(
    cohort: Cohort,
    round_index: int,
    config: CrowdsourceConfig,
    rng: random.Random,
) -> list[int]:
    """Ranks that broadcast the cohort's crowdsourcing message this round.

    The deterministic variant rotates through the ranks, one per round.
    """
    n = cohort.n
    if config.mode is CrowdsourceMode.DETERMINISTIC:
        return [(round_index % n) + 1]
    return [rank for rank in range(1, n + 1) if rng.random() < config.p]


class V2XClass(StrEnum):
    ECALL = "ecall"
    CROWDSOURCE = "crowdsource"
    EXCLUSION_REPORT = "exclusion_report"
    INFOTAINMENT = "infotainment"
    OTHER = "other"


STEALTH_EXCEPTIONS = frozenset(
    {V2XClass.ECALL, V2XClass.CROWDSOURCE, V2XClass.EXCLUSION_REPORT}
)


@dataclass(frozen=True)
class V2XMessage:
    msg_class: V2XClass
    body: dict = field(default_factory=dict)
    pseudo: str | None = None

    def to_wire(self) -> dict:
        return {"class": self.msg_class.value, "body": self.body, "pseudo": self.pseudo}


def crowdsource_message(
    cohort_length: float, position: float, pseudo: str | None
) -> V2XMessage:
    """What a broadcaster says: how long its cohort is and roughly where it is."""
    return V2XMessage(
        V2XClass.CROWDSOURCE,
        {"cohort_length": round(cohort_length, 1), "position": round(position, 1)},
        pseudo,
    )


def stealth_filter(
    messages: Iterable[V2XMessage], stealth: bool
) -> list[V2XMessage]:
    """Outbound V2X messages a vehicle may emit. N2N traffic never comes here."""
    messages = list(messages)
    if not stealth:
        return messages
    return [m for m in messages if m.msg_class in STEALTH_EXCEPTIONS]


def wave_margin_comparison(
    velocity: float,
    iv_gap: float,
    access_delays: Mapping[str, float] | None = None,
) -> list[tuple[str, SafetyMargin]]:
    """Safety margin of the same iv-gap under several worst-case access delays."""
    if access_delays is None:
        access_delays = {
            "slotted_n2n": MacFrame().frame_duration,
            "contention_v2x": 0.1,
        }
    return [
        (label, safety_margin_check(delay, velocity, iv_gap))
        for label, delay in access_delays.items()
    ]
