"""
Tamper-proof devices, pseudonym issuance and join signatures.

Each vehicle carries one SC-TPD and one NSC-TPD. Cryptography is abstract: a
signature is a validity bit plus a verification delay, and a pseudonym is an
opaque id bound to a pseudonym certificate.
"""

import hashlib
import json
import logging
import random
import re
from collections import deque
from dataclasses import dataclass, field
from enum import StrEnum
from typing import Any

from cohort_avn.errors import AuthUnavailableError, ConfigurationError, ProtocolError

logger = logging.getLogger(__name__)

DEFAULT_SC_POOL = 5000
DEFAULT_VERIFY_DELAY = 0.002
PSEUDO_ID_RE = re.compile(r"^ps-[0-9a-f]{12}$")


class Provenance(StrEnum):
    """Where a state mutation originates."""

    SCC = "SCC"
    SCR = "SCR"
    NSC = "NSC"
    V2X = "V2X"


_SC_WRITERS = frozenset({Provenance.SCC, Provenance.SCR})


class Compartment(StrEnum):
    SC = "SC"
    NSC = "NSC"

    @staticmethod
    def may_write(origin: Provenance, target: "Compartment") -> bool:
        """SC subsystems may write anywhere; NSC and V2X inputs never reach SC state.

        Authenticated V2X data can still be read by SCC, it just cannot be stored
        into SC state or turned into a motion command.
        """
        if target is Compartment.SC:
            return origin in _SC_WRITERS
        return True

    @staticmethod
    def check_write(origin: Provenance, target: "Compartment"):
        if not Compartment.may_write(origin, target):
            raise ProtocolError(f"{origin} event may not write {target} state")


def check_write(origin: Provenance, target: Compartment):
    Compartment.check_write(origin, target)


def evidence_digest(evidence: Any) -> str:
    blob = json.dumps(evidence, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


@dataclass(frozen=True)
class Pseudo:
    pseudo_id: str
    pseudo_certificate: str


@dataclass(frozen=True)
class ViolationEntry:
    timestamp: float
    predicate_id: str
    evidence_digest: str


@dataclass
class TamperProofDevice:
    compartment: Compartment
    certificate_id: str
    pool: deque[Pseudo] = field(default_factory=deque)
    usage_log: dict[str, int] = field(default_factory=dict)
    _violations: list[ViolationEntry] = field(default_factory=list, repr=False)
    in_run: bool = False

    @property
    def violation_log(self) -> tuple[ViolationEntry, ...]:
        return tuple(self._violations)

    @property
    def remaining(self) -> int:
        return len(self.pool)

    @property
    def consumed(self) -> int:
        return len(self.usage_log)

    def take_pseudo(self, day: int = 0, origin: Provenance = Provenance.SCC) -> Pseudo:
        check_write(origin, self.compartment)
        if not self.pool:
            raise AuthUnavailableError(
                f"{self.compartment}-TPD of {self.certificate_id} has no pseudonyms left"
            )
        pseudo = self.pool.popleft()
        self.usage_log[pseudo.pseudo_id] = day
        return pseudo

    def record_violation(
        self, entry: ViolationEntry, origin: Provenance = Provenance.SCC
    ) -> None:
        check_write(origin, self.compartment)
        self._violations.append(entry)

    def replenish(self, pseudos: list[Pseudo], at_secured_place: bool) -> None:
        """Top up the pool. Only allowed at a secured place, never during a run."""
        if not at_secured_place:
            raise ConfigurationError(
                "pseudonyms can only be replenished at a secured place, never on the move"
            )
        self.pool.extend(pseudos)


def replenish(
    tpd: TamperProofDevice,
    count: int,
    at_secured_place: bool,
    authority: "CertificationAuthority | None" = None,
) -> TamperProofDevice:
    if tpd.in_run:
        raise ConfigurationError("a TPD cannot be replenished during a run")
    authority = authority or CertificationAuthority()
    tpd.replenish(authority.issue_pool(count), at_secured_place)
    return tpd


class CertificationAuthority:
    """Registers vehicles once and hands out disjoint pseudonym pools.

    The authority is the only party able to map a reversible certificate back
    to the vehicle it was issued to.
    """

    def __init__(self, rng: random.Random | None = None):
        self.rng = rng or random.Random(0)
        self._issued: set[str] = set()
        self._owners: dict[str, int] = {}

    def _fresh_id(self, prefix: str) -> str:
        while True:
            candidate = f"{prefix}-{self.rng.getrandbits(48):012x}"
            if candidate not in self._issued:
                self._issued.add(candidate)
                return candidate

    def issue_pool(self, count: int) -> list[Pseudo]:
        if count < 0:
            raise ConfigurationError("pseudonym count must be non-negative")
        return [Pseudo(self._fresh_id("ps"), self._fresh_id("pc")) for _ in range(count)]

    def register(
        self, vehicle_id: int, sc_count: int = DEFAULT_SC_POOL, nsc_count: int = 0
    ) -> tuple[TamperProofDevice, TamperProofDevice]:
        certificate_id = self._fresh_id("cert")
        self._owners[certificate_id] = vehicle_id
        sc = TamperProofDevice(
            Compartment.SC, certificate_id, deque(self.issue_pool(sc_count))
        )
        nsc = TamperProofDevice(
            Compartment.NSC, certificate_id, deque(self.issue_pool(nsc_count))
        )
        logger.debug(
            "registered vehicle %s with %d SC and %d NSC pseudonyms",
            vehicle_id,
            sc_count,
            nsc_count,
        )
        return sc, nsc

    def is_issued(self, pseudo_id: str) -> bool:
        return pseudo_id in self._issued

    def resolve(self, certificate_id: str) -> int | None:
        return self._owners.get(certificate_id)


def issue_pseudos(
    count: int,
    authority: CertificationAuthority | None = None,
    compartment: Compartment = Compartment.SC,
) -> TamperProofDevice:
    """A fresh TPD holding ``count`` unused pseudonyms under one certificate."""
    authority = authority or CertificationAuthority()
    return TamperProofDevice(
        compartment, authority._fresh_id("cert"), deque(authority.issue_pool(count))
    )


class JoinKind(StrEnum):
    LG = "lg"
    LT = "lt"


@dataclass(frozen=True)
class SignedJoinRequest:
    """What a joiner puts on the air. It names a pseudonym, never the vehicle."""

    pseudo: Pseudo
    kind: JoinKind
    cohort_id: int
    day: int = 0
    gap_rank: int | None = None
    signature_valid: bool = True


def sign_join(
    tpd: TamperProofDevice,
    kind: JoinKind | str,
    cohort_id: int,
    day: int = 0,
    gap_rank: int | None = None,
) -> SignedJoinRequest:
    if tpd.compartment is not Compartment.SC:
        raise ConfigurationError("join requests are signed by the SC-TPD")
    pseudo = tpd.take_pseudo(day)
    return SignedJoinRequest(pseudo, JoinKind(kind), cohort_id, day, gap_rank)


def forge_request(request: SignedJoinRequest) -> SignedJoinRequest:
    """Same request with a tampered credential."""
    return SignedJoinRequest(
        Pseudo("forged-" + request.pseudo.pseudo_id, request.pseudo.pseudo_certificate),
        request.kind,
        request.cohort_id,
        request.day,
        request.gap_rank,
        signature_valid=False,
    )


@dataclass(frozen=True)
class Verification:
    valid: bool
    delay: float
    replay: bool = False


@dataclass
class PseudonymLedger:
    """Pseudonyms already presented to verifiers, with the day of use."""

    seen: dict[str, int] = field(default_factory=dict)


def verify_join(
    request: SignedJoinRequest,
    ledger: PseudonymLedger | None = None,
    verify_delay: float = DEFAULT_VERIFY_DELAY,
) -> Verification:
    """Check a join signature. The decision is due ``verify_delay`` seconds later."""
    well_formed = bool(PSEUDO_ID_RE.match(request.pseudo.pseudo_id))
    if not (request.signature_valid and well_formed):
        return Verification(valid=False, delay=verify_delay)
    if ledger is not None:
        # a pseudo signs exactly one join, so any second presentation is a replay
        if request.pseudo.pseudo_id in ledger.seen:
            logger.info("replayed pseudonym %s rejected", request.pseudo.pseudo_id)
            return Verification(valid=False, delay=verify_delay, replay=True)
        ledger.seen[request.pseudo.pseudo_id] = request.day
    return Verification(valid=True, delay=verify_delay)


@dataclass(frozen=True)
class PseudoAutonomy:
    days: float
    same_day_reuse: bool


def pseudo_autonomy(pool_size: int, joins_per_day: float) -> PseudoAutonomy:
    """How long an unreplenished SC pool lasts, and whether a day forces reuse."""
    if pool_size < 0 or joins_per_day < 0:
        raise ConfigurationError("pool size and join rate must be non-negative")
    days = float("inf") if joins_per_day == 0 else pool_size / joins_per_day
    return PseudoAutonomy(days=days, same_day_reuse=joins_per_day > pool_size)
