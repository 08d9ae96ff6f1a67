"""Membership primitives: LgJoin, LtJoin, split, leave and common-knowledge updates."""

import logging
from dataclasses import replace

from cohort_avn.cells import RangeConfig, RangeKind, WorldSnapshot, in_range
from cohort_avn.cohort.cohort import (
    Cohort,
    CohortPolicy,
    JoinDecision,
    RejectReason,
    admission_check,
)
from cohort_avn.errors import ProtocolError
from cohort_avn.kinematics import GapPolicy, required_iv_gap
from cohort_avn.security.tpd import (
    DEFAULT_VERIFY_DELAY,
    PseudonymLedger,
    SignedJoinRequest,
    verify_join,
)

logger = logging.getLogger(__name__)


def _authenticate(
    request: SignedJoinRequest,
    ledger: PseudonymLedger | None,
    verify_delay: float,
    verifiers: tuple[int, ...],
) -> JoinDecision | None:
    verification = verify_join(request, ledger, verify_delay)
    if verification.valid:
        return None
    return JoinDecision.reject(
        RejectReason.AUTH,
        verifiers=verifiers,
        delay=verification.delay,
        replay=verification.replay,
    )


def lg_join(
    joiner: int,
    target: Cohort,
    request: SignedJoinRequest,
    snapshot: WorldSnapshot,
    ranges: RangeConfig,
    policy: CohortPolicy,
    *,
    joiner_cohort: Cohort | None = None,
    ledger: PseudonymLedger | None = None,
    verify_delay: float = DEFAULT_VERIFY_DELAY,
) -> JoinDecision:
    """A vehicle catching up with the tail asks to become rank n + 1.

    The tail verifies the request. On acceptance ``target`` is updated in
    place; on rejection nothing changes.
    """
    verifiers = (target.n,)
    if joiner in target or (joiner_cohort is not None and joiner_cohort.n > 1):
        return JoinDecision.reject(RejectReason.MEMBER, verifiers=verifiers)
    if not in_range(joiner, target.tail, RangeKind.N2N, snapshot, ranges):
        return JoinDecision.reject(RejectReason.RANGE, verifiers=verifiers)
    me, tail = snapshot.get(joiner), snapshot.get(target.tail)
    if me.lane != target.lane or snapshot.road.delta(tail.position, me.position) >= 0:
        return JoinDecision.reject(RejectReason.POSITION, verifiers=verifiers)
    rejected = _authenticate(request, ledger, verify_delay, verifiers)
    if rejected is not None:
        return rejected
    admission = admission_check(me.aul, target, policy)
    if not admission.accepted:
        return replace(admission, verifiers=verifiers, delay=verify_delay)

    target.members.append(joiner)
    target.auls[joiner] = me.aul
    logger.debug("vehicle %s joined cohort %s as tail", joiner, target.cohort_id)
    return JoinDecision(True, rank=target.n, verifiers=verifiers, delay=verify_delay)


def lt_join(
    joiner: int,
    target: Cohort,
    k: int,
    request: SignedJoinRequest,
    snapshot: WorldSnapshot,
    ranges: RangeConfig,
    gap_policy: GapPolicy,
    policy: CohortPolicy,
    *,
    joiner_cohort: Cohort | None = None,
    ledger: PseudonymLedger | None = None,
    verify_delay: float = DEFAULT_VERIFY_DELAY,
) -> JoinDecision:
    """A vehicle in an adjacent lane asks to slot in between ranks k and k + 1.

    ``k = 0`` inserts ahead of the head and ``k = n`` behind the tail. Ranks k
    and k + 1 (those that exist) verify the request and must both see an
    iv-gap large enough for the joiner's automation level.
    """
    if not 0 <= k <= target.n:
        raise ProtocolError(f"insertion gap {k} outside 0..{target.n}")
    verifiers = tuple(r for r in (k, k + 1) if 1 <= r <= target.n)
    if joiner in target or (joiner_cohort is not None and joiner_cohort.n > 1):
        return JoinDecision.reject(RejectReason.MEMBER, verifiers=verifiers)
    me = snapshot.get(joiner)
    if abs(me.lane - target.lane) != 1:
        return JoinDecision.reject(RejectReason.POSITION, verifiers=verifiers)
    neighbours = [target.member_at(r) for r in verifiers]
    if not all(
        in_range(joiner, vid, RangeKind.N2N, snapshot, ranges) for vid in neighbours
    ):
        return JoinDecision.reject(RejectReason.RANGE, verifiers=verifiers)

    road = snapshot.road
    needed = required_iv_gap(target.velocity, me.aul, gap_policy)
    if k >= 1:
        front = snapshot.get(target.member_at(k))
        if road.delta(me.position, front.position) - front.length < needed:
            return JoinDecision.reject(RejectReason.GAP, verifiers=verifiers)
    if k < target.n:
        rear = snapshot.get(target.member_at(k + 1))
        if road.delta(rear.position, me.position) - me.length < needed:
            return JoinDecision.reject(RejectReason.GAP, verifiers=verifiers)

    rejected = _authenticate(request, ledger, verify_delay, verifiers)
    if rejected is not None:
        return rejected
    admission = admission_check(me.aul, target, policy)
    if not admission.accepted:
        return replace(admission, verifiers=verifiers, delay=verify_delay)

    target.members.insert(k, joiner)
    target.auls[joiner] = me.aul
    logger.debug(
        "vehicle %s joined cohort %s at rank %d", joiner, target.cohort_id, k + 1
    )
    return JoinDecision(True, rank=k + 1, verifiers=verifiers, delay=verify_delay)


def _part(cohort: Cohort, cohort_id: int, members: list[int]) -> Cohort:
    return Cohort(
        cohort_id=cohort_id,
        lane=cohort.lane,
        members=list(members),
        velocity=cohort.velocity,
        sl=cohort.sl,
        hl=cohort.hl,
        auls={vid: cohort.auls[vid] for vid in members},
    )


def split(cohort: Cohort, k: int, new_id: int) -> tuple[Cohort, Cohort]:
    """Cut the cohort at the failed link between ranks k and k + 1.

    The front part keeps the cohort id; the rear part gets ``new_id`` and its
    old rank k + 1 becomes head.
    """
    if not 1 <= k < cohort.n:
        raise ProtocolError(f"split point {k} outside 1..{cohort.n - 1}")
    return (
        _part(cohort, cohort.cohort_id, cohort.members[:k]),
        _part(cohort, new_id, cohort.members[k:]),
    )


def leave(cohort: Cohort, vehicle_id: int, new_id: int) -> list[Cohort]:
    """Remove a member. A middle member leaving splits the cohort in two."""
    rank = cohort.rank_of(vehicle_id)
    front = cohort.members[: rank - 1]
    rear = cohort.members[rank:]
    if front and rear:
        return [_part(cohort, cohort.cohort_id, front), _part(cohort, new_id, rear)]
    remaining = front or rear
    return [_part(cohort, cohort.cohort_id, remaining)] if remaining else []


def change_velocity(cohort: Cohort, velocity: float, policy: CohortPolicy) -> bool:
    """Adopt a new common velocity unless the cohort would become oversized."""
    if velocity < 0 or cohort.n > policy.n_max(velocity):
        return False
    cohort.velocity = velocity
    return True


def change_levels(cohort: Cohort, sl: int, hl: int, policy: CohortPolicy) -> bool:
    """Head-initiated change of [SL, HL]; members must all stay inside it."""
    if sl > hl or (policy.homogeneous and sl != hl):
        return False
    if any(not sl <= aul <= hl for aul in cohort.auls.values()):
        return False
    cohort.sl, cohort.hl = sl, hl
    return True
