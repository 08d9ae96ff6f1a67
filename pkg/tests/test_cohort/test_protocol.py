"""Tests for cohort membership: joins, splits, leaves and common knowledge."""

import math
import random

import pytest
from hypothesis import HealthCheck, settings
from hypothesis import strategies as st
from hypothesis.stateful import (
    RuleBasedStateMachine,
    initialize,
    invariant,
    rule,
    run_state_machine_as_test,
)

from cohort_avn.cells import RangeConfig, VehicleView, WorldSnapshot
from cohort_avn.cohort.cohort import (
    Cohort,
    CohortPolicy,
    RejectReason,
    admission_check,
)
from cohort_avn.cohort.protocol import (
    change_levels,
    change_velocity,
    leave,
    lg_join,
    lt_join,
    split,
)
from cohort_avn.errors import ConfigurationError, ProtocolError, UnknownVehicleError
from cohort_avn.kinematics import GapPolicy, RoadSegment, required_iv_gap
from cohort_avn.security.tpd import (
    JoinKind,
    Pseudo,
    PseudonymLedger,
    SignedJoinRequest,
    forge_request,
    issue_pseudos,
    sign_join,
)

MAX_COHORTS = 8


def request_for(vid, kind=JoinKind.LG, cohort_id=0):
    return SignedJoinRequest(
        Pseudo(f"ps-{vid:012x}", f"pc-{vid:012x}"), JoinKind(kind), cohort_id
    )


def cohort_of(members, lane=2, velocity=20.0, aul=5, cohort_id=0):
    return Cohort(
        cohort_id=cohort_id,
        lane=lane,
        members=list(members),
        velocity=velocity,
        sl=3,
        hl=5,
        auls=dict.fromkeys(members, aul),
    )


def snapshot_of(road, rows, velocity=20.0):
    """rows of (id, position, lane, aul)."""
    return WorldSnapshot.of(
        road,
        [
            VehicleView(vid, position, lane, velocity=velocity, aul=aul)
            for vid, position, lane, aul in rows
        ],
    )


@pytest.fixture
def four(road):
    """Ranks 1..4 in lane 2 at 298, 284, 270, 256 plus a joiner 16 m behind."""

    def _make(joiner_position=240.0, joiner_lane=2, joiner_aul=5):
        cohort = cohort_of([1, 2, 3, 4])
        rows = [(vid, 298.0 - 14.0 * i, 2, 5) for i, vid in enumerate([1, 2, 3, 4])]
        rows.append((5, joiner_position, joiner_lane, joiner_aul))
        return cohort, snapshot_of(road, rows)

    return _make


@pytest.fixture
def wide(road):
    """Ranks 1..4 in lane 2, 30 m apart at 25 m/s, plus a joiner in lane 1."""

    def _make(joiner_position, joiner_lane=1, joiner_aul=5):
        cohort = cohort_of([1, 2, 3, 4], velocity=25.0)
        rows = [(vid, 200.0 - 30.0 * i, 2, 5) for i, vid in enumerate([1, 2, 3, 4])]
        rows.append((5, joiner_position, joiner_lane, joiner_aul))
        return cohort, snapshot_of(road, rows, velocity=25.0)

    return _make


class TestCohortPolicy:
    def test_n_max_table(self, cohort_policy):
        assert cohort_policy.n_max(10.0) == 24
        assert cohort_policy.n_max(20.0) == 18
        assert cohort_policy.n_max(25.0) == 12
        assert cohort_policy.n_max(45.0) == 8

    def test_bounds_for_founder(self, cohort_policy):
        assert cohort_policy.bounds_for(5) == (3, 5)
        assert cohort_policy.bounds_for(1) == (1, 5)
        assert CohortPolicy(homogeneous=True).bounds_for(4) == (4, 4)

    @pytest.mark.parametrize(
        "kwargs",
        [
            {"sl": 5, "hl": 3},
            {"n_max_by_velocity": ((10.0, 8), (20.0, 12), (math.inf, 4))},
            {"n_max_by_velocity": ((10.0, 8),)},
            {"link_failure_frames": 0},
        ],
    )
    def test_rejects_bad_tables(self, kwargs):
        with pytest.raises(ConfigurationError):
            CohortPolicy(**kwargs)


class TestCohort:
    def test_ranks_follow_member_order(self):
        cohort = cohort_of([7, 3, 9])
        assert [cohort.rank_of(v) for v in (7, 3, 9)] == [1, 2, 3]
        assert cohort.head == 7 and cohort.tail == 9
        assert cohort.member_at(2) == 3
        assert str(cohort.name_of(9)) == "{3,2}"

    def test_unknown_member(self):
        with pytest.raises(UnknownVehicleError):
            cohort_of([1, 2]).rank_of(5)

    def test_common_knowledge_payload(self):
        ck = cohort_of([1, 2, 3]).common_knowledge
        assert ck.to_payload() == "ck:n=3;v=20.000;sl=3;hl=5"

    def test_singleton_takes_policy_window(self, cohort_policy):
        single = Cohort.singleton(4, 12, 1, 22.0, 2, cohort_policy)
        assert single.members == [12]
        assert (single.sl, single.hl) == (2, 5)

    def test_check_invariants_on_a_valid_platoon(self, platoon, cohort_policy):
        cohort, snapshot = platoon()
        assert cohort.check_invariants(cohort_policy, snapshot) == []

    def test_check_invariants_reports_breaks(self, platoon, cohort_policy):
        cohort, snapshot = platoon(n=4)
        cohort.members.reverse()
        cohort.auls[cohort.members[0]] = 1
        problems = cohort.check_invariants(cohort_policy, snapshot)
        assert any("rank order broken" in p for p in problems)
        assert any("outside [SL, HL]" in p for p in problems)


class TestAdmission:
    def test_level_checked_before_size(self):
        policy = CohortPolicy(n_max_by_velocity=((math.inf, 2),))
        cohort = cohort_of([1, 2])
        assert admission_check(1, cohort, policy).reason is RejectReason.LEVEL
        assert admission_check(4, cohort, policy).reason is RejectReason.FULL

    def test_room_left(self, cohort_policy):
        assert admission_check(4, cohort_of([1, 2]), cohort_policy).accepted


class TestLgJoin:
    def test_joiner_becomes_tail(self, four, ranges, cohort_policy):
        cohort, snapshot = four()
        ledger = PseudonymLedger()
        request = sign_join(issue_pseudos(3), "lg", 0)
        decision = lg_join(5, cohort, request, snapshot, ranges, cohort_policy, ledger=ledger)
        assert decision.accepted
        assert decision.rank == 5
        assert decision.verifiers == (4,)
        assert cohort.members == [1, 2, 3, 4, 5]
        assert request.pseudo.pseudo_id in ledger.seen

    def test_existing_member(self, four, ranges, cohort_policy):
        cohort, snapshot = four()
        decision = lg_join(3, cohort, request_for(3), snapshot, ranges, cohort_policy)
        assert decision.reason is RejectReason.MEMBER

    def test_member_of_another_cohort(self, four, ranges, cohort_policy):
        cohort, snapshot = four()
        decision = lg_join(
            5,
            cohort,
            request_for(5),
            snapshot,
            ranges,
            cohort_policy,
            joiner_cohort=cohort_of([5, 6], cohort_id=1),
        )
        assert decision.reason is RejectReason.MEMBER

    def test_out_of_range(self, four, ranges, cohort_policy):
        cohort, snapshot = four(joiner_position=200.0)
        decision = lg_join(5, cohort, request_for(5), snapshot, ranges, cohort_policy)
        assert decision.reason is RejectReason.RANGE
        assert cohort.n == 4

    def test_other_lane(self, four, ranges, cohort_policy):
        cohort, snapshot = four(joiner_lane=1)
        decision = lg_join(5, cohort, request_for(5), snapshot, ranges, cohort_policy)
        assert decision.reason is RejectReason.POSITION

    def test_forged_signature(self, four, ranges, cohort_policy):
        cohort, snapshot = four()
        forged = forge_request(request_for(5))
        decision = lg_join(5, cohort, forged, snapshot, ranges, cohort_policy)
        assert decision.reason is RejectReason.AUTH
        assert not decision.replay
        assert decision.delay == pytest.approx(0.002)

    def test_replayed_pseudonym(self, four, ranges, cohort_policy):
        cohort, snapshot = four()
        request = request_for(5)
        ledger = PseudonymLedger(seen={request.pseudo.pseudo_id: 0})
        decision = lg_join(5, cohort, request, snapshot, ranges, cohort_policy, ledger=ledger)
        assert decision.reason is RejectReason.AUTH
        assert decision.replay

    def test_auth_checked_before_level(self, four, ranges, cohort_policy):
        cohort, snapshot = four(joiner_aul=1)
        forged = forge_request(request_for(5))
        decision = lg_join(5, cohort, forged, snapshot, ranges, cohort_policy)
        assert decision.reason is RejectReason.AUTH

    def test_level_outside_window(self, four, ranges, cohort_policy):
        cohort, snapshot = four(joiner_aul=2)
        decision = lg_join(5, cohort, request_for(5), snapshot, ranges, cohort_policy)
        assert decision.reason is RejectReason.LEVEL

    def test_full_at_n_max(self, four, ranges):
        cohort, snapshot = four()
        policy = CohortPolicy(n_max_by_velocity=((math.inf, 4),))
        decision = lg_join(5, cohort, request_for(5), snapshot, ranges, policy)
        assert decision.reason is RejectReason.FULL
        assert cohort.members == [1, 2, 3, 4]


class TestLtJoin:
    def test_inserts_between_k_and_k_plus_one(self, wide, ranges, gap_policy, cohort_policy):
        cohort, snapshot = wide(joiner_position=155.0)
        decision = lt_join(
            5, cohort, 2, request_for(5, "lt"), snapshot, ranges, gap_policy, cohort_policy
        )
        assert decision.accepted
        assert decision.rank == 3
        assert decision.verifiers == (2, 3)
        assert cohort.members == [1, 2, 5, 3, 4]

    def test_ahead_of_the_head(self, wide, ranges, gap_policy, cohort_policy):
        cohort, snapshot = wide(joiner_position=215.0)
        decision = lt_join(
            5, cohort, 0, request_for(5, "lt"), snapshot, ranges, gap_policy, cohort_policy
        )
        assert decision.accepted
        assert decision.verifiers == (1,)
        assert cohort.head == 5

    def test_gap_too_small(self, wide, ranges, gap_policy, cohort_policy):
        assert required_iv_gap(25.0, 5, gap_policy) == pytest.approx(7.5)
        # 4 m between the joiner's front and rank 2's rear
        cohort, snapshot = wide(joiner_position=170.0 - 4.5 - 4.0)
        decision = lt_join(
            5, cohort, 2, request_for(5, "lt"), snapshot, ranges, gap_policy, cohort_policy
        )
        assert decision.reason is RejectReason.GAP
        assert cohort.n == 4

    def test_lower_level_needs_a_wider_gap(self, wide, ranges, gap_policy, cohort_policy):
        # 10.5 m each side is enough at aul 5 (7.5 m) but not at aul 3 (20 m)
        cohort, snapshot = wide(joiner_position=155.0, joiner_aul=3)
        decision = lt_join(
            5, cohort, 2, request_for(5, "lt"), snapshot, ranges, gap_policy, cohort_policy
        )
        assert decision.reason is RejectReason.GAP

    def test_two_lanes_away(self, ranges, gap_policy, cohort_policy, road):
        cohort = cohort_of([1, 2, 3, 4], lane=1, velocity=25.0)
        rows = [(vid, 200.0 - 30.0 * i, 1, 5) for i, vid in enumerate([1, 2, 3, 4])]
        snapshot = snapshot_of(road, [*rows, (5, 155.0, 3, 5)])
        decision = lt_join(
            5, cohort, 2, request_for(5, "lt"), snapshot, ranges, gap_policy, cohort_policy
        )
        assert decision.reason is RejectReason.POSITION

    def test_verifier_out_of_range(self, wide, gap_policy, cohort_policy):
        cohort, snapshot = wide(joiner_position=155.0)
        tight = RangeConfig(n2n_range=12.0)
        decision = lt_join(
            5, cohort, 2, request_for(5, "lt"), snapshot, tight, gap_policy, cohort_policy
        )
        assert decision.reason is RejectReason.RANGE

    def test_insertion_gap_outside_cohort(self, wide, ranges, gap_policy, cohort_policy):
        cohort, snapshot = wide(joiner_position=155.0)
        with pytest.raises(ProtocolError):
            lt_join(
                5, cohort, 5, request_for(5, "lt"), snapshot, ranges, gap_policy, cohort_policy
            )


class TestSplitAndLeave:
    def test_split_keeps_front_id(self):
        front, rear = split(cohort_of([1, 2, 3, 4, 5]), 2, 9)
        assert (front.cohort_id, front.members) == (0, [1, 2])
        assert (rear.cohort_id, rear.members) == (9, [3, 4, 5])
        assert rear.rank_of(3) == 1
        assert rear.auls == {3: 5, 4: 5, 5: 5}

    @pytest.mark.parametrize("k", [0, 5])
    def test_split_point_must_be_inside(self, k):
        with pytest.raises(ProtocolError):
            split(cohort_of([1, 2, 3, 4, 5]), k, 9)

    def test_middle_leave_of_rank_four_of_nine(self):
        parts = leave(cohort_of(range(1, 10)), 4, 11)
        assert [p.n for p in parts] == [3, 5]
        assert parts[1].head == 5
        assert parts[1].cohort_id == 11

    def test_head_leave_promotes_rank_two(self):
        (rest,) = leave(cohort_of([1, 2, 3]), 1, 11)
        assert rest.cohort_id == 0
        assert rest.head == 2

    def test_last_member_leaves(self):
        assert leave(cohort_of([1]), 1, 11) == []


class TestCommonKnowledgeUpdates:
    def test_velocity_change(self, cohort_policy):
        cohort = cohort_of(range(1, 10))
        assert change_velocity(cohort, 25.0, cohort_policy)
        assert cohort.velocity == 25.0

    def test_velocity_change_refused_when_oversized(self, cohort_policy):
        cohort = cohort_of(range(1, 10))
        assert not change_velocity(cohort, 35.0, cohort_policy)
        assert cohort.velocity == 20.0

    def test_levels_must_cover_members(self, cohort_policy):
        cohort = cohort_of([1, 2, 3], aul=3)
        assert not change_levels(cohort, 4, 5, cohort_policy)
        assert change_levels(cohort, 2, 5, cohort_policy)
        assert (cohort.sl, cohort.hl) == (2, 5)

    def test_homogeneous_levels(self):
        cohort = cohort_of([1, 2, 3], aul=3)
        assert not change_levels(cohort, 3, 5, CohortPolicy(homogeneous=True))
        assert change_levels(cohort, 3, 3, CohortPolicy(homogeneous=True))


class CohortWorld:
    """Up to eight cohorts on a 3-lane road, with ground-truth positions.

    Operations take raw choices and reduce them modulo what exists, so the
    same world can be driven by a seeded RNG or by hypothesis.
    """

    velocities = (15.0, 20.0, 25.0, 30.0, 35.0)

    def __init__(self):
        self.road = RoadSegment(lane_count=3, lane_width=3.5, length=100_000.0)
        self.ranges = RangeConfig()
        self.gap_policy = GapPolicy()
        self.policy = CohortPolicy()
        self.ledger = PseudonymLedger()
        self.where: dict[int, tuple[float, int, int]] = {}
        self.cohorts: dict[int, Cohort] = {}
        self.next_vid = 1
        self.next_cid = 0
        for lane in (1, 2, 3):
            self._found(lane, 50_000.0)

    def _found(self, lane, head_position):
        members = []
        for i in range(4):
            vid = self._vehicle(head_position - 15.0 * i, lane, 4)
            members.append(vid)
        cid = self._cohort_id()
        self.cohorts[cid] = Cohort(cid, lane, members, 20.0, 3, 5, dict.fromkeys(members, 4))

    def _vehicle(self, position, lane, aul):
        vid = self.next_vid
        self.next_vid += 1
        self.where[vid] = (position, lane, aul)
        return vid

    def _cohort_id(self):
        cid = self.next_cid
        self.next_cid += 1
        return cid

    def _pick(self, index):
        ids = sorted(self.cohorts)
        return self.cohorts[ids[index % len(ids)]]

    def snapshot(self):
        return WorldSnapshot.of(
            self.road,
            [
                VehicleView(vid, position, lane, velocity=20.0, aul=aul)
                for vid, (position, lane, aul) in self.where.items()
            ],
        )

    def position(self, vid):
        return self.where[vid][0]

    def lg(self, index, back, aul):
        target = self._pick(index)
        vid = self._vehicle(self.position(target.tail) - back, target.lane, aul)
        request = request_for(vid, JoinKind.LG, target.cohort_id)
        decision = lg_join(
            vid, target, request, self.snapshot(), self.ranges, self.policy, ledger=self.ledger
        )
        if not decision.accepted:
            del self.where[vid]
        return decision

    def lt(self, index, k, side, offset, aul):
        target = self._pick(index)
        k = k % (target.n + 1)
        lane = target.lane + side
        if not self.road.has_lane(lane):
            lane = target.lane - side
        if k == 0:
            position = self.position(target.head) + offset
        elif k == target.n:
            position = self.position(target.tail) - offset
        else:
            front = self.position(target.member_at(k))
            rear = self.position(target.member_at(k + 1))
            position = (front + rear) / 2
        vid = self._vehicle(position, lane, aul)
        request = request_for(vid, JoinKind.LT, target.cohort_id)
        decision = lt_join(
            vid,
            target,
            k,
            request,
            self.snapshot(),
            self.ranges,
            self.gap_policy,
            self.policy,
            ledger=self.ledger,
        )
        if decision.accepted:
            # the lane change completes once the gap is granted
            self.where[vid] = (position, target.lane, aul)
        else:
            del self.where[vid]
        return decision

    def depart(self, index, member_index):
        target = self._pick(index)
        room = len(self.cohorts) < MAX_COHORTS
        if room:
            vid = target.members[member_index % target.n]
        else:
            vid = target.members[0] if member_index % 2 else target.members[-1]
        parts = leave(target, vid, self.next_cid)
        del self.where[vid]
        del self.cohorts[target.cohort_id]
        for part in parts:
            self.cohorts[part.cohort_id] = part
        if len(parts) == 2:
            self.next_cid += 1
        if not self.cohorts:
            self._found(2, 60_000.0)

    def cut(self, index, k):
        target = self._pick(index)
        if target.n < 2 or len(self.cohorts) >= MAX_COHORTS:
            return
        front, rear = split(target, 1 + k % (target.n - 1), self._cohort_id())
        self.cohorts[front.cohort_id] = front
        self.cohorts[rear.cohort_id] = rear

    def retune(self, index, velocity_index):
        change_velocity(
            self._pick(index), self.velocities[velocity_index % len(self.velocities)], self.policy
        )

    def violations(self):
        snapshot = self.snapshot()
        problems = []
        seen: set[int] = set()
        for cohort in self.cohorts.values():
            problems += cohort.check_invariants(self.policy, snapshot)
            ranks = [cohort.rank_of(vid) for vid in cohort.members]
            if ranks != list(range(1, cohort.n + 1)):
                problems.append(f"cohort {cohort.cohort_id} ranks {ranks}")
            if seen & set(cohort.members):
                problems.append(f"cohort {cohort.cohort_id} shares members")
            seen |= set(cohort.members)
        if len(self.cohorts) > MAX_COHORTS:
            problems.append(f"{len(self.cohorts)} cohorts")
        return problems


class TestRankIntegrityFuzz:
    def test_ten_thousand_random_operations(self):
        rng = random.Random(20240613)
        world = CohortWorld()
        accepted = 0
        for step in range(10_000):
            op = rng.choice(("lg", "lg", "lt", "lt", "leave", "split", "velocity"))
            index = rng.randrange(64)
            if op == "lg":
                decision = world.lg(index, rng.uniform(5.0, 35.0), rng.randint(0, 5))
                accepted += decision.accepted
            elif op == "lt":
                decision = world.lt(
                    index,
                    rng.randrange(64),
                    rng.choice((-1, 1)),
                    rng.uniform(5.0, 35.0),
                    rng.randint(0, 5),
                )
                accepted += decision.accepted
            elif op == "leave":
                world.depart(index, rng.randrange(64))
            elif op == "split":
                world.cut(index, rng.randrange(64))
            else:
                world.retune(index, rng.randrange(64))
            assert world.violations() == [], f"after step {step} ({op})"
        assert accepted > 100


class CohortMachine(RuleBasedStateMachine):
    @initialize()
    def setup(self):
        self.world = CohortWorld()

    @rule(
        index=st.integers(0, 63),
        back=st.floats(1.0, 40.0),
        aul=st.integers(0, 5),
    )
    def tail_join(self, index, back, aul):
        self.world.lg(index, back, aul)

    @rule(
        index=st.integers(0, 63),
        k=st.integers(0, 63),
        side=st.sampled_from((-1, 1)),
        offset=st.floats(1.0, 40.0),
        aul=st.integers(0, 5),
    )
    def lateral_join(self, index, k, side, offset, aul):
        self.world.lt(index, k, side, offset, aul)

    @rule(index=st.integers(0, 63), member=st.integers(0, 63))
    def member_leaves(self, index, member):
        self.world.depart(index, member)

    @rule(index=st.integers(0, 63), k=st.integers(0, 63))
    def link_fails(self, index, k):
        self.world.cut(index, k)

    @rule(index=st.integers(0, 63), velocity=st.integers(0, 4))
    def velocity_update(self, index, velocity):
        self.world.retune(index, velocity)

    @invariant()
    def cohorts_stay_valid(self):
        assert self.world.violations() == []


class TestCohortStateMachine:
    def test_membership_state_machine(self):
        run_state_machine_as_test(
            CohortMachine,
            settings=settings(
                max_examples=50,
                stateful_step_count=40,
                deadline=None,
                suppress_health_check=list(HealthCheck),
            ),
        )
