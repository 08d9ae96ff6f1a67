"""
The scenario engine.

``HighwayModel`` interleaves fixed kinematic ticks (one mesa step each) with
event-driven protocol work at slot boundaries. Protocol work items sit in a
heap ordered by (time in microseconds, vehicle id, action, insertion order)
and every random draw is taken from ``self.random`` in that order, so a run
is a pure function of (scenario, seed).

Within a tick, protocol work sees the world as it was at the start of the
tick. A member's transmit rank is fixed at the start of each frame; a member
renumbered mid-frame sits the rest of that frame out.
"""

import logging
import math
from collections import defaultdict

from mesa import Model

from cohort_avn.analysis import (
    V2XClass,
    V2XMessage,
    crowdsource_message,
    crowdsource_round,
    stealth_filter,
)
from cohort_avn.cells import WorldSnapshot, compute_cell
from cohort_avn.cohort.cohort import Cohort, JoinDecision, RejectReason
from cohort_avn.cohort.protocol import change_velocity, leave, lg_join, lt_join, split
from cohort_avn.errors import AuthUnavailableError, InvariantViolation, ProtocolError
from cohort_avn.kinematics import KinematicState, required_ic_gap, required_iv_gap
from cohort_avn.mac import (
    SlotVerdict,
    TxRecord,
    check_slot_ownership,
    detect_sybil,
    to_seconds,
    to_us,
)
from cohort_avn.messaging.acceptance import (
    EchoGroupPolicy,
    Flag,
    FlagKind,
    InboxEvent,
    ReceiveResult,
    expire,
    lt_receive,
)
from cohort_avn.messaging.message import (
    Direction,
    HopKind,
    MessageKey,
    N2NMessage,
    digest_of,
)
from cohort_avn.messaging.primitives import designate_lateral, lg_send, lt_send
from cohort_avn.naming import Channel, Name
from cohort_avn.recording.record_model import record_model
from cohort_avn.security.attacks import AttackKind, behaviour_for
from cohort_avn.security.exclusion import execute_stop
from cohort_avn.security.predicates import (
    LocalEvent,
    PredicateEngine,
    SendActivation,
    SilenceReport,
    evaluate_predicates,
)
from cohort_avn.security.tpd import (
    CertificationAuthority,
    Compartment,
    JoinKind,
    Provenance,
    PseudonymLedger,
    check_write,
    evidence_digest,
    forge_request,
    sign_join,
)
from cohort_avn.sim.agent import LateralDuty, VehicleAgent
from cohort_avn.sim.channel import Airborne, ChannelOutcome, channel_deliver
from cohort_avn.sim.events import Action, EventCode, EventQueue, QueuedEvent
from cohort_avn.sim.metrics import AttackEvent, RunMetrics, StopRecord
from cohort_avn.sim.scenario import (
    JoinEvent,
    LateralEvent,
    LeaveEvent,
    MessageEvent,
    Scenario,
    V2XEvent,
    VelocityEvent,
)

logger = logging.getLogger(__name__)

MAX_ACCEL = 2.0
SPEED_GAIN = 1.0


def key_list(key: MessageKey | None) -> list | None:
    if key is None:
        return None
    r, j, frame, channel = key
    return [r, j, frame, Channel(channel).value]


def _clip(value: float, low: float, high: float) -> float:
    return max(low, min(high, value))


@record_model
class HighwayModel(Model):
    """
    One scenario run.

    Attributes:
        vehicles: vehicle id -> agent, in id order.
        cohorts: cohort id -> cohort; every vehicle still driving belongs to
            exactly one, unaffiliated vehicles being singletons.
        membership: vehicle id -> cohort id.
        queue: pending protocol work.
        metrics: counters reported at the end of the run.
        stops: one record per excluded vehicle.
        attack_events: every attack action taken, with its detection status.
    """

    def __init__(
        self,
        scenario: Scenario,
        seed: int | None = None,
        checked: bool | None = None,
    ):
        seed = scenario.seed if seed is None else seed
        super().__init__(seed=seed)
        self.scenario = scenario
        self.seed = seed
        self.checked = scenario.checked if checked is None else checked

        self.road = scenario.road.build()
        self.ranges = scenario.ranges.build()
        self.gap_policy = scenario.gap_policy.build()
        self.cohort_policy = scenario.cohort_policy.build()
        self.frame = scenario.mac.build()
        self.loss = scenario.loss.build()
        self.crowd_config = scenario.crowdsource.build()
        self.security = scenario.security
        self.lateral_policy = EchoGroupPolicy()
        self.position_noise = scenario.ranges.position_noise

        self.dt = scenario.dt
        self.tick_us = to_us(scenario.dt)
        self.end_us = to_us(scenario.duration)
        self.now_us = 0
        epoch_us = self.frame.epoch_us
        self.frame_no = 0 if epoch_us >= 0 else -(epoch_us // self.frame.frame_us)

        self.queue = EventQueue()
        self.metrics = RunMetrics(slots_per_frame=self.frame.slots_per_frame)
        self.authority = CertificationAuthority(self.random)
        self.ledger = PseudonymLedger()
        self.vehicles: dict[int, VehicleAgent] = {}
        self.cohorts: dict[int, Cohort] = {}
        self.membership: dict[int, int] = {}
        self.stops: list[StopRecord] = []
        self.attack_events: list[AttackEvent] = []
        self._snapshot: WorldSnapshot | None = None
        self._colliding: set[tuple[int, int]] = set()
        self._frame_records: dict[int, list[TxRecord]] = defaultdict(list)
        self._origin_tx: dict[tuple[int, MessageKey], int] = {}
        self._bogus = {spec.bogus_payload for spec in scenario.attacks}

        attacks = {spec.attacker: spec for spec in scenario.attacks}
        skew_us = to_us(scenario.mac.clock_skew)
        for spec in sorted(scenario.vehicles, key=lambda s: s.id):
            sc_tpd, nsc_tpd = self.authority.register(
                spec.id, spec.sc_pool, spec.nsc_pool
            )
            sc_tpd.in_run = nsc_tpd.in_run = True
            attack = attacks.get(spec.id)
            self.vehicles[spec.id] = VehicleAgent(
                self,
                spec.id,
                KinematicState(spec.position, spec.lane, spec.velocity),
                spec.aul,
                length=spec.length,
                stealth=spec.stealth,
                n2n=spec.n2n,
                sc_tpd=sc_tpd,
                nsc_tpd=nsc_tpd,
                predicates=PredicateEngine(
                    self.frame,
                    self.security.min_separation,
                    self.security.silence_frames,
                ),
                timeout_frames=scenario.messaging.timeout_frames,
                attack=behaviour_for(attack) if attack is not None else None,
                clock_skew_us=self.random.randint(0, skew_us) if skew_us else 0,
            )

        for spec in scenario.cohorts:
            head = self.vehicles[spec.members[0]]
            self._add_cohort(
                Cohort(
                    cohort_id=spec.id,
                    lane=spec.lane,
                    members=list(spec.members),
                    velocity=(
                        head.state.velocity if spec.velocity is None else spec.velocity
                    ),
                    sl=self.cohort_policy.sl if spec.sl is None else spec.sl,
                    hl=self.cohort_policy.hl if spec.hl is None else spec.hl,
                    auls={vid: self.vehicles[vid].aul for vid in spec.members},
                )
            )
        self._next_cohort_id = max(self.cohorts, default=-1) + 1
        for vid, agent in self.vehicles.items():
            if vid not in self.membership:
                self._add_cohort(self._singleton(agent))
        for cohort in self.cohorts.values():
            for rank, vid in enumerate(cohort.members, start=1):
                self.vehicles[vid].renumber(rank, cohort.lane, self.frame_no)

        self.queue.push(self.frame.frame_start_us(self.frame_no), Action.FRAME, payload=self.frame_no)
        for event in scenario.events:
            self.queue.push(
                to_us(event.time),
                Action.SCRIPT,
                getattr(event, "vehicle", -1),
                event,
            )
        if scenario.crowdsource.enabled:
            self.queue.push(to_us(scenario.crowdsource.period), Action.CROWD_ROUND, payload=0)

        self._handlers = {
            Action.FRAME: self._on_frame,
            Action.JOIN_DECIDE: self._on_join_decide,
            Action.SCRIPT: self._on_script,
            Action.CROWD_ROUND: self._on_crowd_round,
            Action.SLOT_LG: self._on_slot_lg,
            Action.ROGUE: self._on_rogue,
            Action.SLOT_LT: self._on_slot_lt,
        }
        self._scripts = {
            JoinEvent: self._script_join,
            MessageEvent: self._script_message,
            LateralEvent: self._script_lateral,
            LeaveEvent: self._script_leave,
            VelocityEvent: self._script_velocity,
            V2XEvent: self._script_v2x,
        }
        logger.info(
            "scenario %s: %d vehicles in %d cohorts, seed %s",
            scenario.name,
            len(self.vehicles),
            len(self.cohorts),
            seed,
        )

    # ----------------------------------------------------------------- clock

    def step(self):
        """Process protocol work due within the next tick, then move every vehicle."""
        tick_start = self.now_us
        limit = min(tick_start + self.tick_us, self.end_us)
        while self.queue and self.queue.peek_time() < limit:
            item = self.queue.pop()
            self.now_us = item.time_us
            self._handlers[item.action](item)
            if self.checked:
                self.check_invariants(item)
        self.now_us = tick_start
        self._control()
        self.agents.do("advance", self.dt)
        self.now_us = tick_start + self.tick_us
        self._snapshot = None
        self._count_collisions()
        if self.checked:
            self.check_invariants(Action.TICK)

    def run_model(self):
        while self.now_us < self.end_us:
            self.step()
        self.running = False
        self._finish()

    # ----------------------------------------------------------------- world

    def snapshot(self) -> WorldSnapshot:
        if self._snapshot is None:
            self._snapshot = WorldSnapshot.of(
                self.road,
                [agent.view() for agent in self.vehicles.values() if agent.active],
                to_seconds(self.now_us),
            )
        return self._snapshot

    def sensed_snapshot(self) -> WorldSnapshot:
        """The world as on-board sensors see it; draws only when noise is set."""
        return self.snapshot().perturbed(self.random, self.position_noise)

    def cohort_of(self, vehicle_id: int) -> Cohort:
        return self.cohorts[self.membership[vehicle_id]]

    def _rank(self, vehicle_id: int) -> int | None:
        if vehicle_id not in self.membership:
            return None
        return self.cohort_of(vehicle_id).rank_of(vehicle_id)

    def _is_attacker(self, vehicle_id: int) -> bool:
        return self.vehicles[vehicle_id].attack is not None

    def _trace(self, code: EventCode, subject: int, detail: dict | None = None):
        self.recorder.record(code, subject, detail)

    # --------------------------------------------------------------- cohorts

    def _new_cohort_id(self) -> int:
        cohort_id = self._next_cohort_id
        self._next_cohort_id += 1
        return cohort_id

    def _singleton(self, agent: VehicleAgent) -> Cohort:
        return Cohort.singleton(
            self._new_cohort_id(),
            agent.vehicle_id,
            agent.state.lane,
            agent.state.velocity,
            agent.aul,
            self.cohort_policy,
        )

    def _add_cohort(self, cohort: Cohort):
        self.cohorts[cohort.cohort_id] = cohort
        for vid in cohort.members:
            self.membership[vid] = cohort.cohort_id

    def _renumber(self, cohort: Cohort):
        self._trace(
            EventCode.RENUM,
            cohort.cohort_id,
            {"members": list(cohort.members), "lane": cohort.lane},
        )
        for rank, vid in enumerate(cohort.members, start=1):
            agent = self.vehicles[vid]
            state = agent.relay.state
            if (state.rank, state.lane) != (rank, cohort.lane):
                agent.renumber(rank, cohort.lane, self.frame_no)

    def _reshape(self, old: Cohort, parts: list[Cohort], cut_rank: int):
        """Replace ``old`` by ``parts``; two parts mean the cohort split after ``cut_rank``."""
        del self.cohorts[old.cohort_id]
        if len(parts) == 2:
            self.metrics.splits += 1
            self._trace(
                EventCode.SPLIT,
                old.cohort_id,
                {"after_rank": cut_rank, "new_cohort": parts[1].cohort_id},
            )
        for part in parts:
            self._add_cohort(part)
            self._renumber(part)
        self._snapshot = None

    def _detach(self, vehicle_id: int, reason: str) -> Cohort:
        """Take a vehicle out of its cohort; the rest is renumbered."""
        cohort = self.cohort_of(vehicle_id)
        rank = cohort.rank_of(vehicle_id)
        self._trace(
            EventCode.LEAVE, vehicle_id, {"cohort": cohort.cohort_id, "reason": reason}
        )
        new_id = self._new_cohort_id() if 1 < rank < cohort.n else cohort.cohort_id
        parts = leave(cohort, vehicle_id, new_id)
        del self.membership[vehicle_id]
        self._reshape(cohort, parts, rank - 1)
        return cohort

    # ----------------------------------------------------------------- frame

    def _on_frame(self, item: QueuedEvent):
        f = item.payload
        self.frame_no = f
        self.metrics.frames += 1
        self._frame_records.clear()
        for agent in self.vehicles.values():
            if not agent.active:
                continue
            for flag in agent.relay.on_frame_start(f, item.time_us):
                self._flag(agent, flag)
            for flag in expire(agent.lateral, f, item.time_us):
                self._flag(agent, flag)
        self._check_links(f)
        self._check_silence(f)

        for cohort_id in sorted(self.cohorts):
            cohort = self.cohorts[cohort_id]
            for rank, vid in enumerate(cohort.members, start=1):
                agent = self.vehicles[vid]
                agent.tx_rank = rank
                if not agent.n2n:
                    continue
                self.queue.push(
                    self.frame.slot_start_us(f, rank, Channel.LONGITUDINAL),
                    Action.SLOT_LG,
                    vid,
                    (f, rank),
                )
                if agent.attack is not None:
                    self._schedule_attack(agent, cohort, rank, f)
                if any(duty.frame <= f for duty in agent.lateral_duties):
                    self.queue.push(
                        self.frame.slot_start_us(f, rank, Channel.LATERAL),
                        Action.SLOT_LT,
                        vid,
                        (f, rank),
                    )

        following = self.frame.frame_start_us(f + 1)
        if following < self.end_us:
            self.queue.push(following, Action.FRAME, payload=f + 1)

    def _check_links(self, f: int):
        """Split cohorts at links whose front member went silent for F frames."""
        limit = self.cohort_policy.link_failure_frames
        failures = []
        for cohort_id in sorted(self.cohorts):
            cohort = self.cohorts[cohort_id]
            for rank in range(2, cohort.n + 1):
                agent = self.vehicles[cohort.member_at(rank)]
                if f - agent.front_heard > limit:
                    failures.append((cohort_id, rank))
                    break
        for cohort_id, rank in failures:
            cohort = self.cohorts[cohort_id]
            rear = self.vehicles[cohort.member_at(rank)]
            self.metrics.link_failures += 1
            self._trace(
                EventCode.LINK_FAIL,
                rear.vehicle_id,
                {
                    "cohort": cohort_id,
                    "rank": rank,
                    "silent_frames": f - rear.front_heard - 1,
                },
            )
            parts = split(cohort, rank - 1, self._new_cohort_id())
            self._reshape(cohort, list(parts), rank - 1)

    def _check_silence(self, f: int):
        """Feed SCR silence reports for sensed in-range cell members to P3."""
        snapshot = self.snapshot()
        for vid, agent in self.vehicles.items():
            if not agent.active or not agent.n2n:
                continue
            me = snapshot.get(vid)
            channel_active = agent.heard_any >= f - 1
            counts = {}
            for other in compute_cell(vid, snapshot, self.ranges).members:
                if snapshot.distance(vid, other) > self.ranges.n2n_range:
                    continue
                heard = agent.heard.get(other, -math.inf) >= f - 1
                counts[other] = 0 if heard else agent.silence.get(other, 0) + 1
                if (
                    counts[other] >= self.security.silence_frames
                    and channel_active
                    and other not in agent.silence_reported
                ):
                    agent.silence_reported.add(other)
                    view = snapshot.get(other)
                    offset = self.road.delta(me.position, view.position)
                    self._evaluate(
                        agent,
                        SilenceReport(
                            time=to_seconds(self.now_us),
                            neighbor=f"lane {view.lane} at {offset:+.1f} m",
                            silent_frames=counts[other],
                        ),
                    )
            agent.silence = counts

    # ----------------------------------------------------------------- slots

    def _burst(self, agent: VehicleAgent, f: int):
        """Slot-occupancy burst heard by every active vehicle in N2N range."""
        snapshot = self.snapshot()
        vid = agent.vehicle_id
        me = snapshot.get(vid)
        copies = [
            Airborne(vid, other, None)
            for other, view in snapshot.vehicles.items()
            if other != vid
            and abs(self.road.delta(me.position, view.position))
            <= self.ranges.n2n_range
        ]
        cohort = self.cohort_of(vid)
        rank = cohort.rank_of(vid)
        rear = cohort.member_at(rank + 1) if rank < cohort.n else None
        for copy in channel_deliver(
            copies, snapshot, self.loss, self.random, self.ranges
        ).delivered:
            listener = self.vehicles[copy.receiver]
            listener.heard[vid] = f
            listener.heard_any = f
            if copy.receiver == rear:
                listener.front_heard = f

    def _on_slot_lg(self, item: QueuedEvent):
        f, rank = item.payload
        agent = self.vehicles[item.vehicle_id]
        if not agent.active or self._rank(agent.vehicle_id) != rank:
            return
        vid = agent.vehicle_id
        cohort = self.cohort_of(vid)
        self._burst(agent, f)
        before = set(agent.relay.transmitted)
        message = agent.relay.next_message(f, item.time_us + agent.clock_skew_us)
        if agent.attack is not None:
            self._note_relay_attack(agent, before, message, f)
        if message is None:
            return
        if message.hop is HopKind.DIRECT and message.origin == agent.name:
            self._origin_tx[(cohort.cohort_id, message.key)] = message.tx_time_us
        self.metrics.lg_transmissions += 1
        self._trace(EventCode.N2N_TX, vid, message.to_wire())
        copies = [
            Airborne(vid, cohort.member_at(tx.target_rank), message)
            for tx in lg_send(message, cohort.n)
        ]
        self._deliver_lg(copies, f)
        self._send_activation(agent, Channel.LONGITUDINAL, item.time_us, rank)

    def _on_slot_lt(self, item: QueuedEvent):
        f, rank = item.payload
        agent = self.vehicles[item.vehicle_id]
        if not agent.active or self._rank(agent.vehicle_id) != rank:
            return
        due = [duty for duty in agent.lateral_duties if duty.frame <= f]
        if not due:
            return
        duty = due[0]
        agent.lateral_duties.remove(duty)
        vid = agent.vehicle_id
        message = N2NMessage(
            sender=agent.name,
            origin=duty.origin,
            origin_frame=duty.origin_frame,
            channel=Channel.LATERAL,
            payload=duty.payload,
            hop=duty.hop,
            direction=Direction.BOTH,
            tx_time_us=item.time_us + agent.clock_skew_us,
        )
        self.metrics.lt_transmissions += 1
        self._trace(EventCode.N2N_TX, vid, message.to_wire())
        copies = [
            Airborne(vid, tx.target_vehicle, message)
            for tx in lt_send(message, list(duty.designated))
        ]
        outcome = self._transmit(copies)
        rx_us = item.time_us + self.frame.tx_us
        for copy in outcome.delivered:
            receiver = self.vehicles[copy.receiver]
            if not receiver.active:
                continue
            result = lt_receive(
                receiver.lateral, InboxEvent(message, rx_us, f), self.lateral_policy
            )
            self._handle_result(receiver, result, rx_us, None)
        self._send_activation(agent, Channel.LATERAL, item.time_us, rank)

    def _transmit(self, copies: list[Airborne]) -> ChannelOutcome:
        outcome = channel_deliver(
            copies, self.snapshot(), self.loss, self.random, self.ranges
        )
        self.metrics.n2n_transmitted += len(copies)
        self.metrics.n2n_delivered += len(outcome.delivered)
        self.metrics.n2n_lost += len(outcome.lost)
        self.metrics.n2n_out_of_range += len(outcome.out_of_range)
        return outcome

    def _deliver_lg(self, copies: list[Airborne[N2NMessage]], f: int):
        for copy in self._transmit(copies).delivered:
            self._receive_lg(copy.receiver, copy.sender, copy.payload, f)

    def _receive_lg(self, receiver_id: int, sender_id: int, message: N2NMessage, f: int):
        receiver = self.vehicles[receiver_id]
        if not receiver.active:
            return
        cohort = self.cohort_of(receiver_id)
        if sender_id not in cohort:
            self.metrics.n2n_foreign += 1
            return
        record = TxRecord(
            sender=message.sender,
            channel=message.channel,
            tx_time=to_seconds(message.tx_time_us),
            payload_digest=message.digest,
            sensed_rank=cohort.rank_of(sender_id),
        )
        records = self._frame_records[receiver_id]
        records.append(record)
        check = check_slot_ownership(record, message.sender.r, self.frame, cohort.n)
        verdict = check.verdict
        if check.ok and record in detect_sybil(records, self.frame):
            verdict = SlotVerdict.SYBIL
        if verdict is not SlotVerdict.OK:
            self.metrics.mac_violations += 1
            if not self._is_attacker(sender_id):
                self.metrics.false_positives += 1
            self._trace(
                EventCode.MAC_VIOLATION,
                receiver_id,
                {
                    "verdict": verdict.value,
                    "emitter": sender_id,
                    "claimed": message.sender.as_list(),
                    "slot_owner": check.slot_owner,
                    "frame": f,
                },
            )
            return
        rx_us = message.tx_time_us + self.frame.tx_us
        result = receiver.relay.on_receive(InboxEvent(message, rx_us, f))
        self._handle_result(receiver, result, rx_us, cohort)

    def _handle_result(
        self,
        receiver: VehicleAgent,
        result: ReceiveResult,
        rx_us: int,
        cohort: Cohort | None,
    ):
        vid = receiver.vehicle_id
        for key, payload in result.accepted:
            self.metrics.n2n_accepted += 1
            if payload in self._bogus and receiver.attack is None:
                self.metrics.forged_accepted += 1
                logger.warning("vehicle %s accepted a forged payload", vid)
            if cohort is not None:
                origin_tx = self._origin_tx.get((cohort.cohort_id, key))
                if origin_tx is not None:
                    self.metrics.latencies.append(
                        math.ceil((rx_us - origin_tx) / self.frame.frame_us)
                    )
            self._trace(
                EventCode.N2N_ACCEPT,
                vid,
                {"key": key_list(key), "payload_digest": digest_of(payload)},
            )
        for flag in result.flags:
            self._flag(receiver, flag)

    def _flag(self, agent: VehicleAgent, flag: Flag):
        self.metrics.n2n_flags += 1
        self._trace(
            EventCode.N2N_FLAG,
            agent.vehicle_id,
            {
                "kind": flag.kind.value,
                "key": key_list(flag.key),
                "suspects": [name.as_list() for name in flag.suspects],
            },
        )

    # ------------------------------------------------------------ predicates

    def _send_activation(
        self, agent: VehicleAgent, channel: Channel, time_us: int, rank: int
    ):
        self._evaluate(agent, SendActivation(channel, to_seconds(time_us), rank))

    def _evaluate(self, agent: VehicleAgent, event: LocalEvent):
        violations = evaluate_predicates(agent.sc_tpd, event, agent.predicates)
        for violation in violations:
            self.metrics.tpd_violations += 1
            if violation.stops and agent.attack is None:
                self.metrics.false_positives += 1
            self._trace(
                EventCode.TPD_VIOLATION,
                agent.vehicle_id,
                {
                    "predicate": violation.predicate_id,
                    "evidence_digest": evidence_digest(violation.evidence),
                    "stops": violation.stops,
                },
            )
        if any(violation.stops for violation in violations):
            self._stop(agent)

    def _stop(self, agent: VehicleAgent):
        if not agent.active:
            return
        vid = agent.vehicle_id
        cohort = self.cohort_of(vid)
        predicates = sorted({entry.predicate_id for entry in agent.sc_tpd.violation_log})
        self.metrics.stops += 1
        self._trace(
            EventCode.STOP,
            vid,
            {"predicates": predicates, "velocity": round(agent.state.velocity, 3)},
        )
        outcome = execute_stop(
            agent.state,
            agent.sc_tpd,
            agent.nsc_tpd,
            stop_decel=self.security.stop_decel,
            dt=self.dt,
            day=self.security.day,
            recipients=tuple(self.security.recipients),
        )
        self._detach(vid, "stop")
        agent.begin_stop(self.security.stop_decel)
        self._snapshot = None
        report = outcome.report
        self.stops.append(
            StopRecord(
                vid,
                outcome.trajectory,
                report,
                self.authority.resolve(report.certificate_id),
            )
        )
        self.metrics.exclusion_reports += 1
        self._emit_v2x(
            agent,
            V2XMessage(
                V2XClass.EXCLUSION_REPORT, report.to_wire(), report.signature_pseudo
            ),
            EventCode.EXCL_REPORT,
        )

    # --------------------------------------------------------------- attacks

    def _attack_event(
        self, agent: VehicleAgent, f: int, key: MessageKey | None, detail: dict
    ):
        kind = agent.attack.spec.kind
        self.attack_events.append(AttackEvent(kind, agent.vehicle_id, f, key))
        self.metrics.attack_events[kind] += 1
        self._trace(
            EventCode.ATTACK,
            agent.vehicle_id,
            {"kind": kind.value, "frame": f, "key": key_list(key), **detail},
        )

    def _schedule_attack(self, agent: VehicleAgent, cohort: Cohort, rank: int, f: int):
        behaviour = agent.attack
        for rogue in behaviour.rogue_sends(f, rank, cohort.n):
            if rogue.slot_rank > self.frame.slots_per_frame:
                continue
            self.queue.push(
                self.frame.slot_start_us(f, rogue.slot_rank, Channel.LONGITUDINAL),
                Action.ROGUE,
                agent.vehicle_id,
                (f, rank, rogue),
            )
        payload = behaviour.lateral_injection(f)
        if payload is not None:
            designated = designate_lateral(
                agent.vehicle_id, self.sensed_snapshot(), self.ranges
            )
            agent.lateral_duties.append(
                LateralDuty(agent.name, f, payload, tuple(designated), frame=f)
            )
            key = (agent.name.r, agent.name.j, f, Channel.LATERAL)
            self._attack_event(agent, f, key, {"receivers": len(designated)})
        if behaviour.tampers_v2x(f):
            self._v2x_tamper(agent, f)

    def _on_rogue(self, item: QueuedEvent):
        f, rank, rogue = item.payload
        agent = self.vehicles[item.vehicle_id]
        if not agent.active or self._rank(agent.vehicle_id) != rank:
            return
        vid = agent.vehicle_id
        cohort = self.cohort_of(vid)
        claimed = Name(rogue.claimed_rank, cohort.lane)
        message = N2NMessage(
            sender=claimed,
            origin=claimed,
            origin_frame=f,
            channel=Channel.LONGITUDINAL,
            payload=agent.attack.spec.bogus_payload,
            tx_time_us=item.time_us + agent.clock_skew_us,
        )
        self._attack_event(
            agent, f, message.key, {"slot": rogue.slot_rank, "claimed": claimed.as_list()}
        )
        self.metrics.lg_transmissions += 1
        self._trace(EventCode.N2N_TX, vid, message.to_wire())
        copies = []
        for tx in lg_send(message, cohort.n):
            target = cohort.member_at(tx.target_rank)
            if target != vid:
                copies.append(Airborne(vid, target, message))
        self._deliver_lg(copies, f)
        self._send_activation(agent, Channel.LONGITUDINAL, item.time_us, rank)

    def _note_relay_attack(
        self,
        agent: VehicleAgent,
        before: set[MessageKey],
        message: N2NMessage | None,
        f: int,
    ):
        spec = agent.attack.spec
        if spec.kind is AttackKind.SUPPRESS:
            sent = {message.key} if message is not None else set()
            for key in sorted(agent.relay.transmitted - before - sent):
                if key in agent.relay.state.accepted:
                    self._attack_event(agent, f, key, {"hop": HopKind.RELAYED.value})
        elif (
            spec.kind is AttackKind.FORGE
            and message is not None
            and message.hop is HopKind.RELAYED
            and message.payload == spec.bogus_payload
            and agent.relay.state.accepted.get(message.key) != spec.bogus_payload
        ):
            self._attack_event(agent, f, message.key, {"hop": message.hop.value})

    def _v2x_tamper(self, agent: VehicleAgent, f: int):
        """A distant attacker owns the NSC side and tries to reach SC state."""
        self._attack_event(agent, f, None, {"target": Compartment.SC.value})
        check_write(Provenance.V2X, Compartment.NSC)
        try:
            check_write(Provenance.V2X, Compartment.SC)
        except ProtocolError as exc:
            logger.info("vehicle %s: %s", agent.vehicle_id, exc)
            self.metrics.compartment_blocked += 1
            self.metrics.v2x_blocked += 1
            self._trace(
                EventCode.V2X_BLOCKED,
                agent.vehicle_id,
                {"reason": "compartment", "target": Compartment.SC.value, "frame": f},
            )

    # --------------------------------------------------------------- scripts

    def _on_script(self, item: QueuedEvent):
        event = item.payload
        self._scripts[type(event)](event)

    def _script_join(self, event: JoinEvent):
        agent = self.vehicles[event.vehicle]
        vid = agent.vehicle_id
        self.metrics.join_requests += 1
        self._trace(
            EventCode.JOIN_REQ,
            vid,
            {"cohort": event.cohort, "kind": event.kind, "gap": event.gap},
        )
        if not agent.active:
            self._reject_join(vid, event, JoinDecision.reject(RejectReason.MEMBER))
            return
        try:
            request = sign_join(
                agent.sc_tpd, event.kind, event.cohort, self.security.day, event.gap
            )
        except AuthUnavailableError as exc:
            logger.warning("vehicle %s cannot join: %s", vid, exc)
            self._reject_join(
                vid, event, JoinDecision.reject(RejectReason.AUTH_UNAVAILABLE)
            )
            return
        self.metrics.join_attempts += 1
        if event.forged:
            request = forge_request(request)
        self.queue.push(
            self.now_us + to_us(self.security.verify_delay),
            Action.JOIN_DECIDE,
            vid,
            (event, request),
        )

    def _reject_join(self, vid: int, event: JoinEvent, decision: JoinDecision):
        self.metrics.joins_rejected += 1
        self._trace(
            EventCode.JOIN_REJ,
            vid,
            {
                "cohort": event.cohort,
                "reason": decision.reason.value,
                "replay": decision.replay,
            },
        )

    def _on_join_decide(self, item: QueuedEvent):
        event, request = item.payload
        agent = self.vehicles[item.vehicle_id]
        vid = agent.vehicle_id
        target = self.cohorts.get(event.cohort)
        if not agent.active or target is None:
            self._reject_join(vid, event, JoinDecision.reject(RejectReason.POSITION))
            return
        joiner_cohort = self.cohort_of(vid)
        before = list(target.members)
        common = {
            "joiner_cohort": joiner_cohort,
            "ledger": self.ledger,
            "verify_delay": self.security.verify_delay,
        }
        try:
            if JoinKind(event.kind) is JoinKind.LG:
                decision = lg_join(
                    vid,
                    target,
                    request,
                    self.snapshot(),
                    self.ranges,
                    self.cohort_policy,
                    **common,
                )
            else:
                decision = lt_join(
                    vid,
                    target,
                    event.gap,
                    request,
                    self.snapshot(),
                    self.ranges,
                    self.gap_policy,
                    self.cohort_policy,
                    **common,
                )
        except ProtocolError as exc:
            logger.warning("join of vehicle %s dropped: %s", vid, exc)
            decision = JoinDecision.reject(RejectReason.POSITION)
        if not decision.accepted:
            self._reject_join(vid, event, decision)
            return

        self.metrics.joins_ok += 1
        del self.cohorts[joiner_cohort.cohort_id]
        self.membership[vid] = target.cohort_id
        if agent.state.lane != target.lane:
            agent.change_lane(target.lane)
        self._snapshot = None
        self._trace(
            EventCode.JOIN_OK,
            vid,
            {
                "cohort": target.cohort_id,
                "rank": decision.rank,
                "verifiers": list(decision.verifiers),
                "delay_us": to_us(decision.delay),
            },
        )
        self._renumber(target)
        verifier = self.vehicles[before[decision.verifiers[0] - 1]]
        self._originate(verifier, target.common_knowledge.to_payload(), Direction.BOTH)

    def _originate(self, agent: VehicleAgent, payload: str, direction: Direction):
        cohort = self.cohort_of(agent.vehicle_id)
        self._trace(
            EventCode.DISSEM,
            agent.vehicle_id,
            {
                "channel": Channel.LONGITUDINAL.value,
                "cohort": cohort.cohort_id,
                "direction": direction.value,
                "size": cohort.n,
            },
        )
        if cohort.n > 1:
            agent.relay.originate(payload, direction, self.frame_no)

    def _script_message(self, event: MessageEvent):
        agent = self.vehicles[event.vehicle]
        if agent.active:
            self._originate(agent, event.payload, event.direction)

    def _script_lateral(self, event: LateralEvent):
        agent = self.vehicles[event.vehicle]
        if not agent.active:
            return
        vid = agent.vehicle_id
        cohort = self.cohort_of(vid)
        rank = cohort.rank_of(vid)
        designated = tuple(designate_lateral(vid, self.sensed_snapshot(), self.ranges))
        origin_frame = self.frame_no + 1
        self._trace(
            EventCode.DISSEM,
            vid,
            {
                "channel": Channel.LATERAL.value,
                "cohort": cohort.cohort_id,
                "receivers": len(designated),
            },
        )
        for r in (rank - 1, rank, rank + 1):
            if not 1 <= r <= cohort.n:
                continue
            self.vehicles[cohort.member_at(r)].lateral_duties.append(
                LateralDuty(
                    origin=agent.name,
                    origin_frame=origin_frame,
                    payload=event.payload,
                    designated=designated,
                    hop=HopKind.DIRECT if r == rank else HopKind.RELAYED,
                    frame=origin_frame,
                )
            )

    def _script_leave(self, event: LeaveEvent):
        agent = self.vehicles[event.vehicle]
        if not agent.active or self.cohort_of(agent.vehicle_id).n == 1:
            return
        self._detach(agent.vehicle_id, "leave")
        single = self._singleton(agent)
        self._add_cohort(single)
        self._renumber(single)

    def _script_velocity(self, event: VelocityEvent):
        cohort = self.cohorts.get(event.cohort)
        if cohort is None:
            logger.warning("velocity change for vanished cohort %s", event.cohort)
            return
        applied = change_velocity(cohort, event.velocity, self.cohort_policy)
        self._trace(
            EventCode.VELOCITY,
            cohort.cohort_id,
            {"velocity": event.velocity, "applied": applied},
        )
        if applied:
            self._originate(
                self.vehicles[cohort.head],
                cohort.common_knowledge.to_payload(),
                Direction.TAILWARD,
            )

    def _script_v2x(self, event: V2XEvent):
        agent = self.vehicles[event.vehicle]
        self._emit_v2x(agent, V2XMessage(event.msg_class, dict(event.body)))

    def _emit_v2x(
        self,
        agent: VehicleAgent,
        message: V2XMessage,
        code: EventCode = EventCode.V2X_SEND,
    ) -> bool:
        if not stealth_filter([message], agent.stealth):
            self.metrics.v2x_blocked += 1
            self._trace(
                EventCode.V2X_BLOCKED,
                agent.vehicle_id,
                {"reason": "stealth", "class": message.msg_class.value},
            )
            return False
        self.metrics.v2x_sent += 1
        self._trace(code, agent.vehicle_id, message.to_wire())
        return True

    def _on_crowd_round(self, item: QueuedEvent):
        round_index = item.payload
        self.metrics.crowd_rounds += 1
        snapshot = self.snapshot()
        for cohort_id in sorted(self.cohorts):
            cohort = self.cohorts[cohort_id]
            head, tail = snapshot.get(cohort.head), snapshot.get(cohort.tail)
            length = self.road.delta(tail.position, head.position) + tail.length
            for rank in crowdsource_round(
                cohort, round_index, self.crowd_config, self.random
            ):
                agent = self.vehicles[cohort.member_at(rank)]
                try:
                    pseudo = agent.nsc_tpd.take_pseudo(
                        self.security.day, Provenance.NSC
                    ).pseudo_id
                except AuthUnavailableError:
                    logger.warning(
                        "vehicle %s crowdsources unsigned, NSC pool empty",
                        agent.vehicle_id,
                    )
                    pseudo = None
                message = crowdsource_message(
                    length, snapshot.get(agent.vehicle_id).position, pseudo
                )
                if self._emit_v2x(agent, message, EventCode.CROWD):
                    self.metrics.crowd_messages += 1
        following = item.time_us + to_us(self.scenario.crowdsource.period)
        if following < self.end_us:
            self.queue.push(following, Action.CROWD_ROUND, payload=round_index + 1)

    # ------------------------------------------------------------- kinematics

    def _leaders(self, snapshot: WorldSnapshot) -> dict[int, int]:
        """Vehicle id -> id of the nearest vehicle ahead in its lane."""
        by_lane: dict[int, list] = defaultdict(list)
        for view in snapshot.vehicles.values():
            by_lane[view.lane].append((view.position, view.vehicle_id))
        leaders = {}
        for entries in by_lane.values():
            entries.sort()
            for (_, rear), (_, front) in zip(entries, entries[1:]):
                leaders[rear] = front
            if self.road.wrap and len(entries) > 1:
                leaders[entries[-1][1]] = entries[0][1]
        return leaders

    def _gap(self, snapshot: WorldSnapshot, rear: int, front: int) -> float:
        front_view = snapshot.get(front)
        return (
            self.road.delta(snapshot.get(rear).position, front_view.position)
            - front_view.length
        )

    def _control(self):
        """Cohorts move in lockstep behind a head that keeps the IC-gap."""
        snapshot = self.snapshot()
        leaders = self._leaders(snapshot)
        floor = -self.gap_policy.brake_decel
        for cohort_id in sorted(self.cohorts):
            cohort = self.cohorts[cohort_id]
            previous = 0.0
            for rank, vid in enumerate(cohort.members, start=1):
                agent = self.vehicles[vid]
                v = agent.state.velocity
                front = leaders.get(vid)
                if rank == 1:
                    command = _clip(
                        SPEED_GAIN * (cohort.velocity - v), -MAX_ACCEL, MAX_ACCEL
                    )
                    if front is not None and self._gap(
                        snapshot, vid, front
                    ) < required_ic_gap(v, self.gap_policy):
                        command = -MAX_ACCEL
                else:
                    ahead = self.vehicles[cohort.member_at(rank - 1)].state
                    command = previous + _clip(
                        SPEED_GAIN * (ahead.velocity - v), -MAX_ACCEL, MAX_ACCEL
                    )
                    if (
                        front is not None
                        and v > ahead.velocity
                        and self._gap(snapshot, vid, front)
                        < required_iv_gap(v, agent.aul, self.gap_policy)
                    ):
                        command = min(command, -MAX_ACCEL)
                agent.command = _clip(command, floor, MAX_ACCEL)
                previous = agent.command

    def _count_collisions(self):
        by_lane: dict[int, list[VehicleAgent]] = defaultdict(list)
        for agent in self.vehicles.values():
            by_lane[agent.state.lane].append(agent)
        touching = set()
        for agents in by_lane.values():
            agents.sort(key=lambda a: (a.state.position, a.vehicle_id))
            for rear, front in zip(agents, agents[1:]):
                if front.state.position - front.length < rear.state.position:
                    touching.add((rear.vehicle_id, front.vehicle_id))
        for pair in sorted(touching - self._colliding):
            self.metrics.collisions += 1
            logger.warning("collision between vehicles %s and %s", *pair)
        self._colliding = touching

    # ------------------------------------------------------------ invariants

    def check_invariants(self, context=None):
        """Raise InvariantViolation on any broken cohort, MAC or TPD invariant."""
        problems = []
        snapshot = self.snapshot()
        placed: dict[int, int] = {}
        for cohort_id, cohort in sorted(self.cohorts.items()):
            problems.extend(cohort.check_invariants(self.cohort_policy, snapshot))
            if cohort.n > self.frame.slots_per_frame:
                problems.append(f"cohort {cohort_id} has more members than slots")
            for rank, vid in enumerate(cohort.members, start=1):
                if vid in placed:
                    problems.append(f"vehicle {vid} is in cohorts {placed[vid]} and {cohort_id}")
                placed[vid] = cohort_id
                agent = self.vehicles[vid]
                if self.membership.get(vid) != cohort_id:
                    problems.append(f"membership of vehicle {vid} is stale")
                if not agent.active:
                    problems.append(f"excluded vehicle {vid} still in cohort {cohort_id}")
                if agent.name != Name(rank, cohort.lane):
                    problems.append(f"vehicle {vid} uses {agent.name} at rank {rank}")
        for vid, agent in self.vehicles.items():
            if agent.active and vid not in placed:
                problems.append(f"vehicle {vid} belongs to no cohort")
            if agent.sc_tpd.compartment is not Compartment.SC:
                problems.append(f"vehicle {vid} SC-TPD is not in the SC compartment")
            if agent.nsc_tpd.compartment is not Compartment.NSC:
                problems.append(f"vehicle {vid} NSC-TPD is not in the NSC compartment")
        if problems:
            raise InvariantViolation("; ".join(problems), event=context)

    # ----------------------------------------------------------------- finish

    def _finish(self):
        events = self.recorder.events
        mac_hits = {
            (e.detail["emitter"], e.detail["frame"])
            for e in events
            if e.code is EventCode.MAC_VIOLATION
        }
        flag_hits = {
            (e.detail["kind"], tuple(e.detail["key"]))
            for e in events
            if e.code is EventCode.N2N_FLAG
            and e.detail["key"] is not None
            and not self._is_attacker(e.subject)
        }
        blocked = {
            (e.subject, e.detail["frame"])
            for e in events
            if e.code is EventCode.V2X_BLOCKED and e.detail["reason"] == "compartment"
        }
        expected_flags = {
            AttackKind.FORGE: {FlagKind.FORGERY},
            AttackKind.SUPPRESS: {FlagKind.SUPPRESSION_OR_LOSS, FlagKind.FORGERY},
            AttackKind.FALSE_INJECT: {FlagKind.UNCONFIRMED, FlagKind.NO_MAJORITY},
        }
        for attack in self.attack_events:
            if attack.kind in (AttackKind.MASQUERADE, AttackKind.SYBIL):
                attack.detected = (attack.attacker, attack.frame) in mac_hits
            elif attack.kind is AttackKind.V2X_TAMPER:
                attack.detected = (attack.attacker, attack.frame) in blocked
            else:
                key = tuple(key_list(attack.key))
                attack.detected = any(
                    (kind.value, key) in flag_hits for kind in expected_flags[attack.kind]
                )
            if attack.detected:
                self.metrics.attack_detected[attack.kind] += 1

        self.metrics.halts = len(self.recorder.get_events_by_code(EventCode.HALT))
        self.metrics.pseudos_consumed = sum(
            agent.sc_tpd.consumed for agent in self.vehicles.values()
        )
        self.metrics.nsc_pseudos_consumed = sum(
            agent.nsc_tpd.consumed for agent in self.vehicles.values()
        )
        logger.info(
            "scenario %s finished: %d trace events, %d stops, %d collisions",
            self.scenario.name,
            len(events),
            self.metrics.stops,
            self.metrics.collisions,
        )
