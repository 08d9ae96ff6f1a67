"""Tests for the saturated longitudinal channel."""

import pytest

from cohort_avn.errors import ConfigurationError
from cohort_avn.mac import (
    MacFrame,
    TxRecord,
    access_delay_bound,
    check_slot_ownership,
    detect_sybil,
    slot_owner_at,
    to_seconds,
    to_us,
)
from cohort_avn.naming import Channel, Name
from cohort_avn.sim.events import EventCode
from cohort_avn.sim.runner import run_scenario
from cohort_avn.sim.saturation import count_collisions, saturation_run


@pytest.fixture
def frame():
    return MacFrame()


class TestSaturationRun:
    def test_twelve_members_thousand_frames(self, frame):
        report = saturation_run(12, frame, 1000)
        assert report.collisions == 0
        assert len(report.tx_records) == 12_000
        expected = access_delay_bound(frame) - frame.slot_duration + frame.tx_time
        assert report.max_access_delay_us == to_us(expected) == 23_200
        assert detect_sybil(report.tx_records, frame) == []

    def test_every_member_sends_once_per_frame(self, frame):
        report = saturation_run(12, frame, 30)
        per_frame = {}
        for record in report.tx_records:
            key = (frame.frame_index(to_us(record.tx_time)), record.sender.r)
            per_frame[key] = per_frame.get(key, 0) + 1
        assert len(per_frame) == 12 * 30
        assert set(per_frame.values()) == {1}

    def test_every_record_is_in_its_own_slot(self, frame):
        report = saturation_run(12, frame, 30)
        for record in report.tx_records:
            assert check_slot_ownership(record, record.sender.r, frame, 12).ok

    def test_delays_stay_within_the_frame(self, frame):
        report = saturation_run(24, frame, 200, seed=3)
        assert min(report.access_delays_us) >= frame.tx_us
        assert report.max_access_delay_us <= frame.frame_us - frame.slot_us + frame.tx_us

    def test_seeded(self, frame):
        a = saturation_run(8, frame, 50, seed=1)
        b = saturation_run(8, frame, 50, seed=1)
        c = saturation_run(8, frame, 50, seed=2)
        assert a.access_delays_us == b.access_delays_us
        assert a.access_delays_us != c.access_delays_us

    def test_no_frames(self, frame):
        report = saturation_run(4, frame, 0)
        assert report.tx_records == []
        assert report.max_access_delay_us == 0

    @pytest.mark.parametrize("size", [0, 25])
    def test_cohort_must_fit_the_frame(self, frame, size):
        with pytest.raises(ConfigurationError):
            saturation_run(size, frame, 1)


class TestCountCollisions:
    def test_overlap_on_one_channel(self, frame):
        records = [
            TxRecord(Name(1, 2), Channel.LONGITUDINAL, 0.0),
            TxRecord(Name(2, 2), Channel.LONGITUDINAL, 0.0001),
            TxRecord(Name(3, 2), Channel.LONGITUDINAL, 0.002),
        ]
        assert count_collisions(records, frame) == 1

    def test_channels_do_not_collide_with_each_other(self, frame):
        records = [
            TxRecord(Name(1, 2), Channel.LONGITUDINAL, 0.0),
            TxRecord(Name(1, 2), Channel.LATERAL, 0.0),
        ]
        assert count_collisions(records, frame) == 0


class TestEngineSlots:
    def test_every_transmission_is_in_the_senders_slot(self):
        trace = run_scenario("attack-base")
        frame = trace.scenario.mac.build()
        sent = trace.events_with(EventCode.N2N_TX)
        assert sent
        for event in sent:
            channel = Channel(event.detail["channel"])
            owner = slot_owner_at(to_seconds(event.detail["tx_us"]), channel, frame)
            assert owner == event.detail["sender"][0]
