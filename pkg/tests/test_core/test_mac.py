"""Tests for the slotted N2N MAC."""

import pytest

from cohort_avn.errors import ConfigurationError
from cohort_avn.mac import (
    MacFrame,
    SlotVerdict,
    TxRecord,
    access_delay_bound,
    check_slot_ownership,
    detect_sybil,
    safety_margin_check,
    slot_owner_at,
    slot_times,
    to_seconds,
    to_us,
)
from cohort_avn.naming import Channel, Name


@pytest.fixture
def frame():
    return MacFrame()


class TestMacFrame:
    def test_defaults(self, frame):
        assert frame.frame_us == 24_000
        assert frame.slot_us == 1_000
        assert frame.tx_us == 200
        assert access_delay_bound(frame) == pytest.approx(0.024)

    def test_tx_time_must_fit_in_a_slot(self):
        with pytest.raises(ConfigurationError):
            MacFrame(tx_time=0.002)

    def test_offsets_must_lie_inside_the_frame(self):
        with pytest.raises(ConfigurationError):
            MacFrame(lateral_offset=0.5)

    def test_rank_beyond_capacity(self, frame):
        with pytest.raises(ConfigurationError):
            frame.slot_start_us(0, 25, Channel.LONGITUDINAL)
        with pytest.raises(ConfigurationError):
            slot_times(0, frame)

    def test_slot_times(self):
        frame = MacFrame(lateral_offset=0.0005)
        lg, lt = slot_times(3, frame)
        assert lg == pytest.approx(0.002)
        assert lt == pytest.approx(0.0025)

    def test_frame_index_follows_the_epoch(self):
        frame = MacFrame(epoch=0.010)
        assert frame.frame_index(to_us(0.010)) == 0
        assert frame.frame_index(to_us(0.034)) == 1
        assert frame.frame_start_us(2) == to_us(0.058)

    def test_time_conversions(self):
        assert to_us(0.0002) == 200
        assert to_seconds(1_500) == pytest.approx(0.0015)


class TestSlotOwnership:
    def test_owner_of_a_slot(self, frame):
        assert slot_owner_at(0.0, Channel.LONGITUDINAL, frame) == 1
        assert slot_owner_at(0.0052, Channel.LONGITUDINAL, frame) == 6
        assert slot_owner_at(0.024 + 0.0003, Channel.LONGITUDINAL, frame) == 1

    def test_owner_in_own_slot(self, frame):
        record = TxRecord(Name(3, 2), Channel.LONGITUDINAL, 0.002, sensed_rank=3)
        check = check_slot_ownership(record, 3, frame, cohort_size=8)
        assert check.ok
        assert check.slot_owner == 3

    def test_wrong_slot_is_masquerade(self, frame):
        record = TxRecord(Name(6, 2), Channel.LONGITUDINAL, 0.002, sensed_rank=3)
        assert check_slot_ownership(record, 6, frame).verdict is SlotVerdict.MASQUERADE

    def test_right_slot_from_the_wrong_vehicle(self, frame):
        """The victim's slot and name, but the sensors place the emitter at rank 4."""
        record = TxRecord(Name(6, 2), Channel.LONGITUDINAL, 0.005, sensed_rank=4)
        check = check_slot_ownership(record, 6, frame, cohort_size=8)
        assert check.verdict is SlotVerdict.MASQUERADE
        assert check.emitter_rank == 4

    def test_slot_beyond_the_cohort(self, frame):
        record = TxRecord(Name(9, 2), Channel.LONGITUDINAL, 0.008, sensed_rank=7)
        check = check_slot_ownership(record, 9, frame, cohort_size=8)
        assert check.verdict is SlotVerdict.OFF_SLOT


class TestSybil:
    def test_two_names_from_one_emitter(self, frame):
        records = [
            TxRecord(Name(9, 2), Channel.LONGITUDINAL, 0.008, sensed_rank=7),
            TxRecord(Name(10, 2), Channel.LONGITUDINAL, 0.009, sensed_rank=7),
            TxRecord(Name(6, 2), Channel.LONGITUDINAL, 0.005, sensed_rank=6),
        ]
        flagged = detect_sybil(records, frame)
        assert {r.sender for r in flagged} == {Name(9, 2), Name(10, 2)}

    def test_same_name_in_consecutive_frames_is_fine(self, frame):
        records = [
            TxRecord(Name(3, 2), Channel.LONGITUDINAL, 0.002, sensed_rank=3),
            TxRecord(Name(3, 2), Channel.LONGITUDINAL, 0.026, sensed_rank=3),
        ]
        assert detect_sybil(records, frame) == []

    def test_unlocalised_records_are_skipped(self, frame):
        records = [
            TxRecord(Name(1, 2), Channel.LONGITUDINAL, 0.0),
            TxRecord(Name(2, 2), Channel.LONGITUDINAL, 0.001),
        ]
        assert detect_sybil(records, frame) == []


class TestSafetyMargin:
    def test_slotted_access_passes(self):
        margin = safety_margin_check(0.020, 25.0, 8.0)
        assert margin.distance_in_lambda == pytest.approx(0.5)
        assert margin.ratio == pytest.approx(16.0)
        assert margin.passed

    def test_contention_access_fails(self):
        margin = safety_margin_check(0.100, 25.0, 8.0)
        assert margin.ratio == pytest.approx(3.2)
        assert not margin.passed

    def test_standing_still(self):
        assert safety_margin_check(0.1, 0.0, 8.0).passed

    def test_gap_must_be_positive(self):
        with pytest.raises(ConfigurationError):
            safety_margin_check(0.02, 25.0, 0.0)
