"""Tests for the trace recorder and the trace hash."""

import json
from unittest.mock import Mock

import pytest

from cohort_avn.recording.trace_recorder import (
    RECORD_FIELDS,
    TraceEvent,
    TraceRecorder,
    load_trace,
    payload_digest,
    trace_hash,
)
from cohort_avn.sim.events import GLOBAL_SUBJECT, EventCode


@pytest.fixture
def mock_model():
    model = Mock()
    model.now_us = 24_000
    return model


@pytest.fixture
def recorder(mock_model, tmp_path):
    return TraceRecorder(model=mock_model, output_dir=tmp_path)


class TestPayloadDigest:
    def test_floats_are_quantized(self):
        assert payload_digest({"x": 0.1 + 0.2}) == payload_digest({"x": 0.3})
        assert payload_digest({"x": 0.3}) != payload_digest({"x": 0.31})

    def test_key_order(self):
        assert payload_digest({"a": 1, "b": [1, 2]}) == payload_digest({"b": (1, 2), "a": 1})

    def test_empty(self):
        assert payload_digest(None) == ""
        assert len(payload_digest({})) == 16


class TestTraceRecorder:
    def test_record_uses_the_model_clock(self, recorder):
        event = recorder.record(EventCode.JOIN_REQ, 5, {"cohort": 0})
        assert event.time_us == 24_000
        assert event.subject == 5
        assert event.digest == payload_digest({"cohort": 0})

    def test_explicit_time_and_string_code(self, recorder):
        event = recorder.record("HALT", 3, time_us=99)
        assert event.code is EventCode.HALT
        assert event.time_us == 99
        assert event.detail == {}

    def test_unknown_code(self, recorder):
        with pytest.raises(ValueError):
            recorder.record("TELEPORT", 1)

    def test_without_a_model(self):
        assert TraceRecorder().record(EventCode.SPLIT, 0).time_us == 0

    def test_model_event(self, recorder):
        event = recorder.record_model_event(EventCode.CROWD)
        assert event.subject == GLOBAL_SUBJECT

    def test_queries(self, recorder):
        recorder.record(EventCode.JOIN_REQ, 5)
        recorder.record(EventCode.JOIN_OK, 5)
        recorder.record(EventCode.JOIN_REQ, 6)
        assert len(recorder.get_subject_events(5)) == 2
        assert [e.subject for e in recorder.get_events_by_code("JOIN_REQ")] == [5, 6]
        assert recorder.counts() == {"JOIN_OK": 1, "JOIN_REQ": 2}

    def test_stats(self, recorder):
        recorder.record(EventCode.JOIN_REQ, 5)
        recorder.record_model_event(EventCode.CROWD)
        stats = recorder.get_stats()
        assert stats["total_events"] == 2
        assert stats["unique_subjects"] == 1
        assert stats["trace_hash"] == recorder.trace_hash()

    def test_save_into_the_output_dir(self, recorder, tmp_path):
        recorder.record(EventCode.N2N_FLAG, 4, {"kind": "forgery", "key": [1, 2, 0, "lg"]})
        path = recorder.save("run.jsonl")
        assert path == tmp_path / "run.jsonl"
        (line,) = path.read_text().splitlines()
        assert tuple(json.loads(line)) == RECORD_FIELDS
        assert load_trace(path) == recorder.events
        assert trace_hash(load_trace(path)) == recorder.trace_hash()


class TestTraceHash:
    def test_detail_only_enters_through_the_digest(self):
        a = TraceEvent(10, EventCode.STOP, 4, "abc", {"predicates": ["P2"]})
        b = TraceEvent(10, EventCode.STOP, 4, "abc", {"predicates": ["P1"]})
        assert trace_hash([a]) == trace_hash([b])

    def test_order_matters(self):
        a = TraceEvent(10, EventCode.STOP, 4, "")
        b = TraceEvent(20, EventCode.HALT, 4, "")
        assert trace_hash([a, b]) != trace_hash([b, a])

    def test_record_round_trip(self):
        event = TraceEvent(10, EventCode.HALT, 4, "d", {"lane": 0})
        assert TraceEvent.from_record(event.to_record()) == event
