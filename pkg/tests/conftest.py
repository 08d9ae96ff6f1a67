import os
from unittest.mock import patch

import pytest

from cohort_avn.cells import RangeConfig, VehicleView, WorldSnapshot
from cohort_avn.cohort.cohort import Cohort, CohortPolicy
from cohort_avn.kinematics import GapPolicy, RoadSegment


@pytest.fixture(autouse=True)
def mock_environment():
    """Ensure tests don't depend on real environment variables"""
    with patch.dict(os.environ, {}, clear=True):
        yield


@pytest.fixture
def road():
    return RoadSegment(lane_count=3, lane_width=3.5, length=5000.0)


@pytest.fixture
def ranges():
    return RangeConfig()


@pytest.fixture
def gap_policy():
    return GapPolicy()


@pytest.fixture
def cohort_policy():
    return CohortPolicy()


@pytest.fixture
def make_snapshot(road):
    """Build a snapshot from (id, position, lane) tuples."""

    def _make(rows, time=0.0, velocity=20.0, aul=5):
        views = [
            VehicleView(vid, position, lane, velocity=velocity, aul=aul)
            for vid, position, lane in rows
        ]
        return WorldSnapshot.of(road, views, time)

    return _make


@pytest.fixture
def platoon(make_snapshot):
    """An 8-member cohort in lane 2, head first, 14 m apart."""

    def _make(n=8, lane=2, head_position=298.0, first_id=1):
        members = list(range(first_id, first_id + n))
        rows = [(vid, head_position - 14.0 * i, lane) for i, vid in enumerate(members)]
        cohort = Cohort(
            cohort_id=0,
            lane=lane,
            members=members,
            velocity=20.0,
            sl=3,
            hl=5,
            auls=dict.fromkeys(members, 5),
        )
        return cohort, make_snapshot(rows)

    return _make


@pytest.fixture
def small_scenario():
    """A minimal valid scenario document: a 3-member cohort and a joiner."""
    return {
        "schema": "cohort-avn/1",
        "name": "small",
        "seed": 1,
        "duration": 0.5,
        "cohorts": [{"id": 0, "lane": 2, "members": [1, 2, 3]}],
        "vehicles": [
            {"id": 1, "position": 128.0, "lane": 2, "velocity": 20.0, "aul": 5},
            {"id": 2, "position": 114.0, "lane": 2, "velocity": 20.0, "aul": 5},
            {"id": 3, "position": 100.0, "lane": 2, "velocity": 20.0, "aul": 5},
            {"id": 4, "position": 80.0, "lane": 2, "velocity": 20.0, "aul": 4},
        ],
        "events": [
            {"type": "join", "time": 0.1, "vehicle": 4, "cohort": 0},
            {
                "type": "message",
                "time": 0.2,
                "vehicle": 1,
                "payload": "hazard",
                "direction": "tailward",
            },
        ],
    }
