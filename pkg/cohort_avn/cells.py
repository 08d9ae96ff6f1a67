"""
Vehicular cells and range gating.

Cell(X) is the set of vehicles that could physically hit X: the two closest
predecessors and successors in X's lane and the five nearest vehicles in each
adjacent lane. Queries run over an immutable ``WorldSnapshot``.
"""

import math
import random
from collections.abc import Iterable, Mapping
from dataclasses import dataclass, field, replace
from enum import StrEnum
from types import MappingProxyType

from cohort_avn.errors import ConfigurationError, UnknownVehicleError
from cohort_avn.kinematics import RoadSegment

MAX_LONGITUDINAL = 2
MAX_LATERAL_PER_LANE = 5
MAX_CELL_SIZE = 2 * MAX_LONGITUDINAL + 2 * MAX_LATERAL_PER_LANE


class RangeKind(StrEnum):
    N2N = "n2n"
    SC_V2V = "sc_v2v"


@dataclass(frozen=True)
class RangeConfig:
    n2n_range: float = 30.0
    sc_v2v_range: float = 60.0
    cell_window: float | None = None

    def __post_init__(self):
        if not 0 < self.n2n_range <= self.sc_v2v_range:
            raise ConfigurationError("ranges must satisfy 0 < n2n_range <= sc_v2v_range")
        if self.cell_window is not None and self.cell_window <= 0:
            raise ConfigurationError("cell_window must be positive")

    @property
    def window(self) -> float:
        return self.sc_v2v_range if self.cell_window is None else self.cell_window

    def range_for(self, kind: RangeKind | str) -> float:
        return self.n2n_range if RangeKind(kind) is RangeKind.N2N else self.sc_v2v_range


@dataclass(frozen=True)
class VehicleView:
    """What the world knows about one vehicle at capture time."""

    vehicle_id: int
    position: float
    lane: int
    velocity: float = 0.0
    aul: int = 0
    length: float = 4.5


@dataclass(frozen=True)
class WorldSnapshot:
    road: RoadSegment
    vehicles: Mapping[int, VehicleView]
    time: float = 0.0

    @classmethod
    def of(
        cls, road: RoadSegment, views: Iterable[VehicleView], time: float = 0.0
    ) -> "WorldSnapshot":
        return cls(
            road=road,
            vehicles=MappingProxyType({v.vehicle_id: v for v in views}),
            time=time,
        )

    def get(self, vehicle_id: int) -> VehicleView:
        try:
            return self.vehicles[vehicle_id]
        except KeyError:
            raise UnknownVehicleError(vehicle_id) from None

    def __contains__(self, vehicle_id: int) -> bool:
        return vehicle_id in self.vehicles

    def perturbed(self, rng: random.Random, noise: float) -> "WorldSnapshot":
        """Same world with every position off by up to ``noise`` meters, uniformly."""
        if noise <= 0:
            return self
        return WorldSnapshot.of(
            self.road,
            [
                replace(view, position=view.position + rng.uniform(-noise, noise))
                for _, view in sorted(self.vehicles.items())
            ],
            self.time,
        )

    def distance(self, a: int, b: int) -> float:
        va, vb = self.get(a), self.get(b)
        dx = self.road.delta(va.position, vb.position)
        dy = self.road.lateral_offset(vb.lane) - self.road.lateral_offset(va.lane)
        return math.hypot(dx, dy)


@dataclass(frozen=True)
class CellView:
    subject: int
    ahead: tuple[int, ...] = ()
    behind: tuple[int, ...] = ()
    lateral: Mapping[int, tuple[int, ...]] = field(default_factory=dict)
    capture_time: float = 0.0

    @property
    def members(self) -> tuple[int, ...]:
        lateral = tuple(v for lane in sorted(self.lateral) for v in self.lateral[lane])
        return self.ahead + self.behind + lateral

    def __len__(self) -> int:
        return len(self.members)

    def __contains__(self, vehicle_id: int) -> bool:
        return vehicle_id in self.members


def _nearest(candidates: list[tuple[float, int]], limit: int) -> tuple[int, ...]:
    # ties on distance go to the lower vehicle id
    return tuple(vid for _, vid in sorted(candidates)[:limit])


def compute_cell(
    subject: int, snapshot: WorldSnapshot, config: RangeConfig
) -> CellView:
    """Cell(subject) over ``snapshot``.

    A vehicle level with the subject in its own lane counts as ahead.
    """
    me = snapshot.get(subject)
    road = snapshot.road
    window = config.window
    ahead: list[tuple[float, int]] = []
    behind: list[tuple[float, int]] = []
    lateral: dict[int, list[tuple[float, int]]] = {
        lane: [] for lane in (me.lane - 1, me.lane + 1) if road.has_lane(lane)
    }
    for other in snapshot.vehicles.values():
        if other.vehicle_id == subject:
            continue
        d = road.delta(me.position, other.position)
        if abs(d) > window:
            continue
        if other.lane == me.lane:
            if d >= 0:
                ahead.append((d, other.vehicle_id))
            else:
                behind.append((-d, other.vehicle_id))
        elif other.lane in lateral:
            lateral[other.lane].append((abs(d), other.vehicle_id))

    return CellView(
        subject=subject,
        ahead=_nearest(ahead, MAX_LONGITUDINAL),
        behind=_nearest(behind, MAX_LONGITUDINAL),
        lateral=MappingProxyType(
            {
                lane: _nearest(found, MAX_LATERAL_PER_LANE)
                for lane, found in lateral.items()
            }
        ),
        capture_time=snapshot.time,
    )


def in_range(
    a: int,
    b: int,
    kind: RangeKind | str,
    snapshot: WorldSnapshot,
    config: RangeConfig,
) -> bool:
    return snapshot.distance(a, b) <= config.range_for(kind)
