"""
World model for a straight multilane road segment.

Lanes are numbered from 1 for the rightmost lane. Positions are longitudinal
front-bumper coordinates in meters; the helpers here are pure functions over
frozen value types and can be shared freely between threads.
"""

from dataclasses import dataclass, field, replace

from cohort_avn.errors import ConfigurationError

DEFAULT_HEADWAY_BY_AUL: dict[int, float] = {
    0: 1.8,
    1: 1.5,
    2: 1.2,
    3: 0.8,
    4: 0.5,
    5: 0.3,
}

AUTOMATION_LEVELS = range(0, 6)

# rounding slack of the step-wise brick-wall check, in meters
BRICK_WALL_TOLERANCE = 1e-9


@dataclass(frozen=True)
class RoadSegment:
    """A straight segment with ``lane_count`` lanes, optionally periodic."""

    lane_count: int = 3
    lane_width: float = 3.5
    length: float = 5000.0
    wrap: bool = False

    def __post_init__(self):
        if self.lane_count < 1:
            raise ConfigurationError("lane_count must be at least 1")
        if self.lane_width <= 0 or self.length <= 0:
            raise ConfigurationError("lane_width and length must be positive")

    def has_lane(self, lane: int) -> bool:
        return 1 <= lane <= self.lane_count

    def lateral_offset(self, lane: int) -> float:
        """Distance of the lane centre from the centre of lane 1."""
        return (lane - 1) * self.lane_width

    def normalize(self, position: float) -> float:
        return position % self.length if self.wrap else position

    def delta(self, origin: float, target: float) -> float:
        """Signed longitudinal displacement from ``origin`` to ``target``.

        On a periodic segment the shortest displacement is returned.
        """
        d = target - origin
        if self.wrap:
            half = self.length / 2
            d = (d + half) % self.length - half
        return d


@dataclass(frozen=True)
class KinematicState:
    position: float
    lane: int
    velocity: float
    acceleration: float = 0.0

    def __post_init__(self):
        if self.velocity < 0:
            raise ConfigurationError(f"velocity must be >= 0, got {self.velocity}")


@dataclass(frozen=True)
class GapPolicy:
    """Braking model and time headways used for iv-gaps and IC-gaps.

    The IC gap is the follower's exact stopping distance, so behind a leader
    that stops dead the follower comes to rest at the leader's rear bumper.
    A clearance within ``BRICK_WALL_TOLERANCE`` of zero is rounding from the
    step-wise integration and counts as not reaching the leader; anything
    shorter is a collision.
    """

    brake_decel: float = 8.0
    reaction_time: float = 0.5
    headway_by_aul: dict[int, float] = field(
        default_factory=lambda: dict(DEFAULT_HEADWAY_BY_AUL)
    )
    min_gap_floor: float = 2.0

    def __post_init__(self):
        if self.brake_decel <= 0:
            raise ConfigurationError("brake_decel must be positive")
        if self.reaction_time < 0:
            raise ConfigurationError("reaction_time must be non-negative")
        if self.min_gap_floor <= 0:
            raise ConfigurationError("min_gap_floor must be positive")
        missing = [aul for aul in AUTOMATION_LEVELS if aul not in self.headway_by_aul]
        if missing:
            raise ConfigurationError(f"headway_by_aul misses levels {missing}")
        headways = [self.headway_by_aul[aul] for aul in AUTOMATION_LEVELS]
        if any(later > earlier for earlier, later in zip(headways, headways[1:])):
            raise ConfigurationError(
                "headway_by_aul must be nonincreasing in automation level"
            )


def advance_state(
    state: KinematicState, commanded_accel: float, dt: float
) -> KinematicState:
    """Constant-acceleration update over ``dt`` with velocity clamped at zero.

    When braking would reverse the vehicle inside the step, the vehicle stops
    at ``v**2 / (2 * |a|)`` and rests for the remainder of the step.
    """
    if dt <= 0:
        raise ConfigurationError(f"dt must be positive, got {dt}")
    v0 = state.velocity
    a = commanded_accel
    if a < 0 and v0 + a * dt < 0:
        distance = v0 * v0 / (2 * -a)
        return replace(
            state, position=state.position + distance, velocity=0.0, acceleration=0.0
        )
    v1 = v0 + a * dt
    distance = v0 * dt + 0.5 * a * dt * dt
    return replace(
        state, position=state.position + distance, velocity=v1, acceleration=a
    )


def stopping_distance(v: float, policy: GapPolicy) -> float:
    return v * policy.reaction_time + v * v / (2 * policy.brake_decel)


def required_ic_gap(v: float, policy: GapPolicy) -> float:
    """Gap that keeps a cohort head off the tail of a brick-wall predecessor."""
    if v < 0:
        raise ConfigurationError(f"velocity must be >= 0, got {v}")
    return max(stopping_distance(v, policy), policy.min_gap_floor)


def required_iv_gap(v: float, aul: int, policy: GapPolicy) -> float:
    """Intra-cohort gap, shrinking as the automation level rises."""
    if aul not in AUTOMATION_LEVELS:
        raise ConfigurationError(f"automation level must be in 0..5, got {aul}")
    return max(v * policy.headway_by_aul[aul], policy.min_gap_floor)


def brick_wall_clearance(
    v: float, gap: float, policy: GapPolicy, dt: float = 0.001
) -> float:
    """Final clearance of a follower ``gap`` meters behind a leader that stops dead.

    The follower keeps ``v`` for the reaction time, then brakes at
    ``policy.brake_decel`` until it rests. A negative result is a collision.
    """
    follower = KinematicState(position=0.0, lane=1, velocity=v)
    reaction_steps = round(policy.reaction_time / dt)
    for _ in range(reaction_steps):
        follower = advance_state(follower, 0.0, dt)
    while follower.velocity > 0:
        follower = advance_state(follower, -policy.brake_decel, dt)
    return gap - follower.position


def clears_brick_wall(
    v: float, gap: float, policy: GapPolicy, dt: float = 0.001
) -> bool:
    """Whether a follower ``gap`` meters back stops without reaching the leader."""
    return brick_wall_clearance(v, gap, policy, dt) > -BRICK_WALL_TOLERANCE
