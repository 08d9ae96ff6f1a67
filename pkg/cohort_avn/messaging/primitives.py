"""LgSend and LtSend with restricted spanning."""

from collections.abc import Callable

from cohort_avn.cells import RangeConfig, WorldSnapshot
from cohort_avn.errors import ConfigurationError
from cohort_avn.messaging.message import N2NMessage, Transmission
from cohort_avn.naming import Channel


def longitudinal_targets(rank: int, n: int) -> list[int]:
    """The two closest predecessors and successors of ``rank`` that exist."""
    return [r for r in (rank - 2, rank - 1, rank + 1, rank + 2) if 1 <= r <= n]


def lg_send(
    message: N2NMessage,
    cohort_size: int,
    reachable: Callable[[int], bool] | None = None,
) -> list[Transmission]:
    """Address ``message`` to ranks r-2..r+2; ``reachable`` drops out-of-range ranks."""
    if message.channel is not Channel.LONGITUDINAL:
        raise ConfigurationError("lg_send needs a longitudinal message")
    return [
        Transmission(message, target_rank=rank)
        for rank in longitudinal_targets(message.sender.r, cohort_size)
        if reachable is None or reachable(rank)
    ]


def designate_lateral(
    vehicle_id: int, snapshot: WorldSnapshot, ranges: RangeConfig
) -> list[int]:
    """Nearest vehicle in each adjacent lane within N2N range.

    Stands in for the optical designation of lateral neighbours; it reads the
    ground truth, so it is only ever called by the sender's own SCR side.
    """
    me = snapshot.get(vehicle_id)
    best: dict[int, tuple[float, int]] = {}
    for other in snapshot.vehicles.values():
        if abs(other.lane - me.lane) != 1:
            continue
        d = snapshot.distance(vehicle_id, other.vehicle_id)
        if d > ranges.n2n_range:
            continue
        candidate = (d, other.vehicle_id)
        if other.lane not in best or candidate < best[other.lane]:
            best[other.lane] = candidate
    return [best[lane][1] for lane in sorted(best)]


def lt_send(message: N2NMessage, designated: list[int]) -> list[Transmission]:
    if message.channel is not Channel.LATERAL:
        raise ConfigurationError("lt_send needs a lateral message")
    return [Transmission(message, target_vehicle=vid) for vid in designated]
