"""Anonymous N2N addressing shared by the cohort, MAC and messaging layers."""

from dataclasses import dataclass
from enum import StrEnum


class Channel(StrEnum):
    LONGITUDINAL = "lg"
    LATERAL = "lt"


@dataclass(frozen=True, order=True)
class Name:
    """Self-issued name {r, j}: rank ``r`` in lane ``j``. Carries no identity."""

    r: int
    j: int

    def __str__(self) -> str:
        return f"{{{self.r},{self.j}}}"

    def as_list(self) -> list[int]:
        return [self.r, self.j]
