"""Operation specs shared by both execution paths."""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Optional, Sequence, Union

MIN_BUDGET_BYTES = 65536


class Direction(Enum):
    ASC = "asc"
    DESC = "desc"


class BuildSide(Enum):
    LEFT = "left"
    RIGHT = "right"


@dataclass(frozen=True)
class MemoryBudget:
    """Per-operator in-memory byte limit (the work_mem analogue)."""

    bytes: int

    def __post_init__(self) -> None:
        if self.bytes < MIN_BUDGET_BYTES:
            raise ValueError(
                f"budget must be >= {MIN_BUDGET_BYTES} bytes, got {self.bytes}"
            )


@dataclass(frozen=True)
class JoinSpec:
    """Equi-join on one int64 key; build side defaults to the smaller input."""

    key: str
    build_side: Optional[BuildSide] = None


@dataclass(frozen=True)
class SortSpec:
    """Ordered sort keys with a direction per key."""

    keys: tuple[str, ...]
    directions: tuple[Direction, ...] = ()

    def __post_init__(self) -> None:
        keys = tuple(self.keys)
        object.__setattr__(self, "keys", keys)
        if not keys:
            raise ValueError("sort needs at least one key")
        if len(set(keys)) != len(keys):
            raise ValueError(f"duplicate sort keys in {keys}")
        dirs = tuple(
            Direction(d) if not isinstance(d, Direction) else d
            for d in self.directions
        )
        if not dirs:
            dirs = tuple(Direction.ASC for _ in keys)
        if len(dirs) != len(keys):
            raise ValueError("directions must match keys in length")
        object.__setattr__(self, "directions", dirs)


def sort_spec(keys: Sequence[str], directions: Union[Sequence, None] = None) -> SortSpec:
    return SortSpec(tuple(keys), tuple(directions or ()))
