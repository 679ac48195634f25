"""Shared protocol types: outcomes, diagnostics, semi-contiguous allocations."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

from ..channel import Channel, Crs, Transcript
from ..errors import ShapeError, UsageError
from ..model import Allocation, Instance, Kind, Valuation


@dataclass(frozen=True)
class SemiContiguousAllocation:
    """Consecutive (possibly empty) blocks plus up to n designated holes.

    ``blocks`` are half-open intervals that partition [0, m) in order; every
    agent owns one block's net part (block minus holes) and at most one hole.
    """

    n: int
    m: int
    blocks: tuple[tuple[int, int], ...]
    holes: tuple[int, ...]
    block_of: tuple[int, ...]
    hole_of: tuple[Optional[int], ...]

    def __post_init__(self):
        if len(self.blocks) != self.n:
            raise ShapeError(f"need {self.n} blocks, got {len(self.blocks)}")
        cursor = 0
        for lo, hi in self.blocks:
            if lo != cursor or hi < lo:
                raise ShapeError("blocks must be consecutive and cover [0, m)")
            cursor = hi
        if cursor != self.m:
            raise ShapeError("blocks must cover all items")
        if len(self.holes) > self.n:
            raise ShapeError(f"at most {self.n} holes allowed, got {len(self.holes)}")
        if len(set(self.holes)) != len(self.holes):
            raise ShapeError("holes must be distinct")
        if sorted(self.block_of) != list(range(self.n)):
            raise ShapeError("block_of must assign each block to exactly one agent")
        assigned = [h for h in self.hole_of if h is not None]
        if sorted(assigned) != sorted(self.holes):
            raise ShapeError("every hole must be assigned to exactly one agent")

    def flatten(self) -> Allocation:
        hole_set = set(self.holes)
        owner = [-1] * self.m
        for agent in range(self.n):
            lo, hi = self.blocks[self.block_of[agent]]
            for e in range(lo, hi):
                if e not in hole_set:
                    owner[e] = agent
            if self.hole_of[agent] is not None:
                owner[self.hole_of[agent]] = agent
        if any(o < 0 for o in owner):
            raise ShapeError("semi-contiguous structure does not cover all items")
        return Allocation(n=self.n, owner=tuple(owner))


@dataclass
class RunDiagnostics:
    """Observability for a protocol run; never feeds back into the allocation."""

    ell: int | None = None                    # agents left short after prefix phase
    k_targets: list[int] | None = None        # per-agent demanded counts
    prefix_start: list[int] | None = None
    prefix_len: list[int] | None = None
    main_sets: list[list[int]] | None = None
    leftover: list[int] | None = None
    holes_pool: list[int] | None = None       # pooled hole items
    non_holes: list[int] | None = None        # remaining non-hole items
    eligibility: list[tuple[int, int, int]] | None = None  # (#unsatisfied, #eligible, rank sent)
    retries: int | None = None
    queries: int | None = None


@dataclass
class Outcome:
    allocation: Allocation
    transcript: Transcript
    diagnostics: RunDiagnostics = field(default_factory=RunDiagnostics)
    semi: SemiContiguousAllocation | None = None


def public_view(inst: Instance) -> Instance:
    """The instance as the referee sees it: kinds and public parameters kept,
    private per-item values zeroed out."""
    vals = []
    for v in inst.valuations:
        if v.kind == Kind.TWO_VALUED:
            vals.append(Valuation(v.kind, (v.b,) * inst.m, v.scale, a=v.a, b=v.b))
        else:
            vals.append(Valuation(v.kind, (0,) * inst.m, v.scale))
    return Instance(inst.n, inst.m, tuple(vals))


def need_kind(inst: Instance, kinds, protocol: str) -> None:
    if isinstance(kinds, Kind):
        kinds = (kinds,)
    if inst.kind not in kinds:
        names = "/".join(k.value for k in kinds)
        raise UsageError(f"{protocol} needs {names} valuations, got {inst.kind.value}")


ProtocolFn = Callable[..., Outcome]


@dataclass(frozen=True)
class ProtocolSpec:
    """Registry entry: how to run a protocol, how to verify its output, and
    where to sample instances that satisfy its preconditions."""

    id: str
    run: ProtocolFn
    check: Callable[[Instance, Allocation], list]
    family: str
    family_args: Callable[[int], tuple[int, int, dict]]  # seed -> (n, m, params)
    summary: str
