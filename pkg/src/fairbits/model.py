"""Allocation instances: valuations, allocations, instance generators, text formats.

All values are non-negative integers over a shared ``scale`` denominator (the
true value of item ``e`` is ``item_values[e] / scale``), so every fairness
comparison downstream can be done in exact integer or rational arithmetic.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from fractions import Fraction
from typing import Iterable, Sequence

import numpy as np

from .errors import (
    InfeasibleFamilyError,
    MalformedError,
    ShapeError,
    UsageError,
    VersionError,
)


class Kind(str, Enum):
    UNIT_DEMAND = "unit_demand"
    BINARY = "binary"
    TWO_VALUED = "two_valued"
    ADDITIVE = "additive"


#: kinds whose bundle value is the sum of item values
ADDITIVE_KINDS = (Kind.BINARY, Kind.TWO_VALUED, Kind.ADDITIVE)


@dataclass(frozen=True)
class Valuation:
    """One agent's item-based valuation.

    ``kind`` decides the bundle semantics: unit-demand bundles are worth the
    maximum item inside, every other kind sums.  For ``TWO_VALUED``, ``a`` and
    ``b`` are the two stored values with ``a > b >= 0``.
    """

    kind: Kind
    item_values: tuple[int, ...]
    scale: int = 1
    a: int | None = None
    b: int | None = None

    def __post_init__(self):
        if self.scale < 1:
            raise ShapeError(f"scale must be a positive integer, got {self.scale}")
        if any(v < 0 for v in self.item_values):
            raise ShapeError("item values must be non-negative")
        if self.kind == Kind.BINARY:
            if any(v not in (0, self.scale) for v in self.item_values):
                raise ShapeError("binary valuations allow only 0 or scale per item")
        if self.kind == Kind.TWO_VALUED:
            if self.a is None or self.b is None:
                raise ShapeError("two-valued valuations need explicit a and b")
            if not self.a > self.b >= 0:
                raise ShapeError(f"two-valued needs a > b >= 0, got a={self.a}, b={self.b}")
            if any(v not in (self.a, self.b) for v in self.item_values):
                raise ShapeError("two-valued item values must all be a or b")

    @property
    def m(self) -> int:
        return len(self.item_values)

    @property
    def total(self) -> int:
        """Sum of stored item values (additive total, in stored units)."""
        return sum(self.item_values)

    def value(self, item: int) -> Fraction:
        """True (scale-corrected) value of a single item."""
        if not 0 <= item < self.m:
            raise UsageError(f"item index {item} out of range [0, {self.m})")
        return Fraction(self.item_values[item], self.scale)

    def as_array(self) -> np.ndarray:
        return np.asarray(self.item_values, dtype=np.int64)


@dataclass(frozen=True)
class Instance:
    """``n`` agents, ``m`` items, one valuation per agent (same m and scale).

    Mixed additive kinds are normalized to ``ADDITIVE``; unit-demand cannot be
    mixed with summing kinds because bundle semantics differ.
    """

    n: int
    m: int
    valuations: tuple[Valuation, ...]

    def __post_init__(self):
        if self.n < 1:
            raise ShapeError("need at least one agent")
        if self.m < 1:
            raise ShapeError("need at least one item")
        if len(self.valuations) != self.n:
            raise ShapeError(f"expected {self.n} valuations, got {len(self.valuations)}")
        for v in self.valuations:
            if v.m != self.m:
                raise ShapeError(f"valuation has {v.m} items, instance has {self.m}")
            if v.scale != self.scale:
                raise ShapeError("all valuations must share one scale")
        kinds = {v.kind for v in self.valuations}
        if len(kinds) > 1:
            if Kind.UNIT_DEMAND in kinds:
                raise ShapeError("unit-demand valuations cannot be mixed with summing kinds")
            normalized = tuple(
                Valuation(Kind.ADDITIVE, v.item_values, v.scale) for v in self.valuations
            )
            object.__setattr__(self, "valuations", normalized)

    @property
    def scale(self) -> int:
        return self.valuations[0].scale

    @property
    def kind(self) -> Kind:
        kinds = {v.kind for v in self.valuations}
        return kinds.pop() if len(kinds) == 1 else Kind.ADDITIVE


@dataclass(frozen=True)
class Allocation:
    """A total assignment of every item to one of ``n`` agents."""

    n: int
    owner: tuple[int, ...]

    def __post_init__(self):
        if any(not 0 <= o < self.n for o in self.owner):
            raise ShapeError("owner entries must lie in [0, n)")

    @property
    def m(self) -> int:
        return len(self.owner)

    def bundle(self, agent: int) -> tuple[int, ...]:
        return tuple(e for e, o in enumerate(self.owner) if o == agent)

    def bundles(self) -> list[tuple[int, ...]]:
        out: list[list[int]] = [[] for _ in range(self.n)]
        for e, o in enumerate(self.owner):
            out[o].append(e)
        return [tuple(b) for b in out]


def allocation_from_bundles(n: int, m: int, bundles: Sequence[Iterable[int]]) -> Allocation:
    """Build an Allocation from explicit bundles; they must partition [0, m)."""
    owner = [-1] * m
    for agent, bundle in enumerate(bundles):
        for e in bundle:
            if not 0 <= e < m:
                raise UsageError(f"item index {e} out of range [0, {m})")
            if owner[e] != -1:
                raise UsageError(f"item {e} assigned twice")
            owner[e] = agent
    if any(o == -1 for o in owner):
        missing = [e for e, o in enumerate(owner) if o == -1]
        raise UsageError(f"items {missing} left unassigned")
    return Allocation(n=n, owner=tuple(owner))


# ---------------------------------------------------------------------------
# Operations
# ---------------------------------------------------------------------------

def value_of(v: Valuation, bundle: Iterable[int]) -> Fraction:
    """Exact value of a bundle: max for unit demand, sum otherwise."""
    return Fraction(value_int(v, bundle), v.scale)


def value_int(v: Valuation, bundle: Iterable[int]) -> int:
    """Bundle value in stored units (numerator over ``v.scale``)."""
    best = 0
    total = 0
    for e in bundle:
        if not 0 <= e < v.m:
            raise UsageError(f"item index {e} out of range [0, {v.m})")
        w = v.item_values[e]
        total += w
        if w > best:
            best = w
    return best if v.kind == Kind.UNIT_DEMAND else total


def top_items(v: Valuation, n: int) -> tuple[int, ...]:
    """The n most valuable items, ties broken toward lower item index."""
    order = sorted(range(v.m), key=lambda e: (-v.item_values[e], e))
    return tuple(sorted(order[:n]))


def ud_to_binary(v: Valuation, n: int) -> Valuation:
    """Reduce a unit-demand valuation to a binary one whose ones mark the
    agent's top ``n`` items (lowest index wins ties).

    Any allocation handing each agent one of the ones also hands her one of
    her top ``n`` original items, so maximin guarantees carry back.
    """
    if v.kind != Kind.UNIT_DEMAND:
        raise UsageError(f"expected a unit-demand valuation, got {v.kind.value}")
    if v.m < n:
        raise UsageError(f"reduction undefined: m={v.m} < n={n}")
    ones = set(top_items(v, n))
    return Valuation(Kind.BINARY, tuple(1 if e in ones else 0 for e in range(v.m)), scale=1)


# ---------------------------------------------------------------------------
# Instance families
# ---------------------------------------------------------------------------

def _rng(seed: int) -> np.random.Generator:
    return np.random.default_rng(seed)


def _gen_ud_random(n, m, params, seed):
    rng = _rng(seed)
    rows = rng.integers(1, 4 * m + 1, size=(n, m))
    vals = tuple(Valuation(Kind.UNIT_DEMAND, tuple(int(x) for x in row)) for row in rows)
    return Instance(n, m, vals)


def _gen_ud_identical(n, m, params, seed):
    rng = _rng(seed)
    row = tuple(int(x) for x in rng.integers(1, 4 * m + 1, size=m))
    return Instance(n, m, tuple(Valuation(Kind.UNIT_DEMAND, row) for _ in range(n)))


def _gen_ud_worst_pair(n, m, params, seed):
    # Two agents whose two favourite items share the adjacent names 0 and 1:
    # the worst case for name-based bit tricks without random renaming.
    if n != 2:
        raise InfeasibleFamilyError("ud_worst_pair is a two-agent family")
    if m < 3:
        raise InfeasibleFamilyError("ud_worst_pair needs m >= 3")
    row = (3, 2) + (1,) * (m - 2)
    return Instance(n, m, tuple(Valuation(Kind.UNIT_DEMAND, row) for _ in range(n)))


def _gen_additive_uniform(n, m, params, seed):
    vmax = int((params or {}).get("value_max", 100))
    rng = _rng(seed)
    rows = []
    for _ in range(n):
        row = rng.integers(0, vmax + 1, size=m)
        while int(row.sum()) == 0:
            row = rng.integers(0, vmax + 1, size=m)
        rows.append(tuple(int(x) for x in row))
    return Instance(n, m, tuple(Valuation(Kind.ADDITIVE, r) for r in rows))


def _gen_binary_uniform(n, m, params, seed):
    rng = _rng(seed)
    rows = rng.integers(0, 2, size=(n, m))
    vals = tuple(Valuation(Kind.BINARY, tuple(int(x) for x in row)) for row in rows)
    return Instance(n, m, vals)


def _gen_binary_balanced(n, m, params, seed):
    k = int((params or {}).get("k", max(1, m // (2 * n))))
    if k < 1:
        raise InfeasibleFamilyError("binary_balanced needs k >= 1")
    if m < 2 * k * n:
        raise InfeasibleFamilyError(f"binary_balanced needs m >= 2kn = {2 * k * n}, got m={m}")
    rng = _rng(seed)
    ones = set(int(x) for x in rng.choice(m, size=k * n, replace=False))
    row = tuple(1 if e in ones else 0 for e in range(m))
    inst = Instance(n, m, tuple(Valuation(Kind.BINARY, row) for _ in range(n)))
    assert sum(row) == k * n
    return inst


def _gen_two_valued_hard(n, m, params, seed):
    k = int((params or {}).get("k", 2))
    if n < 2 or k < 1:
        raise InfeasibleFamilyError("two_valued_hard needs n >= 2 and k >= 1")
    m_large = k * n + n - 1
    if m <= 2 * k * n:
        raise InfeasibleFamilyError(f"two_valued_hard needs m > 2kn = {2 * k * n}, got m={m}")
    scale = m - m_large
    if scale < 2:
        raise InfeasibleFamilyError("two_valued_hard needs at least two small items")
    rng = _rng(seed)
    large = set(int(x) for x in rng.choice(m, size=m_large, replace=False))
    row = tuple(scale if e in large else 1 for e in range(m))
    val = Valuation(Kind.TWO_VALUED, row, scale=scale, a=scale, b=1)
    return Instance(n, m, tuple(val for _ in range(n)))


def _gen_two_valued_uniform(n, m, params, seed):
    params = params or {}
    a = int(params.get("a", 3))
    b = int(params.get("b", 1))
    if not a > b >= 0:
        raise InfeasibleFamilyError(f"two_valued_uniform needs a > b >= 0, got a={a}, b={b}")
    rng = _rng(seed)
    rows = rng.integers(0, 2, size=(n, m))
    vals = tuple(
        Valuation(Kind.TWO_VALUED, tuple(a if x else b for x in row), a=a, b=b)
        for row in rows
    )
    return Instance(n, m, vals)


def _gen_identical_additive_hard(n, m, params, seed):
    params = params or {}
    k = int(params.get("k", 2))
    if k < 1 or n < 1:
        raise InfeasibleFamilyError("identical_additive_hard needs k >= 1 and n >= 1")
    if m != k * n:
        raise InfeasibleFamilyError(f"identical_additive_hard needs m = kn = {k * n}, got m={m}")
    K = int(params.get("K", m * m))
    if K < m * m:
        raise InfeasibleFamilyError(f"identical_additive_hard needs K >= m^2 = {m * m}")
    row: list[int] = []
    for j in range(1, n + 1):
        row.extend([K - j] * (k - 1))
        row.append(K * K + (k - 1) * j)
    val = Valuation(Kind.ADDITIVE, tuple(row))
    return Instance(n, m, tuple(val for _ in range(n)))


def _gen_ef1_hard(n, m, params, seed):
    k = int((params or {}).get("k", round(m ** 0.75)))
    if not 1 <= k <= m:
        raise InfeasibleFamilyError(f"ef1_hard needs 1 <= k <= m, got k={k}")
    rng = _rng(seed)
    rows = []
    for _ in range(n):
        ones = set(int(x) for x in rng.choice(m, size=k, replace=False))
        rows.append(tuple(1 if e in ones else 0 for e in range(m)))
    return Instance(n, m, tuple(Valuation(Kind.BINARY, r) for r in rows))


FAMILIES = {
    "ud_random": _gen_ud_random,
    "ud_identical": _gen_ud_identical,
    "ud_worst_pair": _gen_ud_worst_pair,
    "additive_uniform": _gen_additive_uniform,
    "binary_uniform": _gen_binary_uniform,
    "binary_balanced": _gen_binary_balanced,
    "two_valued_hard": _gen_two_valued_hard,
    "two_valued_uniform": _gen_two_valued_uniform,
    "identical_additive_hard": _gen_identical_additive_hard,
    "ef1_hard": _gen_ef1_hard,
}


def gen_instance(family: str, n: int, m: int, params: dict | None = None, seed: int = 0) -> Instance:
    """Generate one instance of a named family, deterministically in ``seed``."""
    if family not in FAMILIES:
        raise UsageError(f"unknown family {family!r}; known: {sorted(FAMILIES)}")
    return FAMILIES[family](n, m, params, seed)


# ---------------------------------------------------------------------------
# Text formats (versioned, canonical field order, diff-stable)
# ---------------------------------------------------------------------------

INSTANCE_HEADER = "fairbits-instance v1"
ALLOCATION_HEADER = "fairbits-allocation v1"


def instance_to_text(inst: Instance) -> str:
    lines = [
        INSTANCE_HEADER,
        f"n = {inst.n}",
        f"m = {inst.m}",
        f"kind = {inst.kind.value}",
        f"scale = {inst.scale}",
    ]
    if inst.kind == Kind.TWO_VALUED:
        lines.append(f"a = {inst.valuations[0].a}")
        lines.append(f"b = {inst.valuations[0].b}")
    lines.append("values:")
    for v in inst.valuations:
        lines.append(" ".join(str(x) for x in v.item_values))
    return "\n".join(lines) + "\n"


def _split_kv(line: str, key: str) -> str:
    parts = line.split("=", 1)
    if len(parts) != 2 or parts[0].strip() != key:
        raise MalformedError(f"expected '{key} = ...', got {line!r}")
    return parts[1].strip()


def instance_from_text(text: str) -> Instance:
    lines = [ln.rstrip("\n") for ln in text.strip("\n").split("\n")]
    if not lines:
        raise MalformedError("empty instance text")
    header = lines[0].strip()
    if not header.startswith("fairbits-instance"):
        raise MalformedError(f"not an instance document: {header!r}")
    if header != INSTANCE_HEADER:
        raise VersionError(f"unsupported instance version: {header!r}")
    try:
        n = int(_split_kv(lines[1], "n"))
        m = int(_split_kv(lines[2], "m"))
        kind = Kind(_split_kv(lines[3], "kind"))
        scale = int(_split_kv(lines[4], "scale"))
    except (IndexError, ValueError) as exc:
        raise MalformedError(f"bad instance header fields: {exc}") from exc
    pos = 5
    a = b = None
    if kind == Kind.TWO_VALUED:
        try:
            a = int(_split_kv(lines[pos], "a"))
            b = int(_split_kv(lines[pos + 1], "b"))
        except (IndexError, ValueError) as exc:
            raise MalformedError(f"bad a/b fields: {exc}") from exc
        pos += 2
    if pos >= len(lines) or lines[pos].strip() != "values:":
        raise MalformedError("missing 'values:' section")
    rows = lines[pos + 1:]
    if len(rows) != n:
        raise ShapeError(f"expected {n} value rows, got {len(rows)}")
    vals = []
    for row in rows:
        try:
            entries = tuple(int(x) for x in row.split())
        except ValueError as exc:
            raise MalformedError(f"bad value row {row!r}") from exc
        if len(entries) != m:
            raise ShapeError(f"value row has {len(entries)} entries, expected {m}")
        vals.append(Valuation(kind, entries, scale=scale, a=a, b=b))
    return Instance(n, m, tuple(vals))


def allocation_to_text(alloc: Allocation) -> str:
    return "\n".join(
        [
            ALLOCATION_HEADER,
            f"n = {alloc.n}",
            f"m = {alloc.m}",
            "owners = " + " ".join(str(o) for o in alloc.owner),
        ]
    ) + "\n"


def allocation_from_text(text: str) -> Allocation:
    lines = [ln.rstrip("\n") for ln in text.strip("\n").split("\n")]
    if not lines:
        raise MalformedError("empty allocation text")
    header = lines[0].strip()
    if not header.startswith("fairbits-allocation"):
        raise MalformedError(f"not an allocation document: {header!r}")
    if header != ALLOCATION_HEADER:
        raise VersionError(f"unsupported allocation version: {header!r}")
    try:
        n = int(_split_kv(lines[1], "n"))
        m = int(_split_kv(lines[2], "m"))
        owners = tuple(int(x) for x in _split_kv(lines[3], "owners").split())
    except (IndexError, ValueError) as exc:
        raise MalformedError(f"bad allocation fields: {exc}") from exc
    if len(owners) != m:
        raise ShapeError(f"expected {m} owners, got {len(owners)}")
    return Allocation(n=n, owner=owners)
