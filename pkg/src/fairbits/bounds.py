"""Lower-bound laboratory.

Estimates (or computes exactly, by full enumeration) the best acceptance
probability any single allocation achieves against a random instance family;
its negative log is a floor on how many bits any protocol must move.  Also
finds exact minimum hitting sets at toy scale and the log-n rotation trick
for one-extra-item unit-demand instances.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from itertools import combinations

import numpy as np

from .channel import Crs, derive_seed
from .errors import CapacityError, ProtocolFailure, UsageError
from .model import (
    Allocation,
    Instance,
    Kind,
    Valuation,
    gen_instance,
    ud_to_binary,
)
from .shares import (
    class_mms,
    default_rho,
    enumerate_owners,
    mxs_exact,
    prop_share,
    tps,
)

_BIG = np.int64(1) << 50
_CHUNK = 1 << 15


@dataclass
class AllocTables:
    """Per-(agent, bundle) value/extreme tables across an allocation matrix."""

    owners: np.ndarray          # (A, m) int8
    val: np.ndarray             # (n, n, A) bundle value
    min_in: np.ndarray          # (n, n, A) min item value (BIG when empty)
    max_in: np.ndarray          # (n, n, A) max item value (-1 when empty)


def allocation_tables(inst: Instance, owners: np.ndarray | None = None) -> AllocTables:
    if owners is None:
        owners = enumerate_owners(inst.n, inst.m)
    n = inst.n
    A = owners.shape[0]
    if n * n * A > (1 << 26):
        raise CapacityError("allocation table would be too large")
    weights = [v.as_array() for v in inst.valuations]
    val = np.zeros((n, n, A), np.int64)
    min_in = np.full((n, n, A), _BIG, np.int64)
    max_in = np.full((n, n, A), -1, np.int64)
    for lo in range(0, A, _CHUNK):
        hi = min(lo + _CHUNK, A)
        chunk = owners[lo:hi]
        for g in range(n):
            mask = chunk == g
            for i in range(n):
                w = weights[i][None, :]
                val[i, g, lo:hi] = np.where(mask, w, 0).sum(axis=1)
                min_in[i, g, lo:hi] = np.where(mask, w, _BIG).min(axis=1)
                max_in[i, g, lo:hi] = np.where(mask, w, -1).max(axis=1)
    return AllocTables(owners, val, min_in, max_in)


def _frac_ge(values: np.ndarray, scale: int, target: Fraction) -> np.ndarray:
    """values/scale >= target, elementwise and exactly."""
    return values * target.denominator >= target.numerator * scale


def fairness_pass_table(inst: Instance, tables: AllocTables, notion: str,
                        rho: Fraction | None = None) -> np.ndarray:
    """Boolean vector over the allocation matrix: does every agent accept?"""
    n, scale = inst.n, inst.scale
    val, min_in, max_in = tables.val, tables.min_in, tables.max_in
    A = val.shape[2]
    ok = np.ones(A, dtype=bool)
    if notion in ("mms", "mxs"):
        for i, v in enumerate(inst.valuations):
            share = mxs_exact(v, n) if notion == "mxs" else class_mms(v, n)
            ok &= _frac_ge(val[i, i], scale, share)
        return ok
    if notion == "prop1":
        for i, v in enumerate(inst.valuations):
            own = val[i, i]
            outside = max_in[i].copy()
            outside[i] = -1
            best_out = outside.max(axis=0)
            ok &= (own * n >= v.total) | ((own + best_out) * n > v.total)
        return ok
    if notion == "rho_tps":
        r = default_rho(n) if rho is None else Fraction(rho)
        for i, v in enumerate(inst.valuations):
            ok &= _frac_ge(val[i, i], scale, r * tps(v, n))
        return ok
    if notion == "aprop":
        return fairness_pass_table(inst, tables, "prop1") & \
            fairness_pass_table(inst, tables, "rho_tps")
    if notion in ("ef", "ef1", "efx"):
        for i in range(n):
            own = val[i, i]
            for g in range(n):
                if g == i:
                    continue
                theirs = val[i, g]
                if notion == "ef":
                    ok &= own >= theirs
                elif notion == "ef1":
                    ok &= own >= theirs - np.maximum(max_in[i, g], 0)
                else:
                    ok &= own >= theirs - min_in[i, g]
        return ok
    raise UsageError(f"unsupported notion for pass tables: {notion!r}")


# ---------------------------------------------------------------------------
# Acceptance-probability estimator
# ---------------------------------------------------------------------------

@dataclass
class RdcEstimate:
    family: str
    notion: str
    n: int
    m: int
    trials: int
    p_hat: Fraction
    ci_low: float
    ci_high: float
    bound_bits: float
    exhaustive: bool
    best_owner: tuple[int, ...]


def wilson_interval(successes: int, trials: int, z: float = 1.96) -> tuple[float, float]:
    if trials == 0:
        return 0.0, 1.0
    phat = successes / trials
    denom = 1 + z * z / trials
    center = (phat + z * z / (2 * trials)) / denom
    half = z * math.sqrt(phat * (1 - phat) / trials + z * z / (4 * trials * trials)) / denom
    return max(0.0, center - half), min(1.0, center + half)


def enumerate_family(family: str, n: int, m: int, params: dict | None = None):
    """All instances of an enumerable family (identical valuations with a
    fixed count of marked items)."""
    params = params or {}
    if family == "binary_balanced":
        k = int(params.get("k", max(1, m // (2 * n))))
        ones_count = k * n
        for ones in combinations(range(m), ones_count):
            chosen = set(ones)
            row = tuple(1 if e in chosen else 0 for e in range(m))
            val = Valuation(Kind.BINARY, row)
            yield Instance(n, m, tuple(val for _ in range(n)))
    elif family == "two_valued_hard":
        k = int(params.get("k", 2))
        m_large = k * n + n - 1
        scale = m - m_large
        for large in combinations(range(m), m_large):
            chosen = set(large)
            row = tuple(scale if e in chosen else 1 for e in range(m))
            val = Valuation(Kind.TWO_VALUED, row, scale=scale, a=scale, b=1)
            yield Instance(n, m, tuple(val for _ in range(n)))
    else:
        raise UsageError(f"family {family!r} is not enumerable; use sampling")


def estimate_rdc_bound(
    family: str,
    notion: str,
    n: int,
    m: int,
    trials: int,
    crs: Crs,
    params: dict | None = None,
    exhaustive: bool = False,
    candidate_allocations: list[Allocation] | None = None,
) -> RdcEstimate:
    """Best per-allocation acceptance probability over the family, and the
    log2(1/p) bits floor it implies.

    Exhaustive mode enumerates every instance (exact ``p_hat``); otherwise
    ``trials`` sampled instances give an estimate with a Wilson interval
    (computed for the maximizing allocation, so read it as a diagnostic, not
    a simultaneous guarantee).
    """
    if candidate_allocations is not None:
        owners = np.array([a.owner for a in candidate_allocations], dtype=np.int8)
    else:
        owners = enumerate_owners(n, m)
    if exhaustive:
        instances = list(enumerate_family(family, n, m, params))
    else:
        instances = [
            gen_instance(family, n, m, params, seed=derive_seed(crs.master_seed, "rdc", t))
            for t in range(trials)
        ]
    successes = np.zeros(owners.shape[0], dtype=np.int64)
    for inst in instances:
        tables = allocation_tables(inst, owners)
        successes += fairness_pass_table(inst, tables, notion)
    count = len(instances)
    best = int(successes.max())
    p_hat = Fraction(best, count)
    ci_low, ci_high = wilson_interval(best, count)
    if best > 0:
        bound = float(math.log2(count / best))
    else:
        bound = float(math.log2(max(count, 2)))
    best_idx = int(successes.argmax())
    return RdcEstimate(
        family=family, notion=notion, n=n, m=m, trials=count,
        p_hat=p_hat, ci_low=ci_low, ci_high=ci_high, bound_bits=bound,
        exhaustive=exhaustive, best_owner=tuple(int(x) for x in owners[best_idx]),
    )


# ---------------------------------------------------------------------------
# Exact minimum hitting sets
# ---------------------------------------------------------------------------

@dataclass
class HittingSetResult:
    allocations: list[Allocation]
    size: int
    exact: bool

    @property
    def dc_bits(self) -> float:
        return math.log2(self.size) if self.size else 0.0


def min_hitting_set(
    instances: list[Instance],
    notion: str,
    budget: int = 200_000,
    rho: Fraction | None = None,
    candidate_allocations: list[Allocation] | None = None,
) -> HittingSetResult:
    """Smallest set of allocations serving every instance under ``notion``.

    Greedy gives the upper bound; iterative-deepening search then proves
    minimality unless the node ``budget`` runs out (``exact`` reports which).
    """
    if not instances:
        raise UsageError("need at least one instance")
    n, m = instances[0].n, instances[0].m
    if any(inst.n != n or inst.m != m for inst in instances):
        raise UsageError("all instances must share n and m")
    if candidate_allocations is not None:
        owners = np.array([a.owner for a in candidate_allocations], dtype=np.int8)
    else:
        owners = enumerate_owners(n, m)
    T = len(instances)
    masks: dict[int, int] = {}
    for t, inst in enumerate(instances):
        tables = allocation_tables(inst, owners)
        passes = fairness_pass_table(inst, tables, notion, rho)
        bit = 1 << t
        for a in np.nonzero(passes)[0]:
            masks[int(a)] = masks.get(int(a), 0) | bit
    full = (1 << T) - 1
    covered_any = 0
    for v in masks.values():
        covered_any |= v
    if covered_any != full:
        raise UsageError("some instance is served by no allocation at all")

    # dedupe and drop dominated coverage masks
    best_for_mask: dict[int, int] = {}
    for a, v in masks.items():
        if v not in best_for_mask:
            best_for_mask[v] = a
    items = sorted(best_for_mask.items(), key=lambda kv: -bin(kv[0]).count("1"))
    kept: list[tuple[int, int]] = []
    for v, a in items:
        if not any(v & kv == v for kv, _ in kept if kv != v):
            kept.append((v, a))

    def greedy() -> list[int]:
        chosen = []
        cover = 0
        while cover != full:
            v, a = max(kept, key=lambda kv: bin(kv[0] & ~cover).count("1"))
            if not v & ~cover:
                raise ProtocolFailure("greedy cover stalled")
            chosen.append(a)
            cover |= v
        return chosen

    upper = greedy()
    nodes = 0
    exact = True

    def covers_of(t: int) -> list[tuple[int, int]]:
        return [(v, a) for v, a in kept if v >> t & 1]

    def dfs(cover: int, chosen: list[int], depth: int) -> list[int] | None:
        nonlocal nodes, exact
        if cover == full:
            return list(chosen)
        if depth == 0:
            return None
        nodes += 1
        if nodes > budget:
            exact = False
            return None
        # branch on the uncovered instance with the fewest covering options
        t_best, opts_best = -1, None
        for t in range(T):
            if cover >> t & 1:
                continue
            opts = covers_of(t)
            if opts_best is None or len(opts) < len(opts_best):
                t_best, opts_best = t, opts
        for v, a in opts_best:
            chosen.append(a)
            got = dfs(cover | v, chosen, depth - 1)
            chosen.pop()
            if got is not None:
                return got
        return None

    best = upper
    for size in range(1, len(upper)):
        found = dfs(0, [], size)
        if not exact:
            break
        if found is not None:
            best = found
            break
    result = [Allocation(n, tuple(int(x) for x in owners[a])) for a in best]

    # re-verify coverage against every instance
    for inst in instances:
        from .shares import acceptable

        if not any(acceptable(inst, alloc, notion, rho) for alloc in result):
            raise ProtocolFailure("hitting set fails to cover an instance")
    return HittingSetResult(allocations=result, size=len(result), exact=exact)


# ---------------------------------------------------------------------------
# One extra item: rotations beat bit counting
# ---------------------------------------------------------------------------

def cyclic_mms_dc(inst: Instance, crs: Crs | None = None) -> tuple[int, Allocation]:
    """For unit demand with m = n + 1: one of the n rotations (each of the
    first n-1 agents takes a shifted single item, the last agent the two
    leftovers) is maximin; naming it needs ceil(log2 n) bits."""
    if inst.kind != Kind.UNIT_DEMAND:
        raise UsageError("cyclic construction needs unit-demand valuations")
    n, m = inst.n, inst.m
    if m != n + 1:
        raise UsageError(f"needs m = n + 1, got n={n}, m={m}")
    ones = [
        {e for e, x in enumerate(ud_to_binary(v, n).item_values) if x}
        for v in inst.valuations
    ]
    for j in range(1, n + 1):
        owner = [n - 1] * m
        fine = True
        for i in range(n - 1):
            item = (i + 1 + j) % (n + 1)
            owner[item] = i
            if item not in ones[i]:
                fine = False
                break
        if not fine:
            continue
        alloc = Allocation(n, tuple(owner))
        last_items = [e for e in range(m) if alloc.owner[e] == n - 1]
        if any(e in ones[n - 1] for e in last_items):
            return j, alloc
    raise ProtocolFailure("no rotation works; this contradicts the counting argument")
