"""Exact share computations and executable fairness checkers.

Everything here is pure, deterministic and exact: shares are rationals, and
every comparison that decides a verdict is done in integer or Fraction
arithmetic.  These functions are the ground truth that every protocol output
is validated against.
"""

from __future__ import annotations

import bisect
from dataclasses import dataclass
from fractions import Fraction
from math import gcd, inf
from typing import Iterable, Sequence

import numpy as np

from .errors import CapacityError, UsageError
from .model import (
    ADDITIVE_KINDS,
    Allocation,
    Instance,
    Kind,
    Valuation,
    allocation_from_bundles,
    value_int,
    value_of,
)


@dataclass(frozen=True)
class Verdict:
    """Per-agent checker outcome.  ``witness`` names the item (or agent) that
    decided the comparison, when one exists."""

    ok: bool
    witness: int | None = None


def all_ok(verdicts: Iterable[Verdict]) -> bool:
    return all(v.ok for v in verdicts)


@dataclass(frozen=True)
class ShareProfile:
    prop: Fraction
    tps: Fraction
    mms: Fraction | None = None
    mxs: Fraction | None = None


# ---------------------------------------------------------------------------
# Shares
# ---------------------------------------------------------------------------

def prop_share(v: Valuation, n: int) -> Fraction:
    """Proportional share: one n-th of the total value."""
    if v.kind == Kind.UNIT_DEMAND:
        raise UsageError("proportional share is defined for summing kinds only")
    if n < 1:
        raise UsageError("need n >= 1")
    return Fraction(v.total, n * v.scale)


def _tps_ints(values: Sequence[int], n: int, pick: str = "first") -> tuple[int, int, list[int]]:
    """Truncated-share recursion over stored integers.

    Repeatedly drops one item whose value exceeds the current per-agent
    average and decrements the agent count.  Returns (remaining total,
    remaining agent count, indices dropped in order).
    """
    live = list(range(len(values)))
    total = sum(values)
    n_rem = n
    dropped: list[int] = []
    while n_rem > 1:
        over = [e for e in live if values[e] * n_rem > total]
        if not over:
            break
        if pick == "first":
            e = over[0]
        elif pick == "last":
            e = over[-1]
        elif pick == "max":
            e = max(over, key=lambda x: (values[x], x))
        elif pick == "min":
            e = min(over, key=lambda x: (values[x], x))
        else:
            raise UsageError(f"unknown pick rule {pick!r}")
        live.remove(e)
        dropped.append(e)
        total -= values[e]
        n_rem -= 1
    return total, n_rem, dropped


def tps(v: Valuation, n: int, pick: str = "first") -> Fraction:
    """Truncated proportional share.

    The proportional share after items worth more than the running average
    are set aside, one per discarded agent.  The result does not depend on
    the order in which such items are removed; ``pick`` exists so tests can
    assert exactly that.
    """
    if v.kind == Kind.UNIT_DEMAND:
        raise UsageError("truncated proportional share needs a summing kind")
    if n < 1:
        raise UsageError("need n >= 1")
    total, n_rem, _ = _tps_ints(v.item_values, n, pick)
    return Fraction(total, n_rem * v.scale)


def truncate_over_proportional(v: Valuation, n: int) -> Valuation:
    """Cap every item that the truncated-share recursion sets aside at the
    truncated share itself.

    The output has no item above its own (recomputed) proportional share, and
    any allocation that is fair for the output is fair for the input.
    """
    if v.kind == Kind.UNIT_DEMAND:
        raise UsageError("truncation needs a summing kind")
    if n < 1:
        raise UsageError("need n >= 1")
    total, n_rem, dropped = _tps_ints(v.item_values, n)
    if not dropped:
        return v
    capped = set(dropped)
    # t = total / n_rem in stored units; multiply through by n_rem to stay integral
    new_vals = [total if e in capped else val * n_rem for e, val in enumerate(v.item_values)]
    new_scale = v.scale * n_rem
    g = new_scale
    for x in new_vals:
        g = gcd(g, x)
    if g > 1:
        new_vals = [x // g for x in new_vals]
        new_scale //= g
    return Valuation(Kind.ADDITIVE, tuple(new_vals), scale=new_scale)


# -- maximin share ----------------------------------------------------------

def _maxmin_two_agents(values: Sequence[int]) -> tuple[int, list[list[int]]]:
    """Exact two-bundle maximin via meet-in-the-middle subset sums."""
    m = len(values)
    total = sum(values)
    half = total // 2
    left = list(range(m // 2))
    right = list(range(m // 2, m))
    right_sums: list[tuple[int, int]] = []
    for mask in range(1 << len(right)):
        s = sum(values[right[i]] for i in range(len(right)) if mask >> i & 1)
        right_sums.append((s, mask))
    right_sums.sort()
    keys = [s for s, _ in right_sums]
    best_sum, best_masks = -1, (0, 0)
    for lmask in range(1 << len(left)):
        ls = sum(values[left[i]] for i in range(len(left)) if lmask >> i & 1)
        if ls > half:
            continue
        pos = bisect.bisect_right(keys, half - ls) - 1
        if pos >= 0:
            cand = ls + keys[pos]
            if cand > best_sum:
                best_sum = cand
                best_masks = (lmask, right_sums[pos][1])
                if best_sum == half:
                    break
    lmask, rmask = best_masks
    side = [left[i] for i in range(len(left)) if lmask >> i & 1]
    side += [right[i] for i in range(len(right)) if rmask >> i & 1]
    other = [e for e in range(m) if e not in set(side)]
    return best_sum, [side, other]


def _maxmin_dfs(values: Sequence[int], n: int) -> tuple[int, list[list[int]]]:
    """Branch-and-bound max-min partition (items placed largest first)."""
    m = len(values)
    order = sorted(range(m), key=lambda e: -values[e])
    suffix = [0] * (m + 1)
    for t in range(m - 1, -1, -1):
        suffix[t] = suffix[t + 1] + values[order[t]]
    ceiling = suffix[0] // n
    sums = [0] * n
    bundles: list[list[int]] = [[] for _ in range(n)]
    best = {"val": -1, "bundles": [list(b) for b in bundles]}

    def dfs(t: int) -> None:
        if best["val"] == ceiling:
            return
        if t == m:
            cur = min(sums)
            if cur > best["val"]:
                best["val"] = cur
                best["bundles"] = [list(b) for b in bundles]
            return
        if min(sums) + suffix[t] <= best["val"]:
            return
        e = order[t]
        seen: set[int] = set()
        for idx in sorted(range(n), key=lambda i: sums[i]):
            s = sums[idx]
            if s in seen:
                continue
            seen.add(s)
            sums[idx] += values[e]
            bundles[idx].append(e)
            dfs(t + 1)
            sums[idx] -= values[e]
            bundles[idx].pop()

    dfs(0)
    return best["val"], best["bundles"]


def mms_exact(
    v: Valuation, n: int, cap: int = 14
) -> tuple[Fraction, tuple[tuple[int, ...], ...]]:
    """Exact maximin share with a witness partition.

    Unit-demand valuations reduce to a closed form (the n-th largest item);
    two-agent summing valuations use meet-in-the-middle subset sums (m <= 30);
    everything else is branch-and-bound enumeration up to ``cap`` items.
    """
    if n < 1:
        raise UsageError("need n >= 1")
    m = v.m
    if n == 1:
        return Fraction(value_int(v, range(m)), v.scale), (tuple(range(m)),)
    if v.kind == Kind.UNIT_DEMAND:
        order = sorted(range(m), key=lambda e: (-v.item_values[e], e))
        if m < n:
            bundles = [[order[i]] if i < m else [] for i in range(n)]
            return Fraction(0), tuple(tuple(b) for b in bundles)
        bundles = [[order[i]] for i in range(n)]
        bundles[0].extend(sorted(order[n:]))
        val = v.item_values[order[n - 1]]
        return Fraction(val, v.scale), tuple(tuple(sorted(b)) for b in bundles)
    if m < n:
        bundles = [[e] if e < m else [] for e in range(n)]
        return Fraction(0), tuple(tuple(b) for b in bundles)
    if n == 2:
        if m > 30:
            raise CapacityError(f"two-agent maximin capped at m <= 30, got m={m}")
        val, parts = _maxmin_two_agents(v.item_values)
    else:
        if m > cap:
            raise CapacityError(f"maximin brute force capped at m <= {cap}, got m={m}")
        val, parts = _maxmin_dfs(v.item_values, n)
    return Fraction(val, v.scale), tuple(tuple(sorted(b)) for b in parts)


def mms_binary(v: Valuation, n: int) -> Fraction:
    """Closed-form maximin for binary valuations: floor(#ones / n)."""
    if v.kind != Kind.BINARY:
        raise UsageError(f"expected a binary valuation, got {v.kind.value}")
    if n < 1:
        raise UsageError("need n >= 1")
    ones = sum(1 for x in v.item_values if x)
    return Fraction(ones // n)


def mms_unit_demand(v: Valuation, n: int) -> Fraction:
    if v.kind != Kind.UNIT_DEMAND:
        raise UsageError(f"expected a unit-demand valuation, got {v.kind.value}")
    if n < 1:
        raise UsageError("need n >= 1")
    if v.m < n:
        return Fraction(0)
    vals = sorted(v.item_values, reverse=True)
    return Fraction(vals[n - 1], v.scale)


def mms_two_valued_counts(ma: int, mb: int, a: int, b: int, n: int) -> int:
    """Exact maximin (stored units) for ``ma`` items of value ``a`` and ``mb``
    of value ``b``, via threshold search with a count DP.
    """
    if not a > b >= 0:
        raise UsageError(f"need a > b >= 0, got a={a}, b={b}")
    if n < 1:
        raise UsageError("need n >= 1")
    if ma + mb < n:
        return 0
    if n == 1:
        return ma * a + mb * b
    if b == 0:
        return (ma // n) * a
    total = ma * a + mb * b
    hi_cap = total // n
    candidates = sorted(
        {
            alpha * a + beta * b
            for alpha in range(ma + 1)
            for beta in range(mb + 1)
            if alpha * a + beta * b <= hi_cap
        }
    )

    def feasible(threshold: int) -> bool:
        if threshold <= 0:
            return True
        q = min(ma, -(-threshold // a))
        cost = [max(0, -(-(threshold - alpha * a) // b)) for alpha in range(q + 1)]
        g = [0] + [inf] * ma
        for _ in range(n):
            h = [inf] * (ma + 1)
            for used in range(ma + 1):
                if g[used] == inf:
                    continue
                for alpha in range(min(q, ma - used) + 1):
                    cand = g[used] + cost[alpha]
                    if cand < h[used + alpha]:
                        h[used + alpha] = cand
            g = h
        return min(g) <= mb

    lo, hi = 0, len(candidates) - 1
    best = 0
    while lo <= hi:
        mid = (lo + hi) // 2
        if feasible(candidates[mid]):
            best = candidates[mid]
            lo = mid + 1
        else:
            hi = mid - 1
    return best


def mms_two_valued(v: Valuation, n: int) -> Fraction:
    if v.kind != Kind.TWO_VALUED:
        raise UsageError(f"expected a two-valued valuation, got {v.kind.value}")
    if v.m > 256:
        raise CapacityError("two-valued maximin capped at m <= 256")
    ma = sum(1 for x in v.item_values if x == v.a)
    return Fraction(mms_two_valued_counts(ma, v.m - ma, v.a, v.b, n), v.scale)


def class_mms(v: Valuation, n: int, cap: int = 14) -> Fraction:
    """Maximin via the cheapest exact oracle available for the kind."""
    if v.kind == Kind.BINARY:
        return mms_binary(v, n)
    if v.kind == Kind.UNIT_DEMAND:
        return mms_unit_demand(v, n)
    if v.kind == Kind.TWO_VALUED:
        return mms_two_valued(v, n)
    return mms_exact(v, n, cap)[0]


# -- minimum acceptable-bundle share (EFX-derived) ---------------------------

_OWNERS_CACHE: dict[tuple[int, int], np.ndarray] = {}


def enumerate_owners(n: int, m: int, cap_entries: int = 1 << 21) -> np.ndarray:
    """All n^m owner vectors as an (n^m, m) int8 matrix, cached."""
    count = n ** m
    if count > cap_entries:
        raise CapacityError(f"allocation space {n}^{m} exceeds cap {cap_entries}")
    key = (n, m)
    if key not in _OWNERS_CACHE:
        out = np.empty((count, m), dtype=np.int8)
        idx = np.arange(count, dtype=np.int64)
        for j in range(m):
            out[:, j] = (idx // (n ** j)) % n
        if len(_OWNERS_CACHE) > 8:
            _OWNERS_CACHE.clear()
        _OWNERS_CACHE[key] = out
    return _OWNERS_CACHE[key]


def mxs_exact(v: Valuation, n: int, m: int | None = None) -> Fraction:
    """Smallest value the agent can be left with across all allocations in
    which her own bundle blocks envy-up-to-any-item from her point of view.

    Enumerates every n-way split of the items; exact but desk-scale only.
    """
    if n < 1:
        raise UsageError("need n >= 1")
    m = v.m if m is None else m
    if m != v.m:
        raise UsageError("m must match the valuation")
    if n == 1:
        return Fraction(value_int(v, range(m)), v.scale)
    if v.kind == Kind.UNIT_DEMAND:
        return _mxs_unit_demand(v, n)
    owners = enumerate_owners(n, m)
    w = v.as_array()
    big = np.int64(1) << 50
    own = (w[None, :] * (owners == 0)).sum(axis=1)
    ok = np.ones(owners.shape[0], dtype=bool)
    for g in range(1, n):
        mask = owners == g
        vg = (w[None, :] * mask).sum(axis=1)
        smallest = np.where(mask, w[None, :], big).min(axis=1)
        ok &= own >= vg - smallest
    return Fraction(int(own[ok].min()), v.scale)


def _mxs_unit_demand(v: Valuation, n: int) -> Fraction:
    if n ** v.m > 1 << 18:
        raise CapacityError("unit-demand MXS enumeration too large")
    best: int | None = None
    owners = enumerate_owners(n, v.m)
    for row in owners:
        bundles: list[list[int]] = [[] for _ in range(n)]
        for e, o in enumerate(row):
            bundles[o].append(e)
        own = value_int(v, bundles[0])
        fine = True
        for g in range(1, n):
            bg = bundles[g]
            if len(bg) <= 1:
                continue
            worst = max(value_int(v, [e for e in bg if e != drop]) for drop in bg)
            if own < worst:
                fine = False
                break
        if fine and (best is None or own < best):
            best = own
    return Fraction(best, v.scale)


def share_profile(inst: Instance, agent: int, with_mms: bool = True, with_mxs: bool = False) -> ShareProfile:
    v = inst.valuations[agent]
    return ShareProfile(
        prop=prop_share(v, inst.n),
        tps=tps(v, inst.n),
        mms=class_mms(v, inst.n) if with_mms else None,
        mxs=mxs_exact(v, inst.n) if with_mxs else None,
    )


# ---------------------------------------------------------------------------
# Checkers
# ---------------------------------------------------------------------------

def default_rho(n: int) -> Fraction:
    return Fraction(n, 2 * n - 1)


def check_prop1(inst: Instance, alloc: Allocation, strict: bool = True) -> list[Verdict]:
    """Each agent either meets her proportional share, or some single outside
    item would push her over it (strictly over, unless ``strict`` is off)."""
    if inst.kind == Kind.UNIT_DEMAND:
        raise UsageError("proportionality checks need summing kinds")
    bundles = alloc.bundles()
    out = []
    for i, v in enumerate(inst.valuations):
        own_n = value_int(v, bundles[i]) * inst.n          # compare at scale*n
        total = v.total
        if own_n >= total:
            out.append(Verdict(True))
            continue
        best_e, best_val = None, -1
        for e in range(inst.m):
            if alloc.owner[e] != i and v.item_values[e] > best_val:
                best_e, best_val = e, v.item_values[e]
        if best_e is None:
            out.append(Verdict(False))
            continue
        lifted = own_n + best_val * inst.n
        ok = lifted > total if strict else lifted >= total
        out.append(Verdict(ok, witness=best_e if ok else None))
    return out


def check_rho_tps(inst: Instance, alloc: Allocation, rho: Fraction | None = None) -> list[Verdict]:
    if inst.kind == Kind.UNIT_DEMAND:
        raise UsageError("truncated-share checks need summing kinds")
    rho = default_rho(inst.n) if rho is None else Fraction(rho)
    if not 0 < rho <= 1:
        raise UsageError(f"rho must lie in (0, 1], got {rho}")
    bundles = alloc.bundles()
    out = []
    for i, v in enumerate(inst.valuations):
        target = rho * tps(v, inst.n)
        out.append(Verdict(Fraction(value_int(v, bundles[i]), v.scale) >= target))
    return out


def check_envy(inst: Instance, alloc: Allocation, notion: str = "ef1") -> list[Verdict]:
    """Pairwise envy checks: ``ef``, ``ef1``, ``efx`` and the equitability
    variant ``eqx``.  Removing an item from an empty bundle is vacuous."""
    if notion not in ("ef", "ef1", "efx", "eqx"):
        raise UsageError(f"unknown envy notion {notion!r}")
    bundles = alloc.bundles()
    values = [[value_int(v, b) for b in bundles] for v in inst.valuations]
    out = []
    for i, v in enumerate(inst.valuations):
        ok, witness = True, None
        for j in range(inst.n):
            if j == i:
                continue
            if notion == "eqx":
                mine = values[i][i] * inst.valuations[j].scale
                theirs = values[j][j] * v.scale
                if mine >= theirs:
                    continue
                vj = inst.valuations[j]
                reduced = [
                    value_int(vj, [e for e in bundles[j] if e != drop]) * v.scale
                    for drop in bundles[j]
                ]
                if reduced and all(mine >= r for r in reduced):
                    continue
                ok, witness = False, j
                break
            mine = values[i][i]
            theirs = values[i][j]
            if mine >= theirs:
                continue
            if notion == "ef":
                ok, witness = False, j
                break
            reduced = [
                value_int(v, [e for e in bundles[j] if e != drop]) for drop in bundles[j]
            ]
            if notion == "ef1":
                if reduced and any(mine >= r for r in reduced):
                    continue
            else:  # efx
                if reduced and all(mine >= r for r in reduced):
                    continue
            ok, witness = False, j
            break
        out.append(Verdict(ok, witness))
    return out


def check_share(
    inst: Instance,
    alloc: Allocation,
    notion: str = "mms",
    rho: Fraction | int = 1,
) -> list[Verdict]:
    """Share-based checks: each agent's bundle against ``rho`` times her
    maximin share (``mms``/``rho_mms``) or her EFX-derived floor (``mxs``)."""
    if notion not in ("mms", "rho_mms", "mxs"):
        raise UsageError(f"unknown share notion {notion!r}")
    rho = Fraction(rho)
    if not 0 < rho <= 1:
        raise UsageError(f"rho must lie in (0, 1], got {rho}")
    bundles = alloc.bundles()
    out = []
    for i, v in enumerate(inst.valuations):
        if notion == "mxs":
            share = mxs_exact(v, inst.n)
        else:
            share = class_mms(v, inst.n)
        mine = Fraction(value_int(v, bundles[i]), v.scale)
        out.append(Verdict(mine >= rho * share))
    return out


def check_aprop(inst: Instance, alloc: Allocation) -> list[Verdict]:
    """Approximate proportionality: strict one-item proportionality together
    with an n/(2n-1) fraction of the truncated share, per agent."""
    p1 = check_prop1(inst, alloc, strict=True)
    rt = check_rho_tps(inst, alloc, default_rho(inst.n))
    return [Verdict(a.ok and b.ok, a.witness) for a, b in zip(p1, rt)]


_NOTION_DISPATCH = {
    "mms": lambda inst, alloc, rho: check_share(inst, alloc, "mms"),
    "rho_mms": lambda inst, alloc, rho: check_share(inst, alloc, "rho_mms", rho),
    "mxs": lambda inst, alloc, rho: check_share(inst, alloc, "mxs"),
    "prop1": lambda inst, alloc, rho: check_prop1(inst, alloc, strict=True),
    "prop1_weak": lambda inst, alloc, rho: check_prop1(inst, alloc, strict=False),
    "rho_tps": lambda inst, alloc, rho: check_rho_tps(inst, alloc, rho),
    "aprop": lambda inst, alloc, rho: check_aprop(inst, alloc),
    "ef": lambda inst, alloc, rho: check_envy(inst, alloc, "ef"),
    "ef1": lambda inst, alloc, rho: check_envy(inst, alloc, "ef1"),
    "efx": lambda inst, alloc, rho: check_envy(inst, alloc, "efx"),
    "eqx": lambda inst, alloc, rho: check_envy(inst, alloc, "eqx"),
}

NOTIONS = tuple(sorted(_NOTION_DISPATCH))


def check_notion(
    inst: Instance, alloc: Allocation, notion: str, rho: Fraction | None = None
) -> list[Verdict]:
    if notion not in _NOTION_DISPATCH:
        raise UsageError(f"unknown notion {notion!r}; known: {NOTIONS}")
    return _NOTION_DISPATCH[notion](inst, alloc, rho)


def acceptable(inst: Instance, alloc: Allocation, notion: str, rho: Fraction | None = None) -> bool:
    """True when every agent's verdict passes under ``notion``."""
    return all_ok(check_notion(inst, alloc, notion, rho))
