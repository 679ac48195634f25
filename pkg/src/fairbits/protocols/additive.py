"""Protocols for general additive valuations.

The shared engine here is median decomposition: each agent privately cuts a
public line of units into nested contiguous bundles, and the referee splits
agents and units around median cut positions (announced outright, or located
by a randomized selection subprotocol) until every agent holds one bundle.
"""

from __future__ import annotations

import numpy as np

from ..channel import BIT, BitmaskCode, Channel, ChoiceCode, Crs
from ..errors import ProtocolFailure, UsageError
from ..model import (
    ADDITIVE_KINDS,
    Allocation,
    Instance,
    Kind,
    allocation_from_bundles,
    value_int,
)
from ..shares import mms_exact, truncate_over_proportional
from .common import Outcome, RunDiagnostics, SemiContiguousAllocation, need_kind


# ---------------------------------------------------------------------------
# Median machinery
# ---------------------------------------------------------------------------

def _select_rank(ch, group, value_fn, rank, code, variant, sigma_pos, label):
    """Find the element of the given rank (1 = smallest) among the agents'
    private positions, ties broken by original agent index.

    Deterministic mode: everyone announces.  Randomized mode: repeated
    splitting around the position of the lowest-priority agent, everyone else
    answering one comparison bit.  Returns (median position, the ``rank``
    agents at or below it).
    """
    if variant == "det":
        reports = {}
        for i in sorted(group):
            reports[i] = ch.ask(i, f"{label}-cut", code, lambda i=i: value_fn(i))
        ranked = sorted(group, key=lambda i: (reports[i], i))
        return reports[ranked[rank - 1]], ranked[:rank]

    cand = sorted(group)
    k = rank
    left_acc: list[int] = []
    while True:
        splitter = min(cand, key=lambda i: sigma_pos[i])
        sv = ch.ask(splitter, f"{label}-split", code, lambda: value_fn(splitter))
        below: list[int] = []
        above: list[int] = []
        for i in cand:
            if i == splitter:
                continue
            bit = ch.ask(i, f"{label}-cmp", BIT,
                         lambda i=i: 1 if (value_fn(i), i) > (sv, splitter) else 0)
            (above if bit else below).append(i)
        if len(below) == k - 1:
            return sv, left_acc + below + [splitter]
        if len(below) >= k:
            cand = below
        else:
            left_acc += below + [splitter]
            k -= len(below) + 1
            cand = above


def _carve_by_medians(ch, group, line_len, ends, variant, sigma_pos, label):
    """Split the line (positions 0..line_len-1) among ``group``.

    ``ends[i]`` holds, for each of agent i's nested contiguous bundles, the
    line position of its last unit (final entry = line_len - 1).  Returns
    agent -> half-open position range (lo, hi]."""
    out: dict[int, tuple[int, int]] = {}
    code = ChoiceCode(max(line_len, 1))

    def solve(grp, lo, hi, base, path):
        if len(grp) == 1:
            out[grp[0]] = (lo, hi)
            return
        h = len(grp) // 2
        median, left = _select_rank(
            ch, grp, lambda i: ends[i][base + h - 1], h,
            code, variant, sigma_pos, f"{label}{path}",
        )
        right = [i for i in grp if i not in set(left)]
        solve(sorted(left), lo, median, base, path + "l")
        solve(sorted(right), median, hi, base + h, path + "r")

    solve(sorted(group), -1, line_len - 1, 0, "")
    return out


def _sigma(inst: Instance, crs: Crs, variant: str) -> list[int]:
    if variant == "det":
        return list(range(inst.n))
    perm = crs.permutation(inst.n, "agent-order")
    pos = [0] * inst.n
    for p, agent in enumerate(perm):
        pos[agent] = p
    return pos


# ---------------------------------------------------------------------------
# One-item-relaxed proportionality
# ---------------------------------------------------------------------------

def prop1_ends(v, n: int, order=None) -> list[int]:
    """End positions of the n threshold-cut bundles along ``order``: bundle j
    closes at the first position where the running total reaches (j+1)/n of
    the whole."""
    if v.kind not in ADDITIVE_KINDS:
        raise UsageError("threshold cuts need a summing kind")
    if n < 1:
        raise UsageError("need n >= 1")
    order = list(range(v.m)) if order is None else list(order)
    if sorted(order) != list(range(v.m)):
        raise UsageError("order must be a permutation of all items")
    total = v.total
    if total == 0:
        # indifferent agent: one bundle takes the whole line
        return [len(order) - 1] * n
    ends = []
    run = 0
    pos = 0
    for j in range(1, n):
        while pos < len(order) and run * n < j * total:
            run += v.item_values[order[pos]]
            pos += 1
        ends.append(pos - 1)
    ends.append(len(order) - 1)
    return ends


def agent_prop1_partition(v, n: int, order=None) -> list[tuple[int, ...]]:
    """The n contiguous bundles behind :func:`prop1_ends`; each one passes the
    strict one-item proportionality test for ``v`` (the item just left of a
    short bundle is its witness)."""
    order = list(range(v.m)) if order is None else list(order)
    ends = prop1_ends(v, n, order)
    bundles = []
    prev = -1
    for e in ends:
        bundles.append(tuple(order[t] for t in range(prev + 1, e + 1)))
        prev = e
    return bundles


def prop1_allocate(inst: Instance, crs: Crs, variant: str = "det",
                   channel: Channel | None = None) -> Outcome:
    """Contiguous one-item-proportional allocation by median decomposition of
    the agents' private threshold cuts."""
    need_kind(inst, ADDITIVE_KINDS, "prop1_allocate")
    if variant not in ("det", "rand"):
        raise UsageError(f"unknown variant {variant!r}")
    n, m = inst.n, inst.m
    ch = channel or Channel(crs)
    ends = {i: prop1_ends(inst.valuations[i], n) for i in range(n)}
    ranges = _carve_by_medians(ch, range(n), m, ends, variant, _sigma(inst, crs, variant), "p1")
    owner = [0] * m
    for i, (lo, hi) in ranges.items():
        for t in range(lo + 1, hi + 1):
            owner[t] = i
    return Outcome(Allocation(n, tuple(owner)), ch.transcript)


# ---------------------------------------------------------------------------
# Truncated-share allocations
# ---------------------------------------------------------------------------

def _greedy_threshold_ends(unit_vals: list[int], total: int, factor: int,
                           bundles: int) -> list[int]:
    """Close a bundle as soon as its sum s satisfies s * factor >= total; the
    final bundle takes the tail and must qualify too."""
    ends = []
    run = 0
    for pos, w in enumerate(unit_vals):
        run += w
        if len(ends) < bundles - 1 and run * factor >= total:
            ends.append(pos)
            run = 0
    if len(ends) < bundles - 1:
        raise ProtocolFailure("could not form enough threshold bundles")
    if bundles >= 1 and run * factor < total:
        raise ProtocolFailure("tail bundle below threshold")
    ends.append(len(unit_vals) - 1)
    return ends


def _threshold_share_engine(ch, crs, n_total, agents, unit_count, unit_val,
                            totals, variant, sigma_pos, label):
    """Sequential single-unit grabs at the n/(2n-1) threshold, then a median
    carve of the remaining units for whoever could not grab.

    Returns (grabbed: agent -> unit, carve: agent -> list of units,
    remaining_unassigned: list of units)."""
    factor = 2 * n_total - 1
    remaining = list(range(unit_count))
    grabbed: dict[int, int] = {}
    for i in agents:
        snapshot = tuple(remaining)

        def has_item(i=i, snapshot=snapshot):
            return 1 if any(unit_val(i, u) * factor >= totals[i] for u in snapshot) else 0

        def pick(i=i, snapshot=snapshot):
            for idx, u in enumerate(snapshot):
                if unit_val(i, u) * factor >= totals[i]:
                    return idx
            raise ProtocolFailure("grab announced without a qualifying unit")

        if ch.ask(i, f"{label}-grab", BIT, has_item):
            idx = ch.ask(i, f"{label}-grab-pick", ChoiceCode(len(remaining)), pick)
            grabbed[i] = remaining.pop(idx)

    group = [i for i in agents if i not in grabbed]
    if not group:
        return grabbed, {}, remaining
    if ch.is_live:
        ends = {
            i: _greedy_threshold_ends(
                [unit_val(i, u) for u in remaining], totals[i], factor, len(group)
            )
            for i in group
        }
    else:
        ends = {i: [max(len(remaining) - 1, 0)] * len(group) for i in group}
    ranges = _carve_by_medians(ch, group, len(remaining), ends, variant, sigma_pos, label + "c")
    carve = {
        i: [remaining[t] for t in range(lo + 1, hi + 1)] for i, (lo, hi) in ranges.items()
    }
    return grabbed, carve, []


def _assemble_semi(n, m, content, rest) -> SemiContiguousAllocation:
    """Build the block/hole structure from ordered content chunks
    (agent, items, hole) plus hole-only or empty agents (agent, hole)."""
    blocks: list[tuple[int, int]] = []
    block_of = [0] * n
    hole_of: list[int | None] = [None] * n
    holes: list[int] = []
    cursor = 0
    for idx, (agent, items, hole) in enumerate(content):
        hi = m if idx == len(content) - 1 else items[-1] + 1
        blocks.append((cursor, hi))
        block_of[agent] = idx
        if hole is not None:
            hole_of[agent] = hole
            holes.append(hole)
        cursor = hi
    rest = list(rest)
    if not content and rest:
        agent, hole = rest[0]
        blocks.append((0, m))
        block_of[agent] = 0
        if hole is not None:
            hole_of[agent] = hole
            holes.append(hole)
        cursor = m
        rest = rest[1:]
    for agent, hole in rest:
        blocks.append((cursor, cursor))
        block_of[agent] = len(blocks) - 1
        if hole is not None:
            hole_of[agent] = hole
            holes.append(hole)
    return SemiContiguousAllocation(
        n=n, m=m, blocks=tuple(blocks), holes=tuple(holes),
        block_of=tuple(block_of), hole_of=tuple(hole_of),
    )


def tps_two_phase(inst: Instance, crs: Crs, channel: Channel | None = None,
                  variant: str = "det") -> Outcome:
    """Guarantee an n/(2n-1) fraction of every agent's truncated share: one
    sequential round of single-item grabs, then a contiguous median carve for
    the rest.  Grabbed items become holes of a semi-contiguous structure."""
    need_kind(inst, ADDITIVE_KINDS, "tps_two_phase")
    n, m = inst.n, inst.m
    ch = channel or Channel(crs)
    trunc = [truncate_over_proportional(v, n) for v in inst.valuations]
    totals = [v.total for v in trunc]
    grabbed, carve, spare = _threshold_share_engine(
        ch, crs, n, list(range(n)), m, lambda i, u: trunc[i].item_values[u],
        totals, variant, _sigma(inst, crs, variant), "tps",
    )
    content = sorted(((i, items, None) for i, items in carve.items() if items),
                     key=lambda entry: entry[1][0])
    rest = [(i, grabbed.get(i)) for i in range(n) if i not in carve or not carve[i]]
    semi = _assemble_semi(n, m, content, rest)
    alloc = semi.flatten()
    diag = RunDiagnostics(holes_pool=sorted(grabbed.values()), leftover=spare)
    return Outcome(alloc, ch.transcript, diag, semi=semi)


def tps_random_bundling(inst: Instance, crs: Crs, bundle_count: int | None = None,
                        channel: Channel | None = None) -> Outcome:
    """Replace items by uniformly random bundles, retry until every agent
    votes that no bundle exceeds 2n/(2n-1) of her (truncated) average, then
    run the threshold-share engine on the bundled units."""
    need_kind(inst, ADDITIVE_KINDS, "tps_random_bundling")
    n, m = inst.n, inst.m
    ch = channel or Channel(crs)
    m_prime = 2 * n ** 9 if bundle_count is None else int(bundle_count)
    if m_prime < n:
        raise UsageError("bundle count must be at least n")
    if m <= m_prime:
        out = tps_two_phase(inst, crs, channel=ch)
        out.diagnostics.retries = 0
        return out

    trunc = [truncate_over_proportional(v, n) for v in inst.valuations]
    totals = [v.total for v in trunc]
    weights = [np.asarray(v.item_values, dtype=np.int64) for v in trunc]
    attempt = 0
    while True:
        assign = crs.rng(f"bundling-{attempt}").integers(0, m_prime, size=m)
        sums = []
        for i in range(n):
            acc = np.zeros(m_prime, dtype=np.int64)
            np.add.at(acc, assign, weights[i])
            sums.append(acc)
        votes = [
            ch.ask(i, f"bundles-good-{attempt}", BIT,
                   lambda i=i: 1 if int(sums[i].max()) * (2 * n - 1) <= 2 * totals[i] else 0)
            for i in range(n)
        ]
        if all(votes):
            break
        attempt += 1
        if attempt > 10_000:
            raise ProtocolFailure("bundling retry budget exhausted")

    grabbed, carve, spare = _threshold_share_engine(
        ch, crs, n, list(range(n)), m_prime,
        lambda i, u: int(sums[i][u]), totals, "det", _sigma(inst, crs, "det"), "bndl",
    )
    unit_owner = [0] * m_prime
    for i, u in grabbed.items():
        unit_owner[u] = i
    for i, units in carve.items():
        for u in units:
            unit_owner[u] = i
    owner = [unit_owner[b] for b in assign.tolist()]
    diag = RunDiagnostics(retries=attempt)
    return Outcome(Allocation(n, tuple(owner)), ch.transcript, diag)


# ---------------------------------------------------------------------------
# Approximate proportionality (strict Prop1 and n/(2n-1) truncated share)
# ---------------------------------------------------------------------------

def aprop_allocate(inst: Instance, crs: Crs, variant: str = "det",
                   channel: Channel | None = None) -> Outcome:
    """Semi-contiguous allocation that is both strictly one-item-proportional
    and an n/(2n-1) truncated-share allocation.

    Phase 1 hands out "good" items (worth the threshold, with a partner item
    pushing past the average).  Phase 2 pools each remaining agent's unique
    "large" item as a hole.  Phase 3 carves holes-plus-line into nested
    per-agent bundles resolved by median decomposition.
    """
    need_kind(inst, ADDITIVE_KINDS, "aprop_allocate")
    if variant not in ("det", "rand"):
        raise UsageError(f"unknown variant {variant!r}")
    n, m = inst.n, inst.m
    ch = channel or Channel(crs)
    factor = 2 * n - 1
    trunc = [truncate_over_proportional(v, n) for v in inst.valuations]
    vals = [v.item_values for v in trunc]
    totals = [v.total for v in trunc]
    # indifferent agents (zero total) are fair with anything; one bit each
    # tells the referee who takes part without leaking values
    active = [
        i for i in range(n)
        if ch.ask(i, "participates", BIT, lambda i=i: 1 if totals[i] > 0 else 0)
    ]
    sigma_pos = _sigma(inst, crs, variant)

    # values sorted once per agent for witness lookups
    tops = [sorted(range(m), key=lambda e: (-vals[i][e], e)) for i in range(n)]

    def best_partner(i: int, exclude: int) -> int:
        for e in tops[i]:
            if e != exclude:
                return vals[i][e]
        return 0

    # phase 1: good items
    avail = list(range(m))
    taken: dict[int, int] = {}
    for i in active:
        snapshot = tuple(avail)

        def find_good(i=i, snapshot=snapshot):
            for e in snapshot:
                if vals[i][e] * factor >= totals[i] and \
                        (vals[i][e] + best_partner(i, e)) * n > totals[i]:
                    return e
            return None

        if ch.ask(i, "good-flag", BIT, lambda: 0 if find_good() is None else 1):
            e = ch.ask(i, "good-pick", ChoiceCode(m), find_good)
            if e not in avail:
                raise ProtocolFailure("announced good item is not available")
            taken[i] = e
            avail.remove(e)

    # phase 2: pool unique large items as holes
    group = [i for i in active if i not in taken]
    holes_pool: list[int] = []
    for i in group:
        def find_large(i=i):
            larges = [e for e in avail if vals[i][e] * factor >= totals[i]]
            if len(larges) > 1:
                raise ProtocolFailure("two large items would both be good")
            if larges and larges[0] not in holes_pool:
                return larges[0]
            return None

        if ch.ask(i, "hole-flag", BIT, lambda: 0 if find_large() is None else 1):
            e = ch.ask(i, "hole-pick", ChoiceCode(m), find_large)
            if e not in avail or e in holes_pool:
                raise ProtocolFailure("announced hole is not poolable")
            holes_pool.append(e)

    holes_pool.sort()
    line = [e for e in avail if e not in set(holes_pool)]
    line_pos = {e: t for t, e in enumerate(line)}

    # phase 3: private nested bundles, then median carve
    n3 = len(group)
    content = []
    if n3:
        if ch.is_live:
            ends = {
                i: _nested_bundle_ends(
                    i, vals[i], totals[i], n, n3, holes_pool, line, line_pos
                )
                for i in group
            }
        else:
            ends = {i: [max(len(line) - 1, 0)] * n3 for i in group}
        ranges = _carve_by_medians(ch, group, len(line), ends, variant, sigma_pos, "ap")
        ordered = sorted(ranges.items(), key=lambda kv: kv[1][0])
        bases = {}
        base = 0
        for i, _ in ordered:
            bases[i] = base
            base += 1
        # bundle index equals leaf order from the left; holes pair off by index
        for i, (lo, hi) in ordered:
            items = [line[t] for t in range(lo + 1, hi + 1)]
            if not items:
                raise ProtocolFailure("carved bundle lost its line items")
            hole = holes_pool[bases[i]] if bases[i] < len(holes_pool) else None
            content.append((i, items, hole))

    rest = [(i, taken.get(i)) for i in range(n) if all(i != c[0] for c in content)]
    semi = _assemble_semi(n, m, content, rest)
    alloc = semi.flatten()
    diag = RunDiagnostics(holes_pool=list(holes_pool), non_holes=list(line))
    return Outcome(alloc, ch.transcript, diag, semi=semi)


def _nested_bundle_ends(i, vals_i, total, n, bundles, holes_pool, line, line_pos):
    """Agent i's private partition: bundle j opens with the j-th hole (if one
    exists) and absorbs line items until it is both at the n/(2n-1) threshold
    and one witness item short of the average; the last bundle takes the tail.
    Returns the line position where each bundle ends."""
    factor = 2 * n - 1
    order = sorted(range(len(vals_i)), key=lambda e: (-vals_i[e], e))

    def witness_ok(s: int, hole, seg_lo: int, seg_hi: int) -> bool:
        for e in order:
            inside = e == hole or (e in line_pos and seg_lo <= line_pos[e] < seg_hi)
            if not inside:
                return (s + vals_i[e]) * n > total
        return False

    ends = []
    pos = 0
    for j in range(bundles):
        hole = holes_pool[j] if j < len(holes_pool) else None
        s = vals_i[hole] if hole is not None else 0
        seg_lo = pos
        if s * factor >= total and witness_ok(s, hole, seg_lo, pos):
            raise ProtocolFailure("hole alone forms an acceptable bundle (should be good)")
        if j == bundles - 1:
            if pos >= len(line):
                raise ProtocolFailure("no line items left for the last bundle")
            s += sum(vals_i[line[t]] for t in range(pos, len(line)))
            pos = len(line)
            if not (s * factor >= total and witness_ok(s, hole, seg_lo, pos)):
                raise ProtocolFailure("tail bundle is not acceptable")
            ends.append(len(line) - 1)
            break
        closed = False
        while pos < len(line):
            s += vals_i[line[pos]]
            pos += 1
            if s * factor >= total and witness_ok(s, hole, seg_lo, pos):
                ends.append(pos - 1)
                closed = True
                break
        if not closed:
            raise ProtocolFailure("ran out of line items while building bundles")
    return ends


# ---------------------------------------------------------------------------
# Classics
# ---------------------------------------------------------------------------

def cut_and_choose(inst: Instance, crs: Crs, channel: Channel | None = None) -> Outcome:
    """Two agents: the first announces her exact maximin split (one bit per
    item), the second takes whichever side she prefers."""
    need_kind(inst, ADDITIVE_KINDS, "cut_and_choose")
    if inst.n != 2:
        raise UsageError(f"cut_and_choose needs exactly 2 agents, got {inst.n}")
    m = inst.m
    ch = channel or Channel(crs)

    def cutter_side():
        _, parts = mms_exact(inst.valuations[0], 2)
        return parts[0]

    side0 = set(ch.ask(0, "partition", BitmaskCode(m), cutter_side))
    side1 = [e for e in range(m) if e not in side0]

    def prefer():
        v1 = inst.valuations[1]
        return 1 if value_int(v1, side1) > value_int(v1, sorted(side0)) else 0

    pick = ch.ask(1, "choose", BIT, prefer)
    chooser = side1 if pick else sorted(side0)
    owner = [1 if e in set(chooser) else 0 for e in range(m)]
    return Outcome(Allocation(2, tuple(owner)), ch.transcript)


def round_robin(inst: Instance, crs: Crs, channel: Channel | None = None) -> Outcome:
    """Agents take turns picking their most valuable remaining item."""
    need_kind(inst, ADDITIVE_KINDS, "round_robin")
    n, m = inst.n, inst.m
    ch = channel or Channel(crs)
    remaining = list(range(m))
    bundles: list[list[int]] = [[] for _ in range(n)]
    turn = 0
    while remaining:
        i = turn % n
        snapshot = tuple(remaining)

        def best(i=i, snapshot=snapshot):
            v = inst.valuations[i]
            top = max(snapshot, key=lambda e: (v.item_values[e], -e))
            return snapshot.index(top)

        pick = ch.ask(i, "pick", ChoiceCode(len(remaining)), best)
        bundles[i].append(remaining.pop(pick))
        turn += 1
    alloc = allocation_from_bundles(n, m, bundles)
    return Outcome(alloc, ch.transcript)
