"""Protocols for unit-demand agents.

All of them work on the binary image of each valuation (ones on the agent's
top-n items), so a maximin bundle is simply one containing at least one of
the agent's marked items.
"""

from __future__ import annotations

from collections import deque

from ..channel import BIT, Channel, ChoiceCode, Crs, UintCode, UnaryCode
from ..errors import ProtocolFailure, UsageError
from ..model import Allocation, Instance, Kind, allocation_from_bundles, ud_to_binary
from .common import Outcome, RunDiagnostics, need_kind


def _image_ones(inst: Instance, live: bool = True) -> list[set[int]]:
    """Per-agent marked items: top-n under unit demand, or the given ones for
    binary inputs that already carry exactly n ones per agent.

    In replay mode the sets are placeholders; replies come from the recorded
    transcript, so private values are never consulted."""
    if not live:
        return [set() for _ in range(inst.n)]
    out = []
    for v in inst.valuations:
        if v.kind == Kind.UNIT_DEMAND:
            img = ud_to_binary(v, inst.n)
            out.append({e for e, x in enumerate(img.item_values) if x})
        elif v.kind == Kind.BINARY:
            ones = {e for e, x in enumerate(v.item_values) if x}
            if len(ones) != inst.n:
                raise UsageError(
                    f"binary input needs exactly n={inst.n} marked items per agent, got {len(ones)}"
                )
            out.append(ones)
        else:
            raise UsageError(f"unit-demand protocol got kind {v.kind.value}")
    return out


def _lowest_diff_bit(x: int, y: int) -> int:
    if x == y:
        raise ProtocolFailure("names must be distinct")
    return ((x ^ y) & -(x ^ y)).bit_length() - 1


# ---------------------------------------------------------------------------
# Two agents
# ---------------------------------------------------------------------------

def two_agent_ud(inst: Instance, crs: Crs, variant: str = "randomized",
                 channel: Channel | None = None) -> Outcome:
    """Two-agent warm-ups: from shipping both favourite pairs down to an
    expected three bits.

    * ``naive``: both agents name their two favourites; the referee hands the
      first agent one item the second agent's favourite is not.
    * ``announce``: the first agent names one favourite and keeps it.
    * ``bitsplit``: the first agent names a bit position on which her two
      favourites' indices differ; the second picks a side of that bit.
    * ``randomized``: same split trick after a shared random renaming, with
      the position sent in unary (two bits in expectation).
    """
    need_kind(inst, Kind.UNIT_DEMAND, "two_agent_ud")
    if inst.n != 2:
        raise UsageError(f"two_agent_ud needs exactly 2 agents, got {inst.n}")
    if variant not in ("naive", "announce", "bitsplit", "randomized"):
        raise UsageError(f"unknown variant {variant!r}")
    m = inst.m
    ch = channel or Channel(crs)
    if ch.is_live:
        for v in inst.valuations:
            if sum(1 for x in v.item_values if x > 0) < 2:
                raise UsageError("each agent needs at least two positive-value items")

    def pair(agent: int) -> tuple[int, int]:
        v = inst.valuations[agent]
        order = sorted(range(m), key=lambda e: (-v.item_values[e], e))
        return order[0], order[1]

    if variant == "naive":
        p1 = ch.ask(0, "pair-top", ChoiceCode(m), lambda: pair(0)[0])
        s1 = ch.ask(0, "pair-second", ChoiceCode(m), lambda: pair(0)[1])
        p2 = ch.ask(1, "pair-top", ChoiceCode(m), lambda: pair(1)[0])
        ch.ask(1, "pair-second", ChoiceCode(m), lambda: pair(1)[1])
        mine = p1 if p1 != p2 else s1
        owner = [1] * m
        owner[mine] = 0
        return Outcome(Allocation(2, tuple(owner)), ch.transcript)

    if variant == "announce":
        e = ch.ask(0, "announce", ChoiceCode(m), lambda: pair(0)[0])
        owner = [1] * m
        owner[e] = 0
        return Outcome(Allocation(2, tuple(owner)), ch.transcript)

    if variant == "bitsplit":
        width = max(1, (m - 1).bit_length())
        names = list(range(m))
        loc = ch.ask(
            0, "bit-location", ChoiceCode(width),
            lambda: _lowest_diff_bit(names[pair(0)[0]], names[pair(0)[1]]),
        )
    else:  # randomized
        m_pad = 1 << max(1, (m - 1).bit_length())
        names = crs.rng("item-names").permutation(m_pad).tolist()
        depth = ch.ask(
            0, "split-depth", UnaryCode(),
            lambda: _lowest_diff_bit(names[pair(0)[0]], names[pair(0)[1]]) + 1,
        )
        loc = depth - 1

    side = ch.ask(1, "side", BIT, lambda: (names[pair(1)[0]] >> loc) & 1)
    owner = [0 if ((names[e] >> loc) & 1) != side else 1 for e in range(m)]
    return Outcome(Allocation(2, tuple(owner)), ch.transcript)


# ---------------------------------------------------------------------------
# Identical valuations, random value queries
# ---------------------------------------------------------------------------

def identical_ud_random_queries(inst: Instance, crs: Crs,
                                channel: Channel | None = None) -> Outcome:
    """All agents share one valuation; a designated probe agent classifies
    random bipartitions as worth 0, 1 or more until n singleton-value parts
    are isolated.  Parts worth 0 fold into the first agent's bundle.
    """
    need_kind(inst, (Kind.UNIT_DEMAND, Kind.BINARY), "identical_ud_random_queries")
    ch = channel or Channel(crs)
    if ch.is_live and len({v.item_values for v in inst.valuations}) != 1:
        raise UsageError("identical_ud_random_queries needs identical valuations")
    n, m = inst.n, inst.m
    ones = _image_ones(inst, ch.is_live)[0]
    if n == 1:
        return Outcome(Allocation(1, (0,) * m), ch.transcript, RunDiagnostics(queries=0))

    rng = crs.rng("query-splits")
    worklist: list[tuple[int, ...]] = [tuple(range(m))]
    found: list[tuple[int, ...]] = []
    spare: list[int] = []
    queries = 0
    budget = 1000 + 400 * n * m
    while worklist:
        queries += 1
        if queries > budget:
            raise ProtocolFailure("query budget exhausted; identicality likely violated")
        part = worklist.pop()
        mask = rng.integers(0, 2, size=len(part))
        sides = (
            tuple(e for e, b in zip(part, mask) if b),
            tuple(e for e, b in zip(part, mask) if not b),
        )
        for tag, sub in zip(("a", "b"), sides):
            cat = ch.ask(0, f"class-{tag}", ChoiceCode(3),
                         lambda sub=sub: min(2, len(ones.intersection(sub))))
            if cat == 0:
                spare.extend(sub)
            elif cat == 1:
                found.append(sub)
            else:
                worklist.append(sub)
    if len(found) != n:
        raise ProtocolFailure(f"expected {n} singleton-value parts, found {len(found)}")
    bundles = [list(found[i]) for i in range(n)]
    bundles[0].extend(spare)
    alloc = allocation_from_bundles(n, m, bundles)
    return Outcome(alloc, ch.transcript, RunDiagnostics(queries=queries))


# ---------------------------------------------------------------------------
# Deterministic satisfy-everyone protocol
# ---------------------------------------------------------------------------

def ud_mms_deterministic(inst: Instance, crs: Crs,
                         channel: Channel | None = None) -> Outcome:
    """Start from n equal contiguous bundles, then let each unhappy agent
    either swap with another unhappy agent whose bundle she likes, or split a
    bundle worth two of her marked items using the bit-position trick.
    """
    need_kind(inst, (Kind.UNIT_DEMAND, Kind.BINARY), "ud_mms_deterministic")
    n, m = inst.n, inst.m
    if m < 2 * n:
        raise UsageError(f"needs m >= 2n, got m={m}, n={n}")
    ch = channel or Channel(crs)
    ones = _image_ones(inst, ch.is_live)

    bundles = [list(range(i * m // n, (i + 1) * m // n)) for i in range(n)]
    holder = list(range(n))  # agent -> bundle slot

    def my_bundle(i: int) -> list[int]:
        return bundles[holder[i]]

    sat = []
    for i in range(n):
        bit = ch.ask(i, "init-sat", BIT,
                     lambda i=i: 1 if ones[i].intersection(my_bundle(i)) else 0)
        sat.append(bool(bit))

    queue = deque(i for i in range(n) if not sat[i])
    while queue:
        i = queue.popleft()
        if sat[i]:
            continue

        def find_move(i=i):
            for j in range(n):
                if j != i and not sat[j] and ones[i].intersection(my_bundle(j)):
                    return 0, j
            for l in range(n):
                if l != i and len(ones[i].intersection(my_bundle(l))) >= 2:
                    return 1, l
            raise ProtocolFailure("no swap partner and no splittable bundle")

        kind = ch.ask(i, "fix-kind", BIT, lambda: find_move()[0])
        who = ch.ask(i, "fix-who", ChoiceCode(n), lambda: find_move()[1])
        if kind == 0:
            holder[i], holder[who] = holder[who], holder[i]
            sat[i] = True
            jbit = ch.ask(who, "post-swap-sat", BIT,
                          lambda: 1 if ones[who].intersection(my_bundle(who)) else 0)
            sat[who] = bool(jbit)
        else:
            local = sorted(my_bundle(who))
            t = len(local)
            width = max(1, (t - 1).bit_length())

            def split_loc(i=i, local=local):
                mine = sorted(p for p, e in enumerate(local) if e in ones[i])
                return _lowest_diff_bit(mine[0], mine[1])

            loc = ch.ask(i, "split-location", ChoiceCode(width), split_loc)
            hi = [e for p, e in enumerate(local) if (p >> loc) & 1]
            lo = [e for p, e in enumerate(local) if not (p >> loc) & 1]

            def keep_side(who=who, local=local):
                p = min(p for p, e in enumerate(local) if e in ones[who])
                return (p >> loc) & 1

            keep = ch.ask(who, "keep-side", BIT, keep_side)
            kept, other = (hi, lo) if keep else (lo, hi)
            mine_old = sorted(my_bundle(i))
            topup = t - len(kept)
            if topup > len(mine_old):
                raise ProtocolFailure("size invariant broken in split")
            bundles[holder[who]] = kept + mine_old[:topup]
            bundles[holder[i]] = other + mine_old[topup:]
            sat[i] = True
    alloc = allocation_from_bundles(n, m, [my_bundle(i) for i in range(n)])
    return Outcome(alloc, ch.transcript)


# ---------------------------------------------------------------------------
# Randomized swap protocol with auxiliary bundles
# ---------------------------------------------------------------------------

def rud(inst: Instance, crs: Crs, channel: Channel | None = None) -> Outcome:
    """Random initial bundles; every unhappy agent claims the cheapest-to-name
    eligible bundle (a spare that suits her, an unhappy agent's bundle that
    suits her, or anyone's bundle worth two marked items, which she splits).
    Bundle names cost O(log rank) in a shared random ordering; spare bundles
    fold into the first agent at the end.
    """
    need_kind(inst, (Kind.UNIT_DEMAND, Kind.BINARY), "rud")
    n, m = inst.n, inst.m
    if m < 2 * n:
        raise UsageError(f"needs m >= 2n, got m={m}, n={n}")
    ch = channel or Channel(crs)
    ones = _image_ones(inst, ch.is_live)
    live_mode = ch.is_live

    assign = crs.rng("init-partition").integers(0, n, size=m).tolist()
    bundles: list[set[int]] = [set() for _ in range(2 * n)]
    for e, s in enumerate(assign):
        bundles[s].add(e)
    slot_of = list(range(n))
    agent_of: dict[int, int] = {s: i for i, s in enumerate(slot_of)}
    aux: set[int] = set()
    next_slot = n

    order = crs.rng("bundle-order").permutation(2 * n).tolist()
    prio = [0] * (2 * n)
    for pos, sid in enumerate(order):
        prio[sid] = pos

    sat = []
    for i in range(n):
        bit = ch.ask(i, "init-sat", BIT,
                     lambda i=i: 1 if ones[i] & bundles[slot_of[i]] else 0)
        sat.append(bool(bit))

    eligibility: list[tuple[int, int, int]] = []
    splits = 0
    queue = deque(i for i in range(n) if not sat[i])
    while queue:
        i = queue.popleft()
        if sat[i]:
            continue
        live_slots = sorted(range(next_slot), key=lambda s: prio[s])

        def eligible(i=i, live_slots=live_slots):
            out = []
            for s in live_slots:
                if s == slot_of[i]:
                    continue
                val = len(ones[i] & bundles[s])
                if s in aux:
                    if val >= 1:
                        out.append(s)
                elif not sat[agent_of[s]]:
                    if val >= 1:
                        out.append(s)
                elif val >= 2:
                    out.append(s)
            if not out:
                raise ProtocolFailure("no eligible bundle exists")
            return out

        rank = ch.ask(i, "eligible-rank", UintCode(),
                      lambda: 1 + live_slots.index(eligible()[0]))
        if rank > len(live_slots):
            raise ProtocolFailure("eligible rank out of range")
        chosen = live_slots[rank - 1]
        if live_mode:
            eligibility.append((sum(1 for x in sat if not x), len(eligible()), rank))

        if chosen in aux:
            aux.remove(chosen)
            aux.add(slot_of[i])
            agent_of.pop(slot_of[i], None)
            slot_of[i] = chosen
            agent_of[chosen] = i
            sat[i] = True
        elif not sat[agent_of[chosen]]:
            j = agent_of[chosen]
            slot_of[i], slot_of[j] = slot_of[j], slot_of[i]
            agent_of[slot_of[i]] = i
            agent_of[slot_of[j]] = j
            sat[i] = True
            jbit = ch.ask(j, "post-swap-sat", BIT,
                          lambda: 1 if ones[j] & bundles[slot_of[j]] else 0)
            sat[j] = bool(jbit)
        else:
            l = agent_of[chosen]
            local = sorted(bundles[chosen])
            t = len(local)
            width = max(1, (t - 1).bit_length())
            names = crs.rng(f"split-names-{splits}").permutation(1 << width).tolist()
            splits += 1

            def split_depth(i=i, local=local, names=names):
                mine = sorted(p for p, e in enumerate(local) if e in ones[i])
                return _lowest_diff_bit(names[mine[0]], names[mine[1]]) + 1

            depth = ch.ask(i, "split-depth", UnaryCode(), split_depth)
            bit = depth - 1
            hi = {e for p, e in enumerate(local) if (names[p] >> bit) & 1}
            lo = set(local) - hi

            def keep_side(l=l, local=local, names=names):
                p = min(p for p, e in enumerate(local) if e in ones[l])
                return (names[p] >> bit) & 1

            keep = ch.ask(l, "keep-side", BIT, keep_side)
            kept, other = (hi, lo) if keep else (lo, hi)
            if next_slot >= 2 * n:
                raise ProtocolFailure("auxiliary bundle budget exceeded")
            bundles[chosen] = kept
            new_slot = next_slot
            next_slot += 1
            bundles[new_slot] = other
            aux.add(slot_of[i])
            agent_of.pop(slot_of[i], None)
            slot_of[i] = new_slot
            agent_of[new_slot] = i
            sat[i] = True

    final = [sorted(bundles[slot_of[i]]) for i in range(n)]
    for s in aux:
        final[0].extend(sorted(bundles[s]))
    alloc = allocation_from_bundles(n, m, final)
    diag = RunDiagnostics(eligibility=eligibility if live_mode else None)
    return Outcome(alloc, ch.transcript, diag)


# ---------------------------------------------------------------------------
# EF1 protocols
# ---------------------------------------------------------------------------

def _one_round_picks(ch: Channel, inst: Instance, units: list[tuple[int, ...]],
                     label: str) -> list[list[int]]:
    """One selection round over ``units`` (single items or whole bundles):
    agents 0..n-2 each pick their best remaining unit, the last agent takes
    the rest."""
    n = inst.n
    remaining = list(range(len(units)))
    bundles: list[list[int]] = [[] for _ in range(n)]
    for i in range(n - 1):
        def best(i=i, remaining=tuple(remaining)):
            v = inst.valuations[i]
            def unit_val(u):
                return max(v.item_values[e] for e in units[u])
            top = max(remaining, key=lambda u: (unit_val(u), -min(units[u])))
            return remaining.index(top)
        pick = ch.ask(i, f"{label}-pick", ChoiceCode(len(remaining)), best)
        chosen = remaining.pop(pick)
        bundles[i].extend(units[chosen])
    for u in remaining:
        bundles[n - 1].extend(units[u])
    return bundles


def ud_ef1(inst: Instance, crs: Crs, variant: str = "first_round_rr",
           channel: Channel | None = None) -> Outcome:
    """Envy-free-up-to-one-item for unit demand.

    ``first_round_rr``: one selection round, last agent sweeps the rest.
    ``bundled``: random n^3 bundles accepted by unanimous vote (each agent's
    top-n items must land in distinct bundles), then the one-round protocol
    over bundles.  Falls back to the plain round when m <= n^3.
    """
    need_kind(inst, (Kind.UNIT_DEMAND, Kind.BINARY), "ud_ef1")
    if variant not in ("first_round_rr", "bundled"):
        raise UsageError(f"unknown variant {variant!r}")
    n, m = inst.n, inst.m
    ch = channel or Channel(crs)
    ones = _image_ones(inst, ch.is_live)
    if n == 1:
        return Outcome(Allocation(1, (0,) * m), ch.transcript)

    retries = 0
    if variant == "bundled" and m > n ** 3:
        nb = n ** 3
        attempt = 0
        while True:
            assign = crs.rng(f"ef1-bundles-{attempt}").integers(0, nb, size=m).tolist()
            votes = [
                ch.ask(i, f"bundle-vote-{attempt}", BIT,
                       lambda i=i: 1 if len({assign[e] for e in ones[i]}) == n else 0)
                for i in range(n)
            ]
            if all(votes):
                break
            attempt += 1
            if attempt > 10_000:
                raise ProtocolFailure("bundling retry budget exhausted")
        retries = attempt
        units: list[tuple[int, ...]] = [tuple() for _ in range(nb)]
        groups: list[list[int]] = [[] for _ in range(nb)]
        for e, b in enumerate(assign):
            groups[b].append(e)
        units = [tuple(g) for g in groups if g]
    else:
        units = [(e,) for e in range(m)]

    bundles = _one_round_picks(ch, inst, units, "rr")
    alloc = allocation_from_bundles(n, m, bundles)
    return Outcome(alloc, ch.transcript, RunDiagnostics(retries=retries))
