"""Maximin protocol for two-valued additive instances.

Agents reveal only how many high-value items they own.  Pretending those
counts sit on common prefixes, the referee solves the resulting count
instance exactly for per-agent (high, low) quotas, caps any quota above m/n,
and lets agents claim their high items with a ranked-subset message; filler
items are assigned silently.
"""

from __future__ import annotations

from math import inf

from ..channel import Channel, ChoiceCode, Crs, SubsetCode
from ..errors import CapacityError, ProtocolFailure, UsageError
from ..model import Allocation, Instance, Kind, allocation_from_bundles
from ..shares import mms_two_valued_counts
from .common import Outcome, RunDiagnostics, need_kind


def _count_quotas(counts: list[int], m: int, a: int, b: int, n: int) -> list[tuple[int, int]]:
    """Per-agent (high, low) quotas, in the order of ``counts`` sorted
    ascending, such that quota value covers each agent's maximin and the
    running high totals stay claimable from prefixes."""
    targets = {c: mms_two_valued_counts(c, m - c, a, b, n) for c in set(counts)}
    cap = m // n

    def need_low(count: int, alpha: int) -> int | float:
        short = targets[count] - alpha * a
        if short <= 0:
            return 0
        if b == 0:
            return inf
        return -(-short // b)

    # dp[used] = least total filler need after placing a prefix of agents
    dp: list[int | float] = [0] + [inf] * m
    choice: list[list[int]] = []
    for count in counts:
        nxt: list[int | float] = [inf] * (m + 1)
        pick = [-1] * (m + 1)
        hi_alpha = min(cap, count)
        for used in range(m + 1):
            if dp[used] == inf:
                continue
            for alpha in range(min(hi_alpha, count - used) + 1):
                cost = dp[used] + need_low(count, alpha)
                if cost < nxt[used + alpha]:
                    nxt[used + alpha] = cost
                    pick[used + alpha] = alpha
        dp = nxt
        choice.append(pick)
    best_used = -1
    for used in range(m + 1):
        if dp[used] != inf and used + dp[used] <= m:
            if best_used < 0 or dp[used] < dp[best_used]:
                best_used = used
    if best_used < 0:
        raise ProtocolFailure("no feasible quota table for the count instance")
    quotas: list[tuple[int, int]] = []
    used = best_used
    for idx in range(len(counts) - 1, -1, -1):
        alpha = choice[idx][used]
        quotas.append((alpha, int(need_low(counts[idx], alpha))))
        used -= alpha
    quotas.reverse()
    spare = m - best_used - sum(q[1] for q in quotas)
    if spare < 0:
        raise ProtocolFailure("quota table over-assigns items")
    alpha_last, beta_last = quotas[-1]
    quotas[-1] = (alpha_last, beta_last + spare)
    return quotas


def two_valued_mms(inst: Instance, crs: Crs, channel: Channel | None = None,
                   cap: int = 128) -> Outcome:
    need_kind(inst, Kind.TWO_VALUED, "two_valued_mms")
    n, m = inst.n, inst.m
    if m > cap or n > 16:
        raise CapacityError(f"two_valued_mms solver capped at m <= {cap}, n <= 16")
    a, b = inst.valuations[0].a, inst.valuations[0].b
    ch = channel or Channel(crs)

    high = [
        {e for e, x in enumerate(v.item_values) if x == a} for v in inst.valuations
    ]
    counts = [
        ch.ask(i, "high-count", ChoiceCode(m + 1), lambda i=i: len(high[i]))
        for i in range(n)
    ]
    order = sorted(range(n), key=lambda i: (counts[i], i))
    quotas = _count_quotas([counts[i] for i in order], m, a, b, n)

    remaining = list(range(m))
    bundles: list[list[int]] = [[] for _ in range(n)]
    for idx, i in enumerate(order):
        alpha = quotas[idx][0]
        if alpha == 0:
            continue

        def claim(i=i, alpha=alpha, snapshot=tuple(remaining)):
            mine = [p for p, e in enumerate(snapshot) if e in high[i]]
            if len(mine) < alpha:
                raise ProtocolFailure("prefix feasibility violated at claim time")
            return tuple(mine[:alpha])

        chosen = ch.ask(i, "claim-high", SubsetCode(len(remaining), alpha), claim)
        taken = [remaining[p] for p in chosen]
        bundles[i].extend(taken)
        remaining = [e for e in remaining if e not in set(taken)]
    for idx, i in enumerate(order):
        beta = quotas[idx][1]
        if beta > len(remaining):
            raise ProtocolFailure("not enough filler items")
        bundles[i].extend(remaining[:beta])
        remaining = remaining[beta:]
    if remaining:
        raise ProtocolFailure("items left over after filler assignment")
    alloc = allocation_from_bundles(n, m, bundles)
    alphas = [0] * n
    for idx, i in enumerate(order):
        alphas[i] = quotas[idx][0]
    return Outcome(alloc, ch.transcript, RunDiagnostics(k_targets=alphas))
