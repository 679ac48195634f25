"""Three-phase maximin protocol for binary valuations.

Each agent first reports how many full groups of n marked items she owns
(phase 1).  Agents then claim, in order of ascending demand, a minimal prefix
of the randomly ordered items covering their demand (phase 2).  Agents left
short top up from leftovers, or make an over-provisioned agent release her
surplus (phase 3).
"""

from __future__ import annotations

from ..channel import BIT, Channel, ChoiceCode, Crs, UintCode
from ..errors import ProtocolFailure, UsageError
from ..model import Allocation, Instance, Kind, allocation_from_bundles
from .common import Outcome, RunDiagnostics, need_kind


def binary_mms_threephase(inst: Instance, crs: Crs,
                          channel: Channel | None = None) -> Outcome:
    need_kind(inst, Kind.BINARY, "binary_mms_threephase")
    n, m = inst.n, inst.m
    ch = channel or Channel(crs)
    ones = [
        {e for e, x in enumerate(v.item_values) if x} for v in inst.valuations
    ]

    # internal padding to a multiple of n; padded indices >= m are worthless
    # for everyone and are dropped from the returned allocation
    m_pad = m if m % n == 0 else m + (n - m % n)
    k_cap = m_pad // n

    k = [
        ch.ask(i, "demand", UintCode(), lambda i=i: len(ones[i]) // n)
        for i in range(n)
    ]
    if any(not 0 <= ki <= k_cap for ki in k):
        raise ProtocolFailure("reported demand out of range")
    order = sorted((i for i in range(n) if k[i] > 0), key=lambda i: (k[i], i))

    pi = crs.rng("item-order").permutation(m_pad).tolist()

    # phase 2: minimal prefixes in the shared random order
    holdings: list[list[int]] = [[] for _ in range(n)]
    main_sets: list[list[int]] = [[] for _ in range(n)]
    prefix_start = [0] * n
    prefix_len = [0] * n
    pos = 0
    served = 0
    for i in order:
        def prefix_length(i=i, pos=pos):
            have = 0
            for t, e in enumerate(pi[pos:], start=1):
                if e < m and e in ones[i]:
                    have += 1
                    if have == k[i]:
                        return (1, t)
            return (0, 0)

        okflag = ch.ask(i, "prefix-ok", BIT, lambda: prefix_length()[0])
        if not okflag:
            break
        t_i = ch.ask(i, "prefix-len", UintCode(), lambda: prefix_length()[1])
        if t_i < 1 or pos + t_i > m_pad:
            raise ProtocolFailure("prefix length out of range")
        main_sets[i] = pi[pos:pos + t_i]
        holdings[i] = list(main_sets[i])
        prefix_start[i], prefix_len[i] = pos, t_i
        pos += t_i
        served += 1
    ell = len(order) - served
    leftover = sorted(pi[pos:])
    sad = order[served:]

    # phase 3: every short agent pulls marked items one by one
    tight = {i: len(holdings[i]) == k[i] for i in order[:served]}
    for i in sad:
        got = 0
        while got < k[i]:
            flag = ch.ask(
                i, "from-leftover", BIT,
                lambda i=i: 1 if any(e < m and e in ones[i] for e in leftover) else 0,
            )
            if flag:
                def pick_leftover(i=i):
                    for idx, e in enumerate(leftover):
                        if e < m and e in ones[i]:
                            return idx
                    raise ProtocolFailure("leftover pick with no marked item")

                idx = ch.ask(i, "leftover-pick", ChoiceCode(len(leftover)), pick_leftover)
                holdings[i].append(leftover.pop(idx))
                got += 1
            else:
                def pick_donor(i=i):
                    for j in order[:served]:
                        if not tight[j] and len(ones[i].intersection(holdings[j])) >= k[i] + 1:
                            return j
                    raise ProtocolFailure("no donor exists for a short agent")

                j = ch.ask(i, "donor", ChoiceCode(n), pick_donor)
                if j not in tight or tight[j]:
                    raise ProtocolFailure("named donor is not an open main set")
                local = sorted(holdings[j])
                keeps = []
                for r in range(k[j]):
                    def keep_one(j=j, local=local, keeps=keeps):
                        for p, e in enumerate(local):
                            if p not in keeps and e in ones[j]:
                                return p
                        raise ProtocolFailure("donor lacks marked items to keep")

                    p = ch.ask(j, f"donor-keep-{r}", ChoiceCode(len(local)), keep_one)
                    keeps.append(p)
                kept = {local[p] for p in keeps}
                released = [e for e in local if e not in kept]
                holdings[j] = sorted(kept)
                leftover = sorted(leftover + released)
                tight[j] = True
        tight[i] = True

    bundles = [[e for e in holdings[i] if e < m] for i in range(n)]
    spare = [e for e in leftover if e < m]
    for i in range(n):
        if i not in order:
            bundles[i] = []
    bundles[0].extend(spare)
    alloc = allocation_from_bundles(n, m, bundles)
    diag = RunDiagnostics(
        ell=ell,
        k_targets=k,
        prefix_start=prefix_start,
        prefix_len=prefix_len,
        main_sets=[sorted(e for e in s if e < m) for s in main_sets],
        leftover=spare,
    )
    return Outcome(alloc, ch.transcript, diag)
