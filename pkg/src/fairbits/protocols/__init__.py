"""Protocol registry: every protocol is addressable by a stable string id,
paired with the fairness checker its output is verified against and a default
instance family satisfying its preconditions."""

from __future__ import annotations

from functools import partial

from ..channel import Channel, Crs, Transcript
from ..errors import UsageError
from ..model import Allocation, Instance, Kind, ud_to_binary
from ..shares import Verdict, check_aprop, check_envy, check_prop1, check_rho_tps, check_share
from .additive import (
    agent_prop1_partition,
    aprop_allocate,
    cut_and_choose,
    prop1_allocate,
    prop1_ends,
    round_robin,
    tps_random_bundling,
    tps_two_phase,
)
from .binary import binary_mms_threephase
from .common import (
    Outcome,
    ProtocolSpec,
    RunDiagnostics,
    SemiContiguousAllocation,
    public_view,
)
from .two_valued import two_valued_mms
from .unit_demand import (
    identical_ud_random_queries,
    rud,
    two_agent_ud,
    ud_ef1,
    ud_mms_deterministic,
)

__all__ = [
    "Outcome",
    "ProtocolSpec",
    "RunDiagnostics",
    "SemiContiguousAllocation",
    "REGISTRY",
    "run_protocol",
    "replay_protocol",
    "public_view",
    "agent_prop1_partition",
    "prop1_ends",
    "two_agent_ud",
    "identical_ud_random_queries",
    "ud_mms_deterministic",
    "rud",
    "ud_ef1",
    "binary_mms_threephase",
    "two_valued_mms",
    "prop1_allocate",
    "tps_two_phase",
    "aprop_allocate",
    "tps_random_bundling",
    "cut_and_choose",
    "round_robin",
]


def image_instance(inst: Instance) -> Instance:
    """Binary image of a unit-demand instance (identity for binary inputs)."""
    vals = []
    for v in inst.valuations:
        vals.append(ud_to_binary(v, inst.n) if v.kind == Kind.UNIT_DEMAND else v)
    return Instance(inst.n, inst.m, tuple(vals))


def check_mms_image(inst: Instance, alloc: Allocation) -> list[Verdict]:
    """Maximin check on the binary image: every agent must hold one of her
    top-n items."""
    return check_share(image_instance(inst), alloc, "mms")


def _pick(seed: int, options):
    return options[seed % len(options)]


def _fam_2ud(seed):
    return 2, _pick(seed, (8, 16, 24, 48)), {}


def _fam_iud(seed):
    n = _pick(seed, (2, 3, 4, 6, 8))
    return n, _pick(seed // 7, (2 * n, 3 * n, 4 * n)), {}


def _fam_ud(seed):
    n = _pick(seed, (2, 3, 4, 6, 8))
    return n, _pick(seed // 7, (2 * n, 3 * n, 4 * n)), {}


def _fam_rud(seed):
    n = _pick(seed, (2, 4, 8, 16))
    return n, 2 * n, {}


def _fam_ef1_bundled(seed):
    return 2, _pick(seed, (9, 12, 16, 20)), {}


def _fam_binary(seed):
    n = _pick(seed, (2, 3, 4, 6, 8))
    return n, _pick(seed // 7, (2 * n, 3 * n, 4 * n, 6 * n)), {}


def _fam_twoval(seed):
    n = _pick(seed, (2, 3))
    m = _pick(seed // 3, (6, 8, 10, 12))
    return n, m, {"a": _pick(seed // 11, (3, 5, 7)), "b": 1}


def _fam_additive(seed):
    n = _pick(seed, (2, 3, 4, 6, 8))
    return n, _pick(seed // 7, (2 * n, 3 * n, 4 * n)), {}


def _fam_additive_small(seed):
    n = _pick(seed, (2, 3, 4, 6))
    return n, _pick(seed // 7, (2 * n, 3 * n)), {}


def _fam_two_agents(seed):
    return 2, _pick(seed, (6, 8, 10, 12)), {}


def _fam_bundling(seed):
    return 2, 2048, {}


REGISTRY: dict[str, ProtocolSpec] = {}


def _register(pid, run, check, family, family_args, summary):
    REGISTRY[pid] = ProtocolSpec(pid, run, check, family, family_args, summary)


_register("2ud-naive", partial(two_agent_ud, variant="naive"), check_mms_image,
          "ud_random", _fam_2ud, "two agents announce both favourite pairs")
_register("2ud-announce", partial(two_agent_ud, variant="announce"), check_mms_image,
          "ud_random", _fam_2ud, "first agent announces one favourite and keeps it")
_register("2ud-bitsplit", partial(two_agent_ud, variant="bitsplit"), check_mms_image,
          "ud_random", _fam_2ud, "split on a differing name bit, chooser picks a side")
_register("2ud-rand", partial(two_agent_ud, variant="randomized"), check_mms_image,
          "ud_random", _fam_2ud, "random renaming, unary split depth, one choice bit")
_register("iud-query", identical_ud_random_queries, check_mms_image,
          "ud_identical", _fam_iud, "identical agents, random bipartition value queries")
_register("ud-det", ud_mms_deterministic, check_mms_image,
          "ud_random", _fam_ud, "equal bundles, swaps and bit-trick splits")
_register("rud", rud, check_mms_image,
          "ud_random", _fam_rud, "random bundles, rank-coded claims, spares recycled")
_register("ud-ef1-rr", partial(ud_ef1, variant="first_round_rr"),
          lambda inst, alloc: check_envy(inst, alloc, "ef1"),
          "ud_random", _fam_ud, "one selection round, last agent sweeps")
_register("ud-ef1-bundled", partial(ud_ef1, variant="bundled"),
          lambda inst, alloc: check_envy(inst, alloc, "ef1"),
          "ud_random", _fam_ef1_bundled, "vote random n^3 bundles, then one round")
_register("binary3p", binary_mms_threephase,
          lambda inst, alloc: check_share(inst, alloc, "mms"),
          "binary_uniform", _fam_binary, "demand counts, random-order prefixes, topping up")
_register("twoval", two_valued_mms,
          lambda inst, alloc: check_share(inst, alloc, "mms"),
          "two_valued_uniform", _fam_twoval, "count reports, quota table, ranked-subset claims")
_register("prop1-det", partial(prop1_allocate, variant="det"),
          lambda inst, alloc: check_prop1(inst, alloc, strict=True),
          "additive_uniform", _fam_additive, "median decomposition of threshold cuts")
_register("prop1-rand", partial(prop1_allocate, variant="rand"),
          lambda inst, alloc: check_prop1(inst, alloc, strict=True),
          "additive_uniform", _fam_additive, "randomized median selection variant")
_register("tps2p", tps_two_phase,
          lambda inst, alloc: check_rho_tps(inst, alloc),
          "additive_uniform", _fam_additive, "single-item grabs, then contiguous carve")
_register("aprop-det", partial(aprop_allocate, variant="det"), check_aprop,
          "additive_uniform", _fam_additive_small, "good items, hole pool, nested carve")
_register("aprop-rand", partial(aprop_allocate, variant="rand"), check_aprop,
          "additive_uniform", _fam_additive_small, "randomized median variant")
_register("tps-bundle", tps_random_bundling,
          lambda inst, alloc: check_rho_tps(inst, alloc),
          "additive_uniform", _fam_bundling, "random bundling with unanimity votes")
_register("cutchoose", cut_and_choose,
          lambda inst, alloc: check_share(inst, alloc, "mms"),
          "additive_uniform", _fam_two_agents, "exact split announced, chooser picks")
_register("roundrobin", round_robin,
          lambda inst, alloc: check_envy(inst, alloc, "ef1"),
          "additive_uniform", _fam_additive_small, "take turns picking the best item")


def run_protocol(pid: str, inst: Instance, crs: Crs, channel: Channel | None = None) -> Outcome:
    if pid not in REGISTRY:
        raise UsageError(f"unknown protocol {pid!r}; known: {sorted(REGISTRY)}")
    return REGISTRY[pid].run(inst, crs, channel=channel)


def replay_protocol(pid: str, inst: Instance, crs: Crs, transcript: Transcript) -> Outcome:
    """Re-run a protocol against a recorded transcript and the public view of
    the instance; private values are never consulted."""
    if pid not in REGISTRY:
        raise UsageError(f"unknown protocol {pid!r}; known: {sorted(REGISTRY)}")
    ch = Channel(crs, replay_from=transcript)
    return REGISTRY[pid].run(public_view(inst), crs, channel=ch)
