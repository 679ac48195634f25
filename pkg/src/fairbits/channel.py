"""Communication plumbing: shared randomness, bit encodings, metered transcripts.

Only agent replies cost anything; queries and referee work are free.  Every
reply is appended to a transcript with two running totals: the integer count
(actual payload lengths) and an idealized count in which choosing one of k
alternatives costs exactly log2(k) bits.

A ``Channel`` either computes replies live (calling a per-query closure that
may read private valuations) or replays them from a recorded transcript; the
referee code only ever sees the decoded payload, so a replayed run must
reconstruct the same allocation.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import ReplayError, UsageError


# ---------------------------------------------------------------------------
# Shared randomness
# ---------------------------------------------------------------------------

def derive_seed(*parts) -> int:
    """Deterministic 63-bit seed from arbitrary labeled parts."""
    h = hashlib.blake2b(digest_size=8)
    for p in parts:
        h.update(str(p).encode())
        h.update(b"\x1f")
    return int.from_bytes(h.digest(), "little") >> 1


class Crs:
    """Common random string: every stream is re-derivable from the master
    seed and a label, so a run is reproducible and shareable."""

    def __init__(self, master_seed: int):
        self.master_seed = int(master_seed)

    def rng(self, label: str) -> np.random.Generator:
        return np.random.default_rng(derive_seed(self.master_seed, label))

    def permutation(self, k: int, label: str) -> list[int]:
        return self.rng(label).permutation(k).tolist()


# ---------------------------------------------------------------------------
# Bit codes
# ---------------------------------------------------------------------------

def encode_uint(k: int) -> str:
    """Self-delimiting code for k >= 0: binary digits then a terminator, over
    a ternary alphabet packed two bits per symbol."""
    if k < 0:
        raise UsageError("encode_uint needs k >= 0")
    digits = bin(k)[2:]
    out = []
    for d in digits:
        out.append("00" if d == "0" else "01")
    out.append("10")
    return "".join(out)


def decode_uint(bits: str, start: int = 0) -> tuple[int, int]:
    """Decode one encoded integer; returns (value, next offset)."""
    digits = []
    pos = start
    while True:
        sym = bits[pos:pos + 2]
        if len(sym) < 2 or sym == "11":
            raise UsageError(f"bad uint symbol at offset {pos}")
        pos += 2
        if sym == "10":
            break
        digits.append("0" if sym == "00" else "1")
    if not digits:
        raise UsageError("uint payload with no digits")
    return int("".join(digits), 2), pos


def encode_unary(length: int) -> str:
    """Positive integer as zeros terminated by a one: exactly ``length`` bits."""
    if length < 1:
        raise UsageError("encode_unary needs length >= 1")
    return "0" * (length - 1) + "1"


def decode_unary(bits: str, start: int = 0) -> tuple[int, int]:
    pos = bits.find("1", start)
    if pos < 0:
        raise UsageError("unary payload missing terminator")
    return pos - start + 1, pos + 1


def choice_width(k: int) -> int:
    if k < 1:
        raise UsageError("choice needs k >= 1")
    return 0 if k == 1 else (k - 1).bit_length()


def encode_choice(index: int, k: int) -> tuple[str, float]:
    """Fixed-width choice among k alternatives; idealized cost log2(k)."""
    if not 0 <= index < k:
        raise UsageError(f"choice index {index} out of range [0, {k})")
    w = choice_width(k)
    return format(index, f"0{w}b") if w else "", math.log2(k) if k > 1 else 0.0


def decode_choice(bits: str, k: int) -> int:
    w = choice_width(k)
    if len(bits) != w:
        raise UsageError(f"choice payload of {len(bits)} bits, expected {w}")
    index = int(bits, 2) if w else 0
    if index >= k:
        raise UsageError(f"decoded choice {index} out of range [0, {k})")
    return index


def encode_subset_rank(chosen, universe: int, size: int) -> str:
    """Rank an increasing ``size``-subset of range(universe) in the
    combinatorial number system; fixed width ceil(log2 C(universe, size))."""
    chosen = sorted(chosen)
    if len(chosen) != size:
        raise UsageError(f"expected a subset of size {size}, got {len(chosen)}")
    if len(set(chosen)) != size or (chosen and not 0 <= chosen[0] <= chosen[-1] < universe):
        raise UsageError("subset must be distinct indices inside the universe")
    rank = 0
    prev = -1
    remaining = size
    for c in chosen:
        for skipped in range(prev + 1, c):
            rank += math.comb(universe - skipped - 1, remaining - 1)
        prev = c
        remaining -= 1
    total = math.comb(universe, size)
    w = choice_width(total)
    return format(rank, f"0{w}b") if w else ""


def decode_subset_rank(bits: str, universe: int, size: int) -> tuple[int, ...]:
    total = math.comb(universe, size)
    w = choice_width(total)
    if len(bits) != w:
        raise UsageError(f"subset payload of {len(bits)} bits, expected {w}")
    rank = int(bits, 2) if w else 0
    if rank >= total:
        raise UsageError("subset rank out of range")
    chosen = []
    cursor = 0
    remaining = size
    while remaining:
        block = math.comb(universe - cursor - 1, remaining - 1)
        if rank < block:
            chosen.append(cursor)
            remaining -= 1
        else:
            rank -= block
        cursor += 1
    return tuple(chosen)


class UintCode:
    def encode(self, value: int) -> str:
        return encode_uint(value)

    def decode(self, bits: str):
        value, pos = decode_uint(bits)
        if pos != len(bits):
            raise UsageError("trailing bits after uint payload")
        return value

    def ideal(self, value: int, bits: str) -> float:
        return float(len(bits))


class UnaryCode:
    def encode(self, value: int) -> str:
        return encode_unary(value)

    def decode(self, bits: str):
        value, pos = decode_unary(bits)
        if pos != len(bits):
            raise UsageError("trailing bits after unary payload")
        return value

    def ideal(self, value: int, bits: str) -> float:
        return float(len(bits))


class ChoiceCode:
    def __init__(self, k: int):
        self.k = k

    def encode(self, value: int) -> str:
        return encode_choice(value, self.k)[0]

    def decode(self, bits: str):
        return decode_choice(bits, self.k)

    def ideal(self, value: int, bits: str) -> float:
        return math.log2(self.k) if self.k > 1 else 0.0


class SubsetCode:
    def __init__(self, universe: int, size: int):
        if size > universe:
            raise UsageError("subset size exceeds universe")
        self.universe = universe
        self.size = size

    def encode(self, value) -> str:
        return encode_subset_rank(value, self.universe, self.size)

    def decode(self, bits: str):
        return decode_subset_rank(bits, self.universe, self.size)

    def ideal(self, value, bits: str) -> float:
        total = math.comb(self.universe, self.size)
        return math.log2(total) if total > 1 else 0.0


class BitmaskCode:
    """One raw bit per element of a fixed-size universe."""

    def __init__(self, width: int):
        self.width = width

    def encode(self, value) -> str:
        bits = ["0"] * self.width
        for e in value:
            if not 0 <= e < self.width:
                raise UsageError(f"mask element {e} out of range")
            bits[e] = "1"
        return "".join(bits)

    def decode(self, bits: str):
        if len(bits) != self.width:
            raise UsageError(f"mask payload of {len(bits)} bits, expected {self.width}")
        return tuple(e for e, b in enumerate(bits) if b == "1")

    def ideal(self, value, bits: str) -> float:
        return float(self.width)


BIT = ChoiceCode(2)


# ---------------------------------------------------------------------------
# Transcript
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ReplyEntry:
    agent: int
    label: str
    payload: str
    ideal: float


@dataclass
class Transcript:
    entries: list[ReplyEntry] = field(default_factory=list)

    @property
    def integer_bits(self) -> int:
        return sum(len(e.payload) for e in self.entries)

    @property
    def idealized_bits(self) -> float:
        return sum(e.ideal for e in self.entries)

    def dump(self) -> str:
        lines = []
        for e in self.entries:
            if "," in e.label:
                raise UsageError("labels must not contain commas")
            if e.payload:
                payload_hex = format(int(e.payload, 2), f"0{-(-len(e.payload) // 4)}x")
            else:
                payload_hex = "-"
            lines.append(f"{e.agent},{e.label},{len(e.payload)},{payload_hex}")
        return "\n".join(lines) + ("\n" if lines else "")

    @classmethod
    def parse(cls, text: str) -> "Transcript":
        entries = []
        for line in text.splitlines():
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            if len(parts) != 4:
                raise UsageError(f"bad transcript line {line!r}")
            agent, label, nbits, payload_hex = parts
            nbits = int(nbits)
            if payload_hex == "-":
                payload = ""
            else:
                payload = format(int(payload_hex, 16), f"0{nbits}b")
            if len(payload) != nbits:
                raise UsageError(f"payload length mismatch on line {line!r}")
            entries.append(ReplyEntry(int(agent), label, payload, float(nbits)))
        return cls(entries)


def record_reply(t: Transcript, agent: int, payload: str, label: str, ideal: float | None = None) -> Transcript:
    """Append one agent reply; both bit counters follow from the entries."""
    if any(c not in "01" for c in payload):
        raise UsageError("payload must be a bit string")
    t.entries.append(ReplyEntry(agent, label, payload, float(len(payload)) if ideal is None else ideal))
    return t


# ---------------------------------------------------------------------------
# Channel
# ---------------------------------------------------------------------------

class Channel:
    """Mediates every metered reply of a protocol run.

    Live mode computes the reply via the supplied closure; replay mode pulls
    payloads from a recorded transcript instead.  Either way the caller gets
    the *decoded* payload, never the raw private value, so whatever the
    referee builds is reconstructible from the transcript alone.
    """

    def __init__(self, crs: Crs, replay_from: Transcript | None = None):
        self.crs = crs
        self.transcript = Transcript()
        self._replay = replay_from.entries if replay_from is not None else None
        self._cursor = 0

    @property
    def is_live(self) -> bool:
        return self._replay is None

    def ask(self, agent: int, label: str, code, reply: Callable[[], object]):
        if self._replay is None:
            value = reply()
            payload = code.encode(value)
        else:
            if self._cursor >= len(self._replay):
                raise ReplayError(f"transcript exhausted before query {label!r}")
            entry = self._replay[self._cursor]
            self._cursor += 1
            if entry.agent != agent or entry.label != label:
                raise ReplayError(
                    f"transcript entry ({entry.agent}, {entry.label!r}) does not match "
                    f"query ({agent}, {label!r})"
                )
            payload = entry.payload
        decoded = code.decode(payload)
        record_reply(self.transcript, agent, payload, label, code.ideal(decoded, payload))
        return decoded

    def replay_done(self) -> bool:
        return self._replay is not None and self._cursor == len(self._replay)
