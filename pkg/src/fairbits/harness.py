"""Experiment harness: seeded sweeps over (protocol, family, n, m) cells with
per-trial fairness verification, plus instance/allocation persistence."""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from pathlib import Path

from .channel import Crs, derive_seed
from .errors import FairbitsError, UsageError
from .model import (
    Allocation,
    Instance,
    allocation_from_text,
    allocation_to_text,
    gen_instance,
    instance_from_text,
    instance_to_text,
)
from .protocols import REGISTRY, Outcome
from .shares import all_ok


@dataclass
class ExperimentRow:
    protocol: str
    family: str
    n: int
    m: int
    trials: int
    mean_integer_bits: float
    mean_idealized_bits: float
    mean_bits_per_agent: float
    max_bits: int
    fairness_pass_rate: float
    mean_ell: float | None
    mean_retries: float | None
    wall_time: float


#: wall_time is intentionally not exported: CSV bytes must be reproducible
#: from (config, master seed) alone
CSV_COLUMNS = (
    "protocol", "family", "n", "m", "trials",
    "mean_integer_bits", "mean_idealized_bits", "mean_bits_per_agent",
    "max_bits", "fairness_pass_rate", "mean_ell", "mean_retries",
)


@dataclass
class SweepCell:
    protocol: str
    family: str
    n: int
    m: int
    trials: int
    params: dict = field(default_factory=dict)


@dataclass
class SweepConfig:
    cells: list[SweepCell]
    master_seed: int = 0

    @classmethod
    def from_json(cls, text: str) -> "SweepConfig":
        raw = json.loads(text)
        cells = [SweepCell(**c) for c in raw.get("cells", [])]
        return cls(cells=cells, master_seed=int(raw.get("master_seed", 0)))


class SweepFailure(FairbitsError):
    """A protocol output failed its declared checker; carries a reproducer."""

    def __init__(self, protocol: str, trial: int, crs_seed: int,
                 instance_seed: int, instance_text: str):
        self.protocol = protocol
        self.trial = trial
        self.crs_seed = crs_seed
        self.instance_seed = instance_seed
        self.instance_text = instance_text
        super().__init__(
            f"fairness failure: protocol={protocol} trial={trial} "
            f"crs_seed={crs_seed} instance_seed={instance_seed}"
        )


def trial_crs_seed(master_seed: int, protocol: str, trial: int) -> int:
    return derive_seed(master_seed, protocol, trial)


def trial_instance_seed(master_seed: int, family: str, n: int, m: int, trial: int) -> int:
    return derive_seed(master_seed, "inst", family, n, m, trial)


def run_cell(cell: SweepCell, master_seed: int) -> ExperimentRow:
    if cell.protocol not in REGISTRY:
        raise UsageError(f"unknown protocol {cell.protocol!r}")
    spec = REGISTRY[cell.protocol]
    t0 = time.perf_counter()
    total_int = 0
    total_ideal = 0.0
    max_bits = 0
    passes = 0
    ell_sum, ell_count = 0, 0
    retry_sum, retry_count = 0, 0
    for t in range(cell.trials):
        iseed = trial_instance_seed(master_seed, cell.family, cell.n, cell.m, t)
        cseed = trial_crs_seed(master_seed, cell.protocol, t)
        inst = gen_instance(cell.family, cell.n, cell.m, cell.params, seed=iseed)
        out = spec.run(inst, Crs(cseed), channel=None)
        verdicts = spec.check(inst, out.allocation)
        if not all_ok(verdicts):
            raise SweepFailure(cell.protocol, t, cseed, iseed, instance_to_text(inst))
        passes += 1
        bits = out.transcript.integer_bits
        total_int += bits
        total_ideal += out.transcript.idealized_bits
        max_bits = max(max_bits, bits)
        if out.diagnostics.ell is not None:
            ell_sum += out.diagnostics.ell
            ell_count += 1
        if out.diagnostics.retries is not None:
            retry_sum += out.diagnostics.retries
            retry_count += 1
    wall = time.perf_counter() - t0
    trials = cell.trials
    return ExperimentRow(
        protocol=cell.protocol,
        family=cell.family,
        n=cell.n,
        m=cell.m,
        trials=trials,
        mean_integer_bits=total_int / trials,
        mean_idealized_bits=total_ideal / trials,
        mean_bits_per_agent=total_int / trials / cell.n,
        max_bits=max_bits,
        fairness_pass_rate=passes / trials,
        mean_ell=ell_sum / ell_count if ell_count else None,
        mean_retries=retry_sum / retry_count if retry_count else None,
        wall_time=wall,
    )


def run_sweep(config: SweepConfig) -> list[ExperimentRow]:
    """Run every cell; deterministic in the master seed.  Any fairness
    failure aborts with a reproducer (seed pair plus instance dump)."""
    if not config.cells:
        return []
    return [run_cell(cell, config.master_seed) for cell in config.cells]


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, float):
        return format(x, ".6g")
    return str(x)


def rows_to_csv(rows: list[ExperimentRow]) -> str:
    lines = [",".join(CSV_COLUMNS)]
    for r in rows:
        lines.append(",".join(_fmt(getattr(r, c)) for c in CSV_COLUMNS))
    return "\n".join(lines) + "\n"


def rows_to_plotdata(rows: list[ExperimentRow]) -> str:
    """Long-form variant, one (cell, metric, value) per line."""
    metrics = (
        "mean_integer_bits", "mean_idealized_bits", "mean_bits_per_agent",
        "max_bits", "fairness_pass_rate", "mean_ell", "mean_retries",
    )
    lines = ["protocol,family,n,m,trials,metric,value"]
    for r in rows:
        for metric in metrics:
            v = getattr(r, metric)
            if v is None:
                continue
            lines.append(
                f"{r.protocol},{r.family},{r.n},{r.m},{r.trials},{metric},{_fmt(v)}"
            )
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# Persistence
# ---------------------------------------------------------------------------

def serialize_instance(inst: Instance, path: str | Path | None = None) -> str:
    text = instance_to_text(inst)
    if path is not None:
        Path(path).write_text(text)
    return text


def parse_instance(source: str | Path) -> Instance:
    """Parse an instance from text, or from a path if one is given."""
    if isinstance(source, Path):
        return instance_from_text(source.read_text())
    if "\n" not in source and Path(source).exists():
        return instance_from_text(Path(source).read_text())
    return instance_from_text(source)


def serialize_allocation(alloc: Allocation, path: str | Path | None = None) -> str:
    text = allocation_to_text(alloc)
    if path is not None:
        Path(path).write_text(text)
    return text


def parse_allocation(source: str | Path) -> Allocation:
    if isinstance(source, Path):
        return allocation_from_text(source.read_text())
    if "\n" not in source and Path(source).exists():
        return allocation_from_text(Path(source).read_text())
    return allocation_from_text(source)
