"""Command-line interface.

Subcommands: ``gen`` (instance files), ``run`` (one protocol run with
transcript and verdicts), ``sweep`` (config or flags -> CSV and figures),
``check`` (allocation file against a notion), ``bounds`` (acceptance
probability floors), ``hitset`` (exact minimum hitting sets).  Exit status is
nonzero whenever a fairness check fails.
"""

from __future__ import annotations

import argparse
import sys
from fractions import Fraction
from pathlib import Path

from . import bounds as bounds_mod
from .channel import Crs
from .errors import FairbitsError
from .harness import (
    SweepCell,
    SweepConfig,
    SweepFailure,
    parse_allocation,
    parse_instance,
    rows_to_csv,
    rows_to_plotdata,
    run_sweep,
    serialize_instance,
)
from .model import FAMILIES, gen_instance
from .protocols import REGISTRY, run_protocol
from .shares import NOTIONS, all_ok, check_notion


def _family_params(args) -> dict:
    params = {}
    for key in ("k", "K", "a", "b", "value_max"):
        v = getattr(args, key, None)
        if v is not None:
            params[key] = v
    return params


def _cmd_gen(args) -> int:
    inst = gen_instance(args.family, args.n, args.m, _family_params(args), seed=args.seed)
    text = serialize_instance(inst, args.out)
    if args.out:
        print(f"wrote {args.out}")
    else:
        sys.stdout.write(text)
    return 0


def _cmd_run(args) -> int:
    inst = parse_instance(args.instance)
    out = run_protocol(args.protocol, inst, Crs(args.seed))
    print(f"protocol: {args.protocol}   n={inst.n} m={inst.m} kind={inst.kind.value}")
    print(f"bits: integer={out.transcript.integer_bits} "
          f"idealized={out.transcript.idealized_bits:.3f} "
          f"entries={len(out.transcript.entries)}")
    for agent, bundle in enumerate(out.allocation.bundles()):
        print(f"agent {agent}: {list(bundle)}")
    if args.dump_transcript:
        Path(args.dump_transcript).write_text(out.transcript.dump())
        print(f"transcript -> {args.dump_transcript}")
    verdicts = REGISTRY[args.protocol].check(inst, out.allocation)
    for agent, v in enumerate(verdicts):
        extra = f" (witness {v.witness})" if v.witness is not None else ""
        print(f"verdict agent {agent}: {'pass' if v.ok else 'FAIL'}{extra}")
    return 0 if all_ok(verdicts) else 1


def _cmd_sweep(args) -> int:
    if args.config:
        config = SweepConfig.from_json(Path(args.config).read_text())
        if args.seed is not None:
            config.master_seed = args.seed
    else:
        if not (args.protocol and args.family and args.n and args.m):
            print("sweep needs either --config or --protocol/--family/--n/--m",
                  file=sys.stderr)
            return 2
        cell = SweepCell(args.protocol, args.family, args.n, args.m,
                         args.trials, _family_params(args))
        config = SweepConfig(cells=[cell], master_seed=args.seed or 0)
    try:
        rows = run_sweep(config)
    except SweepFailure as exc:
        print(f"FAIL: {exc}", file=sys.stderr)
        sys.stderr.write(exc.instance_text)
        return 1
    text = rows_to_plotdata(rows) if args.format == "plotdata" else rows_to_csv(rows)
    if args.out:
        Path(args.out).write_text(text)
        print(f"wrote {args.out}")
    else:
        sys.stdout.write(text)
    if args.plot:
        from .plots import render_sweep_figure

        render_sweep_figure(rows, args.plot)
        print(f"figure -> {args.plot}")
    return 0


def _cmd_check(args) -> int:
    inst = parse_instance(args.instance)
    alloc = parse_allocation(args.alloc)
    rho = Fraction(args.rho) if args.rho else None
    verdicts = check_notion(inst, alloc, args.notion, rho)
    for agent, v in enumerate(verdicts):
        extra = f" (witness {v.witness})" if v.witness is not None else ""
        print(f"agent {agent}: {'pass' if v.ok else 'FAIL'}{extra}")
    return 0 if all_ok(verdicts) else 1


def _cmd_bounds(args) -> int:
    est = bounds_mod.estimate_rdc_bound(
        args.family, args.notion, args.n, args.m, args.trials,
        Crs(args.seed), params=_family_params(args), exhaustive=args.exhaustive,
    )
    header = "family,notion,n,m,trials,p_hat,ci_low,ci_high,bound_bits"
    line = (f"{est.family},{est.notion},{est.n},{est.m},{est.trials},"
            f"{float(est.p_hat):.9g},{est.ci_low:.6g},{est.ci_high:.6g},"
            f"{est.bound_bits:.6g}")
    text = header + "\n" + line + "\n"
    if args.out:
        Path(args.out).write_text(text)
        print(f"wrote {args.out}")
    else:
        sys.stdout.write(text)
    print(f"p_hat = {est.p_hat} (exact)" if est.exhaustive
          else f"p_hat = {est.p_hat}")
    if args.plot:
        from .plots import render_bounds_figure

        render_bounds_figure([est], args.plot)
        print(f"figure -> {args.plot}")
    return 0


def _cmd_hitset(args) -> int:
    if args.exhaustive:
        instances = list(bounds_mod.enumerate_family(
            args.family, args.n, args.m, _family_params(args)))
    else:
        instances = [
            gen_instance(args.family, args.n, args.m, _family_params(args),
                         seed=args.seed + t)
            for t in range(args.count)
        ]
    result = bounds_mod.min_hitting_set(instances, args.notion, budget=args.budget)
    print(f"instances: {len(instances)}")
    print(f"hitting set size: {result.size} (exact: {result.exact})")
    print(f"description bits: {result.dc_bits:.4f}")
    for idx, alloc in enumerate(result.allocations):
        print(f"allocation {idx}: owners = {' '.join(str(o) for o in alloc.owner)}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="fairbits",
        description="bit-metered fair-allocation protocols with exact verification",
    )
    sub = p.add_subparsers(dest="command", required=True)

    def add_family_args(sp, need=True):
        sp.add_argument("--family", required=need, choices=sorted(FAMILIES))
        sp.add_argument("--n", type=int, required=need)
        sp.add_argument("--m", type=int, required=need)
        sp.add_argument("--k", type=int)
        sp.add_argument("--K", type=int)
        sp.add_argument("--a", type=int)
        sp.add_argument("--b", type=int)
        sp.add_argument("--value-max", dest="value_max", type=int)

    sp = sub.add_parser("gen", help="generate an instance file")
    add_family_args(sp)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out")
    sp.set_defaults(fn=_cmd_gen)

    sp = sub.add_parser("run", help="run one protocol on an instance")
    sp.add_argument("--protocol", required=True, choices=sorted(REGISTRY))
    sp.add_argument("--instance", required=True)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--dump-transcript")
    sp.set_defaults(fn=_cmd_run)

    sp = sub.add_parser("sweep", help="run a sweep -> CSV (and figures)")
    sp.add_argument("--config")
    sp.add_argument("--protocol", choices=sorted(REGISTRY))
    add_family_args(sp, need=False)
    sp.add_argument("--trials", type=int, default=100)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--out")
    sp.add_argument("--format", choices=("csv", "plotdata"), default="csv")
    sp.add_argument("--plot")
    sp.set_defaults(fn=_cmd_sweep)

    sp = sub.add_parser("check", help="check an allocation file against a notion")
    sp.add_argument("--instance", required=True)
    sp.add_argument("--alloc", required=True)
    sp.add_argument("--notion", required=True, choices=NOTIONS)
    sp.add_argument("--rho")
    sp.set_defaults(fn=_cmd_check)

    sp = sub.add_parser("bounds", help="acceptance-probability floor estimates")
    add_family_args(sp)
    sp.add_argument("--notion", required=True)
    sp.add_argument("--trials", type=int, default=200)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--exhaustive", action="store_true")
    sp.add_argument("--out")
    sp.add_argument("--plot")
    sp.set_defaults(fn=_cmd_bounds)

    sp = sub.add_parser("hitset", help="exact minimum hitting set at toy scale")
    add_family_args(sp)
    sp.add_argument("--notion", required=True)
    sp.add_argument("--count", type=int, default=16)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--budget", type=int, default=200_000)
    sp.add_argument("--exhaustive", action="store_true")
    sp.set_defaults(fn=_cmd_hitset)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except FairbitsError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
