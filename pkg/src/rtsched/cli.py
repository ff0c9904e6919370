"""Batch experiment CLI.

Subcommands: solve (build planner artifacts), simulate (one config, one
policy kind), sweep (cost/commands over a K or gamma axis), compare
(all policy kinds side by side), verify (concentration and invariant
checks).  Configs are YAML key-value files whose keys mirror
ExperimentConfig; --seed/--out/--cache override per run.  Exit status
is nonzero on any invariant failure.
"""

from __future__ import annotations

import argparse
import sys

import yaml

from . import harness
from .harness import ExperimentConfig, InvariantViolation
from .planner import ArtifactCache, lower_bound


def load_config(path: str, **overrides) -> ExperimentConfig:
    with open(path, "r", encoding="utf-8") as fh:
        raw = yaml.safe_load(fh) or {}
    if not isinstance(raw, dict):
        raise ValueError(f"config file {path} must be a key-value mapping")
    if "lambdas" in raw and not isinstance(raw["lambdas"], (list, tuple)):
        raw["lambdas"] = [raw["lambdas"]]
    raw.update({k: v for k, v in overrides.items() if v is not None})
    raw["lambdas"] = tuple(raw["lambdas"])
    return ExperimentConfig(**raw)


def _add_common(p: argparse.ArgumentParser):
    p.add_argument("config", help="YAML config file")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", default=None, help="output CSV path")
    p.add_argument("--cache", default=None,
                   help="artifact cache directory (default: $RTSCHED_CACHE)")


def _print_rows(rows):
    print(harness.CSV_HEADER)
    for r in rows:
        print(f"{r.experiment},{r.policy},{r.K},{r.gamma},{r.N},"
              f"{r.avg_cost:.6f},{r.ci95:.6f},{r.avg_commands:.6f},"
              f"{r.commands_ci95:.6f},{r.episodes},{r.slots},{r.seed},"
              f"{r.wall_seconds:.2f}")


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="rtsched", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    for name in ("solve", "simulate", "verify", "compare"):
        sp = sub.add_parser(name)
        _add_common(sp)
        if name == "compare":
            sp.add_argument("--kinds", nargs="+",
                            default=list(harness.POLICY_KINDS))

    sp = sub.add_parser("sweep")
    _add_common(sp)
    sp.add_argument("--axis", choices=("k", "gamma"), required=True)
    sp.add_argument("--values", nargs="+", type=float, required=True)
    sp.add_argument("--kinds", nargs="+",
                    default=[harness.RELAX_TRUNCATE, harness.GREEDY,
                             harness.RELAXED_LB])

    args = parser.parse_args(argv)
    cfg = load_config(args.config, seed=args.seed)
    cache = ArtifactCache(args.cache)

    try:
        return _dispatch(args, cfg, cache)
    except InvariantViolation as exc:
        print(f"invariant violation: {exc}", file=sys.stderr)
        return 2


def _dispatch(args, cfg: ExperimentConfig, cache: ArtifactCache) -> int:
    backends: dict = {}
    bundles: dict = {}

    if args.command == "solve":
        bundle = harness.build_bundle(cfg, cache, backends, bundles)
        if bundle is None:
            print("greedy policy needs no planning")
            return 0
        print(f"kind={bundle.kind} gamma={bundle.gamma} "
              f"inactive={bundle.inactive} mu*={bundle.mu_star:.6g} "
              f"eta={bundle.eta:.6g}")
        print(f"fleet command rate={bundle.fleet_j_bar:.8f} "
              f"relaxed cost (lower bound)={lower_bound(bundle):.6f}")
        for i, pair in enumerate(bundle.classes):
            print(f"  class {i}: lam={pair.params.lam:g} count={pair.count} "
                  f"J-={pair.minus.j_bar:.6f} J+={pair.plus.j_bar:.6f} "
                  f"C(mixed)={pair.mixed_c_bar:.6f}")
        return 0

    if args.command == "simulate":
        res = harness.run_experiment(cfg, cache=cache, backends=backends,
                                     bundles=bundles)
        rows = [harness.SweepRow.from_result("simulate", res)]
        _print_rows(rows)
        if args.out:
            harness.emit_csv(rows, args.out)
        return 0

    if args.command == "compare":
        from dataclasses import replace
        rows = []
        for kind in args.kinds:
            res = harness.run_experiment(replace(cfg, policy=kind),
                                         cache=cache, backends=backends,
                                         bundles=bundles)
            rows.append(harness.SweepRow.from_result("compare", res))
        _print_rows(rows)
        if args.out:
            harness.emit_csv(rows, args.out)
        return 0

    if args.command == "sweep":
        values = ([int(v) for v in args.values] if args.axis == "k"
                  else args.values)
        rows = harness.sweep(cfg, args.axis, values, args.kinds,
                             cache=cache, backends=backends, bundles=bundles)
        _print_rows(rows)
        if args.out:
            harness.emit_csv(rows, args.out)
        return 0

    if args.command == "verify":
        report = harness.verify_concentration(cfg, cache=cache,
                                              backends=backends,
                                              bundles=bundles)
        print(f"K={report.K} slots={report.slots} mean|X|={report.x_mean:.3f} "
              f"std={report.x_std:.4f} mad={report.x_mad:.4f} "
              f"bound={report.std_bound:.4f}")
        print(f"MAD <= STD: {'ok' if report.mad_ok else 'FAIL'}; "
              f"STD <= sqrt(K): {'ok' if report.std_ok else 'FAIL'}")
        return 0 if report.passed else 1

    return 1


if __name__ == "__main__":
    sys.exit(main())
