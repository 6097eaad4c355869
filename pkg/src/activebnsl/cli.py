"""Command-line front end: network generation, single runs, sweeps and checks."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .algorithms import Mode, make_source, run_active, run_naive
from .core import DiscreteBayesNet, enumerate_dags
from .equivalence import group_into_ecs
from .harness import ExperimentConfig, run_sweep
from .stable import (
    ASYMMETRIC_X2,
    LITERAL_X2,
    SWAPPED_X2,
    bd_stable_set,
    build_bd_network,
    build_d1_base,
    build_d2,
    check_d1,
    verify_stability,
)

X2_READINGS = {"literal": LITERAL_X2, "swapped": SWAPPED_X2, "asymmetric": ASYMMETRIC_X2}
D2_TWIN_SOURCE = 4
MODES = ["real", "oracle", "count-only"]


class CliError(Exception):
    pass


def _witness_summary(net: DiscreteBayesNet, v: list[int], gamma: float | None, k: int) -> dict:
    w = verify_stability(net, v, 0.0 if gamma is None else gamma, k)
    if gamma is None:
        # no gap requested: report at half the largest admissible gap
        margin = min(w.condition1_margin, w.condition2_margin)
        w = verify_stability(net, v, max(margin, 0.0) / 2, k)
    out = w.to_dict()
    out["condition1_margin"] = w.condition1_margin
    out["condition2_margin"] = w.condition2_margin
    return out


def _load_net(path: str) -> tuple[DiscreteBayesNet, dict]:
    p = Path(path)
    if not p.is_file():
        raise CliError(f"network file not found: {p}")
    try:
        data = json.loads(p.read_text(encoding="utf-8"))
        return DiscreteBayesNet.from_dict(data), data.get("provenance", {})
    except (ValueError, KeyError, TypeError) as exc:
        raise CliError(f"cannot read network file {p}: {exc}") from exc


def _write(text: str, out: str | None) -> None:
    if out is None:
        sys.stdout.write(text + "\n")
    else:
        Path(out).write_text(text + "\n", encoding="utf-8")


def cmd_gen_net(args) -> None:
    x2 = X2_READINGS[args.x2] if args.x2 else None
    if args.kind == "bd":
        net = build_bd_network(args.d, x2 or LITERAL_X2)
        v = bd_stable_set(args.d)
        prov = {"kind": "bd", "d": args.d, "x2": args.x2 or "literal", "x2_rows": [list(r) for r in net.cpts[1]]}
    else:
        base = build_d1_base(x2 or ASYMMETRIC_X2)
        d1 = check_d1(base, D2_TWIN_SOURCE, args.k)
        lam = args.lam if args.lam is not None else d1.beta / (6 * (base.d + 1))
        net, params = build_d2(base, D2_TWIN_SOURCE, lam, args.k)
        v = [u for u in range(base.d) if u != D2_TWIN_SOURCE]
        prov = {"kind": "d2", "x2": args.x2 or "asymmetric", **params.__dict__}
        if args.gamma is None:
            args.gamma = d1.beta - 3 * net.d * lam
    prov["stable_set"] = v
    prov["witness"] = None if args.skip_verify else _witness_summary(net, v, args.gamma, args.k)
    data = net.to_dict()
    data["provenance"] = prov
    _write(json.dumps(data, indent=1), args.out)


def _epsilon(args, d: int) -> float:
    if (args.epsilon is None) == (args.r is None):
        raise CliError("give exactly one of --epsilon and --r")
    return args.epsilon if args.epsilon is not None else d / args.r


def cmd_run(args) -> None:
    net, _ = _load_net(args.net)
    eps = _epsilon(args, net.d)
    src = make_source(Mode.parse(args.mode), net, args.k, args.seed)
    if args.algo == "naive":
        report = run_naive(net.d, args.k, eps, args.delta, src)
    else:
        report = run_active(net.d, args.k, eps, args.delta, args.epsilon1, src)
    _write(report.to_json(), args.out)


def cmd_sweep(args) -> None:
    cfg = ExperimentConfig(
        d_values=args.d,
        r_values=args.r,
        k=args.k,
        delta=args.delta,
        epsilon_1=args.epsilon1,
        repetitions=args.reps,
        seed=args.seed,
        mode=Mode.parse(args.mode),
        output_dir=Path(args.out),
        x2_rows=X2_READINGS[args.x2],
    )
    for row in run_sweep(cfg):
        if row["error"]:
            print(f"r={row['r']} d={row['d']} error={row['error']}")
        else:
            print(
                f"r={row['r']} d={row['d']} n_naive={row['n_naive']} n_active={row['n_active_mean']:.6g} "
                f"ratio={row['sample_ratio']:.4f} accepted={row['accepted_fraction_mean']:.3f}"
            )


def cmd_verify_stability(args) -> None:
    net, prov = _load_net(args.net)
    v = args.v if args.v is not None else prov.get("stable_set", list(range(net.d - 2)))
    gamma = args.gamma
    if gamma is None and prov.get("witness"):
        gamma = prov["witness"]["gamma"]
    _write(json.dumps(_witness_summary(net, v, gamma, args.k), indent=1, sort_keys=True), args.out)


def cmd_ec_stats(args) -> None:
    lines = ["d,k,dags,ecs"]
    for d in args.d:
        ecs = group_into_ecs(enumerate_dags(d, args.k))
        lines.append(f"{d},{args.k},{sum(len(e.members) for e in ecs)},{len(ecs)}")
    _write("\n".join(lines), args.out)


def build_parser() -> argparse.ArgumentParser:
    fmt = argparse.ArgumentDefaultsHelpFormatter
    parser = argparse.ArgumentParser(prog="activebnsl", description="Active structure learning from partial observations", formatter_class=fmt)
    parser.add_argument("-v", "--verbose", action="store_true", help="Log accepted families to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-net", help="Write a benchmark network as JSON", formatter_class=fmt)
    g.add_argument("--kind", choices=["bd", "d2"], default="bd", help="xor-chain benchmark or noisy-twin construction")
    g.add_argument("--d", type=int, default=6, help="Number of variables (bd only)")
    g.add_argument("--k", type=int, default=2, help="Maximal number of parents")
    g.add_argument("--lambda", dest="lam", type=float, default=None, help="Twin entropy level (d2 only); default beta/(6d)")
    g.add_argument("--x2", choices=sorted(X2_READINGS), default=None, help="CPT of the second variable; default literal for bd, asymmetric for d2")
    g.add_argument("--gamma", type=float, default=None, help="Gap for the stability witness; default beta-3d*lambda for d2, half the margin for bd")
    g.add_argument("--skip-verify", action="store_true", help="Omit the stability witness")
    g.add_argument("--out", default=None, help="Output file (stdout if absent)")
    g.set_defaults(func=cmd_gen_net)

    for algo in ("naive", "active"):
        r = sub.add_parser(f"run-{algo}", help=f"Run the {algo} learner on a network file", formatter_class=fmt)
        r.add_argument("--net", required=True, help="Network JSON file")
        r.add_argument("--epsilon", type=float, default=None, help="Accuracy")
        r.add_argument("--r", type=float, default=None, help="Ratio d/epsilon; alternative to --epsilon")
        r.add_argument("--delta", type=float, default=0.05, help="Confidence")
        if algo == "active":
            r.add_argument("--epsilon1", type=float, default=2**-5, help="Initial accuracy")
        r.add_argument("--mode", choices=MODES, default="oracle", help="Source of entropy estimates")
        r.add_argument("--seed", type=int, default=0, help="Random seed")
        r.add_argument("--k", type=int, default=2, help="Maximal number of parents")
        r.add_argument("--out", default=None, help="Report file (stdout if absent)")
        r.set_defaults(func=cmd_run, algo=algo)

    s = sub.add_parser("sweep", help="Run both learners over a (d, r) grid and write CSVs", formatter_class=fmt)
    s.add_argument("--d", type=int, nargs="+", default=[6, 7, 8, 9, 10, 11, 12], help="Network sizes")
    s.add_argument("--r", type=int, nargs="+", default=[2**j for j in (7, 9, 11, 13, 15)], help="Ratios d/epsilon")
    s.add_argument("--k", type=int, default=2, help="Maximal number of parents")
    s.add_argument("--delta", type=float, default=0.05, help="Confidence")
    s.add_argument("--epsilon1", type=float, default=2**-5, help="Initial accuracy of the active learner")
    s.add_argument("--reps", type=int, default=10, help="Active runs per cell")
    s.add_argument("--seed", type=int, default=0, help="Root seed")
    s.add_argument("--mode", choices=MODES, default="oracle", help="Source of entropy estimates")
    s.add_argument("--x2", choices=sorted(X2_READINGS), default="literal", help="CPT of the second variable")
    s.add_argument("--out", required=True, help="Output directory")
    s.set_defaults(func=cmd_sweep)

    v = sub.add_parser("verify-stability", help="Exact stability witness as JSON", formatter_class=fmt)
    v.add_argument("--net", required=True, help="Network JSON file")
    v.add_argument("--v", type=int, nargs="*", default=None, help="Stable set; default from the file's provenance")
    v.add_argument("--gamma", type=float, default=None, help="Gap; default from provenance or half the margin")
    v.add_argument("--k", type=int, default=2, help="Maximal number of parents")
    v.add_argument("--out", default=None, help="Output file (stdout if absent)")
    v.set_defaults(func=cmd_verify_stability)

    e = sub.add_parser("ec-stats", help="Count DAGs and equivalence classes", formatter_class=fmt)
    e.add_argument("--d", type=int, nargs="+", default=[3], help="Numbers of variables")
    e.add_argument("--k", type=int, default=2, help="Maximal number of parents")
    e.add_argument("--out", default=None, help="Output file (stdout if absent)")
    e.set_defaults(func=cmd_ec_stats)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s", stream=sys.stderr)
    try:
        args.func(args)
    except Exception as exc:
        print(f"activebnsl: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
