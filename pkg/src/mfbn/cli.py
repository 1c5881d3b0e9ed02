"""Command-line front end for network generation, tables, learning, validation."""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from .experiments import (
    ExperimentConfig,
    LearningConfig,
    random_layered,
    run_learning,
    run_noisyor_table,
    run_sigmoid_table,
)
from .network import ParseError, parse, serialize, validate
from .objectives import Scheme, error_metric
from .oracle import ClampContext, exact_log_partition
from .solver import SolverOptions, solve_fixed_point
from .validation import report_dict, run_validation_suite

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_CONFIG = 3


class ConfigError(ValueError):
    pass


def _fmt(x) -> str:
    if isinstance(x, float):
        return repr(x)
    return str(x)


def _parse_range(text):
    try:
        lo, hi = (float(p) for p in text.split(":"))
    except ValueError:
        raise ConfigError(f"expected LO:HI, got {text!r}") from None
    return (lo, hi)


def _parse_topology(text):
    try:
        return tuple(int(p) for p in text.split(":"))
    except ValueError:
        raise ConfigError(f"expected layer sizes A:B:C, got {text!r}") from None


def _schemes(text):
    if text == "all":
        return (Scheme.G11, Scheme.G12, Scheme.G22)
    try:
        return (Scheme(text),)
    except ValueError:
        raise ConfigError(f"unknown scheme {text!r}") from None


def _write_csv(path: Path, header, rows):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(c) for c in row) + "\n")


def _emit_table(stats, rows, out_dir: Path):
    out_dir.mkdir(parents=True, exist_ok=True)
    _write_csv(
        out_dir / "raw.csv",
        [
            "net_index",
            "clamp",
            "scheme",
            "ln_z_exact",
            "g_hat",
            "err",
            "iterations",
            "status",
        ],
        [
            (
                r.net_index,
                r.clamp,
                r.scheme,
                r.ln_z_exact,
                r.g_hat,
                r.err,
                r.iterations,
                r.status,
            )
            for r in rows
        ],
    )
    _write_csv(
        out_dir / "summary.csv",
        ["scheme", "clamp", "mean_err", "mean_abs_err", "n", "unconverged"],
        [
            (s.scheme, s.clamp, s.mean_err, s.mean_abs_err, s.count, s.unconverged)
            for s in stats
        ],
    )
    for s in stats:
        suffix = s.scheme if s.clamp == "zeros" else f"{s.scheme}_{s.clamp}"
        _write_csv(
            out_dir / f"hist_{suffix}.csv",
            ["bin_lo", "bin_hi", "count"],
            [
                (float(s.hist_edges[b]), float(s.hist_edges[b + 1]), int(s.hist_counts[b]))
                for b in range(len(s.hist_counts))
            ],
        )


def _experiment_config(args, activation):
    return ExperimentConfig(
        topology=_parse_topology(args.topology),
        activation=activation,
        weight_range=_parse_range(args.weight_range),
        bias_range=_parse_range(args.bias_range),
        n_networks=args.n_networks,
        master_seed=args.seed,
        schemes=_schemes(args.scheme),
        solver=SolverOptions(tol=args.tol, max_iter=args.max_iter),
        jobs=args.jobs,
    )


def _add_common(p, weight_range, bias_range, topology):
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--n-networks", type=int, default=1000)
    p.add_argument("--scheme", default="all")
    p.add_argument("--weight-range", default=weight_range)
    p.add_argument("--bias-range", default=bias_range)
    p.add_argument("--topology", default=topology)
    p.add_argument("--out", default="out")
    p.add_argument("--jobs", type=int, default=os.cpu_count() or 1)
    p.add_argument("--tol", type=float, default=1e-8)
    p.add_argument("--max-iter", type=int, default=2000)


def build_parser():
    parser = argparse.ArgumentParser(
        prog="mfbn",
        description="Mean-field approximations for sigmoid / noisy-or belief networks",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate a random layered network file")
    _add_common(p, "-1:1", "-1:1", "2:4:6")
    p.add_argument("--activation", choices=("sigmoid", "noisy_or"), default="sigmoid")
    p.add_argument("--index", type=int, default=0)

    p = sub.add_parser("table-sigmoid", help="error table for random sigmoid networks")
    _add_common(p, "-1:1", "-1:1", "2:4:6")

    p = sub.add_parser("table-noisyor", help="error table for random noisy-or networks")
    _add_common(p, "0:0.25", "0:0.25", "2:4:6")

    p = sub.add_parser("learn-bars", help="bars-dataset learning experiment")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--activation", choices=("sigmoid", "noisy_or"), default="sigmoid")
    p.add_argument("--scheme", default="g12")
    p.add_argument("--topology", default="1:8:16")
    p.add_argument("--n-patterns", type=int, default=500)
    p.add_argument("--epochs", type=int, default=100)
    p.add_argument("--eval-every", type=int, default=5)
    p.add_argument("--learning-rate", type=float, default=None)
    p.add_argument("--out", default="out")

    p = sub.add_parser("validate", help="run the oracle-backed property suite")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None, help="write a JSON report here")

    p = sub.add_parser("solve", help="solve one network file at a clamp")
    p.add_argument("net_file")
    p.add_argument("--clamp", required=True, help="binary string for the visible units")
    p.add_argument("--scheme", default="g12")
    p.add_argument("--tol", type=float, default=1e-8)
    p.add_argument("--max-iter", type=int, default=10000)
    return parser


def _cmd_gen(args):
    cfg = _experiment_config(args, args.activation)
    net = random_layered(cfg, args.index)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    path = out / f"net_{args.index}.json"
    path.write_text(serialize(net), encoding="utf-8")
    print(path)
    return EXIT_OK


def _cmd_table(args, activation):
    cfg = _experiment_config(args, activation)
    runner = run_sigmoid_table if activation == "sigmoid" else run_noisyor_table
    stats, rows = runner(cfg)
    _emit_table(stats, rows, Path(args.out))
    for s in stats:
        print(
            f"{s.scheme} clamp={s.clamp} mean_err={s.mean_err:.4f} "
            f"n={s.count} unconverged={s.unconverged}"
        )
    return EXIT_OK


def _cmd_learn(args):
    cfg = LearningConfig(
        activation=args.activation,
        topology=_parse_topology(args.topology),
        n_patterns=args.n_patterns,
        epochs=args.epochs,
        seed=args.seed,
        scheme=Scheme(args.scheme),
        learning_rate=args.learning_rate,
        eval_every=args.eval_every,
    )
    net, history = run_learning(cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    _write_csv(
        out / "history.csv",
        ["epoch", "mean_true_loglik", "mean_objective", "unconverged"],
        [
            (r.epoch, r.mean_true_loglik, r.mean_objective, r.unconverged)
            for r in history.records
        ],
    )
    (out / "trained_net.json").write_text(serialize(net), encoding="utf-8")
    for r in history.records:
        print(f"epoch {r.epoch}: true loglik/pattern {r.mean_true_loglik:.4f}")
    return EXIT_OK


def _cmd_validate(args):
    results = run_validation_suite(seed=args.seed)
    report = report_dict(results)
    if args.out:
        Path(args.out).write_text(json.dumps(report, indent=2), encoding="utf-8")
    for prop in report["properties"]:
        status = "ok" if prop["failed"] == 0 else "FAIL"
        print(f"{prop['name']}: {prop['passed']} passed, {prop['failed']} failed [{status}]")
    return EXIT_OK if report["ok"] else EXIT_VALIDATION


def _cmd_solve(args):
    try:
        net = parse(Path(args.net_file).read_text(encoding="utf-8"))
    except (OSError, ParseError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    clamp = [int(c) for c in args.clamp]
    if len(clamp) != len(net.visible) or any(c not in (0, 1) for c in clamp):
        print("error: clamp must be a binary string covering the visible units", file=sys.stderr)
        return EXIT_CONFIG
    scheme = Scheme(args.scheme)
    res = solve_fixed_point(
        net, clamp, scheme, SolverOptions(tol=args.tol, max_iter=args.max_iter)
    )
    ln_z = exact_log_partition(ClampContext(net, clamp))
    err = error_metric(res.objective, ln_z) if ln_z != 0 else float("nan")
    print(f"objective {res.objective!r}")
    print(f"ln_z_exact {ln_z!r}")
    print(f"err {err!r}")
    print(f"converged {res.converged} iterations {res.iterations}")
    print("u " + " ".join(repr(float(x)) for x in res.u.u))
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "gen":
            return _cmd_gen(args)
        if args.command == "table-sigmoid":
            return _cmd_table(args, "sigmoid")
        if args.command == "table-noisyor":
            return _cmd_table(args, "noisy_or")
        if args.command == "learn-bars":
            return _cmd_learn(args)
        if args.command == "validate":
            return _cmd_validate(args)
        if args.command == "solve":
            return _cmd_solve(args)
    except (ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    raise AssertionError("unreachable")


if __name__ == "__main__":
    sys.exit(main())
