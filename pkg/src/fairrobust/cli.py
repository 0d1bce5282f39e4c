"""Command-line interface.

Exit codes: 0 success / robust within budget, 1 error, 2 violation found,
64 usage error.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import __version__
from .data import load_csv, load_schema, write_csv
from .discovery import discover
from .graphs import dag_from_dot, enumerate_dags
from .report import (EXIT_ERROR, RunConfig, dump_json, json_safe, run_audit, run_hp_audit,
                     success_table)
from .scm import ShiftSpec, apply_label_shift, fit_scm, load_model, sample, save_model
from .search import SearchOptions, rq1_report

EXIT_USAGE = 64


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _data_args(p):
    p.add_argument("--data", required=True, help="CSV file with a header row")
    p.add_argument("--schema", required=True, help="schema JSON (features, sensitive, label)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="fairrobust", description="Causal robustness audits of fairness practices")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("discover", help="learn the equivalence class and write its DAGs as DOT")
    _data_args(p)
    p.add_argument("--algorithm", choices=["pc", "ges"], default="ges")
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--out", required=True, help="output directory")

    p = sub.add_parser("fit", help="fit an SCM and its weight posterior for one DAG")
    _data_args(p)
    p.add_argument("--dag", required=True, help="DOT file with a fully directed graph")
    p.add_argument("--out", required=True, help="model JSON path")

    p = sub.add_parser("sample", help="generate a synthetic CSV from a fitted model")
    p.add_argument("--model", required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--shift-eps", type=float, default=0.0)
    p.add_argument("--out", required=True)

    p = sub.add_parser("validate", help="accept-rate table per discovery algorithm and baseline")
    _data_args(p)
    p.add_argument("--algorithms", default="pc,ges")
    p.add_argument("--clusters", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="optional JSON output path")

    p = sub.add_parser("audit", help="search the equivalence class for a robustness violation")
    _data_args(p)
    p.add_argument("--intervention", required=True,
                   help="drop-sens, kbest[:k], fpr[:alpha], percentile[:p], random-drop[:max], "
                        "threshold-optimizer, calibrated-eq-odds")
    p.add_argument("--learner", default="lr", choices=["lr", "dt", "svm"])
    p.add_argument("--discovery", default="ges", choices=["pc", "ges"])
    p.add_argument("--claim", default="bias_decreases", choices=["bias_decreases", "bias_not_increased"])
    p.add_argument("--epsilon", type=float, default=0.05)
    p.add_argument("--timeout", type=float, default=600.0, help="seconds per repeat")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--repeats", type=int, default=30)
    p.add_argument("--mode", choices=["flip", "diff"], default="flip")
    p.add_argument("--n-models", type=int, default=1000, help="posterior draws per DAG")
    p.add_argument("--clusters", type=int, default=100)
    p.add_argument("--shift-eps", type=float, default=None)
    p.add_argument("--out", required=True)

    p = sub.add_parser("hp-audit", help="compare hyperparameter importance across neighbor datasets")
    _data_args(p)
    p.add_argument("--budget", type=int, default=500)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--learner", default="lr", choices=["lr", "dt", "svm"])
    p.add_argument("--discovery", default="ges", choices=["pc", "ges"])
    p.add_argument("--out", required=True)

    sub.add_parser("version", help="print the version")
    return parser


def _out_file(path) -> str:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    return path


def _cmd_discover(a) -> int:
    schema = load_schema(a.schema)
    data = load_csv(a.data, schema)
    cpdag = discover(data, a.algorithm, a.alpha)
    dags = enumerate_dags(cpdag)
    out = Path(a.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "cpdag.dot").write_text(cpdag.to_dot(), encoding="utf-8")
    for i, dag in enumerate(dags):
        (out / f"dag_{i:03d}.dot").write_text(dag.to_dot(), encoding="utf-8")
    print(f"{len(dags)} DAG(s) in the equivalence class")
    return 0


def _cmd_fit(a) -> int:
    schema = load_schema(a.schema)
    data = load_csv(a.data, schema)
    dag = dag_from_dot(Path(a.dag).read_text(encoding="utf-8"))
    scm, post = fit_scm(dag, data)
    save_model(_out_file(a.out), scm, post)
    if scm.flags:
        print("flags: " + ", ".join(scm.flags))
    return 0


def _cmd_sample(a) -> int:
    scm, _ = load_model(a.model)
    if a.shift_eps:
        scm = apply_label_shift(scm, ShiftSpec(a.shift_eps))
    write_csv(sample(scm, a.n, a.seed), _out_file(a.out))
    return 0


def _cmd_validate(a) -> int:
    schema = load_schema(a.schema)
    data = load_csv(a.data, schema)
    algs = tuple(x.strip() for x in a.algorithms.split(",") if x.strip())
    rows, quality = rq1_report(data, algs, SearchOptions(seed=a.seed, n_clusters=a.clusters))
    sys.stdout.write(success_table(rows, quality))
    if a.out:
        dump_json(json_safe({"rows": [r.to_dict() for r in rows], "validator": quality}), _out_file(a.out))
    return 0


def _cmd_audit(a) -> int:
    shift = ShiftSpec(a.shift_eps) if a.shift_eps else None
    opts = SearchOptions(epsilon=a.epsilon, n_posterior_models=a.n_models, timeout=a.timeout,
                         seed=a.seed, shift=shift, mode=a.mode, n_clusters=a.clusters)
    cfg = RunConfig(a.data, a.schema, a.out, a.discovery, a.intervention, a.learner, a.claim,
                    opts, a.repeats)
    code, report = run_audit(cfg)
    print(f"status: {report['status']}")
    return code


def _cmd_hp_audit(a) -> int:
    schema = load_schema(a.schema)
    data = load_csv(a.data, schema)
    code, report = run_hp_audit(data, a.out, a.budget, a.seed, a.discovery, a.learner)
    print(f"top-4 rank violation: {report['top4_violation']}")
    return code


_COMMANDS = {"discover": _cmd_discover, "fit": _cmd_fit, "sample": _cmd_sample,
             "validate": _cmd_validate, "audit": _cmd_audit, "hp-audit": _cmd_hp_audit}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "version":
        print(__version__)
        return 0
    try:
        return _COMMANDS[args.command](args)
    except (OSError, ValueError, RuntimeError, KeyError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
