"""Command-line entry point.

Subcommands: gen-data | train | search | eval | opportunity | gradcheck.
Exit codes: 0 success, 2 usage error, 1 runtime error. Every command is a
pure function of its arguments, input files, and seed.
"""

import argparse
import json
import sys
from dataclasses import replace

from . import experiment as exp
from .errors import CoherankError, UsageError
from .synth import GeneratorConfig


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="coherank",
        description="Train and evaluate coherence-regularized dense retrievers "
                    "on deterministic synthetic benchmarks.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate a synthetic dataset")
    p.add_argument("--config", help="GeneratorConfig JSON (defaults used if omitted)")
    p.add_argument("--seed", type=int, help="override the generator seed")
    p.add_argument("--out", required=True, help="output directory")

    p = sub.add_parser("train", help="train an encoder per an experiment config")
    p.add_argument("--config", required=True, help="ExperimentConfig JSON")
    p.add_argument("--out", help="output directory (default: config tag)")
    p.add_argument("--seed", type=int, help="override the training seed")
    p.add_argument("--sweep", action="store_true",
                   help="run the full lambda1 x lambda2 grid and keep the best")

    p = sub.add_parser("search", help="retrieve top-k lists into a run file")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--queries", required=True)
    p.add_argument("--k", type=int, default=50)
    p.add_argument("--strategy", default="single",
                   choices=list(exp.SEARCH_STRATEGIES))
    p.add_argument("--cluster-prefix", default="",
                   help="only run clusters whose id starts with this prefix")
    p.add_argument("--tag", default="coherank")
    p.add_argument("--out", required=True, help="run file path")

    p = sub.add_parser("eval", help="score a run file (relevance + coherence)")
    p.add_argument("--run", required=True)
    p.add_argument("--qrels", required=True)
    p.add_argument("--queries", required=True)
    p.add_argument("--k-coherence", type=int, default=5)
    p.add_argument("--rbo-p", type=float, default=0.9)
    p.add_argument("--complexity-threshold", type=float, default=0.1)
    p.add_argument("--complexity-depth", type=int, default=50)
    p.add_argument("--cluster-prefix", default="")
    p.add_argument("--tag", default="eval")
    p.add_argument("--out", help="report JSON path")

    p = sub.add_parser("opportunity", help="re-ranking opportunity at depth k")
    p.add_argument("--run", required=True)
    p.add_argument("--queries", required=True)
    p.add_argument("--qrels", help="qrels for the oracle selector")
    p.add_argument("--selections", help="TSV query_id doc_id (overrides the oracle)")
    p.add_argument("--k", type=int, default=50)
    p.add_argument("--tag", default="opportunity")
    p.add_argument("--out", help="report JSON path")

    p = sub.add_parser("gradcheck", help="finite-difference check of every loss")
    p.add_argument("--seed", type=int, default=0)

    return parser


def _emit(report: dict, out_path) -> None:
    text = json.dumps(report, indent=2, sort_keys=True)
    if out_path:
        with open(out_path, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
    else:
        print(text)


def _cmd_gen_data(args) -> int:
    if args.config:
        with open(args.config, encoding="utf-8") as fh:
            payload = json.load(fh)
        if "style_templates" in payload:
            payload["style_templates"] = tuple(tuple(t) for t in payload["style_templates"])
        config = GeneratorConfig(**payload)
    else:
        config = GeneratorConfig()
    if args.seed is not None:
        config = replace(config, seed=args.seed)
    summary = exp.run_gen_data(config, args.out)
    print(json.dumps(summary, sort_keys=True))
    return 0


def _cmd_train(args) -> int:
    config = exp.load_experiment_config(args.config)
    if args.seed is not None:
        config.train = replace(config.train, seed=args.seed)
    out_dir = args.out or config.tag
    if args.sweep:
        summary = exp.run_sweep(config, out_dir)
        best = summary["best"]
        print(f"sweep complete: best lambda1={best['lambda1']} "
              f"lambda2={best['lambda2']} dev={best['dev_metric']:.4f}")
    else:
        summary = exp.run_train(config, out_dir)
        print(json.dumps(summary, sort_keys=True))
    return 0


def _cmd_search(args) -> int:
    summary = exp.run_search(args.checkpoint, args.corpus, args.queries, args.k,
                             args.strategy, args.out, tag=args.tag,
                             cluster_prefix=args.cluster_prefix)
    print(json.dumps(summary, sort_keys=True))
    return 0


def _cmd_eval(args) -> int:
    settings = exp.EvalSettings(k_coherence=args.k_coherence, rbo_p=args.rbo_p,
                                complexity_threshold=args.complexity_threshold,
                                complexity_depth=args.complexity_depth)
    report = exp.run_eval(args.run, args.qrels, args.queries, settings,
                          cluster_prefix=args.cluster_prefix, tag=args.tag)
    if args.out:
        _emit(report, args.out)
    print(exp.format_eval_table(report))
    return 0


def _cmd_opportunity(args) -> int:
    report = exp.run_opportunity(args.run, args.queries, qrels_path=args.qrels,
                                 selections_path=args.selections, k=args.k,
                                 tag=args.tag)
    _emit(report, args.out)
    if args.out:
        print(f"mean opportunity {report['mean']:.4f} over "
              f"{len(report['per_query'])} clusters ({report['selection_source']})")
    return 0


def _cmd_gradcheck(args) -> int:
    report = exp.gradcheck_suite(seed=args.seed)
    for name, entry in report["losses"].items():
        status = "ok" if entry["passed"] else "FAIL"
        print(f"{name:>4}  max_rel_err={entry['max_rel_err']:.3e}  {status}")
    if not report["passed"]:
        print("gradient check FAILED", file=sys.stderr)
        return 1
    return 0


_HANDLERS = {
    "gen-data": _cmd_gen_data,
    "train": _cmd_train,
    "search": _cmd_search,
    "eval": _cmd_eval,
    "opportunity": _cmd_opportunity,
    "gradcheck": _cmd_gradcheck,
}


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return _HANDLERS[args.command](args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 2
    except CoherankError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
