"""Command-line front end.

Subcommands:
  plan      write score manifests from the corpus and tokenization sidecar
  analyze   ingest score files, fit regressions, write all reports
  report    re-emit report tables from cached fits
  selftest  run the independent numerical oracles

Exit codes: 0 success, 1 input error, 2 numerical non-convergence.
"""

from __future__ import annotations

import argparse
import logging
import sys

from .config import ConfigError, load_config
from .corpus import CorpusError, ParadigmError
from .mixedlm.reml import NonConvergenceError
from .pipeline import PipelineInputError, analyze_all, plan_all, report_all
from .scoring import ScoringError
from .unigram import UnigramError

INPUT_ERRORS = (ConfigError, CorpusError, ParadigmError, PipelineInputError,
                ScoringError, UnigramError, FileNotFoundError, ValueError)


def _cmd_plan(args) -> int:
    config = load_config(args.config)
    summary = plan_all(config)
    for name, count in sorted(summary["manifests"].items()):
        print(f"{name}\t{count} requests")
    for model_id, skipped in sorted(summary["skipped_occlusion_words"].items()):
        if skipped:
            print(f"# {model_id}: {skipped} occlusion words skipped "
                  f"(insufficient context)", file=sys.stderr)
    return 0


def _cmd_analyze(args) -> int:
    config = load_config(args.config)
    summary = analyze_all(config, jobs=args.jobs, seed=args.seed)
    print(f"analyzed corpus {summary['corpus_id']}: "
          f"{summary['exploratory_n']} exploratory observations, "
          f"reports under {config.outdir / 'reports'}")
    for name, p in sorted(summary.get("permutation_tests", {}).items()):
        print(f"permutation {name}: p = {p:.4g}")
    return 0


def _cmd_report(args) -> int:
    config = load_config(args.config)
    report_all(config)
    print(f"reports rebuilt under {config.outdir / 'reports'}")
    return 0


def _cmd_selftest(args) -> int:
    from . import selftest
    return selftest.run(fast=args.fast)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="surpdiag",
        description="Diagnose how well LM surprisal fits human reading times.",
    )
    parser.add_argument("--verbose", action="store_true",
                        help="debug-level logging")
    sub = parser.add_subparsers(dest="command", required=True)

    p_plan = sub.add_parser("plan", help="write score manifests")
    p_plan.add_argument("--config", required=True)
    p_plan.set_defaults(func=_cmd_plan)

    p_an = sub.add_parser("analyze", help="fit models and write reports")
    p_an.add_argument("--config", required=True)
    p_an.add_argument("--jobs", type=int, default=None,
                      help="worker processes (overrides config)")
    p_an.add_argument("--seed", type=int, default=None,
                      help="override the config seed")
    p_an.set_defaults(func=_cmd_analyze)

    p_rep = sub.add_parser("report", help="re-emit tables from cached fits")
    p_rep.add_argument("--config", required=True)
    p_rep.set_defaults(func=_cmd_report)

    p_st = sub.add_parser("selftest", help="run the numerical oracles")
    p_st.add_argument("--fast", action="store_true",
                      help="smaller oracle sweeps")
    p_st.set_defaults(func=_cmd_selftest)

    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )

    try:
        return args.func(args)
    except NonConvergenceError as exc:
        print(f"error: non-convergent fit: {exc}", file=sys.stderr)
        return 2
    except INPUT_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
