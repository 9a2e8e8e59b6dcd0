"""``see``: generate the corpus, run a dimension, render reports.

Exit codes: 0 success, 1 usage or config error, 2 partial backend failure
(results are still written, with a gap report), 3 internal invariant
violation.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

from .catalog import default_catalog
from .config import DIMENSION_NAMES, ConfigError, validate_config
from .engine import EvaluationError
from .gateway import GatewayError
from .prompts import build_corpus, write_corpus
from .report import FORMATS, ReportError, render, resolve_run
from .transport import TransportError
from .vocab import DEFAULT_VOCAB

EXIT_OK, EXIT_CONFIG, EXIT_PARTIAL, EXIT_INVARIANT = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # argparse exits 2 by default; usage errors are 1 here
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _err(msg: str) -> None:
    print(f"see: {msg}", file=sys.stderr)


def cmd_gen_corpus(args) -> int:
    t0 = time.perf_counter()
    tree = default_catalog(DEFAULT_VOCAB)
    corpus = build_corpus(tree, DEFAULT_VOCAB)
    path = write_corpus(corpus, args.out, tree, DEFAULT_VOCAB)
    print(f"wrote {len(corpus)} prompts to {path} in {time.perf_counter() - t0:.2f}s")
    return EXIT_OK


def cmd_run(args) -> int:
    from .runner import execute

    try:
        cfg = validate_config(args.config)
        run_dir, result = execute(cfg, args.dimension, args.run_id, args.out_dir)
    except ConfigError as exc:
        _err(f"config error: {exc}")
        return EXIT_CONFIG
    except (GatewayError, TransportError) as exc:
        _err(f"backend failure: {exc}")
        return EXIT_PARTIAL
    except (EvaluationError, AssertionError) as exc:
        _err(f"internal invariant violated: {exc}")
        return EXIT_INVARIANT
    print(f"run {run_dir.name}: {len(result.records)} records, {len(result.summaries)} summaries -> {run_dir}")
    if result.gaps:
        _err(f"{len(result.gaps)} gaps (failed generations/verifications); see {run_dir / 'gaps.jsonl'}")
        for g in result.gaps[:10]:
            _err("  " + json.dumps(g.to_json(), sort_keys=True))
        return EXIT_PARTIAL
    return EXIT_OK


def cmd_report(args) -> int:
    try:
        run_dir = resolve_run(args.run, args.runs_dir)
        paths = render(run_dir, args.format)
    except ReportError as exc:
        _err(str(exc))
        return EXIT_CONFIG
    except (KeyError, ValueError) as exc:
        _err(f"malformed run directory: {exc}")
        return EXIT_INVARIANT
    for p in paths:
        print(p)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="see", description="Concept-erasure side-effect evaluation harness.")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("gen-corpus", help="write the compositional prompt corpus")
    g.add_argument("--out", required=True, type=Path, help="output directory")
    g.set_defaults(func=cmd_gen_corpus)

    r = sub.add_parser("run", help="run one evaluation dimension end to end")
    r.add_argument("--config", required=True, type=Path, help="YAML config file")
    r.add_argument("--dimension", required=True, choices=DIMENSION_NAMES)
    r.add_argument("--run-id", default=None, help="override the run id (default: derived from the config)")
    r.add_argument("--out-dir", default=None, help="override the runs root directory")
    r.set_defaults(func=cmd_run)

    p = sub.add_parser("report", help="render tables or plots for a finished run")
    p.add_argument("--run", required=True, help="run id or run directory")
    p.add_argument("--format", required=True, choices=FORMATS)
    p.add_argument("--runs-dir", default="runs", help="runs root used to resolve a bare run id")
    p.set_defaults(func=cmd_report)
    return ap


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
