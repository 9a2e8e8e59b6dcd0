"""Serve the mock generator, erasure and oracle verifiers over stdio.

    python -m seebench.mock_adapter [--radius R] [--probability Q] ...

Used to exercise the subprocess transport end to end.
"""

from __future__ import annotations

import argparse

from .catalog import default_catalog
from .distance import HashingEmbedder
from .gateway import MockBackend, MockCET
from .transport import serve
from .verifiers import DEFAULT_SUITE, OracleVerifier


def main(argv: list[str] | None = None) -> None:
    ap = argparse.ArgumentParser(prog="seebench.mock_adapter")
    ap.add_argument("--model-id", default="mock-sd")
    ap.add_argument("--cet", default="mock-cet")
    ap.add_argument("--radius", type=int, default=0)
    ap.add_argument("--probability", type=float, default=0.0)
    ap.add_argument("--rng-seed", type=int, default=0)
    ap.add_argument("--closure", action="store_true")
    ap.add_argument("--transfer-attributes", action="store_true")
    ap.add_argument("--single-call", choices=("all", "first"), default="all")
    args = ap.parse_args(argv)

    tree = default_catalog()
    backend = MockBackend(tree, model_id=args.model_id)
    cet = MockCET(
        backend, args.cet, args.radius, args.probability, args.rng_seed,
        args.closure, args.transfer_attributes, args.single_call,
    )
    verifiers = {vid: OracleVerifier(tree, vid, family) for vid, family in DEFAULT_SUITE}
    verifiers["oracle"] = OracleVerifier(tree)
    serve(backend, {cet.name: cet}, verifiers, HashingEmbedder())


if __name__ == "__main__":
    main()
