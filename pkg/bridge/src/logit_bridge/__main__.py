"""Command line launcher: `logit-bridge --table <spec.json>` or `--model <ref>`."""

from __future__ import annotations

import argparse
import sys

from .config import BridgeConfig, BridgeConfigError
from .server import serve
from .tables import StubTableError


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="logit-bridge",
        description="Serve /v1/logits from a stub table or a real model adapter.",
    )
    mode = parser.add_mutually_exclusive_group(required=True)
    mode.add_argument("--table", help="stub mode: toy-model spec JSON path")
    mode.add_argument("--model", help="real mode: adapter import path package.module:attr")
    parser.add_argument("--host", default="127.0.0.1")
    parser.add_argument("--port", type=int, default=8080)
    parser.add_argument("--cond-template", help="conditional prompt template override")
    parser.add_argument("--prior-template", help="prior prompt template override")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    overrides = {}
    if args.cond_template is not None:
        overrides["cond_template"] = args.cond_template
    if args.prior_template is not None:
        overrides["prior_template"] = args.prior_template
    try:
        config = BridgeConfig(
            table_path=args.table,
            model_ref=args.model,
            host=args.host,
            port=args.port,
            **overrides,
        )
        serve(config)
    except (BridgeConfigError, StubTableError) as exc:
        print(f"startup error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
