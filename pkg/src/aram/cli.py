"""Operator entry point: decode, eval, verify, and analyze subcommands.

Configuration precedence is command-line flag > TOML config file > built-in
default; the built-ins mirror the reference decoding setup (lambda_max=1.0,
beta=0.1, epsilon=1e-6, L=32, T=32, top_p=0.9, temperature 0). Exit codes:
0 success, 1 verification or evaluation failure, 2 configuration/IO error.
Failures print one machine-readable JSON object on standard error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from . import analysis
from .backends import count_backend, load_toy_spec, table_backend
from .bridge_client import BridgeBackend, BridgeEndpoint
from .engine import SamplerConfig, UnmaskPolicy, decode, trace_rows
from .errors import (
    AramError,
    InvalidConfigError,
    InvalidInputError,
)
from .evaluation import load_fixtures, method_spec, run_eval, write_report
from .guidance import GuidanceConfig, NoiseProxy, Policy, Stability
from .verify import PROPERTIES, run_suite

DEFAULTS = {
    "backend": None,
    "bridge_url": None,
    "policy": "aram",
    "lambda_max": 1.0,
    "beta": 0.1,
    "epsilon": 1e-6,
    "noise_proxy": "cond_entropy",
    "stability": "tanh",
    "top_p": 0.9,
    "temperature": 0.0,
    "seed": 0,
    "length": 32,
    "steps": 32,
    "unmask": "low_confidence",
    "fixtures": None,
    "methods": "aram,none",
    "out": None,
}

_POLICIES = {
    "aram": Policy.ARAM,
    "static": Policy.STATIC_CFG,
    "cad": Policy.CAD,
    "adacad": Policy.ADACAD_JSD,
    "none": Policy.NO_GUIDANCE,
}


def _load_config_file(path: str | None) -> dict:
    if path is None:
        return {}
    try:
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    except (OSError, tomllib.TOMLDecodeError) as exc:
        raise InvalidConfigError(f"cannot read config {path}: {exc}") from exc
    unknown = set(raw) - set(DEFAULTS)
    if unknown:
        raise InvalidConfigError(f"unknown config keys: {sorted(unknown)}")
    return raw


def _resolve(args: argparse.Namespace) -> dict:
    """flag > config file > default, per key."""
    config = _load_config_file(getattr(args, "config", None))
    effective = {}
    for key, default in DEFAULTS.items():
        flag = getattr(args, key, None)
        if flag is not None:
            effective[key] = flag
        elif key in config:
            effective[key] = config[key]
        else:
            effective[key] = default
    if effective["bridge_url"] is None:
        effective["bridge_url"] = os.environ.get("ARAM_BRIDGE_URL")
    return effective


def _build_backend(cfg: dict):
    spec = cfg["backend"]
    if spec is None:
        raise InvalidConfigError(
            "no backend selected; pass --backend table:<spec.json>, "
            "count:<corpus.txt>, or bridge"
        )
    if spec.startswith("table:"):
        return table_backend(load_toy_spec(spec.split(":", 1)[1]))
    if spec.startswith("count:"):
        path = spec.split(":", 1)[1]
        with open(path, encoding="utf-8") as fh:
            corpus = [line.strip() for line in fh if line.strip()]
        return count_backend(corpus)
    if spec == "bridge":
        if not cfg["bridge_url"]:
            raise InvalidConfigError(
                "backend 'bridge' needs --bridge-url or ARAM_BRIDGE_URL"
            )
        return BridgeBackend(BridgeEndpoint(base_url=cfg["bridge_url"]))
    raise InvalidConfigError(
        f"unknown backend {spec!r}; expected table:<path>, count:<path>, or bridge"
    )


def _build_guidance(cfg: dict, policy_name: str | None = None) -> GuidanceConfig:
    name = policy_name or cfg["policy"]
    if name not in _POLICIES:
        raise InvalidConfigError(f"unknown policy {name!r}; expected one of {sorted(_POLICIES)}")
    try:
        noise_proxy = NoiseProxy(cfg["noise_proxy"])
        stability = Stability(cfg["stability"])
    except ValueError as exc:
        raise InvalidConfigError(str(exc)) from exc
    return GuidanceConfig(
        policy=_POLICIES[name],
        lambda_max=float(cfg["lambda_max"]),
        beta=float(cfg["beta"]),
        epsilon=float(cfg["epsilon"]),
        noise_proxy=noise_proxy,
        stability=stability,
        # The --lambda-max flag doubles as the fixed scale for StaticCfg.
        static_lambda=float(cfg["lambda_max"]),
    )


def _sampler(cfg: dict) -> SamplerConfig:
    return SamplerConfig(
        temperature=float(cfg["temperature"]),
        top_p=float(cfg["top_p"]),
        seed=int(cfg["seed"]),
    )


def _unmask(cfg: dict) -> UnmaskPolicy:
    try:
        return UnmaskPolicy(cfg["unmask"])
    except ValueError as exc:
        raise InvalidConfigError(str(exc)) from exc


def _run_id(cfg: dict, query: str, contexts: list[str], model_id: str) -> str:
    payload = json.dumps(
        {"cfg": {k: cfg[k] for k in sorted(DEFAULTS) if k != "out"},
         "query": query, "contexts": contexts, "model_id": model_id},
        sort_keys=True,
    ).encode("utf-8")
    return hashlib.sha256(payload).hexdigest()[:16]


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def cmd_decode(args: argparse.Namespace) -> int:
    cfg = _resolve(args)
    backend = _build_backend(cfg)
    contexts = list(args.context or [])
    result = decode(
        args.query,
        contexts,
        backend,
        _build_guidance(cfg),
        _sampler(cfg),
        _unmask(cfg),
        int(cfg["length"]),
        int(cfg["steps"]),
    )

    out = Path(cfg["out"] or "trace.jsonl")
    run_id = _run_id(cfg, args.query, contexts, backend.model_id)
    with open(out, "w", encoding="utf-8") as fh:
        for row in trace_rows(run_id, result.steps):
            fh.write(json.dumps(row) + "\n")

    to_text = getattr(backend, "decode_tokens", None)
    answer = " ".join(to_text(result.tokens)) if to_text else " ".join(map(str, result.tokens))
    lams = [r.diagnostics.lam for step in result.steps for r in step.records]
    print(f"answer: {answer}")
    print(f"run_id: {run_id}")
    print(f"steps_executed: {result.executed_steps}")
    print(f"nfe_total: {result.nfe_count}")
    print(f"nfe_per_step: {result.nfe_count / max(result.executed_steps, 1):g}")
    print(f"mean_lambda: {sum(lams) / len(lams):.6g}")
    print(f"logit_kind: {result.logit_kind}")
    print(f"trace: {out}")
    return 0


def cmd_eval(args: argparse.Namespace) -> int:
    cfg = _resolve(args)
    if not cfg["fixtures"]:
        raise InvalidConfigError("cmd eval needs --fixtures <path.jsonl>")
    examples = load_fixtures(cfg["fixtures"])
    backend = _build_backend(cfg)

    raw_methods = cfg["methods"]
    names = (
        [m.strip() for m in raw_methods.split(",") if m.strip()]
        if isinstance(raw_methods, str)
        else list(raw_methods)
    )
    if not names:
        raise InvalidConfigError("no methods requested")
    overrides = {
        "lambda_max": float(cfg["lambda_max"]),
        "beta": float(cfg["beta"]),
        "epsilon": float(cfg["epsilon"]),
        "noise_proxy": NoiseProxy(cfg["noise_proxy"]),
        "stability": Stability(cfg["stability"]),
        "static_lambda": float(cfg["lambda_max"]),
    }
    methods = [method_spec(name, **overrides) for name in names]

    report = run_eval(
        examples,
        methods,
        backend,
        sampler=_sampler(cfg),
        length=int(cfg["length"]),
        steps=int(cfg["steps"]),
        unmask_policy=_unmask(cfg),
        timing=bool(getattr(args, "timing", False)),
        max_workers=int(getattr(args, "workers", None) or 1),
    )
    out = Path(cfg["out"] or "report.json")
    write_report(report, out)

    print(f"examples: {report.n_examples}")
    header = f"{'method':<10} {'n':>4} {'fail':>4} {'em':>8} {'f1':>8} {'nfe/ex':>8}"
    print(header)
    rows = [report.baseline] + report.methods
    labels = ["baseline"] + [m.name for m in report.methods]
    for label, block in zip(labels, rows):
        print(
            f"{label:<10} {block.n:>4} {block.failures:>4} "
            f"{block.em:>8.4f} {block.f1:>8.4f} {block.nfe_per_example:>8.3g}"
        )
    print(f"report: {out}")
    if report.baseline.n == 0:
        return 1
    return 0


def cmd_verify(args: argparse.Namespace) -> int:
    names = None
    if args.properties:
        names = [p.strip() for p in args.properties.split(",") if p.strip()]
        unknown = [n for n in names if n not in PROPERTIES]
        if unknown:
            raise InvalidConfigError(
                f"unknown properties {unknown}; available: {sorted(PROPERTIES)}"
            )
    results = run_suite(names, seed=int(args.seed or 0))
    failed = [r for r in results if not r.passed]
    for r in results:
        status = "PASS" if r.passed else "FAIL"
        line = (
            f"{status} {r.name:<16} checks={r.checks:<7} "
            f"max_residual={r.max_residual:.3e} tol={r.tolerance:.0e} "
            f"({r.elapsed_s:.2f}s)"
        )
        if not r.passed and r.failing_seed is not None:
            line += f" failing_seed={r.failing_seed}"
        print(line)
    if failed:
        print(f"{len(failed)} of {len(results)} properties failed")
        return 1
    print(f"all {len(results)} properties passed")
    return 0


def cmd_analyze(args: argparse.Namespace) -> int:
    out_dir = Path(args.out or "analysis")
    out_dir.mkdir(parents=True, exist_ok=True)

    if args.mode == "trajectory":
        if not args.traces:
            raise InvalidConfigError("mode trajectory needs --traces <file...>")
        rows = [row for path in args.traces for row in analysis.load_trace(path)]
        grouping = None
        if args.groups:
            with open(args.groups, encoding="utf-8") as fh:
                grouping = json.load(fh)
        table = analysis.aggregate_trajectories(rows, grouping)
        out = out_dir / "trajectory.csv"
        analysis.write_trajectory_csv(table, out)
        print(f"wrote {out} ({len(table.rows)} rows)")
        return 0

    if args.mode == "heatmap":
        if not args.traces or len(args.traces) != 1:
            raise InvalidConfigError("mode heatmap needs exactly one --traces file")
        table = analysis.build_heatmap(analysis.load_trace(args.traces[0]))
        out = out_dir / "heatmap.json"
        analysis.write_heatmap_json(table, out)
        print(f"wrote {out} ({len(table.steps)} steps x {len(table.positions)} positions)")
        return 0

    if args.mode == "proxy":
        if not args.manifest:
            raise InvalidConfigError(
                "mode proxy needs --manifest <json> with "
                '{"proxies": {proxy: {key: trace_path}}, "groups": {key: group}}'
            )
        with open(args.manifest, encoding="utf-8") as fh:
            manifest = json.load(fh)
        traces_by_proxy = {
            proxy: {key: analysis.load_trace(path) for key, path in runs.items()}
            for proxy, runs in manifest["proxies"].items()
        }
        comparison = analysis.proxy_comparison(traces_by_proxy, manifest["groups"])
        rows_out = out_dir / "proxy_comparison.csv"
        sep_out = out_dir / "proxy_separation.csv"
        analysis.write_proxy_csv(comparison, rows_out)
        analysis.write_separation_csv(comparison, sep_out)
        print(f"wrote {rows_out} ({len(comparison.rows)} rows)")
        print(f"wrote {sep_out} ({len(comparison.separations)} rows)")
        return 0

    raise InvalidConfigError(f"unknown analyze mode {args.mode!r}")


# ---------------------------------------------------------------------------
# Argument parsing and error mapping
# ---------------------------------------------------------------------------


def _add_shared_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="TOML config file; flags override it")
    p.add_argument("--backend", help="table:<spec.json> | count:<corpus.txt> | bridge")
    p.add_argument("--bridge-url", dest="bridge_url", help="bridge base URL (or ARAM_BRIDGE_URL)")
    p.add_argument("--policy", choices=sorted(_POLICIES))
    p.add_argument("--lambda-max", dest="lambda_max", type=float)
    p.add_argument("--beta", type=float)
    p.add_argument("--epsilon", type=float)
    p.add_argument("--noise-proxy", dest="noise_proxy", choices=[n.value for n in NoiseProxy])
    p.add_argument("--stability", choices=[s.value for s in Stability])
    p.add_argument("--top-p", dest="top_p", type=float)
    p.add_argument("--temperature", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--length", type=int)
    p.add_argument("--steps", type=int)
    p.add_argument("--unmask", choices=[u.value for u in UnmaskPolicy])
    p.add_argument("--out")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="aram",
        description="Adaptive retrieval-augmented guidance for masked-diffusion decoding.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_decode = sub.add_parser("decode", help="run one guided decode and write its trace")
    p_decode.add_argument("query")
    p_decode.add_argument("--context", action="append", help="retrieved passage (repeatable)")
    _add_shared_flags(p_decode)
    p_decode.set_defaults(func=cmd_decode)

    p_eval = sub.add_parser("eval", help="score methods on a QA fixture file")
    p_eval.add_argument("--fixtures")
    p_eval.add_argument("--methods", help="comma list from {aram,static,cad,adacad,none}")
    p_eval.add_argument("--timing", action="store_true", help="include wall-clock aggregates")
    p_eval.add_argument("--workers", type=int, help="parallel example evaluation bound")
    _add_shared_flags(p_eval)
    p_eval.set_defaults(func=cmd_eval)

    p_verify = sub.add_parser("verify", help="run the guidance-math property suite")
    p_verify.add_argument("--properties", help=f"comma list from {sorted(PROPERTIES)}")
    p_verify.add_argument("--seed", type=int, default=0)
    p_verify.set_defaults(func=cmd_verify)

    p_analyze = sub.add_parser("analyze", help="aggregate decode traces into tables")
    p_analyze.add_argument("--mode", required=True, choices=["trajectory", "heatmap", "proxy"])
    p_analyze.add_argument("--traces", nargs="*", help="trace JSONL files")
    p_analyze.add_argument("--groups", help="JSON file mapping run_id to group label")
    p_analyze.add_argument("--manifest", help="JSON pairing manifest for proxy mode")
    p_analyze.add_argument("--out", help="output directory (default: analysis)")
    p_analyze.set_defaults(func=cmd_analyze)

    return parser


_ERROR_KINDS = (
    # Checked in order; first match wins.
    (InvalidConfigError, "config"),
    (InvalidInputError, "input"),
    (FileNotFoundError, "config"),
    (PermissionError, "config"),
    (IsADirectoryError, "config"),
)


def _error_kind(exc: Exception) -> str:
    for cls, kind in _ERROR_KINDS:
        if isinstance(exc, cls):
            return kind
    if isinstance(exc, AramError):
        return type(exc).__name__.removesuffix("Error").lower()
    return "internal"


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except Exception as exc:  # noqa: BLE001 - single exit point for error JSON
        print(
            json.dumps({"error": {"kind": _error_kind(exc), "message": str(exc)}}),
            file=sys.stderr,
        )
        return 2


if __name__ == "__main__":
    sys.exit(main())
