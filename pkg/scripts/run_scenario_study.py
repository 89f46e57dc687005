#!/usr/bin/env python3
"""Desk-scale scenario study of adaptive guidance behavior.

Generates seeded synthetic retrieval scenarios (reliable / conflicting /
irrelevant), decodes each one with the adaptive policy under every noise
proxy, and aggregates the traces three ways:

  traces/<proxy>/<kind>-<seed>.jsonl   raw per-run traces
  trajectory.csv                       mean guidance scale per kind and step
                                       (default proxy)
  proxy_comparison.csv                 per-proxy per-kind scale statistics
  proxy_separation.csv                 reliable-vs-conflicting separation per proxy
  heatmap.json                         commit-order heatmap of one reliable run

The study is fully deterministic for a fixed --runs / --vocab / sampler seed.
"""

from __future__ import annotations

import argparse
import json
from pathlib import Path

from aram.analysis import (
    aggregate_trajectories,
    build_heatmap,
    load_trace,
    proxy_comparison,
    write_heatmap_json,
    write_proxy_csv,
    write_separation_csv,
    write_trajectory_csv,
)
from aram.engine import SamplerConfig, UnmaskPolicy, decode, write_trace
from aram.guidance import GuidanceConfig, NoiseProxy, Policy
from aram.scenarios import ScenarioKind, generate_scenario, scenario_backend

KINDS = (ScenarioKind.RELIABLE, ScenarioKind.CONFLICTING, ScenarioKind.IRRELEVANT)


def parse_args() -> argparse.Namespace:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--runs", type=int, default=50, help="scenarios per kind")
    parser.add_argument("--vocab", type=int, default=16)
    parser.add_argument("--length", type=int, default=8)
    parser.add_argument("--steps", type=int, default=8)
    parser.add_argument("--lambda-max", type=float, default=1.0)
    parser.add_argument("--beta", type=float, default=0.1)
    parser.add_argument("--out", default="scenario_study")
    return parser.parse_args()


def decode_scenario(kind: ScenarioKind, seed: int, proxy: NoiseProxy, args):
    instance = generate_scenario(kind, args.vocab, seed)
    cfg = GuidanceConfig(
        policy=Policy.ARAM,
        lambda_max=args.lambda_max,
        beta=args.beta,
        noise_proxy=proxy,
    )
    return decode(
        f"scenario {kind.value} {seed}",
        ("synthetic retrieved passage",),
        scenario_backend(instance),
        cfg,
        SamplerConfig(temperature=0.0, top_p=0.9, seed=seed),
        UnmaskPolicy.LOW_CONFIDENCE,
        length=args.length,
        steps=args.steps,
    )


def main() -> int:
    args = parse_args()
    out_dir = Path(args.out)

    manifest = {"proxies": {}, "groups": {}}
    for proxy in NoiseProxy:
        trace_dir = out_dir / "traces" / proxy.value
        trace_dir.mkdir(parents=True, exist_ok=True)
        for kind in KINDS:
            for seed in range(args.runs):
                key = f"{kind.value}-{seed}"
                path = trace_dir / f"{key}.jsonl"
                result = decode_scenario(kind, seed, proxy, args)
                write_trace(path, key, result.steps)
                manifest["proxies"].setdefault(proxy.value, {})[key] = str(path)
                manifest["groups"][key] = kind.value
        print(f"decoded {len(KINDS) * args.runs} runs under proxy {proxy.value}")

    manifest_path = out_dir / "manifest.json"
    manifest_path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")

    default_runs = manifest["proxies"][NoiseProxy.COND_ENTROPY.value]
    rows = [row for path in default_runs.values() for row in load_trace(path)]
    trajectory = aggregate_trajectories(rows, manifest["groups"])
    write_trajectory_csv(trajectory, out_dir / "trajectory.csv")

    traces_by_proxy = {
        proxy: {key: load_trace(path) for key, path in runs.items()}
        for proxy, runs in manifest["proxies"].items()
    }
    comparison = proxy_comparison(traces_by_proxy, manifest["groups"])
    write_proxy_csv(comparison, out_dir / "proxy_comparison.csv")
    write_separation_csv(comparison, out_dir / "proxy_separation.csv")

    sample = default_runs[f"{ScenarioKind.RELIABLE.value}-0"]
    write_heatmap_json(build_heatmap(load_trace(sample)), out_dir / "heatmap.json")

    mean_by_kind = {}
    for row in rows:
        mean_by_kind.setdefault(manifest["groups"][row.run_id], []).append(row.lam)
    print("mean guidance scale by scenario kind (default proxy):")
    for kind in KINDS:
        lams = mean_by_kind[kind.value]
        print(f"  {kind.value:<12} {sum(lams) / len(lams):.3f}  ({len(lams)} token decisions)")
    print(f"artifacts in {out_dir}/")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
